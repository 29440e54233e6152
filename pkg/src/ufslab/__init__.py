"""Finite-alphabet maximal-correlation features, local information
geometry, and H-score experiments."""

from .cdm import (AceResult, Cdm, CdmSvd, FeatureSet, ace, build_cdm,
                  cdm_svd, markov_transport, maxcorr_features)
from .errors import (ConvergenceError, InsufficientDataError,
                     InvalidDistributionError, InvalidEpsError,
                     InvalidInfoVectorError, InvalidInputError,
                     InvalidRotationError, NumericalFallbackWarning,
                     SingularCovarianceError, SingularReferenceError,
                     TrainingError, UfslabError)
from .exponents import (ExponentResult, RieCheck, chernoff_oracle,
                        local_pairwise_exponent, rie_expectation_check)
from .harness import (EXPERIMENTS, ExperimentConfig, gen_eps_joint,
                      load_config, run_experiment, sample_pairs,
                      skewed_marginal)
from .hscore import (HScoreReport, h_score_aic, h_score_single,
                     h_score_single_exact, h_score_sv, h_score_sv_exact,
                     hscore_report, load_feature_dump)
from .nn import (GaugeAlignment, TrainConfig, TrainedNet, gauge_align,
                 softmax_forward, train_hidden, train_softmax)
from .prob import (FeatureFn, FiniteDist, InfoVector, JointDist, chi_sq,
                   empirical_joint, info_vector, is_eps_dependent,
                   is_in_eps_neighborhood, kl, local_kl_approx)
from .projection import (ACTIVATIONS, SIGMOID, TANH, Activation,
                         AltProjResult, HiddenOptimum, HiddenParams,
                         SoftmaxParams, alternating_projection,
                         backward_projection, forward_projection,
                         hidden_loss_gap, hidden_optimum, local_kl,
                         optimal_rank_k, pythagorean_gap)
from .ufs import (Configuration, UfsMcResult, expected_exponent_mc,
                  random_configuration, random_rotation,
                  rotate_configuration, ufs_metric)

__version__ = "0.1.0"
