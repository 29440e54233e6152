import math

import numpy as np
import pytest

from ufslab.cdm import FeatureSet
from ufslab.errors import InvalidInputError
from ufslab.exponents import (chernoff_oracle, local_pairwise_exponent,
                              rie_expectation_check)
from ufslab.prob import FiniteDist, info_vector

from conftest import random_dist


def perturbed(ref, direction, eps):
    d = np.asarray(direction, dtype=float)
    d = d - ref.sqrt * (ref.sqrt @ d)
    d = d / np.linalg.norm(d)
    return FiniteDist(ref.probs + ref.sqrt * (eps * d))


def whitened_features(rng, ref, k):
    return FeatureSet(rng.standard_normal((ref.n, k)), ref).whitened()


def chernoff_information(p1, p2):
    """Independent route: maximize -log sum p1^l p2^(1-l) over the mixing
    weight by bounded scalar search."""
    from scipy.optimize import minimize_scalar

    def neg(l):
        return -(-math.log(np.sum(p1.probs ** l * p2.probs ** (1 - l))))

    res = minimize_scalar(neg, bounds=(1e-9, 1 - 1e-9), method="bounded",
                          options={"xatol": 1e-12})
    return -res.fun


class TestLocalPairwiseExponent:
    def test_equal_distributions_zero(self, rng):
        ref = random_dist(rng, 5)
        p = perturbed(ref, rng.standard_normal(5), 1e-2)
        phi = info_vector(p, ref)
        feats = whitened_features(rng, ref, 2)
        res = local_pairwise_exponent(phi, phi, feats)
        assert res.exponent == 0.0
        np.testing.assert_array_equal(res.per_feature, 0.0)

    def test_orthogonal_features_zero(self, rng):
        ref = FiniteDist.uniform(4)
        phi1 = info_vector(perturbed(ref, [1, -1, 0, 0], 1e-2), ref)
        phi2 = info_vector(perturbed(ref, [1, -1, 0, 0], 5e-3), ref)
        # feature along an orthogonal direction in the info space
        vals = np.array([0.0, 0.0, 1.0, -1.0])[:, None]
        feats = FeatureSet(vals, ref).whitened()
        res = local_pairwise_exponent(phi1, phi2, feats)
        assert abs(res.exponent) <= 1e-30

    def test_total_is_sum_and_nonnegative(self, rng):
        ref = random_dist(rng, 6)
        phi1 = info_vector(perturbed(ref, rng.standard_normal(6), 1e-2), ref)
        phi2 = info_vector(perturbed(ref, rng.standard_normal(6), 1e-2), ref)
        feats = whitened_features(rng, ref, 3)
        res = local_pairwise_exponent(phi1, phi2, feats)
        assert res.exponent == pytest.approx(res.per_feature.sum(), abs=1e-18)
        assert np.all(res.per_feature >= 0)

    def test_requires_normalized_features(self, rng):
        ref = random_dist(rng, 4)
        phi = info_vector(perturbed(ref, rng.standard_normal(4), 1e-2), ref)
        raw = FeatureSet(2.0 + rng.standard_normal((4, 2)), ref)
        with pytest.raises(InvalidInputError):
            local_pairwise_exponent(phi, phi, raw)

    def test_orthogonal_remix_invariance(self, rng):
        ref = random_dist(rng, 6)
        phi1 = info_vector(perturbed(ref, rng.standard_normal(6), 1e-2), ref)
        phi2 = info_vector(perturbed(ref, rng.standard_normal(6), 1e-2), ref)
        feats = whitened_features(rng, ref, 3)
        q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
        mixed = FeatureSet(feats.values @ q, ref, normalized=True)
        a = local_pairwise_exponent(phi1, phi2, feats).exponent
        b = local_pairwise_exponent(phi1, phi2, mixed).exponent
        assert a == pytest.approx(b, rel=1e-12)

    def test_invertible_mix_then_rewhiten_invariance(self, rng):
        # the decision statistic's span is what matters, not its basis
        ref = random_dist(rng, 6)
        phi1 = info_vector(perturbed(ref, rng.standard_normal(6), 1e-2), ref)
        phi2 = info_vector(perturbed(ref, rng.standard_normal(6), 1e-2), ref)
        feats = whitened_features(rng, ref, 3)
        m = rng.standard_normal((3, 3)) + 3 * np.eye(3)
        rewhitened = FeatureSet(feats.values @ m, ref).whitened()
        a = local_pairwise_exponent(phi1, phi2, feats).exponent
        b = local_pairwise_exponent(phi1, phi2, rewhitened).exponent
        assert a == pytest.approx(b, rel=1e-9)


class TestChernoffOracle:
    def test_identical_hypotheses_zero(self, rng):
        ref = random_dist(rng, 4)
        p = perturbed(ref, rng.standard_normal(4), 2e-2)
        feats = whitened_features(rng, ref, 2)
        assert chernoff_oracle(p, p, feats) <= 1e-12

    def test_binary_full_statistic_equals_chernoff_information(self, rng):
        # one feature on a binary alphabet is sufficient, so the moment
        # route must land on the classic geometric-mixture value
        ref = FiniteDist.uniform(2)
        p1 = FiniteDist(np.array([0.62, 0.38]))
        p2 = FiniteDist(np.array([0.45, 0.55]))
        feats = FeatureSet(np.array([[1.0], [-1.0]]), ref).whitened()
        ours = chernoff_oracle(p1, p2, feats, equalize=True)
        ref_val = chernoff_information(p1, p2)
        assert ours == pytest.approx(ref_val, abs=1e-8)

    def test_bounded_by_kl(self, rng):
        from ufslab.prob import kl
        ref = random_dist(rng, 5)
        for _ in range(5):
            p1 = perturbed(ref, rng.standard_normal(5), 5e-2)
            p2 = perturbed(ref, rng.standard_normal(5), 5e-2)
            feats = whitened_features(rng, ref, 2)
            for equalize in (False, True):
                val = chernoff_oracle(p1, p2, feats, equalize=equalize)
                assert val >= 0.0
                assert val <= min(kl(p1, p2), kl(p2, p1)) + 1e-9

    def test_local_agreement_small_eps(self, rng):
        ref = FiniteDist.uniform(3)
        d1, d2 = rng.standard_normal(3), rng.standard_normal(3)
        eps = 1e-2
        p1, p2 = perturbed(ref, d1, eps), perturbed(ref, d2, eps)
        feats = whitened_features(rng, ref, 1)
        local = local_pairwise_exponent(info_vector(p1, ref),
                                        info_vector(p2, ref), feats).exponent
        oracle = chernoff_oracle(p1, p2, feats, equalize=True)
        assert abs(local - oracle) <= 5 * eps ** 3

    def test_eps_sweep_second_order(self, rng):
        # |oracle - local| / eps^2 must fall as the radius halves
        ref = random_dist(rng, 4, floor=0.5)
        d1, d2 = rng.standard_normal(4), rng.standard_normal(4)
        feats = whitened_features(rng, ref, 2)
        ratios = []
        for eps in (1e-1, 5e-2, 2.5e-2, 1.25e-2):
            p1, p2 = perturbed(ref, d1, eps), perturbed(ref, d2, eps)
            local = local_pairwise_exponent(info_vector(p1, ref),
                                            info_vector(p2, ref),
                                            feats).exponent
            oracle = chernoff_oracle(p1, p2, feats, equalize=True)
            ratios.append(abs(oracle - local) / eps ** 2)
        assert all(a > b for a, b in zip(ratios, ratios[1:]))


class TestRieExpectation:
    def test_identity_matrix(self, rng):
        res = rie_expectation_check(np.eye(5), 5, 40_000, rng)
        assert res.closed_form == 5.0
        assert abs(res.mc_estimate - res.closed_form) <= 5 * res.std_error

    def test_zero_matrix(self, rng):
        res = rie_expectation_check(np.zeros((4, 2)), 4, 100, rng)
        assert res.mc_estimate == 0.0
        assert res.closed_form == 0.0

    def test_random_matrix_fixed_seed(self):
        rng = np.random.default_rng(424242)
        a = rng.standard_normal((5, 3))
        res = rie_expectation_check(a, 5, 100_000, rng)
        assert res.closed_form == pytest.approx(np.sum(a * a), abs=1e-12)
        assert abs(res.mc_estimate - res.closed_form) <= 4 * res.std_error

    def test_dimension_check(self, rng):
        with pytest.raises(InvalidInputError):
            rie_expectation_check(np.eye(3), 4, 10, rng)
