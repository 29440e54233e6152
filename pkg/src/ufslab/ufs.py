"""Universal feature selection: random attribute configurations, the
whitened-projection information metric, and its Monte-Carlo validation.

An attribute V of Y is described by a prior over V and one conditional
information vector per value; sampling those vectors isotropically in the
subspace orthogonal to ``sqrt(P_Y)`` gives a rotation-invariant ensemble
of weakly informative attributes.  Averaged over that ensemble, the
pairwise error exponent of deciding between attribute values from
features of X is proportional to

    || B Xi (Xi' Xi)^(-1/2) ||_F^2

with B the canonical dependence matrix and Xi the feature
information-vector matrix — the metric computed by ``ufs_metric`` and
checked against simulation by ``expected_exponent_mc``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ._linalg import orthonormal_complement, sym_inv_sqrt
from .cdm import Cdm, FeatureSet, markov_transport
from .errors import (InvalidEpsError, InvalidInputError, InvalidRotationError,
                     NumericalFallbackWarning, SingularCovarianceError)
from .exponents import local_pairwise_exponent
from .prob import FiniteDist, InfoVector, _readonly

# Hook signature: radii(rng, n_v) -> positive array of shape (n_v,).
RadialLaw = Callable[[np.random.Generator, int], np.ndarray]

MIXTURE_TOL = 1e-10


@dataclass(frozen=True)
class Configuration:
    """Attribute configuration: prior over V plus one conditional
    information vector (w.r.t. ``ref``) per attribute value.

    Invariants: the prior-weighted vectors sum to zero (the conditionals
    mix back to the marginal), every vector is orthogonal to
    ``sqrt(ref)``, and all norms stay within the declared radius ``eps``.
    """

    prior: FiniteDist
    phis: np.ndarray  # |V| x |Y|
    ref: FiniteDist
    eps: float

    def __post_init__(self):
        phis = np.asarray(self.phis, dtype=float)
        if phis.ndim != 2 or phis.shape != (self.prior.n, self.ref.n):
            raise InvalidInputError("phis must be |V| x |Y|")
        mix = self.prior.probs @ phis
        if np.max(np.abs(mix), initial=0.0) > MIXTURE_TOL:
            raise InvalidInputError("prior-weighted information vectors do "
                                    "not mix back to the marginal")
        if np.max(np.abs(phis @ self.ref.sqrt), initial=0.0) > MIXTURE_TOL:
            raise InvalidInputError("a conditional vector is not orthogonal "
                                    "to sqrt(ref)")
        norms = np.linalg.norm(phis, axis=1)
        if norms.max(initial=0.0) > self.eps + 1e-12:
            raise InvalidInputError("a conditional vector exceeds the "
                                    "declared radius")
        object.__setattr__(self, "phis", _readonly(phis))

    @property
    def n_v(self) -> int:
        return self.prior.n

    def info_vector(self, v: int) -> InfoVector:
        return InfoVector(self.ref, self.phis[v])

    def conditional(self, v: int) -> FiniteDist:
        """Conditional distribution of Y given the attribute value."""
        return FiniteDist(self.ref.probs + self.ref.sqrt * self.phis[v])


def _subspace_basis(p_y: FiniteDist) -> np.ndarray:
    return orthonormal_complement(p_y.sqrt)


def _check_eps(p_y: FiniteDist, eps: float) -> None:
    if eps < 0:
        raise InvalidEpsError("eps must be non-negative")
    limit = float(p_y.sqrt.min())
    if eps >= limit:
        raise InvalidEpsError(
            f"eps={eps:g} >= min sqrt(P_Y)={limit:g}; conditionals could "
            "touch zero")


def _sample_phis(basis: np.ndarray, prior: np.ndarray, eps: float,
                 rng: np.random.Generator, n_trials: int,
                 radial_law: RadialLaw | None) -> np.ndarray:
    """Sample ``(n_trials, |V|, |Y|)`` configuration vectors.

    Unit Gaussian directions in the orthogonal subspace (times the
    optional radial law), recentered to mixture consistency, then each
    trial rescaled so its largest norm is exactly ``eps``.
    """
    n_v = prior.size
    dim = basis.shape[1]
    g = rng.standard_normal((n_trials, n_v, dim))
    g /= np.linalg.norm(g, axis=2, keepdims=True)
    if radial_law is not None:
        radii = np.asarray([radial_law(rng, n_v) for _ in range(n_trials)])
        if radii.shape != (n_trials, n_v) or np.any(radii < 0):
            raise InvalidInputError("radial law must return non-negative "
                                    "radii of shape (n_v,)")
        g *= radii[:, :, None]
    phis = g @ basis.T
    phis -= np.einsum('v,tvy->ty', prior, phis)[:, None, :]
    if eps == 0.0:
        return np.zeros_like(phis)
    mx = np.linalg.norm(phis, axis=2).max(axis=1)
    safe = np.where(mx > 0, mx, 1.0)
    return phis * (eps / safe)[:, None, None]


def random_configuration(p_y: FiniteDist, n_v: int, eps: float,
                         rng: np.random.Generator,
                         prior: FiniteDist | None = None,
                         radial_law: RadialLaw | None = None
                         ) -> Configuration:
    """Draw one attribute configuration from the rotation-invariant ensemble.

    Raises ``InvalidEpsError`` when ``eps`` is large enough that some
    conditional could leave the simplex (the bound ``eps < min sqrt(P_Y)``
    keeps every conditional strictly positive with no retries).
    """
    if n_v < 2:
        raise InvalidInputError("an attribute needs at least two values")
    _check_eps(p_y, eps)
    if prior is None:
        prior = FiniteDist.uniform(n_v)
    elif prior.n != n_v:
        raise InvalidInputError("prior size disagrees with n_v")
    basis = _subspace_basis(p_y)
    phis = _sample_phis(basis, prior.probs, eps, rng, 1, radial_law)[0]
    return Configuration(prior, phis, p_y, eps)


def rotate_configuration(config: Configuration, q: np.ndarray) -> Configuration:
    """Apply an orthogonal map that fixes the ``sqrt(ref)`` direction.

    Rotationally equivalent configurations have identical priors and
    pairwise geometry; all invariants are preserved.
    """
    q = np.asarray(q, dtype=float)
    n = config.ref.n
    if q.shape != (n, n):
        raise InvalidRotationError("rotation has the wrong shape")
    if np.max(np.abs(q.T @ q - np.eye(n))) > 1e-10:
        raise InvalidRotationError("map is not orthogonal within 1e-10")
    if np.max(np.abs(q @ config.ref.sqrt - config.ref.sqrt)) > 1e-10:
        raise InvalidRotationError("map does not fix the sqrt(ref) direction")
    return Configuration(config.prior, config.phis @ q.T, config.ref,
                         config.eps)


def random_rotation(p_y: FiniteDist, rng: np.random.Generator) -> np.ndarray:
    """Haar-random orthogonal map on the subspace orthogonal to
    ``sqrt(P_Y)``, acting as the identity on the fixed direction."""
    basis = _subspace_basis(p_y)
    dim = basis.shape[1]
    a = rng.standard_normal((dim, dim))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    root = p_y.sqrt
    return basis @ q @ basis.T + np.outer(root, root)


def ufs_metric(c: Cdm, xi: np.ndarray, allow_pinv: bool = False) -> float:
    """Information metric of a feature matrix: squared Frobenius norm of
    the CDM applied to the whitened information-vector columns.

    Invariant under right-multiplication of ``xi`` by any invertible
    matrix.  Rank-deficient ``xi`` requires ``allow_pinv=True`` and is
    evaluated with the truncated inverse root.
    """
    xi = np.asarray(xi, dtype=float)
    if xi.ndim != 2 or xi.shape[0] != c.nx:
        raise InvalidInputError("xi must be |X| x k")
    gram = xi.T @ xi
    w = np.linalg.eigvalsh(0.5 * (gram + gram.T))
    if w[-1] <= 0.0 or w[0] <= 1e-10 * w[-1]:
        if not allow_pinv:
            raise SingularCovarianceError(
                "feature covariance is rank deficient; pass allow_pinv=True "
                "to evaluate on the reduced span")
        warnings.warn("rank-deficient feature covariance: metric evaluated "
                      "on the reduced span", NumericalFallbackWarning,
                      stacklevel=2)
    isq, _ = sym_inv_sqrt(gram)
    m = c.mat @ xi @ isq
    return float(np.sum(m * m))


@dataclass(frozen=True)
class UfsMcResult:
    """Monte-Carlo average of the pairwise exponent with its closed form.

    ``theory_value`` plugs the sampled mean squared pair distance into the
    averaged-exponent formula; ``std_error`` is over per-trial means.
    """

    mc_mean: float
    theory_value: float
    std_error: float
    mean_pair_sq_dist: float
    n_trials: int
    trials: tuple = field(default=(), repr=False)


def expected_exponent_mc(c: Cdm, xi: np.ndarray, n_v: int, eps: float,
                         n_trials: int, rng: np.random.Generator,
                         prior: FiniteDist | None = None,
                         radial_law: RadialLaw | None = None,
                         allow_pinv: bool = False,
                         collect_trials: bool = False) -> UfsMcResult:
    """Average the pairwise decision exponent over sampled configurations.

    Per trial, a configuration over Y is drawn, every distinct value pair
    is transported to X through the CDM, and the local exponent of the
    whitened features is averaged uniformly over pairs.  The closed form
    is ``mean ||phi_v - phi_v'||^2 / (8 |Y|)`` times ``ufs_metric``.
    """
    if n_v < 2:
        raise InvalidInputError("an attribute needs at least two values")
    if n_trials < 1:
        raise InvalidInputError("n_trials must be >= 1")
    p_y = c.marginal_y
    _check_eps(p_y, eps)
    if prior is None:
        prior = FiniteDist.uniform(n_v)
    elif prior.n != n_v:
        raise InvalidInputError("prior size disagrees with n_v")

    metric = ufs_metric(c, xi, allow_pinv=allow_pinv)
    gram = xi.T @ xi
    isq, _ = sym_inv_sqrt(gram)
    proj = c.mat @ xi @ isq  # |Y| x k: transport then project, fused

    basis = _subspace_basis(p_y)
    phis = _sample_phis(basis, prior.probs, eps, rng, n_trials, radial_law)

    pairs = [(i, j) for i in range(n_v) for j in range(i + 1, n_v)]
    per_trial = np.zeros(n_trials)
    sq_dists = np.zeros(n_trials)
    records = []
    for (i, j) in pairs:
        delta = phis[:, i, :] - phis[:, j, :]
        e = np.einsum('tk,tk->t', delta @ proj, delta @ proj) / 8.0
        per_trial += e
        sq_dists += np.einsum('ty,ty->t', delta, delta)
        if collect_trials:
            records.append((i, j, e))
    per_trial /= len(pairs)
    sq_dists /= len(pairs)

    mc = float(per_trial.mean())
    se = (float(per_trial.std(ddof=1) / np.sqrt(n_trials))
          if n_trials > 1 else np.inf)
    mean_sq = float(sq_dists.mean())
    theory = mean_sq / (8.0 * p_y.n) * metric

    trials = ()
    if collect_trials:
        trials = tuple((t, i, j, float(e[t]))
                       for (i, j, e) in records for t in range(n_trials))
    return UfsMcResult(mc, theory, se, mean_sq, n_trials, trials)


def config_pair_exponent(config: Configuration, c: Cdm,
                         feats: FeatureSet, v: int, vp: int):
    """Exponent of one attribute pair via the public transport route;
    used to cross-check the vectorized Monte-Carlo kernel."""
    phi_x_v = markov_transport(c, config.info_vector(v))
    phi_x_vp = markov_transport(c, config.info_vector(vp))
    return local_pairwise_exponent(phi_x_v, phi_x_vp, feats)
