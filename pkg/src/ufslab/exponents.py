"""Error-exponent machinery for tests based on averaged feature statistics.

Two routes to the same quantity live here on purpose.
``local_pairwise_exponent`` is the closed quadratic form valid near a
reference: each normalized feature contributes one eighth of the squared
projection of the information-vector difference onto it.
``chernoff_oracle`` is the exact large-deviations value: minimize the KL
divergence to each hypothesis over the linear family that matches the
feature moments at a mixing weight ``lam``, solved by Newton iteration on
the exponential tilt.  The two agree to third order in the neighborhood
radius, which is what the calibration tests sweep.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .cdm import FeatureSet
from .errors import ConvergenceError, InvalidInputError
from .prob import FiniteDist, InfoVector, _readonly


@dataclass(frozen=True)
class ExponentResult:
    """Total pairwise exponent and the per-feature contributions."""

    exponent: float
    per_feature: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "per_feature", _readonly(self.per_feature))


def local_pairwise_exponent(phi1: InfoVector, phi2: InfoVector,
                            feats: FeatureSet,
                            tol: float = 1e-8) -> ExponentResult:
    """Quadratic error exponent of deciding between two nearby distributions
    from averaged feature statistics.

    Requires a normalized feature set (zero-mean, unit-variance,
    uncorrelated under its reference within ``tol``); callers whiten first.
    Per feature the contribution is ``<phi1 - phi2, xi_i>^2 / 8``.
    """
    if not feats.is_orthonormal(tol=tol):
        raise InvalidInputError(
            "feature set is not normalized (zero-mean, identity covariance); "
            "whiten before computing exponents")
    if phi1.ref.n != feats.ref.n or phi2.ref.n != feats.ref.n:
        raise InvalidInputError("information vectors and features disagree "
                                "in dimension")
    proj = (phi1.phi - phi2.phi) @ feats.xi
    per = proj * proj / 8.0
    return ExponentResult(float(per.sum()), per)


class RieCheck(NamedTuple):
    """Monte-Carlo vs closed-form for the spherical-average identity."""

    mc_estimate: float
    closed_form: float
    std_error: float


def rie_expectation_check(a: np.ndarray, m: int, n_samples: int,
                          rng: np.random.Generator) -> RieCheck:
    """Check ``E ||z^T A||^2 = E||z||^2 / m * ||A||_F^2`` by Monte Carlo.

    ``z`` is standard Gaussian of dimension ``m`` (one spherically
    symmetric law; any other works for the identity), so the closed form
    reduces to the squared Frobenius norm of ``A``.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != m:
        raise InvalidInputError(f"matrix must have {m} rows")
    if n_samples < 1:
        raise InvalidInputError("n_samples must be >= 1")
    z = rng.standard_normal((n_samples, m))
    vals = np.einsum('ij,ij->i', z @ a, z @ a)
    mc = float(vals.mean())
    se = float(vals.std(ddof=1) / np.sqrt(n_samples)) if n_samples > 1 else np.inf
    closed = float(np.sum(a * a))
    return RieCheck(mc, closed, se)


def chernoff_oracle(p1: FiniteDist, p2: FiniteDist, feats: FeatureSet,
                    lam: float = 0.5, equalize: bool = False,
                    tol: float = 1e-10, max_iter: int = 200) -> float:
    """Exact exponent of the feature-moment decision rule.

    For each hypothesis ``j`` the exponent is the minimum of ``D(P || P_j)``
    over distributions whose feature means equal
    ``lam * E_1[f] + (1-lam) * E_2[f]``; the minimizer is an exponential
    tilt of ``P_j`` along the features, found by Newton iteration on the
    moment residual (tolerance ``tol``) with step halving.  Returns the
    smaller of the two hypothesis exponents at ``lam``; with
    ``equalize=True`` the mixing weight is located by bisection so both
    exponents agree, which is the non-local operating point.
    """
    if feats.ref.n != p1.n or feats.ref.n != p2.n:
        raise InvalidInputError("distributions and features disagree in dimension")
    fvals = feats.values
    m1 = p1.probs @ fvals
    m2 = p2.probs @ fvals

    def both(l: float) -> tuple[float, float]:
        t = l * m1 + (1.0 - l) * m2
        return (_tilt_divergence(p1.probs, fvals, t, tol, max_iter),
                _tilt_divergence(p2.probs, fvals, t, tol, max_iter))

    if not equalize:
        e1, e2 = both(lam)
        return min(e1, e2)

    lo, hi = 1e-9, 1.0 - 1e-9
    # E1 decreases in lam while E2 increases; bisect their difference.
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        e1, e2 = both(mid)
        if abs(e1 - e2) <= 1e-13 or hi - lo < 1e-14:
            break
        if e1 > e2:
            lo = mid
        else:
            hi = mid
    return min(e1, e2)


def _tilt_divergence(pj: np.ndarray, fvals: np.ndarray, target: np.ndarray,
                     tol: float, max_iter: int) -> float:
    """``min D(P || pj)`` over ``{P : E_P[f] = target}`` via the exponential
    family ``P_theta ∝ pj * exp(theta . f)``."""
    k = fvals.shape[1]
    theta = np.zeros(k)
    logpj = np.log(pj)

    def moments(th):
        logw = logpj + fvals @ th
        a = logw.max()
        w = np.exp(logw - a)
        z = w.sum()
        p = w / z
        alpha = a + np.log(z)
        mean = p @ fvals
        return p, alpha, mean

    p, alpha, mean = moments(theta)
    res = np.linalg.norm(mean - target)
    for _ in range(max_iter):
        if res <= tol:
            break
        cov = fvals.T @ (fvals * p[:, None]) - np.outer(mean, mean)
        try:
            step = np.linalg.solve(cov + 1e-15 * np.eye(k), mean - target)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(cov, mean - target, rcond=None)[0]
        # Damped Newton: halve until the residual actually shrinks.
        t = 1.0
        for _ in range(60):
            cand = theta - t * step
            p_c, alpha_c, mean_c = moments(cand)
            res_c = np.linalg.norm(mean_c - target)
            if res_c < res:
                theta, p, alpha, mean, res = cand, p_c, alpha_c, mean_c, res_c
                break
            t *= 0.5
        else:
            raise ConvergenceError(
                "Newton step on the exponential tilt made no progress",
                residual=float(res))
    if res > tol:
        raise ConvergenceError(
            f"tilt Newton did not reach moment tolerance {tol:g}",
            residual=float(res), iterations=max_iter)
    return float(theta @ mean - alpha)
