"""Canonical dependence matrix, its singular system, and maximal-correlation
features.

The canonical dependence matrix of a joint is

    B(y, x) = (P(x, y) - P_X(x) P_Y(y)) / sqrt(P_X(x) P_Y(y)).

Its singular vectors, reweighted by the marginals, are the maximally
correlated feature pairs of the two alphabets; the square-root marginal
directions sit in the null spaces because the matrix is centered.  The
alternating-conditional-expectations iteration computes the same top
singular modes by power iteration with deflation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ._linalg import (complete_orthonormal_columns, fix_column_signs,
                      jacobi_svd, sym_inv_sqrt)
from .errors import (ConvergenceError, InvalidInfoVectorError,
                     InvalidInputError, SingularReferenceError)
from .prob import FiniteDist, InfoVector, JointDist, _readonly

# A centered matrix keeps sqrt-marginal directions in its null spaces
# only up to rounding; this is the slack we assert at construction.
NULL_DIR_TOL = 1e-10


@dataclass(frozen=True)
class Cdm:
    """Canonical dependence matrix with the marginals it was built from."""

    mat: np.ndarray
    marginal_x: FiniteDist
    marginal_y: FiniteDist

    def __post_init__(self):
        m = np.asarray(self.mat, dtype=float)
        if m.shape != (self.marginal_y.n, self.marginal_x.n):
            raise InvalidInputError("matrix shape disagrees with marginals")
        if (np.linalg.norm(m.T @ self.marginal_y.sqrt) > NULL_DIR_TOL
                or np.linalg.norm(m @ self.marginal_x.sqrt) > NULL_DIR_TOL):
            raise InvalidInputError(
                "sqrt-marginal directions are not in the null spaces")
        object.__setattr__(self, "mat", _readonly(m))

    @property
    def nx(self) -> int:
        return self.mat.shape[1]

    @property
    def ny(self) -> int:
        return self.mat.shape[0]

    @property
    def frob(self) -> float:
        return float(np.linalg.norm(self.mat))


@dataclass(frozen=True)
class CdmSvd:
    """Full singular system of a canonical dependence matrix.

    ``sigmas`` is nonincreasing with ``K = min(|X|, |Y|)`` entries;
    ``psi_x`` (``|X| x K``) and ``psi_y`` (``|Y| x K``) hold the right and
    left singular vectors as columns, signs fixed so the first
    non-negligible entry of each ``psi_x`` column is positive.
    """

    sigmas: np.ndarray
    psi_x: np.ndarray
    psi_y: np.ndarray
    marginal_x: FiniteDist
    marginal_y: FiniteDist

    def __post_init__(self):
        object.__setattr__(self, "sigmas", _readonly(self.sigmas))
        object.__setattr__(self, "psi_x", _readonly(self.psi_x))
        object.__setattr__(self, "psi_y", _readonly(self.psi_y))

    @property
    def k_max(self) -> int:
        return self.sigmas.size

    def reconstruct(self) -> np.ndarray:
        return (self.psi_y * self.sigmas) @ self.psi_x.T

    def to_json(self) -> str:
        return json.dumps({
            "sigmas": self.sigmas.tolist(),
            "psi_x": self.psi_x.reshape(-1).tolist(),  # row-major
            "psi_y": self.psi_y.reshape(-1).tolist(),
            "nx": self.psi_x.shape[0],
            "ny": self.psi_y.shape[0],
        })


@dataclass(frozen=True)
class FeatureSet:
    """``k`` feature functions on one alphabet.

    ``values`` is ``n x k`` (one column per feature) against the reference
    ``ref``.  ``normalized=True`` asserts zero mean under ``ref`` for every
    column.  ``xi`` is the information-vector matrix
    ``diag(sqrt(ref)) @ values`` used throughout the projection algebra.
    """

    values: np.ndarray
    ref: FiniteDist
    normalized: bool = False

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != self.ref.n:
            raise InvalidInputError("values must be n x k over the reference")
        if self.normalized:
            means = self.ref.probs @ v
            if np.max(np.abs(means), initial=0.0) > 1e-10:
                raise InvalidInputError(
                    "normalized feature set has a non-zero mean column")
        object.__setattr__(self, "values", _readonly(v))

    @property
    def k(self) -> int:
        return self.values.shape[1]

    @property
    def xi(self) -> np.ndarray:
        return self.ref.sqrt[:, None] * self.values

    @property
    def covariance(self) -> np.ndarray:
        """Covariance of the centered features under ``ref``."""
        c = self.centered()
        return c.xi.T @ c.xi

    def mean(self) -> np.ndarray:
        return self.ref.probs @ self.values

    def centered(self) -> "FeatureSet":
        if self.normalized:
            return self
        return FeatureSet(self.values - self.mean(), self.ref, normalized=True)

    def whitened(self, rcut: float = 1e-10) -> "FeatureSet":
        """Zero-mean features with identity covariance (PSD inverse root)."""
        c = self.centered()
        isq, _ = sym_inv_sqrt(c.xi.T @ c.xi, rcut=rcut)
        return FeatureSet(c.values @ isq, self.ref, normalized=True)

    def is_orthonormal(self, tol: float = 1e-8) -> bool:
        """Zero-mean with identity covariance, within ``tol``."""
        means = self.ref.probs @ self.values
        if np.max(np.abs(means), initial=0.0) > tol:
            return False
        gram = self.xi.T @ self.xi
        return bool(np.max(np.abs(gram - np.eye(self.k))) <= tol)

    @classmethod
    def from_xi(cls, xi: np.ndarray, ref: FiniteDist,
                normalized: bool = False) -> "FeatureSet":
        if not ref.strictly_positive:
            raise SingularReferenceError("reference has a zero entry")
        return cls(np.asarray(xi, dtype=float) / ref.sqrt[:, None], ref,
                   normalized=normalized)


def build_cdm(joint: JointDist) -> Cdm:
    """Canonical dependence matrix of a joint with positive marginals."""
    px, py = joint.marginal_x, joint.marginal_y
    if not (px.strictly_positive and py.strictly_positive):
        raise SingularReferenceError("joint has a singular marginal")
    denom = np.outer(py.sqrt, px.sqrt)
    mat = (joint.table - np.outer(py.probs, px.probs)) / denom
    return Cdm(mat, px, py)


def cdm_svd(c: Cdm, tol: float = 1e-14, max_sweeps: int = 100) -> CdmSvd:
    """Full singular system of a CDM via the one-sided Jacobi kernel."""
    u, s, v = jacobi_svd(c.mat, tol=tol, max_sweeps=max_sweeps)
    v, u = fix_column_signs(v, u)
    return CdmSvd(s, v, u, c.marginal_x, c.marginal_y)


def maxcorr_features(svd: CdmSvd, k: int) -> tuple[FeatureSet, FeatureSet]:
    """Top-``k`` maximal-correlation feature pairs ``(f over X, g over Y)``.

    ``f_i = psi_x_i / sqrt(P_X)`` and ``g_i = psi_y_i / sqrt(P_Y)`` are
    zero-mean, unit-variance, uncorrelated within each alphabet, and
    ``E[f_i g_j] = sigma_i`` when ``i == j`` and zero otherwise.
    """
    if not 1 <= k <= svd.k_max - 1:
        raise InvalidInputError(f"k must be in [1, {svd.k_max - 1}], got {k}")
    fx = FeatureSet.from_xi(svd.psi_x[:, :k], svd.marginal_x, normalized=True)
    fy = FeatureSet.from_xi(svd.psi_y[:, :k], svd.marginal_y, normalized=True)
    return fx, fy


def markov_transport(c: Cdm, phi_y: InfoVector) -> InfoVector:
    """Pull an information vector on Y back to X through the CDM.

    For any V with X - Y - V a Markov chain, the conditional information
    vectors satisfy ``phi_x = B^T phi_y`` exactly; the result is orthogonal
    to ``sqrt(P_X)`` by the null-direction structure of ``B``.
    """
    if phi_y.ref.n != c.ny or not np.allclose(
            phi_y.ref.probs, c.marginal_y.probs, rtol=0.0, atol=1e-12):
        raise InvalidInfoVectorError(
            "information vector reference disagrees with the CDM's Y marginal")
    dot = float(c.marginal_y.sqrt @ phi_y.phi)
    if abs(dot) > 1e-8:
        raise InvalidInfoVectorError(
            f"phi is not orthogonal to sqrt(P_Y): <.,.> = {dot:.3e}")
    return InfoVector(c.marginal_x, c.mat.T @ phi_y.phi)


@dataclass(frozen=True)
class AceResult:
    """Converged ACE modes: feature pair plus singular-value estimates."""

    features_x: FeatureSet
    features_y: FeatureSet
    sigmas: np.ndarray
    iterations: tuple[int, ...]
    residuals: tuple[float, ...] = field(default=())


def ace(joint: JointDist, k: int, tol: float = 1e-10, max_iter: int = 100_000,
        rng: np.random.Generator | None = None) -> AceResult:
    """Top-``k`` maximal-correlation features by alternating conditional
    expectations.

    Works in information-vector coordinates, where the alternation
    ``f <- E[g(Y)|X]``, ``g <- E[f(X)|Y]`` is power iteration on the CDM.
    Modes are extracted one at a time; each iteration re-orthogonalizes
    (Gram-Schmidt) against the converged modes, which keeps deflation
    exact under the marginal-weighted inner products.  Stops a mode when
    the two-sided residual ``max(||B v - s u||, ||B^T u - s v||)`` (after
    deflation) drops below ``tol``.

    Raises ``ConvergenceError`` carrying the last residual if ``max_iter``
    is exhausted.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    c = build_cdm(joint)
    b = c.mat
    kmax = min(c.nx, c.ny)
    if not 1 <= k <= kmax - 1:
        raise InvalidInputError(f"k must be in [1, {kmax - 1}], got {k}")

    scale = max(1.0, float(np.linalg.norm(b)))
    tiny = 1e-14 * scale
    # Mean removal in feature space is deflation against the sqrt-marginal
    # directions here, so they join the Gram-Schmidt bases from the start.
    vs: list[np.ndarray] = [c.marginal_x.sqrt]
    us: list[np.ndarray] = [c.marginal_y.sqrt]
    sigmas: list[float] = []
    iters: list[int] = []
    resids: list[float] = []

    for _ in range(k):
        v = rng.standard_normal(c.nx)
        converged = False
        res = np.inf
        for it in range(1, max_iter + 1):
            v = _deflate(v, vs)
            nrm = np.linalg.norm(v)
            if nrm < 1e-12:
                v = _deflate(rng.standard_normal(c.nx), vs)
                nrm = np.linalg.norm(v)
            v /= nrm
            u = _deflate(b @ v, us)
            sigma = float(np.linalg.norm(u))
            if sigma < tiny:
                # Exhausted the range: accept a zero mode deterministically.
                u = _complete_mode(us, c.ny)
                sigma = 0.0
                converged = True
                res = 0.0
                break
            u /= sigma
            w = _deflate(b.T @ u, vs)
            wn = float(np.linalg.norm(w))
            if wn < tiny:
                v_new = v
            else:
                v_new = w / wn
            res = max(np.linalg.norm(_deflate(b @ v_new, us) - sigma * u),
                      np.linalg.norm(w - sigma * v_new))
            v = v_new
            if res <= tol:
                converged = True
                break
        if not converged:
            raise ConvergenceError(
                f"ACE mode {len(sigmas) + 1} did not converge "
                f"(residual {res:.3e} after {max_iter} iterations)",
                residual=float(res), iterations=max_iter)
        vs.append(v)
        us.append(u)
        sigmas.append(sigma)
        iters.append(it)
        resids.append(float(res))

    psi_x = np.column_stack(vs[1:])  # drop the sqrt-marginal direction
    psi_y = np.column_stack(us[1:])
    psi_x, psi_y = fix_column_signs(psi_x, psi_y)
    fx = FeatureSet.from_xi(psi_x, c.marginal_x, normalized=True)
    fy = FeatureSet.from_xi(psi_y, c.marginal_y, normalized=True)
    return AceResult(fx, fy, np.asarray(sigmas), tuple(iters), tuple(resids))


def _deflate(vec: np.ndarray, basis: list[np.ndarray]) -> np.ndarray:
    for q in basis:
        vec = vec - (q @ vec) * q
    return vec


def _complete_mode(existing: list[np.ndarray], dim: int) -> np.ndarray:
    have = (np.column_stack(existing) if existing
            else np.zeros((dim, 0)))
    filled = complete_orthonormal_columns(have, have.shape[1] + 1)
    return filled[:, -1]
