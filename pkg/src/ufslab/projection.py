"""Closed-form solutions of the quadratic (weak-dependence) surrogate of
the softmax log-loss.

In the weak-dependence regime the KL objective of softmax regression
splits into a matrix-factorization term against the canonical dependence
matrix plus a bias penalty:

    loss ≈ 0.5 * || B - XiY @ XiX' ||_F^2
           + 0.5 * E_PY[ (mu_s' v~(Y) + d~(Y))^2 ]

with ``XiX = diag(sqrt(P_X)) s~`` and ``XiY = diag(sqrt(P_Y)) v~``.  The
optimal weights for fixed features (and vice versa) are linear
projections through ``B``; the jointly optimal pair is the truncated SVD;
alternating the two projections is the power method.  A one-hidden-layer
network inherits the same structure after linearizing the activation, up
to a bias term solved as a box-constrained quadratic (saturation).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ._linalg import box_qp_minimize, sym_pinv, sym_sqrt
from .cdm import Cdm, CdmSvd, FeatureSet, cdm_svd
from .errors import (ConvergenceError, InvalidInputError,
                     NumericalFallbackWarning, SingularCovarianceError)
from .prob import FiniteDist, _readonly


@dataclass(frozen=True)
class SoftmaxParams:
    """Weights and bias of a softmax output layer over ``|Y|`` classes.

    ``v`` is ``|Y| x k`` (rows are per-class weight vectors), ``b`` the raw
    bias.  The carried marginal ``p_y`` defines the derived quantities:
    ``d = b - log(p_y)`` and the centered forms ``v~``, ``d~`` with zero
    mean under ``p_y``.
    """

    v: np.ndarray
    b: np.ndarray
    p_y: FiniteDist
    diagnostics: tuple[str, ...] = ()

    def __post_init__(self):
        v = np.asarray(self.v, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if v.ndim != 2 or v.shape[0] != self.p_y.n or b.shape != (self.p_y.n,):
            raise InvalidInputError("v must be |Y| x k and b length |Y|")
        object.__setattr__(self, "v", _readonly(v))
        object.__setattr__(self, "b", _readonly(b))

    @property
    def k(self) -> int:
        return self.v.shape[1]

    @property
    def d(self) -> np.ndarray:
        return self.b - np.log(self.p_y.probs)

    @property
    def v_tilde(self) -> np.ndarray:
        return self.v - self.p_y.probs @ self.v

    @property
    def d_tilde(self) -> np.ndarray:
        d = self.d
        return d - self.p_y.probs @ d

    @property
    def xi_y(self) -> np.ndarray:
        return self.p_y.sqrt[:, None] * self.v_tilde

    @property
    def weight_covariance(self) -> np.ndarray:
        xy = self.xi_y
        return xy.T @ xy


def local_kl(c: Cdm, xi_x: np.ndarray, v_tilde: np.ndarray,
             d_tilde: np.ndarray, mu_s: np.ndarray) -> float:
    """Quadratic surrogate of the softmax KL loss.

    ``xi_x`` is the feature information matrix, ``v_tilde``/``d_tilde``
    the centered weights and bias offsets, ``mu_s`` the feature mean.
    """
    v_tilde = np.asarray(v_tilde, dtype=float)
    d_tilde = np.asarray(d_tilde, dtype=float)
    mu_s = np.asarray(mu_s, dtype=float)
    xi_x = np.asarray(xi_x, dtype=float)
    if xi_x.shape != (c.nx, v_tilde.shape[1]) or v_tilde.shape[0] != c.ny:
        raise InvalidInputError("dimension mismatch between cdm, xi_x and v")
    if d_tilde.shape != (c.ny,) or mu_s.shape != (v_tilde.shape[1],):
        raise InvalidInputError("dimension mismatch in bias or mean")
    py = c.marginal_y.probs
    if (abs(float(py @ d_tilde)) > 1e-6
            or np.max(np.abs(py @ v_tilde), initial=0.0) > 1e-6):
        raise InvalidInputError("v_tilde and d_tilde must be centered "
                                "under P_Y")
    xi_y = np.sqrt(py)[:, None] * v_tilde
    resid = c.mat - xi_y @ xi_x.T
    eta = float(py @ (v_tilde @ mu_s + d_tilde) ** 2)
    return 0.5 * float(np.sum(resid * resid)) + 0.5 * eta


def _gram_inverse(gram: np.ndarray, allow_pinv: bool, what: str
                  ) -> tuple[np.ndarray, list[str]]:
    w = np.linalg.eigvalsh(0.5 * (gram + gram.T))
    diags: list[str] = []
    if w[-1] <= 0.0 or w[0] <= 1e-10 * w[-1]:
        if not allow_pinv:
            raise SingularCovarianceError(
                f"{what} covariance is rank deficient; pass allow_pinv=True")
        warnings.warn(f"{what} covariance is rank deficient: using the "
                      "pseudo-inverse", NumericalFallbackWarning,
                      stacklevel=3)
        diags.append(f"pinv:{what}")
    inv, _ = sym_pinv(gram)
    return inv, diags


def forward_projection(c: Cdm, s: FeatureSet, mu_s: np.ndarray | None = None,
                       allow_pinv: bool = False) -> SoftmaxParams:
    """Optimal softmax weights and bias for a fixed feature map.

    The weight information matrix is ``B XiX (XiX' XiX)^{-1}``,
    equivalently per class the covariance-whitened conditional feature
    mean; the bias offset is ``d~(y) = -mu_s' v~(y)``.  The returned bias
    is in the zero-mean-``d`` gauge.
    """
    if s.ref.n != c.nx:
        raise InvalidInputError("feature set does not live on the X alphabet")
    mu = s.mean() if mu_s is None else np.asarray(mu_s, dtype=float)
    if mu.shape != (s.k,):
        raise InvalidInputError("mu_s has the wrong length")
    cs = s.centered()
    xi_x = cs.xi
    inv, diags = _gram_inverse(xi_x.T @ xi_x, allow_pinv, "feature")
    xi_y = c.mat @ xi_x @ inv
    v_tilde = xi_y / c.marginal_y.sqrt[:, None]
    d_tilde = -(v_tilde @ mu)
    b = d_tilde + np.log(c.marginal_y.probs)
    return SoftmaxParams(v_tilde, b, c.marginal_y, diagnostics=tuple(diags))


def conditional_mean_weights(joint_table: np.ndarray, s: FeatureSet,
                             allow_pinv: bool = False) -> np.ndarray:
    """Second route to the optimal weights: per class ``y``, the
    conditional expectation of the covariance-whitened centered feature.
    Used to cross-check ``forward_projection``."""
    cs = s.centered()
    xi = cs.xi
    inv, _ = _gram_inverse(xi.T @ xi, allow_pinv, "feature")
    py = joint_table.sum(axis=1)
    cond = joint_table @ cs.values / py[:, None]  # E[s~ | y]
    return cond @ inv


def backward_projection(c: Cdm, params: SoftmaxParams,
                        allow_pinv: bool = False
                        ) -> tuple[FeatureSet, np.ndarray]:
    """Optimal feature map and feature mean for fixed softmax weights.

    Mirror image of the forward projection: the feature information
    matrix is ``B' XiY (XiY' XiY)^{-1}`` and the optimal mean solves the
    bias penalty, ``mu* = -Lambda_v^{-1} E_PY[v~ d~]``.
    """
    if params.p_y.n != c.ny:
        raise InvalidInputError("softmax params do not live on the Y alphabet")
    xi_y = params.xi_y
    inv, _ = _gram_inverse(xi_y.T @ xi_y, allow_pinv, "weight")
    xi_x = c.mat.T @ xi_y @ inv
    s_values = xi_x / c.marginal_x.sqrt[:, None]
    py = params.p_y.probs
    mu = -inv @ ((py[:, None] * params.v_tilde).T @ params.d_tilde)
    return FeatureSet(s_values, c.marginal_x, normalized=True), mu


def optimal_rank_k(c: Cdm, k: int,
                   svd: CdmSvd | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Jointly optimal information matrices: the rank-``k`` truncated SVD
    of the CDM, split symmetrically as ``XiY = Psi_Y sqrt(S)``,
    ``XiX = Psi_X sqrt(S)``.  The surrogate loss at this point is half the
    sum of the squared discarded singular values."""
    if svd is None:
        svd = cdm_svd(c)
    if not 1 <= k <= svd.k_max - 1:
        raise InvalidInputError(f"k must be in [1, {svd.k_max - 1}], got {k}")
    root = np.sqrt(svd.sigmas[:k])
    return svd.psi_y[:, :k] * root, svd.psi_x[:, :k] * root


@dataclass(frozen=True)
class AltProjResult:
    """Fixed point of the alternating projection with diagnostics."""

    xi_y: np.ndarray
    xi_x: np.ndarray
    n_iter: int
    converged: bool
    diagnostics: tuple[str, ...] = ()


def alternating_projection(c: Cdm, k: int, init: np.ndarray | None = None,
                           tol: float = 1e-12, max_iter: int = 2000,
                           rng: np.random.Generator | None = None
                           ) -> AltProjResult:
    """Alternate the two one-sided projections until the product settles.

    This is subspace (power) iteration on the CDM: from a generic start
    the product ``XiY @ XiX'`` converges to the rank-``k`` truncated SVD
    whenever a spectral gap separates mode ``k`` from mode ``k+1``.  A
    start orthogonal to a top mode converges to a lower mode instead and
    is flagged ``degenerate-init`` in the diagnostics.
    """
    kmax = min(c.nx, c.ny)
    if not 1 <= k <= kmax - 1:
        raise InvalidInputError(f"k must be in [1, {kmax - 1}], got {k}")
    if init is None:
        if rng is None:
            rng = np.random.default_rng(0)
        xi_x = rng.standard_normal((c.nx, k))
    else:
        xi_x = np.asarray(init, dtype=float).copy()
        if xi_x.shape != (c.nx, k):
            raise InvalidInputError("init must be |X| x k")
    scale = max(1.0, float(np.linalg.norm(c.mat)))
    prod = None
    xi_y = None
    for it in range(1, max_iter + 1):
        inv_x, _ = sym_pinv(xi_x.T @ xi_x)
        xi_y = c.mat @ xi_x @ inv_x
        inv_y, _ = sym_pinv(xi_y.T @ xi_y)
        xi_x = c.mat.T @ xi_y @ inv_y
        new_prod = xi_y @ xi_x.T
        if prod is not None and np.linalg.norm(new_prod - prod) <= tol * scale:
            prod = new_prod
            break
        prod = new_prod
    else:
        raise ConvergenceError(
            f"alternating projection did not settle in {max_iter} iterations",
            iterations=max_iter)

    diags: list[str] = []
    svd = cdm_svd(c)
    top = float(np.sum(svd.sigmas[:k] ** 2))
    got = float(np.sum(prod * prod))
    if got < top - 1e-8 * max(1.0, top):
        diags.append("degenerate-init")
    return AltProjResult(xi_y, xi_x, it, True, tuple(diags))


def pythagorean_gap(c: Cdm, xi_y: np.ndarray, xi_x_a: np.ndarray,
                    xi_x_b: np.ndarray | None = None,
                    allow_pinv: bool = False) -> tuple[float, float]:
    """Both sides of the projection identity for the backward optimum.

    With ``xi_x_b`` the optimal feature matrix for ``xi_y`` (computed here
    when omitted), the excess loss of any ``xi_x_a`` over the optimum
    equals the squared distance between the two products:

        ||B - XiY XiA'||^2 - ||B - XiY XiB'||^2 = ||XiY XiB' - XiY XiA'||^2
    """
    xi_y = np.asarray(xi_y, dtype=float)
    xi_x_a = np.asarray(xi_x_a, dtype=float)
    if xi_x_b is None:
        inv, _ = _gram_inverse(xi_y.T @ xi_y, allow_pinv, "weight")
        xi_x_b = c.mat.T @ xi_y @ inv
    else:
        xi_x_b = np.asarray(xi_x_b, dtype=float)
    ra = c.mat - xi_y @ xi_x_a.T
    rb = c.mat - xi_y @ xi_x_b.T
    lhs = float(np.sum(ra * ra) - np.sum(rb * rb))
    diff = xi_y @ (xi_x_b - xi_x_a).T
    rhs = float(np.sum(diff * diff))
    return lhs, rhs


# ---------------------------------------------------------------------------
# One hidden layer


@dataclass(frozen=True)
class Activation:
    """Smooth scalar activation with derivative, inverse and range."""

    name: str
    fn: Callable[[np.ndarray], np.ndarray]
    deriv: Callable[[np.ndarray], np.ndarray]
    inverse: Callable[[np.ndarray], np.ndarray]
    lo: float
    hi: float


def _sigmoid(x):
    out = np.empty_like(np.asarray(x, dtype=float))
    x = np.asarray(x, dtype=float)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


SIGMOID = Activation(
    name="sigmoid",
    fn=_sigmoid,
    deriv=lambda x: _sigmoid(x) * (1.0 - _sigmoid(x)),
    inverse=lambda y: np.log(y) - np.log1p(-y),
    lo=0.0, hi=1.0)

TANH = Activation(
    name="tanh",
    fn=np.tanh,
    deriv=lambda x: 1.0 - np.tanh(x) ** 2,
    inverse=np.arctanh,
    lo=-1.0, hi=1.0)

ACTIVATIONS = {"sigmoid": SIGMOID, "tanh": TANH}


@dataclass(frozen=True)
class HiddenParams:
    """One hidden layer: ``w`` is ``k x m`` (rows per node), ``c`` length
    ``k``; ``j_diag`` is the activation slope at the bias point."""

    w: np.ndarray
    c: np.ndarray
    activation: Activation = SIGMOID

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        cc = np.asarray(self.c, dtype=float)
        if w.ndim != 2 or cc.shape != (w.shape[0],):
            raise InvalidInputError("w must be k x m with c of length k")
        object.__setattr__(self, "w", _readonly(w))
        object.__setattr__(self, "c", _readonly(cc))

    @property
    def k(self) -> int:
        return self.w.shape[0]

    @property
    def m(self) -> int:
        return self.w.shape[1]

    @property
    def j_diag(self) -> np.ndarray:
        return self.activation.deriv(self.c)

    def outputs(self, t_values: np.ndarray) -> np.ndarray:
        """Node outputs ``sigma(w t(x) + c)`` for ``t_values`` of shape
        ``n x m``; returns ``n x k``."""
        return self.activation.fn(np.asarray(t_values) @ self.w.T + self.c)


def hidden_loss_gap(xi_y: np.ndarray, b1: np.ndarray, w: np.ndarray,
                    xi1: np.ndarray, j_diag: np.ndarray, mu_s: np.ndarray,
                    mu_s_star: np.ndarray, lambda_v: np.ndarray) -> float:
    """Quadratic excess loss of a hidden layer over the optimal feature.

    ``0.5 * || Theta (B1 - W Xi1') ||_F^2 + 0.5 * kappa`` with
    ``Theta = (XiY' XiY)^{1/2} diag(j)`` and
    ``kappa = (mu_s - mu_s*)' Lambda_v (mu_s - mu_s*)``.
    """
    j_diag = np.asarray(j_diag, dtype=float)
    if np.any(j_diag == 0.0) or not np.all(np.isfinite(j_diag)):
        raise InvalidInputError("activation slope must be finite and nonzero")
    theta = sym_sqrt(np.asarray(xi_y).T @ np.asarray(xi_y)) * j_diag[None, :]
    resid = theta @ (np.asarray(b1) - np.asarray(w) @ np.asarray(xi1).T)
    dmu = np.asarray(mu_s, dtype=float) - np.asarray(mu_s_star, dtype=float)
    kappa = float(dmu @ np.asarray(lambda_v) @ dmu)
    return 0.5 * float(np.sum(resid * resid)) + 0.5 * kappa


@dataclass(frozen=True)
class HiddenOptimum:
    """Closed-form hidden layer: weights, bias, achieved mean, saturation."""

    w: np.ndarray
    c: np.ndarray
    mu: np.ndarray
    saturated: np.ndarray
    kkt_residual: float
    diagnostics: tuple[str, ...] = ()


def hidden_optimum(xi_x_star: np.ndarray, xi1: np.ndarray,
                   lambda_v: np.ndarray, mu_s_star: np.ndarray,
                   activation: Activation = SIGMOID,
                   j_diag: np.ndarray | None = None,
                   mu_t: np.ndarray | None = None,
                   allow_pinv: bool = False,
                   bias_tol: float = 1e-10) -> HiddenOptimum:
    """Optimal hidden weights and bias for a fixed input map.

    The weight rows project the target feature (information matrix
    ``xi_x_star``) onto the span of the input features ``xi1``, scaled by
    the inverse activation slope.  The achievable mean solves the
    box-constrained quadratic over the activation range: an interior
    target is hit exactly (``c = sigma^{-1}(mu)``); otherwise coordinates
    clamp to the range and are flagged saturated (their ``c`` is ±inf and
    their ``w`` rows require an explicit ``j_diag``).  ``mu_t`` shifts the
    bias by ``-w' mu_t`` for input maps that are not zero-mean.
    """
    xi_x_star = np.asarray(xi_x_star, dtype=float)
    xi1 = np.asarray(xi1, dtype=float)
    mu_s_star = np.asarray(mu_s_star, dtype=float)
    k = xi_x_star.shape[1]
    if mu_s_star.shape != (k,):
        raise InvalidInputError("mu_s_star length disagrees with the target")

    mu, kkt, _ = box_qp_minimize(np.asarray(lambda_v, dtype=float), mu_s_star,
                                 activation.lo, activation.hi, tol=bias_tol)
    saturated = (mu <= activation.lo) | (mu >= activation.hi)
    diags: list[str] = []
    if saturated.any():
        warnings.warn("bias target outside the activation range: "
                      "saturated coordinates clamped", NumericalFallbackWarning,
                      stacklevel=2)
        diags.append("saturated")

    c = np.full(k, np.nan)
    interior = ~saturated
    c[interior] = activation.inverse(mu[interior])
    c[mu <= activation.lo] = -np.inf
    c[mu >= activation.hi] = np.inf

    if j_diag is None:
        j = np.full(k, np.nan)
        j[interior] = activation.deriv(c[interior])
    else:
        j = np.asarray(j_diag, dtype=float)
        if j.shape != (k,):
            raise InvalidInputError("j_diag has the wrong length")

    inv, gdiags = _gram_inverse(xi1.T @ xi1, allow_pinv, "input feature")
    diags.extend(gdiags)
    coeff = xi_x_star.T @ xi1 @ inv       # projection of the target span
    with np.errstate(divide="ignore", invalid="ignore"):
        w = coeff / j[:, None]
    if mu_t is not None:
        c = c - w @ np.asarray(mu_t, dtype=float)
    return HiddenOptimum(w, c, mu, saturated, kkt, tuple(diags))
