"""H-score feature-quality metrics.

For a feature map ``s`` and per-class weights ``v`` the two-sided score is

    H(s, v) = E[ s~(X)' v~(Y) ] - 0.5 * tr(Cov(s~) Cov(v~)),

the single-sided score plugs in the optimal weights,

    H(s) = 0.5 * E_PY || E[ Cov(s~)^{-1/2} s~(X) | Y ] ||^2,

and the AIC-corrected variant subtracts ``n_params / n_samples``.  Both
scores are evaluated either from raw samples (empirical moments with
``1/n`` normalization, matching the population formulas) or exactly from
a joint table; the chain ``H(s,v) <= H(s) <= half the top-k squared
singular values of the dependence matrix <= k/2`` bounds them.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._linalg import sym_inv_sqrt
from .cdm import build_cdm, cdm_svd
from .errors import (InsufficientDataError, InvalidInputError,
                     NumericalFallbackWarning)
from .prob import JointDist


def _check_labels(labels: np.ndarray, n_classes: int | None) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise InvalidInputError("labels must be a 1-d integer array")
    if labels.size and labels.min() < 0:
        raise IndexError("labels must be non-negative")
    if n_classes is not None and labels.size and labels.max() >= n_classes:
        raise IndexError("label out of range for the weight table")
    return labels.astype(np.int64)


def h_score_sv(s_samples: np.ndarray, v_map: np.ndarray,
               labels: np.ndarray) -> float:
    """Two-sided H-score of features and weights from raw samples.

    ``s_samples`` is ``n x k``, ``v_map`` is ``|Y| x k``, ``labels`` the
    class of each row.  Features are centered under the sample mean and
    weights under the empirical class frequencies; covariances use the
    ``1/n`` population normalization.
    """
    s = np.asarray(s_samples, dtype=float)
    if s.ndim == 1:
        s = s[:, None]
    v = np.asarray(v_map, dtype=float)
    labels = _check_labels(labels, v.shape[0])
    n = s.shape[0]
    if n < 2:
        raise InsufficientDataError("need at least two samples")
    if labels.shape != (n,):
        raise InvalidInputError("labels length disagrees with the samples")
    if v.shape[1] != s.shape[1]:
        raise InvalidInputError("weights and features disagree in dimension")

    py = np.bincount(labels, minlength=v.shape[0]) / n
    s_t = s - s.mean(axis=0)
    v_t = v - py @ v
    cov_s = s_t.T @ s_t / n
    cov_v = (py[:, None] * v_t).T @ v_t
    cross = float(np.einsum('ij,ij->', s_t, v_t[labels]) / n)
    return cross - 0.5 * float(np.trace(cov_s @ cov_v))


def h_score_single(s_samples: np.ndarray, labels: np.ndarray) -> float:
    """Single-sided H-score from raw samples.

    Evaluates the conditional-mean form with empirical moments; a rank
    deficient feature covariance falls back to the truncated inverse root
    with a warning, and a single observed class degenerates to 0.
    """
    s = np.asarray(s_samples, dtype=float)
    if s.ndim == 1:
        s = s[:, None]
    labels = _check_labels(labels, None)
    n = s.shape[0]
    if n < 2:
        raise InsufficientDataError("need at least two samples")
    if labels.shape != (n,):
        raise InvalidInputError("labels length disagrees with the samples")
    classes = np.unique(labels)
    if classes.size < 2:
        warnings.warn("all samples carry one label: H(s) degenerates to 0",
                      NumericalFallbackWarning, stacklevel=2)
        return 0.0

    s_t = s - s.mean(axis=0)
    cov = s_t.T @ s_t / n
    isq, truncated = sym_inv_sqrt(cov)
    if truncated:
        warnings.warn("feature covariance is rank deficient: using the "
                      "truncated inverse root", NumericalFallbackWarning,
                      stacklevel=2)
    w = s_t @ isq
    total = 0.0
    for y in classes:
        mask = labels == y
        mean = w[mask].mean(axis=0)
        total += mask.sum() / n * float(mean @ mean)
    return 0.5 * total


def h_score_sv_exact(joint: JointDist, s_values: np.ndarray,
                     v_map: np.ndarray) -> float:
    """Two-sided H-score evaluated on an exact joint table."""
    s = np.asarray(s_values, dtype=float)
    v = np.asarray(v_map, dtype=float)
    if s.shape[0] != joint.nx or v.shape[0] != joint.ny:
        raise InvalidInputError("tables do not match the joint alphabets")
    px, py = joint.marginal_x.probs, joint.marginal_y.probs
    s_t = s - px @ s
    v_t = v - py @ v
    cov_s = (px[:, None] * s_t).T @ s_t
    cov_v = (py[:, None] * v_t).T @ v_t
    cross = float(np.einsum('yx,xi,yi->', joint.table, s_t, v_t))
    return cross - 0.5 * float(np.trace(cov_s @ cov_v))


def h_score_single_exact(joint: JointDist, s_values: np.ndarray,
                         allow_pinv: bool = True) -> float:
    """Single-sided H-score evaluated on an exact joint table."""
    s = np.asarray(s_values, dtype=float)
    if s.shape[0] != joint.nx:
        raise InvalidInputError("feature table does not match the joint")
    px, py = joint.marginal_x.probs, joint.marginal_y.probs
    s_t = s - px @ s
    cov = (px[:, None] * s_t).T @ s_t
    isq, truncated = sym_inv_sqrt(cov)
    if truncated:
        if not allow_pinv:
            raise InvalidInputError("feature covariance is rank deficient")
        warnings.warn("feature covariance is rank deficient: using the "
                      "truncated inverse root", NumericalFallbackWarning,
                      stacklevel=2)
    w = s_t @ isq
    mean_by_y = (joint.table @ w) / py[:, None]      # E[w(X) | y]
    return 0.5 * float(py @ np.einsum('yi,yi->y', mean_by_y, mean_by_y))


def h_score_aic(h: float, n_params: float, n_samples: float) -> float:
    """AIC-corrected score ``h - n_params / n_samples``."""
    if n_samples <= 0:
        raise InvalidInputError("n_samples must be positive")
    return float(h) - float(n_params) / float(n_samples)


@dataclass(frozen=True)
class HScoreReport:
    """Bundle of the computed scores with the bound chain.

    When a joint is available, ``bound`` holds half the sum of the top-k
    squared singular values of its dependence matrix and the chain
    ``h_sv <= h_s <= bound <= k/2`` applies.
    """

    h_s: float
    k: int
    h_sv: float | None = None
    h_aic: float | None = None
    n_params: float | None = None
    n_samples: int | None = None
    bound: float | None = None

    def bound_chain_ok(self, slack: float = 1e-9) -> bool:
        ok = self.h_s <= self.k / 2 + slack
        if self.h_sv is not None:
            ok = ok and self.h_sv <= self.h_s + slack
        if self.bound is not None:
            ok = ok and self.h_s <= self.bound + slack
            ok = ok and self.bound <= self.k / 2 + slack
        return bool(ok)

    def to_json(self) -> str:
        return json.dumps({
            "h_s": self.h_s, "h_sv": self.h_sv, "h_aic": self.h_aic,
            "k": self.k, "n_params": self.n_params,
            "n_samples": self.n_samples, "bound": self.bound,
        }, sort_keys=True)


def hscore_report(s_samples: np.ndarray, labels: np.ndarray,
                  v_map: np.ndarray | None = None,
                  n_params: float | None = None,
                  joint: JointDist | None = None) -> HScoreReport:
    """Evaluate the scores on samples and assemble the report."""
    s = np.asarray(s_samples, dtype=float)
    if s.ndim == 1:
        s = s[:, None]
    h_s = h_score_single(s, labels)
    h_sv = None
    if v_map is not None:
        h_sv = h_score_sv(s, v_map, labels)
    n = s.shape[0]
    h_aic = h_score_aic(h_s, n_params, n) if n_params is not None else None
    bound = None
    if joint is not None:
        sig = cdm_svd(build_cdm(joint)).sigmas
        k = min(s.shape[1], sig.size)
        bound = 0.5 * float(np.sum(sig[:k] ** 2))
    return HScoreReport(h_s=h_s, k=s.shape[1], h_sv=h_sv, h_aic=h_aic,
                        n_params=n_params, n_samples=n, bound=bound)


def load_feature_dump(path) -> tuple[np.ndarray, np.ndarray]:
    """Read an ``(s_samples, labels)`` dump.

    ``.csv``: header row naming k feature columns then one label column;
    ``.npy``: an ``n x (k+1)`` array with the label last.
    """
    path = Path(path)
    if path.suffix == ".npy":
        arr = np.load(path)
        if arr.ndim != 2 or arr.shape[1] < 2:
            raise InvalidInputError("binary dump must be n x (k+1)")
        return arr[:, :-1].astype(float), arr[:, -1].astype(np.int64)
    if path.suffix == ".csv":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if len(rows) < 2 or len(rows[0]) < 2:
            raise InvalidInputError("csv dump needs a header and data rows")
        data = np.asarray(rows[1:], dtype=float)
        return data[:, :-1], data[:, -1].astype(np.int64)
    raise InvalidInputError(f"unsupported feature dump format: {path.suffix}")
