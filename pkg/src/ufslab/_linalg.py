"""Dense linear-algebra helpers shared by the library modules.

Everything here targets small matrices (alphabet sizes up to a few
hundred), favouring determinism and symmetric formulations over speed.
"""

from __future__ import annotations

import numpy as np

from .errors import ConvergenceError

# Relative eigenvalue cutoff for pseudo-inverses and inverse square roots.
PINV_RCUT = 1e-10


def _symmetrize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


def sym_pinv(a: np.ndarray, rcut: float = PINV_RCUT) -> tuple[np.ndarray, bool]:
    """Pseudo-inverse of a symmetric PSD matrix via eigendecomposition.

    Eigenvalues below ``rcut * max(eigenvalue)`` are truncated.  Returns
    ``(pinv, truncated)`` where ``truncated`` reports whether any mode was
    dropped.
    """
    w, v = np.linalg.eigh(_symmetrize(np.asarray(a, dtype=float)))
    wmax = float(w[-1]) if w.size else 0.0
    if wmax <= 0.0:
        return np.zeros_like(a, dtype=float), True
    keep = w > rcut * wmax
    inv = (v[:, keep] / w[keep]) @ v[:, keep].T
    return inv, bool(not keep.all())


def sym_sqrt(a: np.ndarray) -> np.ndarray:
    """Unique PSD square root of a symmetric PSD matrix."""
    w, v = np.linalg.eigh(_symmetrize(np.asarray(a, dtype=float)))
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.T


def sym_inv_sqrt(a: np.ndarray, rcut: float = PINV_RCUT) -> tuple[np.ndarray, bool]:
    """PSD inverse square root with the same truncation rule as ``sym_pinv``."""
    w, v = np.linalg.eigh(_symmetrize(np.asarray(a, dtype=float)))
    wmax = float(w[-1]) if w.size else 0.0
    if wmax <= 0.0:
        return np.zeros_like(a, dtype=float), True
    keep = w > rcut * wmax
    isq = (v[:, keep] / np.sqrt(w[keep])) @ v[:, keep].T
    return isq, bool(not keep.all())


def orthonormal_complement(u: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the subspace orthogonal to the unit vector ``u``.

    Deterministic: built from the complete QR factorization of ``u`` as a
    single column.
    """
    u = np.asarray(u, dtype=float).reshape(-1, 1)
    q, r = np.linalg.qr(u, mode="complete")
    basis = q[:, 1:]
    # QR may negate the first column; the complement is unaffected.
    return basis


def complete_orthonormal_columns(u: np.ndarray, total: int) -> np.ndarray:
    """Extend the orthonormal columns of ``u`` to ``total`` columns.

    Missing directions are filled greedily: at each step the coordinate
    axis with the largest residual against the current basis is
    orthonormalized and appended (deterministic, and the residual is
    bounded below by the remaining codimension over the dimension).
    """
    m, have = u.shape
    if total > m:
        raise ValueError("cannot complete basis: space exhausted")
    cols = [u[:, i] for i in range(have)]
    while len(cols) < total:
        basis = np.column_stack(cols) if cols else np.zeros((m, 0))
        resid = np.eye(m) - basis @ basis.T
        norms = np.linalg.norm(resid, axis=0)
        j = int(np.argmax(norms))
        r = resid[:, j]
        for c in cols:  # re-orthogonalize for accuracy
            r = r - (c @ r) * c
        cols.append(r / np.linalg.norm(r))
    return np.column_stack(cols)


def principal_angles(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Principal angles (radians, ascending) between the column spans.

    Small angles come from the sine (projection-residual) route, which
    avoids the ~1e-8 floor of the arccos formula near zero.
    """
    qa, _ = np.linalg.qr(np.asarray(a, dtype=float))
    qb, _ = np.linalg.qr(np.asarray(b, dtype=float))
    k = min(qa.shape[1], qb.shape[1])
    cross = qa.T @ qb
    cos = np.linalg.svd(cross, compute_uv=False)[:k]          # descending
    resid = qb - qa @ cross
    sin = np.linalg.svd(resid, compute_uv=False)
    sin = np.sort(sin)[:k]                                    # ascending
    return np.where(cos ** 2 > 0.5,
                    np.arcsin(np.clip(sin, 0.0, 1.0)),
                    np.arccos(np.clip(cos, -1.0, 1.0)))


def jacobi_svd(a: np.ndarray, tol: float = 1e-14,
               max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Thin SVD of a dense matrix by one-sided Jacobi rotations.

    Columns of the (possibly transposed) working matrix are orthogonalized
    pairwise in a fixed cyclic order until every pair passes the relative
    tolerance, so results are deterministic.  Returns ``(u, s, v)`` with
    ``a = u @ diag(s) @ v.T`` up to rounding, ``s`` sorted descending, and
    ``K = min(a.shape)`` columns on both sides.  Exactly-zero singular
    values get deterministically completed orthonormal ``u`` columns.

    Raises ``ConvergenceError`` if the sweep limit is hit.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise ValueError("expected a 2-d array")
    m, n = a.shape
    if m < n:
        u, s, v = jacobi_svd(a.T, tol=tol, max_sweeps=max_sweeps)
        return v, s, u

    b = a.copy()
    v = np.eye(n)
    off = np.inf
    for sweep in range(max_sweeps):
        rotated = False
        off = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                app = b[:, p] @ b[:, p]
                aqq = b[:, q] @ b[:, q]
                apq = b[:, p] @ b[:, q]
                scale = np.sqrt(app * aqq)
                if scale == 0.0 or abs(apq) <= tol * scale:
                    continue
                off = max(off, abs(apq) / scale)
                rotated = True
                tau = (aqq - app) / (2.0 * apq)
                if tau == 0.0:
                    t = 1.0
                else:
                    t = np.sign(tau) / (abs(tau) + np.hypot(1.0, tau))
                c = 1.0 / np.hypot(1.0, t)
                s_ = t * c
                bp = b[:, p].copy()
                b[:, p] = c * bp - s_ * b[:, q]
                b[:, q] = s_ * bp + c * b[:, q]
                vp = v[:, p].copy()
                v[:, p] = c * vp - s_ * v[:, q]
                v[:, q] = s_ * vp + c * v[:, q]
        if not rotated:
            break
    else:
        raise ConvergenceError(
            f"one-sided Jacobi SVD did not converge in {max_sweeps} sweeps "
            f"(last max off-diagonal ratio {off:.3e})",
            residual=off, iterations=max_sweeps)

    s = np.linalg.norm(b, axis=0)
    order = np.argsort(-s, kind="stable")
    s = s[order]
    b = b[:, order]
    v = v[:, order]

    smax = s[0] if s.size else 0.0
    cut = max(m, n) * np.finfo(float).eps * max(smax, 1e-300)
    nonzero = s > cut
    u = np.zeros((m, n))
    u[:, nonzero] = b[:, nonzero] / s[nonzero]
    if not nonzero.all():
        filled = complete_orthonormal_columns(u[:, nonzero], n)
        u[:, ~nonzero] = filled[:, int(nonzero.sum()):]
        s = s.copy()
        s[~nonzero] = 0.0
    return u, s, v


def fix_column_signs(anchor: np.ndarray, *followers: np.ndarray,
                     tol: float = 1e-12) -> tuple[np.ndarray, ...]:
    """Flip column signs so each anchor column's first non-negligible entry
    is positive; follower matrices get the same flips columnwise."""
    anchor = anchor.copy()
    followers = tuple(f.copy() for f in followers)
    for j in range(anchor.shape[1]):
        col = anchor[:, j]
        idx = np.flatnonzero(np.abs(col) > tol)
        if idx.size and col[idx[0]] < 0:
            anchor[:, j] = -col
            for f in followers:
                f[:, j] = -f[:, j]
    return (anchor, *followers)


def box_qp_minimize(h: np.ndarray, target: np.ndarray, lo: float, hi: float,
                    tol: float = 1e-10, max_iter: int = 200_000
                    ) -> tuple[np.ndarray, float, int]:
    """Minimize ``(x-target)' H (x-target)`` subject to ``lo <= x <= hi``.

    ``H`` must be symmetric PSD.  Diagonal ``H`` reduces to coordinatewise
    clipping; otherwise projected gradient with fixed step ``1/lambda_max``
    runs until the projected-gradient (KKT) residual drops below ``tol``.
    Returns ``(x, kkt_residual, iterations)``.
    """
    h = _symmetrize(np.asarray(h, dtype=float))
    target = np.asarray(target, dtype=float)
    if np.allclose(h, np.diag(np.diag(h)), atol=0.0, rtol=0.0):
        x = np.clip(target, lo, hi)
        res = _box_kkt_residual(h, target, lo, hi, x)
        return x, res, 0
    lmax = float(np.linalg.eigvalsh(h)[-1])
    if lmax <= 0.0:
        x = np.clip(target, lo, hi)
        return x, 0.0, 0
    step = 1.0 / lmax
    x = np.clip(target, lo, hi)
    res = _box_kkt_residual(h, target, lo, hi, x)
    it = 0
    while res > tol and it < max_iter:
        grad = 2.0 * h @ (x - target)
        x = np.clip(x - step * grad, lo, hi)
        res = _box_kkt_residual(h, target, lo, hi, x)
        it += 1
    if res > tol:
        raise ConvergenceError(
            "projected gradient on the box QP stalled",
            residual=res, iterations=it)
    return x, res, it


def _box_kkt_residual(h, target, lo, hi, x) -> float:
    grad = 2.0 * h @ (x - target)
    return float(np.max(np.abs(x - np.clip(x - grad, lo, hi))))
