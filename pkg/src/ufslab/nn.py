"""Minimal trainer for a softmax classifier over a discrete input, with an
optional single sigmoid hidden layer, used to confirm the closed-form
solutions empirically.

Training is full-batch deterministic gradient descent on the empirical
log-loss (a minibatch mode exists behind ``batch_size`` for realism but
the theorem-matching runs stay full batch).  Since the input alphabet is
finite, the full-batch gradient depends on the samples only through the
empirical joint table, which is what the inner loops use.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._linalg import sym_inv_sqrt, sym_sqrt
from .errors import InvalidInputError, TrainingError
from .prob import FiniteDist, JointDist, empirical_joint, _readonly
from .projection import Activation, HiddenParams, SIGMOID, SoftmaxParams


@dataclass(frozen=True)
class TrainConfig:
    """Knobs for the gradient trainers.

    ``learning_rate`` is the fixed step size; training stops when the
    global gradient norm drops below ``grad_tol`` or after ``epochs``
    passes.  ``batch_size=None`` means full batch (the default and the
    only mode used for theory matching).  ``init_scale`` sets the stddev
    of the Gaussian initialization, small enough to start inside the
    weak-dependence regime.
    """

    learning_rate: float = 1.0
    epochs: int = 100_000
    seed: int = 0
    init_scale: float = 1e-2
    batch_size: int | None = None
    grad_tol: float = 1e-9
    freeze_output: bool = False
    freeze_hidden: bool = False

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise InvalidInputError("learning_rate must be positive")
        if self.epochs < 1:
            raise InvalidInputError("epochs must be >= 1")


@dataclass(frozen=True)
class TrainedNet:
    """Training outcome: final parameters plus the per-epoch loss trace."""

    softmax: SoftmaxParams | None
    hidden: HiddenParams | None
    loss_trace: np.ndarray
    converged: bool
    grad_norm: float

    def __post_init__(self):
        object.__setattr__(self, "loss_trace", _readonly(self.loss_trace))


def softmax_forward(params: SoftmaxParams, s_value: np.ndarray) -> FiniteDist:
    """Class posterior for one feature value, log-sum-exp stabilized."""
    s_value = np.asarray(s_value, dtype=float)
    logits = params.v @ s_value + params.b
    logits -= logits.max()
    w = np.exp(logits)
    return FiniteDist(w / w.sum())


def _posteriors(v: np.ndarray, b: np.ndarray, s_values: np.ndarray
                ) -> np.ndarray:
    """``P(y|x)`` as ``|Y| x |X|`` for all alphabet symbols at once."""
    logits = v @ s_values.T + b[:, None]
    logits -= logits.max(axis=0, keepdims=True)
    w = np.exp(logits)
    return w / w.sum(axis=0, keepdims=True)


def _nll(joint: np.ndarray, post: np.ndarray) -> float:
    """Empirical cross-entropy  -sum_{x,y} P(x,y) log Q(y|x)."""
    mask = joint > 0
    return float(-(joint[mask] * np.log(post[mask])).sum())


def _as_joint(samples, nx: int, ny: int | None = None) -> JointDist:
    if isinstance(samples, JointDist):
        return samples
    pairs = np.asarray(samples, dtype=np.int64)
    if pairs.size == 0:
        raise InvalidInputError("at least one sample is required")
    if ny is None:
        ny = int(pairs[:, 1].max()) + 1
    return empirical_joint(pairs, nx, ny)


def train_softmax(samples, s_values: np.ndarray, cfg: TrainConfig,
                  ny: int | None = None,
                  init: SoftmaxParams | None = None) -> TrainedNet:
    """Fit softmax weights and bias on a fixed feature map.

    ``samples`` is an array of (x, y) symbol pairs (or a ready-made
    ``JointDist``), ``s_values`` the ``|X| x k`` feature table.  Runs
    gradient descent on the average log-loss until the gradient norm
    reaches ``cfg.grad_tol`` or the epoch cap; raises ``TrainingError``
    with the trace if the loss turns non-finite.  Deterministic given
    ``cfg.seed``.
    """
    s_values = np.asarray(s_values, dtype=float)
    if s_values.ndim != 2:
        raise InvalidInputError("s_values must be |X| x k")
    joint = _as_joint(samples, s_values.shape[0], ny)
    if ny is not None and joint.ny != ny:
        raise InvalidInputError("declared ny disagrees with the samples")
    if joint.nx != s_values.shape[0]:
        raise InvalidInputError("feature table does not cover the alphabet")
    table = joint.table
    px = joint.marginal_x.probs
    py_log = np.where(joint.marginal_y.probs > 0,
                      np.log(np.clip(joint.marginal_y.probs, 1e-300, None)),
                      0.0)
    k = s_values.shape[1]
    rng = np.random.default_rng(cfg.seed)
    if init is None:
        v = cfg.init_scale * rng.standard_normal((joint.ny, k))
        b = py_log + cfg.init_scale * rng.standard_normal(joint.ny)
    else:
        v = init.v.copy()
        b = init.b.copy()

    if cfg.batch_size is not None:
        return _train_softmax_minibatch(samples, s_values, joint, v, b, cfg,
                                        rng)

    trace = np.empty(cfg.epochs)
    grad_norm = np.inf
    n_ep = 0
    for ep in range(cfg.epochs):
        post = _posteriors(v, b, s_values)
        loss = _nll(table, post)
        trace[ep] = loss
        n_ep = ep + 1
        if not np.isfinite(loss):
            raise TrainingError("log-loss became non-finite",
                                trace=trace[:n_ep])
        # residual of the fit in joint space drives both gradients
        g = post * px[None, :] - table            # |Y| x |X|
        gv = g @ s_values                         # d(loss)/dv
        gb = g.sum(axis=1)
        grad_norm = float(np.sqrt((gv * gv).sum() + (gb * gb).sum()))
        if grad_norm <= cfg.grad_tol:
            break
        v -= cfg.learning_rate * gv
        b -= cfg.learning_rate * gb
    params = SoftmaxParams(v, b, joint.marginal_y)
    return TrainedNet(params, None, trace[:n_ep].copy(),
                      grad_norm <= cfg.grad_tol, grad_norm)


def _train_softmax_minibatch(samples, s_values, joint, v, b, cfg, rng):
    pairs = np.asarray(samples, dtype=np.int64)
    if pairs.ndim != 2:
        raise InvalidInputError("minibatch mode needs raw (x, y) samples")
    n = pairs.shape[0]
    trace = []
    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        for lo in range(0, n, cfg.batch_size):
            batch = pairs[perm[lo:lo + cfg.batch_size]]
            bc = np.zeros_like(joint.table)
            np.add.at(bc, (batch[:, 1], batch[:, 0]), 1.0 / batch.shape[0])
            bx = bc.sum(axis=0)
            post = _posteriors(v, b, s_values)
            g = post * bx[None, :] - bc
            v -= cfg.learning_rate * (g @ s_values)
            b -= cfg.learning_rate * g.sum(axis=1)
        loss = _nll(joint.table, _posteriors(v, b, s_values))
        trace.append(loss)
        if not np.isfinite(loss):
            raise TrainingError("log-loss became non-finite",
                                trace=np.asarray(trace))
    params = SoftmaxParams(v, b, joint.marginal_y)
    return TrainedNet(params, None, np.asarray(trace), False, np.inf)


def train_hidden(samples, t_values: np.ndarray, output: SoftmaxParams,
                 cfg: TrainConfig, activation: Activation = SIGMOID,
                 init: HiddenParams | None = None) -> TrainedNet:
    """Fit hidden weights and bias under a frozen softmax output layer.

    The network is ``s_z(x) = act(w(z)' t(x) + c(z))`` feeding the frozen
    ``output`` parameters; gradient descent runs on ``(W, c)`` only, with
    the same stopping rules as ``train_softmax``.
    """
    t_values = np.asarray(t_values, dtype=float)
    if t_values.ndim != 2:
        raise InvalidInputError("t_values must be |X| x m")
    joint = _as_joint(samples, t_values.shape[0], output.p_y.n)
    if joint.nx != t_values.shape[0]:
        raise InvalidInputError("input map does not cover the alphabet")
    if output.p_y.n != joint.ny:
        raise InvalidInputError("output layer does not match the labels")
    table = joint.table
    px = joint.marginal_x.probs
    k = output.k
    m = t_values.shape[1]
    rng = np.random.default_rng(cfg.seed)
    if init is None:
        w = cfg.init_scale * rng.standard_normal((k, m))
        c = cfg.init_scale * rng.standard_normal(k)
    else:
        w = init.w.copy()
        c = init.c.copy()

    trace = np.empty(cfg.epochs)
    grad_norm = np.inf
    n_ep = 0
    for ep in range(cfg.epochs):
        pre = t_values @ w.T + c                 # |X| x k
        s = activation.fn(pre)
        ds = activation.deriv(pre)
        post = _posteriors(output.v, output.b, s)
        loss = _nll(table, post)
        trace[ep] = loss
        n_ep = ep + 1
        if not np.isfinite(loss):
            raise TrainingError("log-loss became non-finite",
                                trace=trace[:n_ep])
        g = post * px[None, :] - table           # |Y| x |X|
        gs = (g.T @ output.v) * ds               # |X| x k, chain to nodes
        gw = gs.T @ t_values
        gc = gs.sum(axis=0)
        grad_norm = float(np.sqrt((gw * gw).sum() + (gc * gc).sum()))
        if grad_norm <= cfg.grad_tol:
            break
        w -= cfg.learning_rate * gw
        c -= cfg.learning_rate * gc
    hidden = HiddenParams(w, c, activation)
    return TrainedNet(None, hidden, trace[:n_ep].copy(),
                      grad_norm <= cfg.grad_tol, grad_norm)


def softmax_loss_and_grads(joint: JointDist, s_values: np.ndarray,
                           params: SoftmaxParams
                           ) -> tuple[float, np.ndarray, np.ndarray]:
    """Loss and analytic gradients of the softmax layer (for gradient
    checks and warm-started drivers)."""
    post = _posteriors(params.v, params.b, np.asarray(s_values, dtype=float))
    g = post * joint.marginal_x.probs[None, :] - joint.table
    return (_nll(joint.table, post), g @ np.asarray(s_values, dtype=float),
            g.sum(axis=1))


def hidden_loss_and_grads(joint: JointDist, t_values: np.ndarray,
                          output: SoftmaxParams, hidden: HiddenParams
                          ) -> tuple[float, np.ndarray, np.ndarray]:
    """Loss and analytic gradients of the hidden layer under a frozen
    output (for gradient checks)."""
    t_values = np.asarray(t_values, dtype=float)
    pre = t_values @ hidden.w.T + hidden.c
    s = hidden.activation.fn(pre)
    ds = hidden.activation.deriv(pre)
    post = _posteriors(output.v, output.b, s)
    g = post * joint.marginal_x.probs[None, :] - joint.table
    gs = (g.T @ output.v) * ds
    return _nll(joint.table, post), gs.T @ t_values, gs.sum(axis=0)


@dataclass(frozen=True)
class GaugeAlignment:
    """Learned parameters mapped into the theory's gauge, with residuals."""

    aligned_learned: dict
    aligned_theory: dict
    residual: float
    max_abs: float


def gauge_align(learned, theory, mode: str,
                s_learned: np.ndarray | None = None,
                s_theory: np.ndarray | None = None,
                p_x: FiniteDist | None = None) -> GaugeAlignment:
    """Compare learned and closed-form softmax parameters modulo gauge.

    Modes:

    * ``"shift"`` — remove the class-constant offsets (center ``v`` and
      ``d`` under ``P_Y``) and compare directly.
    * ``"product"`` — compare the gauge-invariant information products
      ``XiY @ XiX'``; needs the feature tables and ``p_x``.
    * ``"procrustes"`` — whiten both feature maps under ``p_x``, align the
      learned one to the theory by the best orthogonal map, carry the
      inverse-transpose onto the weights, and compare coordinates.  The
      bias is compared through the shift-invariant combination
      ``d~ + mu_s' v~`` (raw ``d~`` differences are pure gauge).
    """
    if mode == "shift":
        dv = learned.v_tilde - theory.v_tilde
        dd = learned.d_tilde - theory.d_tilde
        res = float(np.sqrt(np.sum(dv * dv) + np.sum(dd * dd)))
        mx = max(np.max(np.abs(dv), initial=0.0),
                 np.max(np.abs(dd), initial=0.0))
        return GaugeAlignment({"v": learned.v_tilde, "d": learned.d_tilde},
                              {"v": theory.v_tilde, "d": theory.d_tilde},
                              res, float(mx))

    if s_learned is None or s_theory is None or p_x is None:
        raise InvalidInputError(f"mode {mode!r} needs feature tables and p_x")
    root = p_x.sqrt[:, None]
    sl_raw = np.asarray(s_learned, dtype=float)
    st_raw = np.asarray(s_theory, dtype=float)
    mu_l = p_x.probs @ sl_raw
    mu_t = p_x.probs @ st_raw
    sl = sl_raw - mu_l
    st = st_raw - mu_t
    xi_l, xi_t = root * sl, root * st

    if mode == "product":
        prod_l = learned.xi_y @ xi_l.T
        prod_t = theory.xi_y @ xi_t.T
        d = prod_l - prod_t
        res = float(np.linalg.norm(d))
        return GaugeAlignment({"product": prod_l}, {"product": prod_t},
                              res, float(np.max(np.abs(d))))

    if mode == "procrustes":
        gram_l, gram_t = xi_l.T @ xi_l, xi_t.T @ xi_t
        wl, _ = sym_inv_sqrt(gram_l)
        wt, _ = sym_inv_sqrt(gram_t)
        xi_lw, xi_tw = xi_l @ wl, xi_t @ wt
        u, _, vt = np.linalg.svd(xi_lw.T @ xi_tw)
        q = u @ vt
        # s -> s M with M = W q  =>  v -> v M^{-T} = v sqrt(gram) q
        ml = wl @ q
        vl = learned.v_tilde @ sym_sqrt(gram_l) @ q
        mt = wt
        vt_al = theory.v_tilde @ sym_sqrt(gram_t)
        beta_l = learned.d_tilde + learned.v_tilde @ mu_l
        beta_t = theory.d_tilde + theory.v_tilde @ mu_t
        a_l = {"s": sl @ ml, "v": vl, "d": beta_l}
        a_t = {"s": st @ mt, "v": vt_al, "d": beta_t}
        ds = a_l["s"] - a_t["s"]
        dv = a_l["v"] - a_t["v"]
        dd = a_l["d"] - a_t["d"]
        res = float(np.sqrt(np.sum(ds * ds) + np.sum(dv * dv)
                            + np.sum(dd * dd)))
        mx = max(np.max(np.abs(ds), initial=0.0),
                 np.max(np.abs(dv), initial=0.0),
                 np.max(np.abs(dd), initial=0.0))
        return GaugeAlignment(a_l, a_t, res, float(mx))

    raise InvalidInputError(f"unknown gauge mode {mode!r}")
