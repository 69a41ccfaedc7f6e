"""GloVe / GloVe-with-metadata / MONET training.

All three variants share one step: mini-batch gradients of the weighted
least-squares loss on log co-occurrences, then AdaGrad. ``monet`` adds the
metadata-orthogonal projection of the topology embeddings and their updates.
"""

import logging
import time
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ConfigError, DimensionError, NumericalError
from .model import SPAN_TOL, TrainConfig, init_model

logger = logging.getLogger(__name__)


def smoothing(c, x_max=100.0, alpha=0.75):
    """GloVe weight ``(c / x_max) ** alpha``, capped at 1."""
    if not c > 0:
        raise ValueError("co-occurrence weight must be positive")
    return _kernels.smoothing(float(c), float(x_max), float(alpha))


@dataclass
class Gradients:
    U: np.ndarray
    V: np.ndarray
    a: np.ndarray
    b: np.ndarray
    T1: np.ndarray | None
    T2: np.ndarray | None
    loss: float


class _Workspace:
    """Scratch buffers reused across steps."""

    def __init__(self, n, d, m, d_z, batch_size):
        self.slot_u = np.full(n, -1, dtype=np.int64)
        self.slot_v = np.full(n, -1, dtype=np.int64)
        self.rows_u = np.empty(batch_size, dtype=np.int64)
        self.rows_v = np.empty(batch_size, dtype=np.int64)
        self.gU = np.empty((batch_size, d))
        self.gV = np.empty((batch_size, d))
        self.ga = np.empty(batch_size)
        self.gb = np.empty(batch_size)
        self.gT1 = np.zeros((m, d_z))
        self.gT2 = np.zeros((m, d_z))
        self.batch_size = batch_size

    @classmethod
    def for_state(cls, state, batch_size):
        return cls(state.n, state.d, state.m, state.d_z, batch_size)


def _kernel_args(state):
    """Arrays in the order the kernels expect, with empty stand-ins where unused."""
    n, d = state.n, state.d
    empty_t = np.zeros((0, 0))
    T1 = state.T1 if state.T1 is not None else empty_t
    T2 = state.T2 if state.T2 is not None else empty_t
    M = state.metadata if state.metadata is not None else np.zeros((n, 0))
    if state.variant == "monet":
        Q, AU, AV = state.Q, state.AU, state.AV
    else:
        Q, AU, AV = np.zeros((n, 0)), np.zeros((0, d)), np.zeros((0, d))
    return T1, T2, M, Q, AU, AV


def _check_ready(state):
    if state.has_metadata:
        state.require_metadata()


def _as_batch(batch):
    arr = np.asarray(batch, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 3 or len(arr) == 0:
        raise ValueError("batch must be a non-empty sequence of (i, j, c_ij)")
    bi = arr[:, 0].astype(np.int64)
    bj = arr[:, 1].astype(np.int64)
    bc = np.ascontiguousarray(arr[:, 2])
    if np.any(bc <= 0):
        raise ValueError("co-occurrence weights must be positive")
    return bi, bj, bc


def pair_loss(state, i, j, c_ij, x_max=100.0, alpha=0.75):
    """Weighted squared residual of one pair at the working point."""
    g = batch_gradients(state, [(i, j, c_ij)], x_max=x_max, alpha=alpha)
    return g.loss


def batch_gradients(state, batch, x_max=100.0, alpha=0.75):
    """Exact gradients of the summed batch loss, densified to parameter shapes.

    Topology gradients are taken with respect to the working (projected)
    embeddings; the projection basis is held fixed.
    """
    _check_ready(state)
    bi, bj, bc = _as_batch(batch)
    ws = _Workspace.for_state(state, len(bc))
    T1, T2, M, Q, AU, AV = _kernel_args(state)
    nu, nv, loss = _kernels.accumulate(
        bi, bj, bc, state.U_raw, state.V_raw, state.a, state.b, T1, T2, M, Q, AU, AV,
        state.lam, state.projecting, state.has_metadata, float(x_max), float(alpha),
        ws.slot_u, ws.slot_v, ws.rows_u, ws.rows_v, ws.gU, ws.gV, ws.ga, ws.gb, ws.gT1, ws.gT2)
    _kernels.release_slots(nu, nv, ws.slot_u, ws.slot_v, ws.rows_u, ws.rows_v)
    gU = np.zeros_like(state.U_raw)
    gV = np.zeros_like(state.V_raw)
    ga = np.zeros_like(state.a)
    gb = np.zeros_like(state.b)
    gU[ws.rows_u[:nu]] = ws.gU[:nu]
    gV[ws.rows_v[:nv]] = ws.gV[:nv]
    ga[ws.rows_u[:nu]] = ws.ga[:nu]
    gb[ws.rows_v[:nv]] = ws.gb[:nv]
    has_t = state.has_metadata
    return Gradients(gU, gV, ga, gb, ws.gT1.copy() if has_t else None,
                     ws.gT2.copy() if has_t else None, float(loss))


def train_step(state, batch, config, basis_provider=None, workspace=None):
    """One optimisation step, in place. Returns the batch loss before the update.

    For ``monet`` the working embeddings are the lam-projections of the raw
    parameters against the current metadata span; the loss and gradients are
    evaluated there, the AdaGrad update lands on the raw parameters, and the
    working embeddings therefore move by its projection. The basis is then
    refreshed from the updated ``Z`` so the working embeddings stay orthogonal
    to it at ``lam = 1``.
    """
    _check_ready(state)
    bi, bj, bc = _as_batch(batch)
    ws = workspace
    if ws is None or ws.batch_size < len(bc):
        ws = _Workspace.for_state(state, len(bc))
    T1, T2, M, Q, AU, AV = _kernel_args(state)
    project = state.projecting
    nu, nv, loss = _kernels.accumulate(
        bi, bj, bc, state.U_raw, state.V_raw, state.a, state.b, T1, T2, M, Q, AU, AV,
        state.lam, project, state.has_metadata, float(config.x_max), float(config.alpha),
        ws.slot_u, ws.slot_v, ws.rows_u, ws.rows_v, ws.gU, ws.gV, ws.ga, ws.gb, ws.gT1, ws.gT2)
    if not np.isfinite(loss):
        _kernels.release_slots(nu, nv, ws.slot_u, ws.slot_v, ws.rows_u, ws.rows_v)
        raise NumericalError(_diagnose(state, bi, bj, bc, loss, state.steps))
    acc = state.accum
    _kernels.apply_adagrad(
        float(config.learning_rate), state.U_raw, state.V_raw, state.a, state.b, T1, T2,
        acc["U"], acc["V"], acc["a"], acc["b"], acc.get("T1", T1), acc.get("T2", T2),
        Q, AU, AV, project, state.has_metadata, nu, nv, ws.slot_u, ws.slot_v,
        ws.rows_u, ws.rows_v, ws.gU, ws.gV, ws.ga, ws.gb, ws.gT1, ws.gT2)
    if project:
        state.refresh_basis(basis_provider)
    state.steps += 1
    return float(loss)


def _diagnose(state, bi, bj, bc, loss, step):
    bad = []
    for name in ("U_raw", "V_raw", "a", "b", "T1", "T2"):
        arr = getattr(state, name)
        if arr is not None and not np.all(np.isfinite(arr)):
            bad.append(name)
    return (f"non-finite loss {loss} at step {step} (batch of {len(bc)} pairs, "
            f"c range [{bc.min():.3g}, {bc.max():.3g}]); non-finite parameters: {bad or 'none'}; "
            "try a smaller learning rate or init_scale")


def train(cooc, M, config, on_step=None, state=None):
    """Train ``config.variant`` on every stored co-occurrence entry.

    Entries are reshuffled each epoch by a generator seeded from
    ``(config.seed, 1, epoch)``, counting epochs already in ``state``.
    ``on_step(state, step, loss)`` is called after every step when given (this
    runs the steps from Python and is slower). Returns the final :class:`ModelState`; per-epoch losses are in
    ``state.epoch_losses`` and elapsed seconds in ``state.wall_time``.
    """
    config.validate()
    if len(cooc) == 0:
        raise ConfigError("co-occurrence store is empty")
    variant = config.variant
    if variant == "glove":
        M = None
        m = d_z = 0
    else:
        if M is None:
            raise ConfigError(f"variant {variant!r} requires a metadata matrix")
        M = np.asarray(M, dtype=np.float64)
        if M.shape[0] != cooc.n:
            raise DimensionError(f"metadata has {M.shape[0]} rows, graph has {cooc.n} nodes")
        m = M.shape[1]
        d_z = config.meta_dims if config.meta_dims is not None else m
    if state is None:
        state = init_model(cooc.n, config.dims, m, d_z, config, metadata=M)

    I, J, C = cooc.entries()
    I = np.ascontiguousarray(I)
    J = np.ascontiguousarray(J)
    C = np.ascontiguousarray(C)
    ws = _Workspace.for_state(state, config.batch_size)
    n_batches = -(-len(C) // config.batch_size)
    losses = np.empty(n_batches)
    start = time.perf_counter()
    # epochs continue the numbering of a resumed state, so a resumed run reshuffles
    # exactly as an uninterrupted one would
    first = len(state.epoch_losses)
    for epoch in range(first, first + config.epochs):
        order = np.random.default_rng([config.seed, 1, epoch]).permutation(len(C))
        if on_step is None:
            _run_epoch(state, I, J, C, order, config, ws, losses)
        else:
            for s in range(n_batches):
                idx = order[s * config.batch_size:(s + 1) * config.batch_size]
                batch = np.stack([I[idx], J[idx], C[idx]], axis=1)
                losses[s] = train_step(state, batch, config, workspace=ws)
                on_step(state, state.steps, losses[s])
        state.resync()
        epoch_loss = float(losses.sum())
        state.epoch_losses.append(epoch_loss)
        logger.info("%s epoch %d loss %.6g", variant, epoch + 1, epoch_loss)
    state.wall_time = time.perf_counter() - start
    return state


def _run_epoch(state, I, J, C, order, config, ws, losses):
    _check_ready(state)
    T1, T2, M, Q, AU, AV = _kernel_args(state)
    acc = state.accum
    empty = np.zeros((0, 0))
    QM = state.QM if state.QM is not None else empty
    RM = state.RM if state.RM is not None else empty
    B = state.B if state.B is not None else empty
    rank, failed = _kernels.run_epoch(
        I, J, C, order, config.batch_size, float(config.learning_rate), state.lam,
        state.projecting, state.has_metadata, float(config.x_max), float(config.alpha),
        state.U_raw, state.V_raw, state.a, state.b, T1, T2, acc["U"], acc["V"], acc["a"],
        acc["b"], acc.get("T1", T1), acc.get("T2", T2), M, QM, RM, B, Q, AU, AV,
        state.rank_tol, SPAN_TOL, state.rank, ws.slot_u, ws.slot_v, ws.rows_u, ws.rows_v,
        ws.gU, ws.gV, ws.ga, ws.gb, ws.gT1, ws.gT2, losses)
    if failed >= 0:
        state.steps += failed
        idx = order[failed * config.batch_size:(failed + 1) * config.batch_size]
        raise NumericalError(_diagnose(state, I[idx], J[idx], C[idx], losses[failed], state.steps))
    state.rank = rank
    state.steps += len(losses)



_warm = False


def warmup():
    """Compile the training kernels (once per process) so wall times exclude JIT cost."""
    global _warm
    if _warm:
        return
    from .graph import CooccurrenceStore
    cooc = CooccurrenceStore(3, [0, 0, 1], [1, 2, 2], [2.0, 1.0, 3.0])
    M = np.array([[1.0], [0.0], [2.0]])
    config = TrainConfig(dims=2, meta_dims=1, epochs=1, batch_size=2, variant="monet")
    train(cooc, M, config)
    _warm = True
