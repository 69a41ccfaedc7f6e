"""Model parameters, configuration and checkpoints."""

import struct
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import _kernels, binfmt
from .errors import ConfigError, DimensionError, ParseError
from .linalg import DEFAULT_RANK_TOL, ProjectionBasis

VARIANTS = ("glove", "glove_meta", "monet")

CHECKPOINT_MAGIC = b"MCKP"
_HEADER = struct.Struct("<BQQQQd")

# basis of span(M) keeps every direction above this relative singular value
_METADATA_RANK_TOL = 1e-13
# a refreshed basis whose span moved less than this (max abs residual) is kept
SPAN_TOL = 1e-10
ACCUMULATOR_INIT = 1e-8


@dataclass
class TrainConfig:
    dims: int = 128
    meta_dims: int | None = None
    learning_rate: float = 0.05
    batch_size: int = 100
    epochs: int = 20
    x_max: float = 100.0
    alpha: float = 0.75
    seed: int = 0
    init_scale: float = 0.1
    lam: float = 1.0
    variant: str = "monet"
    rank_tol: float = DEFAULT_RANK_TOL

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.dims < 1:
            raise ConfigError("dims must be positive")
        if self.meta_dims is not None and self.meta_dims < 0:
            raise ConfigError("meta_dims must be non-negative")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be positive")
        if self.epochs < 0:
            raise ConfigError("epochs must be non-negative")
        if not self.x_max > 0:
            raise ConfigError("x_max must be positive")
        if not 0 < self.alpha <= 1:
            raise ConfigError("alpha must lie in (0, 1]")
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError("lambda must lie in [0, 1]")
        if not self.init_scale >= 0:
            raise ConfigError("init_scale must be non-negative")
        return self

    def replace(self, **changes):
        values = asdict(self)
        values.update(changes)
        return TrainConfig(**values)

    @classmethod
    def from_dict(cls, values):
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**values)


@dataclass
class ModelState:
    """Trainable parameters plus AdaGrad accumulators.

    ``U_raw``/``V_raw`` are the stored topology parameters. For ``monet`` the
    working embeddings ``U``/``V`` are their lam-projections against the
    current metadata embedding ``Z = M T1 + M T2``; for other variants they are
    the raw arrays themselves.
    """

    variant: str
    lam: float
    U_raw: np.ndarray
    V_raw: np.ndarray
    a: np.ndarray
    b: np.ndarray
    T1: np.ndarray | None
    T2: np.ndarray | None
    accum: dict
    metadata: np.ndarray | None = None
    rank_tol: float = DEFAULT_RANK_TOL
    steps: int = 0
    epoch_losses: list = field(default_factory=list)
    wall_time: float = 0.0
    # projection cache, see _kernels
    QM: np.ndarray | None = field(default=None, repr=False)
    RM: np.ndarray | None = field(default=None, repr=False)
    B: np.ndarray | None = field(default=None, repr=False)
    Q: np.ndarray | None = field(default=None, repr=False)
    AU: np.ndarray | None = field(default=None, repr=False)
    AV: np.ndarray | None = field(default=None, repr=False)
    rank: int = 0

    @property
    def n(self):
        return self.U_raw.shape[0]

    @property
    def d(self):
        return self.U_raw.shape[1]

    @property
    def m(self):
        return 0 if self.T1 is None else self.T1.shape[0]

    @property
    def d_z(self):
        return 0 if self.T1 is None else self.T1.shape[1]

    @property
    def has_metadata(self):
        return self.variant != "glove"

    @property
    def projecting(self):
        return self.variant == "monet" and self.lam > 0.0

    @property
    def U(self):
        return self._view(self.U_raw, self.AU)

    @property
    def V(self):
        return self._view(self.V_raw, self.AV)

    def _view(self, R, A):
        if not self.projecting or self.rank == 0:
            return R
        return R - self.lam * (self.Q @ A)

    def basis(self):
        """Current projection basis as a :class:`ProjectionBasis`."""
        if self.Q is None:
            return ProjectionBasis(np.zeros((self.n, 0)), 0, self.rank_tol, self.lam)
        return ProjectionBasis(self.Q[:, :self.rank].copy(), self.rank, self.rank_tol, self.lam)

    def metadata_embedding(self):
        if not self.has_metadata:
            return None
        self.require_metadata()
        return self.metadata @ self.T1 + self.metadata @ self.T2

    def require_metadata(self):
        if self.metadata is None:
            raise ConfigError(f"variant {self.variant!r} needs a metadata matrix")

    def attach_metadata(self, M):
        """Bind the metadata matrix and (for monet) build the projection cache."""
        M = np.ascontiguousarray(M, dtype=np.float64)
        if M.ndim != 2 or M.shape[0] != self.n:
            raise DimensionError(f"metadata must be {self.n} x m")
        if not self.has_metadata:
            raise ConfigError("variant 'glove' takes no metadata")
        if M.shape[1] != self.m:
            raise DimensionError(f"metadata has {M.shape[1]} columns, model expects {self.m}")
        self.metadata = M
        if self.variant == "monet":
            self._init_projection()
        return self

    def _init_projection(self):
        M = self.metadata
        if M.shape[1] and np.any(M):
            Um, s, Vt = np.linalg.svd(M, full_matrices=False)
            rm = int(np.sum(s > _METADATA_RANK_TOL * s[0]))
        else:
            Um, s, Vt, rm = np.zeros((self.n, 0)), np.zeros(0), np.zeros((0, self.m)), 0
        self.QM = np.ascontiguousarray(Um[:, :rm])
        self.RM = np.ascontiguousarray(s[:rm, None] * Vt[:rm])
        self.B = np.zeros((rm, self.d_z))
        self.Q = np.zeros((self.n, self.d_z))
        self.AU = np.zeros((self.d_z, self.d))
        self.AV = np.zeros((self.d_z, self.d))
        self.rank = 0
        self.refresh_basis()

    def refresh_basis(self, provider=None):
        """Recompute the projection basis from the current ``Z``.

        ``provider`` (``Z -> ProjectionBasis``) replaces the built-in
        factorisation; the cached ``Q^T U`` products are then rebuilt exactly.
        """
        if self.variant != "monet":
            return
        if provider is None:
            self.rank = _kernels.refresh_basis(self.T1, self.T2, self.QM, self.RM, self.B,
                                               self.Q, self.AU, self.AV, self.U_raw, self.V_raw,
                                               self.rank_tol, SPAN_TOL, self.rank)
            return
        basis = provider(self.metadata_embedding())
        if basis.rank > self.d_z:
            raise DimensionError("basis rank exceeds metadata embedding dimension")
        self.Q[:] = 0.0
        self.Q[:, :basis.rank] = basis.basis
        self.rank = basis.rank
        self.B[:] = 0.0
        self.B[:, :basis.rank] = self.QM.T @ basis.basis
        self.resync()

    def resync(self):
        """Recompute ``Q^T U`` and ``Q^T V`` exactly, dropping accumulated rounding."""
        if self.variant == "monet":
            self.AU[:] = self.Q.T @ self.U_raw
            self.AV[:] = self.Q.T @ self.V_raw

    def copy(self):
        clone = ModelState(**{f.name: getattr(self, f.name) for f in fields(self)})
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, np.ndarray):
                setattr(clone, f.name, value.copy())
        clone.accum = {k: v.copy() for k, v in self.accum.items()}
        clone.epoch_losses = list(self.epoch_losses)
        return clone


def init_model(n, d, m, d_z, config, metadata=None):
    """Draw every parameter uniformly from ``[-init_scale, init_scale]``."""
    variant = config.variant
    if n < 1 or d < 1:
        raise ConfigError("n and d must be positive")
    if variant != "glove" and (m < 1 or d_z < 1):
        raise ConfigError(f"variant {variant!r} needs m >= 1 and d_z >= 1")
    rng = np.random.default_rng([config.seed, 0])
    s = config.init_scale

    def draw(*shape):
        return rng.uniform(-s, s, size=shape)

    U, V = draw(n, d), draw(n, d)
    a, b = draw(n), draw(n)
    if variant == "glove":
        T1 = T2 = None
    else:
        T1, T2 = draw(m, d_z), draw(m, d_z)
    accum = {"U": np.full((n, d), ACCUMULATOR_INIT), "V": np.full((n, d), ACCUMULATOR_INIT),
             "a": np.full(n, ACCUMULATOR_INIT), "b": np.full(n, ACCUMULATOR_INIT)}
    if T1 is not None:
        accum["T1"] = np.full((m, d_z), ACCUMULATOR_INIT)
        accum["T2"] = np.full((m, d_z), ACCUMULATOR_INIT)
    lam = config.lam if variant == "monet" else 0.0
    state = ModelState(variant=variant, lam=lam, U_raw=U, V_raw=V, a=a, b=b, T1=T1, T2=T2,
                       accum=accum, rank_tol=config.rank_tol)
    if metadata is not None:
        state.attach_metadata(metadata)
    return state


def random_embedding(n, d, seed):
    """i.i.d. standard normal ``n x d`` matrix."""
    return np.random.default_rng(seed).standard_normal((n, d))


def combined_embedding(state):
    """``(W, Z)`` with ``W = U + V`` and ``Z = M T1 + M T2`` (``None`` without metadata)."""
    W = state.U + state.V
    Z = state.metadata_embedding() if state.metadata is not None else None
    return W, Z


def metadata_importance(state):
    """``T1 T2^T``: learned pairwise effect of metadata dimensions on log co-occurrence."""
    if not state.has_metadata:
        raise ConfigError("metadata importance needs a variant with metadata embeddings")
    return state.T1 @ state.T2.T


def save_checkpoint(state, path):
    code = VARIANTS.index(state.variant)
    arrays = {"U": state.U_raw, "V": state.V_raw, "a": state.a, "b": state.b}
    if state.has_metadata:
        arrays.update(T1=state.T1, T2=state.T2)
    arrays.update({f"acc_{k}": v for k, v in state.accum.items()})
    if state.metadata is not None:
        arrays["M"] = state.metadata
    if state.variant == "monet" and state.Q is not None:
        # the live basis, so a reload reproduces the working views bit for bit
        arrays.update(Q=state.Q, B=state.B, rank=np.array([state.rank], dtype=np.int64))
    arrays["epoch_losses"] = np.asarray(state.epoch_losses, dtype=np.float64)
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<B", binfmt.VERSION))
        f.write(_HEADER.pack(code, state.n, state.d, state.m, state.d_z, state.lam))
        f.write(struct.pack("<dq", state.rank_tol, state.steps))
        binfmt.write_blocks(f, arrays)


def load_checkpoint(path):
    reader = binfmt.open_reader(path, CHECKPOINT_MAGIC)
    code, n, d, m, d_z, lam = reader.take(_HEADER.format)
    rank_tol, steps = reader.take("<dq")
    arrays = reader.blocks()
    if code >= len(VARIANTS):
        raise ParseError(f"unknown variant code {code}", path=path)
    variant = VARIANTS[code]
    if arrays["U"].shape != (n, d):
        raise ParseError("parameter block shape disagrees with header", path=path)
    accum = {k[4:]: v for k, v in arrays.items() if k.startswith("acc_")}
    state = ModelState(variant=variant, lam=lam, U_raw=arrays["U"], V_raw=arrays["V"],
                       a=arrays["a"], b=arrays["b"], T1=arrays.get("T1"), T2=arrays.get("T2"),
                       accum=accum, rank_tol=rank_tol, steps=steps,
                       epoch_losses=arrays["epoch_losses"].tolist())
    if "M" in arrays:
        state.attach_metadata(arrays["M"])
        if "Q" in arrays and state.Q is not None:
            state.Q[:] = arrays["Q"]
            state.B[:] = arrays["B"]
            state.rank = int(arrays["rank"][0])
            state.resync()
    return state
