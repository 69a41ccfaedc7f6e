"""Graph ingestion, random walks and walk-distance weighted co-occurrences."""

import logging
from dataclasses import dataclass, field

import numpy as np

from . import binfmt
from .errors import ConfigError, DimensionError, ParseError

logger = logging.getLogger(__name__)

CORPUS_MAGIC = b"MWLK"
COOC_MAGIC = b"MCOC"

# dense accumulation buffer is n*n floats; above this fall back to sorting keys
_DENSE_COOC_MAX_N = 4096


@dataclass
class Graph:
    """Undirected simple graph.

    ``edges`` holds each undirected edge once as a row ``(lo, hi)`` with
    ``lo < hi``, sorted lexicographically. ``node_type`` optionally tags each
    node (for bipartite graphs: 0 = user/left, 1 = item/right).
    """

    n: int
    edges: np.ndarray
    node_type: np.ndarray | None = None
    _csr: tuple | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if len(self.edges):
            if self.edges.min() < 0 or self.edges.max() >= self.n:
                raise DimensionError(f"edge endpoint outside [0, {self.n})")
            if np.any(self.edges[:, 0] >= self.edges[:, 1]):
                raise ValueError("edges must be canonical (lo < hi); use Graph.from_pairs")
        if self.node_type is not None:
            self.node_type = np.asarray(self.node_type)
            if self.node_type.shape != (self.n,):
                raise DimensionError("node_type must have one entry per node")

    @classmethod
    def from_pairs(cls, n, pairs, node_type=None):
        """Build a graph from arbitrary (possibly repeated, reversed or looped) pairs."""
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        pairs = pairs[pairs[:, 0] != pairs[:, 1]]
        canon = np.sort(pairs, axis=1)
        canon = np.unique(canon, axis=0) if len(canon) else canon
        return cls(n=int(n), edges=canon, node_type=node_type)

    @property
    def num_edges(self):
        return len(self.edges)

    def csr(self):
        """Symmetric adjacency as ``(indptr, indices)`` with sorted neighbor lists."""
        if self._csr is None:
            src = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
            dst = np.concatenate([self.edges[:, 1], self.edges[:, 0]])
            order = np.lexsort((dst, src))
            indices = dst[order]
            indptr = np.zeros(self.n + 1, dtype=np.int64)
            np.cumsum(np.bincount(src, minlength=self.n), out=indptr[1:])
            self._csr = (indptr, indices)
        return self._csr

    def degree(self):
        indptr, _ = self.csr()
        return np.diff(indptr)

    def neighbors(self, i):
        indptr, indices = self.csr()
        return indices[indptr[i]:indptr[i + 1]]

    def has_edge(self, i, j):
        nb = self.neighbors(i)
        k = np.searchsorted(nb, j)
        return bool(k < len(nb) and nb[k] == j)


def _parse_int(tok, path, lineno):
    try:
        value = int(tok)
    except ValueError:
        raise ParseError(f"expected an integer node id, got {tok!r}", path, lineno) from None
    if value < 0:
        raise ParseError(f"negative node id {value}", path, lineno)
    return value


def load_edge_list(path, bipartite=False, dedupe=True, n=None):
    """Read a whitespace separated edge list into an undirected :class:`Graph`.

    Lines starting with ``#`` or ``%`` are comments. Columns past the second
    are ignored. Self-loops are dropped.

    With ``bipartite=True`` the first column indexes left nodes and the
    second right nodes, each in its own id space; right ids are shifted past
    the left ones and ``node_type`` marks the sides. With ``dedupe=False`` a
    repeated edge is treated as malformed input instead of being collapsed.
    """
    src, dst = [], []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line or line[0] in "#%":
                continue
            parts = line.split()
            if len(parts) < 2:
                raise ParseError("expected at least two columns", path, lineno)
            src.append(_parse_int(parts[0], path, lineno))
            dst.append(_parse_int(parts[1], path, lineno))
    if not src:
        raise ParseError("edge list is empty", path)
    src = np.array(src, dtype=np.int64)
    dst = np.array(dst, dtype=np.int64)

    node_type = None
    if bipartite:
        n_left = int(src.max()) + 1
        n_right = int(dst.max()) + 1
        dst = dst + n_left
        total = n_left + n_right
        node_type = np.concatenate([np.zeros(n_left, np.int8), np.ones(n_right, np.int8)])
    else:
        total = int(max(src.max(), dst.max())) + 1
    if n is not None:
        if n < total:
            raise DimensionError(f"node id {total - 1} exceeds declared n={n}")
        if bipartite:
            raise ConfigError("explicit n is not supported for bipartite input")
        total = n

    pairs = np.stack([src, dst], axis=1)
    if not dedupe:
        canon = np.sort(pairs[pairs[:, 0] != pairs[:, 1]], axis=1)
        if len(np.unique(canon, axis=0)) != len(canon):
            raise ParseError("duplicate edge with dedupe disabled", path)
    g = Graph.from_pairs(total, pairs, node_type=node_type)
    logger.info("loaded %s: n=%d, %d undirected edges", path, g.n, g.num_edges)
    return g


def load_metadata(path, n):
    """Read an ``n x m`` dense metadata matrix, one whitespace separated row per node."""
    rows = []
    width = None
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line or line[0] in "#%":
                continue
            try:
                row = [float(tok) for tok in line.split()]
            except ValueError:
                raise ParseError("non-numeric metadata field", path, lineno) from None
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise ParseError(f"expected {width} columns, got {len(row)}", path, lineno)
            rows.append(row)
    if len(rows) != n:
        raise DimensionError(f"{path}: metadata has {len(rows)} rows, graph has {n} nodes")
    M = np.array(rows, dtype=np.float64).reshape(n, width or 0)
    if not np.all(np.isfinite(M)):
        raise ParseError("metadata contains non-finite values", path)
    return M


@dataclass
class WalkCorpus:
    """Random walks stored as a ``(num_walks, width)`` array padded with -1."""

    walks: np.ndarray
    walk_length: int
    walks_per_node: int
    seed: int

    def __len__(self):
        return len(self.walks)

    def __iter__(self):
        for row in self.walks:
            yield row[row >= 0]

    def lengths(self):
        return (self.walks >= 0).sum(axis=1)

    def to_list(self):
        return [w.tolist() for w in self]

    def save(self, path):
        binfmt.write_arrays(path, CORPUS_MAGIC, {"walks": self.walks}, meta={
            "walk_length": self.walk_length,
            "walks_per_node": self.walks_per_node,
            "seed": self.seed,
        })

    @classmethod
    def load(cls, path):
        arrays, meta = binfmt.read_arrays(path, CORPUS_MAGIC)
        return cls(walks=arrays["walks"], **meta)


def generate_walks(g, walks_per_node, walk_length, seed):
    """Uniform random walks: ``walks_per_node`` rounds, one walk per non-isolated node each.

    Round ``r`` draws from a generator seeded by ``(seed, r)``, so any round can
    be produced independently of the others.
    """
    if walk_length < 2:
        raise ConfigError("walk_length must be at least 2")
    if walks_per_node < 1:
        raise ConfigError("walks_per_node must be at least 1")
    indptr, indices = g.csr()
    deg = np.diff(indptr)
    starts = np.flatnonzero(deg > 0)
    isolated = g.n - len(starts)
    if isolated:
        logger.warning("skipping %d isolated nodes as walk starts", isolated)

    rounds = []
    for r in range(walks_per_node):
        rng = np.random.default_rng([seed, r])
        path = np.empty((len(starts), walk_length), dtype=np.int64)
        cur = starts.copy()
        path[:, 0] = cur
        for t in range(1, walk_length):
            cur = indices[indptr[cur] + rng.integers(0, deg[cur])]
            path[:, t] = cur
        rounds.append(path)
    walks = np.concatenate(rounds) if rounds else np.empty((0, walk_length), np.int64)
    return WalkCorpus(walks=walks, walk_length=walk_length, walks_per_node=walks_per_node, seed=seed)


def filter_walks(corpus, keep):
    """Delete nodes failing ``keep`` from every walk, preserving order.

    ``keep`` is a boolean mask over node ids or a callable ``node_id -> bool``.
    Walks left with fewer than two nodes are dropped.
    """
    walks = corpus.walks
    if callable(keep):
        top = int(walks.max()) + 1 if walks.size else 0
        keep = np.fromiter((bool(keep(i)) for i in range(top)), dtype=bool, count=top)
    keep = np.asarray(keep, dtype=bool)
    valid = walks >= 0
    mask = valid & keep[np.where(valid, walks, 0)]
    counts = mask.sum(axis=1)
    rows = counts >= 2
    mask, counts, src = mask[rows], counts[rows], walks[rows]
    width = int(counts.max()) if len(counts) else 0
    # stable sort moves kept entries to the front in their original order
    order = np.argsort(~mask, axis=1, kind="stable")[:, :width]
    out = np.take_along_axis(src, order, axis=1)
    out[np.arange(width)[None, :] >= counts[:, None]] = -1
    return WalkCorpus(walks=out, walk_length=corpus.walk_length,
                      walks_per_node=corpus.walks_per_node, seed=corpus.seed)


@dataclass
class CooccurrenceStore:
    """Sparse positive co-occurrence weights.

    For a symmetric store only the upper triangle (``rows < cols``) is kept
    and the lower triangle is implied; otherwise entries are ordered pairs.
    Entries are sorted by ``(row, col)``.
    """

    n: int
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray
    symmetric: bool = True

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.int64)
        self.cols = np.asarray(self.cols, dtype=np.int64)
        self.vals = np.asarray(self.vals, dtype=np.float64)
        if np.any(self.vals <= 0):
            raise ValueError("co-occurrence weights must be positive")
        if self.symmetric and np.any(self.rows >= self.cols):
            raise ValueError("symmetric store keeps only rows < cols")

    def __len__(self):
        return len(self.vals)

    @property
    def nnz(self):
        """Number of stored ordered (i, j) entries, mirror included."""
        return 2 * len(self.vals) if self.symmetric else len(self.vals)

    def get(self, i, j):
        if self.symmetric:
            i, j = min(i, j), max(i, j)
        keys = self.rows * self.n + self.cols
        k = np.searchsorted(keys, i * self.n + j)
        if k < len(keys) and keys[k] == i * self.n + j:
            return float(self.vals[k])
        return 0.0

    def entries(self):
        """All ordered entries ``(i, j, c_ij)``; the mirror half follows the stored half."""
        if not self.symmetric:
            return self.rows, self.cols, self.vals
        return (np.concatenate([self.rows, self.cols]),
                np.concatenate([self.cols, self.rows]),
                np.concatenate([self.vals, self.vals]))

    def total_mass(self):
        return float(self.vals.sum() * (2 if self.symmetric else 1))

    def to_dense(self):
        C = np.zeros((self.n, self.n))
        i, j, c = self.entries()
        C[i, j] = c
        return C

    def save(self, path):
        binfmt.write_arrays(path, COOC_MAGIC,
                            {"rows": self.rows, "cols": self.cols, "vals": self.vals},
                            meta={"n": self.n, "symmetric": self.symmetric})

    @classmethod
    def load(cls, path):
        arrays, meta = binfmt.read_arrays(path, COOC_MAGIC)
        return cls(n=meta["n"], symmetric=meta["symmetric"], **arrays)


def build_cooccurrence(corpus, window, n=None):
    """Accumulate ``1/k`` for every pair of nodes ``k <= window`` steps apart in a walk.

    Both orientations receive the weight, so the result is symmetric and stored
    as an upper triangle. Pairs of identical nodes are skipped.
    """
    if window < 1:
        raise ConfigError("window must be at least 1")
    walks = corpus.walks
    if n is None:
        n = int(walks.max()) + 1 if walks.size else 0
    if walks.size == 0 or n == 0:
        empty = np.empty(0, dtype=np.int64)
        return CooccurrenceStore(n=n, rows=empty, cols=empty, vals=np.empty(0))

    dense = n <= _DENSE_COOC_MAX_N
    acc = np.zeros(n * n) if dense else None
    all_keys, all_w = [], []
    for k in range(1, min(window, walks.shape[1] - 1) + 1):
        a = walks[:, :-k].ravel()
        b = walks[:, k:].ravel()
        ok = (a >= 0) & (b >= 0) & (a != b)
        a, b = a[ok], b[ok]
        keys = np.minimum(a, b) * n + np.maximum(a, b)
        if dense:
            acc += np.bincount(keys, minlength=n * n) * (1.0 / k)
        else:
            uniq, counts = np.unique(keys, return_counts=True)
            all_keys.append(uniq)
            all_w.append(counts * (1.0 / k))
    if dense:
        keys = np.flatnonzero(acc)
        vals = acc[keys]
    else:
        keys, inv = np.unique(np.concatenate(all_keys), return_inverse=True)
        vals = np.bincount(inv, weights=np.concatenate(all_w))
    return CooccurrenceStore(n=n, rows=keys // n, cols=keys % n, vals=vals)
