"""Dataset locations, loaders and a synthetic stand-in for the political-blogs graph.

Real data lives under ``$MONET_DATA`` (default ``./data``)::

    data/polblogs/edges.tsv        src<TAB>dst, ids 0..1106
    data/polblogs/affiliation.tsv  one-hot rows "liberal conservative", one per node
    data/ml-100k/u.data            MovieLens 100k ratings, verbatim
"""

import logging
import os
from pathlib import Path

import numpy as np

from .errors import ConfigError, DatasetMissingError
from .graph import Graph, load_edge_list, load_metadata

logger = logging.getLogger(__name__)

POLBLOGS_INSTRUCTIONS = """\
political-blogs data not found under {root}/polblogs.
Expected files:
  edges.tsv        one undirected hyperlink per line, "src<TAB>dst", node ids 0..n-1
  affiliation.tsv  one row per node, two one-hot columns (liberal, conservative)
The graph is the Adamic & Glance (2005) blog network (polblogs.gml, e.g. from
http://www-personal.umich.edu/~mejn/netdata/), restricted to its 1107-node core
with 19034 undirected edges. Convert it to the two files above, or point
MONET_DATA at a directory that contains polblogs/. To run without it, use the
synthetic stand-in: --dataset synthetic."""

MOVIELENS_INSTRUCTIONS = """\
MovieLens 100k not found at {path}.
Download http://files.grouplens.org/datasets/movielens/ml-100k.zip, unzip it and
place u.data at {path} (or set MONET_DATA to the directory holding ml-100k/)."""


def data_root(root=None):
    if root is not None:
        return Path(root)
    return Path(os.environ.get("MONET_DATA", "data"))


def movielens_path(root=None):
    return data_root(root) / "ml-100k" / "u.data"


def require_movielens(path=None):
    path = Path(path) if path is not None else movielens_path()
    if not path.is_file():
        raise DatasetMissingError(MOVIELENS_INSTRUCTIONS.format(path=path))
    return path


def load_polblogs(root=None):
    """``(graph, M, labels)`` from the files described in the module docstring."""
    base = data_root(root) / "polblogs"
    edges, affil = base / "edges.tsv", base / "affiliation.tsv"
    if not (edges.is_file() and affil.is_file()):
        raise DatasetMissingError(POLBLOGS_INSTRUCTIONS.format(root=data_root(root)))
    # the row count of the affiliation file fixes n, so trailing isolated ids survive
    n = sum(1 for line in open(affil) if line.strip())
    g = load_edge_list(edges, n=n)
    M = load_metadata(affil, g.n)
    return g, M, labels_from_onehot(M)


def labels_from_onehot(M):
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[1] < 2 or not np.all(M.sum(axis=1) == 1):
        raise ConfigError("affiliation metadata must be one-hot rows")
    return np.argmax(M, axis=1)


def synthetic_polblogs(seed=0, n=1107, n_edges=19034, homophily=0.9, degree_exponent=2.5):
    """Degree-corrected two-block graph shaped like the political-blogs core.

    Two equal-sized communities, a heavy-tailed (Pareto) degree propensity and
    a fraction ``homophily`` of edges inside a community. Every node gets at
    least one edge. Returns ``(graph, M, labels)`` with one-hot ``M``.
    """
    if n_edges < n or n_edges > n * (n - 1) // 2:
        raise ConfigError("n_edges must allow every node an edge and fit a simple graph")
    rng = np.random.default_rng([seed, 11])
    labels = np.zeros(n, dtype=np.int64)
    labels[rng.permutation(n)[n // 2:]] = 1
    theta = rng.pareto(degree_exponent - 1.0, size=n) + 1.0
    members = [np.flatnonzero(labels == c) for c in (0, 1)]
    probs = [theta[idx] / theta[idx].sum() for idx in members]

    def partners(src):
        same = rng.random(len(src)) < homophily
        side = np.where(same, labels[src], 1 - labels[src])
        out = np.empty(len(src), dtype=np.int64)
        for c in (0, 1):
            sel = side == c
            out[sel] = rng.choice(members[c], size=int(sel.sum()), p=probs[c])
        return out

    keys = set()

    def add(src, dst):
        for u, v in zip(src.tolist(), dst.tolist()):
            if u != v and len(keys) < n_edges:
                keys.add((min(u, v), max(u, v)))

    # one edge per node first, so the walk corpus covers everyone
    nodes = np.arange(n)
    add(nodes, partners(nodes))
    weights = theta / theta.sum()
    while len(keys) < n_edges:
        src = rng.choice(n, size=2 * (n_edges - len(keys)), p=weights)
        add(src, partners(src))
    g = Graph.from_pairs(n, np.array(sorted(keys)))
    M = np.eye(2)[labels]
    return g, M, labels


def load_blog_dataset(name="polblogs", root=None, seed=0):
    if name == "polblogs":
        return load_polblogs(root)
    if name == "synthetic":
        logger.info("using the synthetic political-blogs stand-in (seed %d)", seed)
        return synthetic_polblogs(seed=seed)
    raise ConfigError(f"unknown blog dataset {name!r}; expected 'polblogs' or 'synthetic'")
