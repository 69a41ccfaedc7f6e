"""Shilling attacks on a user-item rating graph and item-retrieval metrics.

Node layout for a rating graph: users occupy ids ``0..n_users-1`` and items
``n_users..n_users+n_items-1``. Item-level quantities (embeddings, metadata,
attack specs) are indexed by item index ``0..n_items-1``.
"""

import csv
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .datasets import require_movielens
from .errors import ConfigError, DimensionError, NumericalError, ParseError
from .graph import Graph, WalkCorpus, build_cooccurrence, filter_walks, generate_walks
from .linalg import distance_correlation, unit_rows
from .model import TrainConfig, combined_embedding, random_embedding
from .report import map_repetitions, method_seed, repetition_seeds, summarize, write_json
from .train import train, warmup

logger = logging.getLogger(__name__)


@dataclass
class RatingGraph:
    """Bipartite user-item graph plus the original ids behind each index."""

    graph: Graph
    user_ids: np.ndarray
    item_ids: np.ndarray

    @property
    def n_users(self):
        return len(self.user_ids)

    @property
    def n_items(self):
        return len(self.item_ids)

    def item_node(self, item):
        return self.n_users + np.asarray(item)

    def with_graph(self, graph):
        return RatingGraph(graph, self.user_ids, self.item_ids)

    def save_mapping(self, path):
        """TSV ``kind  original_id  index`` for every user and item."""
        with open(path, "w") as f:
            f.write("kind\toriginal_id\tindex\n")
            for kind, ids in (("user", self.user_ids), ("item", self.item_ids)):
                for idx, orig in enumerate(ids.tolist()):
                    f.write(f"{kind}\t{orig}\t{idx}\n")


def load_movielens(path):
    """Read ``u.data`` (user, item, rating, timestamp); ratings become unweighted edges.

    User and item ids are remapped, in ascending order of the original id, to
    contiguous indices.
    """
    users, items = [], []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) < 2:
                raise ParseError("expected at least user and item columns", path, lineno)
            try:
                users.append(int(parts[0]))
                items.append(int(parts[1]))
            except ValueError:
                raise ParseError(f"non-integer id in {line.strip()!r}", path, lineno) from None
    if not users:
        raise ParseError("no ratings found", path)
    user_ids, u = np.unique(np.array(users, dtype=np.int64), return_inverse=True)
    item_ids, i = np.unique(np.array(items, dtype=np.int64), return_inverse=True)
    n_users = len(user_ids)
    node_type = np.r_[np.zeros(n_users, np.int8), np.ones(len(item_ids), np.int8)]
    g = Graph.from_pairs(n_users + len(item_ids), np.stack([u, n_users + i], axis=1), node_type)
    return RatingGraph(g, user_ids, item_ids)


@dataclass(frozen=True)
class AttackSpec:
    """Influence items, one target item and the attacking users (all as indices)."""

    influence: tuple
    target: int
    attackers: tuple
    known_fraction: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.target in self.influence:
            raise ConfigError("the target item cannot be in the influence set")
        if len(set(self.influence)) != len(self.influence):
            raise ConfigError("influence items must be distinct")
        if not 0 < self.known_fraction <= 1:
            raise ConfigError("known_fraction must lie in (0, 1]")

    @property
    def attacked_items(self):
        return (*self.influence, self.target)

    def validate(self, data):
        items = np.array(self.attacked_items)
        if items.min() < 0 or items.max() >= data.n_items:
            raise ConfigError("attack spec references an unknown item")
        if self.attackers and (min(self.attackers) < 0 or max(self.attackers) >= data.n_users):
            raise ConfigError("attack spec references an unknown user")


def sample_attack(data, seed, n_influence=10, attacker_fraction=0.05, known_fraction=0.5):
    """Draw influence set, target and ``round(attacker_fraction * n_users)`` attackers."""
    rng = np.random.default_rng([seed, 21])
    picked = rng.choice(data.n_items, size=n_influence + 1, replace=False)
    n_att = math.floor(attacker_fraction * data.n_users + 0.5)
    attackers = np.sort(rng.choice(data.n_users, size=n_att, replace=False))
    return AttackSpec(influence=tuple(sorted(picked[:-1].tolist())), target=int(picked[-1]),
                      attackers=tuple(attackers.tolist()), known_fraction=known_fraction,
                      seed=int(seed))


def inject_attack(data, spec):
    """Add a rating from every attacker to every influence item and the target."""
    spec.validate(data)
    if not spec.attackers:
        return data
    users = np.repeat(np.array(spec.attackers), len(spec.attacked_items))
    items = np.tile(data.item_node(spec.attacked_items), len(spec.attackers))
    pairs = np.vstack([data.graph.edges, np.stack([users, items], axis=1)])
    g = Graph.from_pairs(data.graph.n, pairs, data.graph.node_type)
    return data.with_graph(g)


def known_attackers(spec):
    """Attackers the defender knows about: each kept independently with probability
    ``known_fraction`` (redrawn if none survive), from a generator fixed by the spec seed."""
    att = np.array(spec.attackers, dtype=np.int64)
    if len(att) == 0 or spec.known_fraction == 1:
        return att
    rng = np.random.default_rng([spec.seed, 22])
    while True:
        keep = rng.random(len(att)) < spec.known_fraction
        if keep.any():
            return att[keep]


METADATA_SCOPES = ("attacked", "all")


def attacker_metadata(data, spec, scope="attacked"):
    """``n_items x 1`` count of known attackers that rated each item.

    ``scope="attacked"`` counts only on the attacked items (influence set and
    target) and leaves every other item at 0; ``scope="all"`` also counts the
    known attackers' ordinary ratings of other items.
    """
    if scope not in METADATA_SCOPES:
        raise ConfigError(f"scope must be one of {METADATA_SCOPES}")
    known = known_attackers(spec)
    indptr, indices = data.graph.csr()
    counts = np.zeros(data.n_items)
    for u in known.tolist():
        counts[indices[indptr[u]:indptr[u + 1]] - data.n_users] += 1
    if scope == "attacked":
        mask = np.zeros(data.n_items, dtype=bool)
        mask[list(spec.attacked_items)] = True
        counts[~mask] = 0.0
    return counts[:, None]


def item_walks(data, walks_per_node, walk_length, seed):
    """Walks on the rating graph with users deleted and items relabelled to item indices."""
    corpus = generate_walks(data.graph, walks_per_node, walk_length, seed)
    kept = filter_walks(corpus, data.graph.node_type == 1)
    walks = kept.walks.copy()
    walks[walks >= 0] -= data.n_users
    return WalkCorpus(walks, kept.walk_length, kept.walks_per_node, kept.seed)


def _distances_from(X, i):
    return 1.0 - X @ X[i]


def topk_neighbors(W, i, k):
    """The ``k`` items nearest to ``i`` by cosine distance; ties go to the smaller id."""
    W = np.asarray(W, dtype=np.float64)
    n = W.shape[0]
    if not 0 < k < n:
        raise ConfigError(f"k must lie in [1, {n - 1}]")
    if not np.any(W[i]):
        raise NumericalError(f"item {i} has a zero embedding; cosine distance undefined")
    X = unit_rows(W)
    d = _distances_from(X, i)
    order = np.lexsort((np.arange(n), d))
    order = order[order != i]
    return order[:k]


def attacked_in_top(W, spec, k=20):
    """How many influence items appear among the target's ``k`` nearest neighbours."""
    top = topk_neighbors(W, spec.target, k)
    return int(np.isin(top, spec.influence).sum())


def cooccurrence_nn(cooc):
    """``{i: argmax_j C_ij}`` with ties to the smaller ``j``; items without entries are left out."""
    I, J, C = cooc.entries()
    order = np.lexsort((J, -C, I))
    I, J = I[order], J[order]
    first = np.r_[True, I[1:] != I[:-1]]
    nn = dict(zip(I[first].tolist(), J[first].tolist()))
    missing = cooc.n - len(nn)
    if missing:
        logger.warning("%d items have no co-occurrences and are excluded from retrieval", missing)
    return nn


def retrieval_ranks(W, nn_map, chunk=512):
    """1-based rank of ``nn_map[i]`` in ``i``'s cosine-distance ordering (``i`` excluded)."""
    if not nn_map:
        raise ConfigError("nn_map is empty")
    X = unit_rows(np.asarray(W, dtype=np.float64))
    n = X.shape[0]
    src = np.fromiter(nn_map.keys(), dtype=np.int64, count=len(nn_map))
    dst = np.fromiter(nn_map.values(), dtype=np.int64, count=len(nn_map))
    ids = np.arange(n)
    ranks = np.empty(len(src), dtype=np.int64)
    for lo in range(0, len(src), chunk):
        s, t = src[lo:lo + chunk], dst[lo:lo + chunk]
        D = 1.0 - X[s] @ X.T
        rows = np.arange(len(s))
        D[rows, s] = np.inf
        dt = D[rows, t][:, None]
        ahead = (D < dt) | ((D == dt) & (ids[None, :] < t[:, None]))
        ranks[lo:lo + chunk] = ahead.sum(axis=1) + 1
    return ranks


def mrr(W, nn_map):
    """Mean reciprocal rank of each item's co-occurrence nearest neighbour."""
    return float(np.mean(1.0 / retrieval_ranks(W, nn_map)))


def attack_direction(W, M):
    """``sum_{M_i > 0} M_i W_i - sum_{M_i = 0} W_i``."""
    W = np.asarray(W, dtype=np.float64)
    m = np.asarray(M, dtype=np.float64).reshape(-1)
    if len(m) != W.shape[0]:
        raise DimensionError("metadata must have one entry per item")
    hit = m > 0
    if not hit.any():
        raise ConfigError("attack direction needs at least one item with known attackers")
    return m[hit] @ W[hit] - W[~hit].sum(axis=0)


def nlp_debias(W, direction):
    """Remove from every row its component along ``direction``."""
    a = np.asarray(direction, dtype=np.float64)
    norm = np.linalg.norm(a)
    if norm == 0:
        raise NumericalError("cannot reject a zero direction")
    u = a / norm
    W = np.asarray(W, dtype=np.float64)
    return W - np.outer(W @ u, u)


@dataclass
class RetrievalMetrics:
    attacked_in_top20: float
    mrr: float
    mrr_lift: float = field(default=float("nan"))


@dataclass
class ShillingConfig:
    data_path: str | None = None
    repetitions: int = 10
    seed: int = 0
    lambdas: tuple = (0.25, 0.5, 0.75, 1.0)
    dims: int = 128
    epochs: int = 10
    learning_rate: float = 0.05
    batch_size: int = 100
    init_scale: float = 0.1
    x_max: float = 100.0
    alpha: float = 0.75
    walks_per_node: int = 80
    walk_length: int = 40
    window: int = 10
    n_influence: int = 10
    attacker_fraction: float = 0.05
    known_fraction: float = 0.5
    top_k: int = 20
    metadata_scope: str = "attacked"
    distance_pairs: int = 0
    workers: int | None = None

    def __post_init__(self):
        self.lambdas = tuple(float(x) for x in self.lambdas)
        if any(not 0 < x <= 1 for x in self.lambdas):
            raise ConfigError("every lambda in the grid must lie in (0, 1]")
        if self.metadata_scope not in METADATA_SCOPES:
            raise ConfigError(f"metadata_scope must be one of {METADATA_SCOPES}")
        self.train_config("glove", 0.0, self.seed)

    def train_config(self, variant, lam, seed):
        return TrainConfig(dims=self.dims, meta_dims=1, learning_rate=self.learning_rate,
                           batch_size=self.batch_size, epochs=self.epochs, x_max=self.x_max,
                           alpha=self.alpha, seed=seed, init_scale=self.init_scale,
                           lam=lam, variant=variant)


def monet_key(lam):
    return f"monet_lambda{lam:g}"


def _item_embedding(state):
    W, _ = combined_embedding(state)
    return W


def shilling_repetition(config, seed, data=None):
    """One attack-train-evaluate round. Returns per-method raw metrics."""
    if data is None:
        data = load_movielens(require_movielens(config.data_path))
    spec = sample_attack(data, seed, config.n_influence, config.attacker_fraction,
                         config.known_fraction)
    attacked = inject_attack(data, spec)
    walks = item_walks(attacked, config.walks_per_node, config.walk_length, seed)
    cooc = build_cooccurrence(walks, config.window, n=data.n_items)
    M = attacker_metadata(attacked, spec, config.metadata_scope)
    nn_map = cooccurrence_nn(cooc)

    embeddings, times = {}, {}
    runs = [("glove", "glove", 0.0), ("glove_meta", "glove_meta", 0.0)]
    runs += [(monet_key(lam), "monet", lam) for lam in config.lambdas]
    for key, variant, lam in runs:
        state = train(cooc, M, config.train_config(variant, lam, method_seed(seed, key)))
        embeddings[key] = _item_embedding(state)
        times[key] = state.wall_time

    start = time.perf_counter()
    direction = attack_direction(embeddings["glove"], M)
    W_nlp = nlp_debias(embeddings["glove"], direction)
    embeddings["nlp"] = W_nlp
    times["nlp"] = times["glove"] + time.perf_counter() - start
    residual = np.linalg.norm(W_nlp @ direction) / (
        np.linalg.norm(embeddings["glove"]) * np.linalg.norm(direction))

    start = time.perf_counter()
    embeddings["random"] = random_embedding(data.n_items, config.dims, seed)
    times["random"] = time.perf_counter() - start

    out = {}
    for key, W in embeddings.items():
        r = 1.0 if key == "glove" else distance_correlation(
            W, embeddings["glove"], config.distance_pairs, seed)
        out[key] = {"attacked_top20": attacked_in_top(W, spec, config.top_k),
                    "mrr": mrr(W, nn_map), "distance_r": r, "wall_time_sec": times[key]}
    out["nlp"]["rejection_residual"] = float(residual)
    out["_attack"] = {"influence": list(spec.influence), "target": spec.target,
                      "attackers": len(spec.attackers), "known": int(len(known_attackers(spec))),
                      "new_edges": attacked.graph.num_edges - data.graph.num_edges}
    return out


def _repetition_job(args):
    config, seed = args
    warmup()
    return shilling_repetition(config, seed)


def aggregate_shilling(per_rep, config, seeds):
    methods = [k for k in per_rep[0] if not k.startswith("_")]
    random_mrr = np.mean([rep["random"]["mrr"] for rep in per_rep])
    report = {}
    for key in methods:
        rows = [rep[key] for rep in per_rep]
        mean_mrr = float(np.mean([r["mrr"] for r in rows]))
        entry = {"attacked_top20": summarize([r["attacked_top20"] for r in rows]),
                 "mrr": summarize([r["mrr"] for r in rows]),
                 "mrr_lift": mean_mrr / random_mrr,
                 "distance_r": float(np.mean([r["distance_r"] for r in rows])),
                 "distance_r_std": float(np.std([r["distance_r"] for r in rows])),
                 "wall_time_sec": float(np.mean([r["wall_time_sec"] for r in rows]))}
        if key.startswith("monet_lambda"):
            entry["lambda"] = float(key[len("monet_lambda"):])
        if key == "nlp":
            entry["rejection_residual_max"] = max(r["rejection_residual"] for r in rows)
        report[key] = entry
    report["_meta"] = {
        "experiment": "shilling",
        "repetitions": len(per_rep),
        "seeds": seeds,
        "config": {k: v for k, v in asdict(config).items() if k not in ("data_path", "workers")},
        "attacks": [rep["_attack"] for rep in per_rep],
        "notes": ["mrr_lift is the ratio of mean MRR to the mean MRR of the seeded random embedding",
                  "nlp removes each row's component along the normalised attack direction"],
    }
    return report


def run_shilling_experiment(config):
    """Average retrieval metrics over ``config.repetitions`` independent attacks.

    Returns ``{method: {attacked_top20, mrr, mrr_lift, distance_r, wall_time_sec}}``
    plus a ``_meta`` entry; every ``{mean, std}`` pair is over repetitions.
    """
    require_movielens(config.data_path)
    seeds = repetition_seeds(config.seed, config.repetitions)
    per_rep = map_repetitions(_repetition_job, [(config, s) for s in seeds], config.workers)
    return aggregate_shilling(per_rep, config, seeds)


def write_shilling_outputs(report, outdir):
    """``report.json`` plus ``tradeoff.tsv``: one row per method (bias vs accuracy)."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    write_json(report, out / "report.json")
    with open(out / "tradeoff.tsv", "w", newline="") as f:
        w = csv.writer(f, delimiter="\t", lineterminator="\n")
        w.writerow(["method", "lambda", "attacked_top20_mean", "attacked_top20_std",
                    "mrr_mean", "mrr_lift", "distance_r", "wall_time_sec"])
        for key, e in report.items():
            if key.startswith("_"):
                continue
            w.writerow([key, e.get("lambda", ""), repr(e["attacked_top20"]["mean"]),
                        repr(e["attacked_top20"]["std"]), repr(e["mrr"]["mean"]),
                        repr(e["mrr_lift"]), repr(e["distance_r"]), repr(e["wall_time_sec"])])
