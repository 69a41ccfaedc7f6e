"""Political-blogs debiasing study: leakage, metadata importance and affiliation probes."""

import csv
import logging
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .datasets import load_blog_dataset
from .graph import build_cooccurrence, generate_walks
from .linalg import metadata_leakage, pca_2d
from .model import TrainConfig, combined_embedding, metadata_importance, random_embedding
from .probes import probe_accuracy, split_nodes
from .report import map_repetitions, method_seed, repetition_seeds, summarize, write_json
from .train import train, warmup

logger = logging.getLogger(__name__)

METHODS = ("random", "glove", "glove_meta", "monet")
PROBE_KINDS = ("linear", "nonlinear")


@dataclass
class BlogConfig:
    dataset: str = "polblogs"
    data_root: str | None = None
    repetitions: int = 10
    seed: int = 0
    dims: int = 16
    epochs: int = 20
    lam: float = 1.0
    learning_rate: float = 0.05
    batch_size: int = 100
    init_scale: float = 0.1
    x_max: float = 100.0
    alpha: float = 0.75
    walks_per_node: int = 80
    walk_length: int = 40
    window: int = 10
    p_grid: tuple = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
    linear_reg: float = 1e-2
    linear_iters: int = 10_000
    kernel_reg: float = 1e-1
    kernel_gamma: float | None = None
    workers: int | None = None

    def __post_init__(self):
        self.p_grid = tuple(float(p) for p in self.p_grid)
        self.train_config("monet", self.seed)

    def train_config(self, variant, seed):
        return TrainConfig(dims=self.dims, learning_rate=self.learning_rate,
                           batch_size=self.batch_size, epochs=self.epochs, x_max=self.x_max,
                           alpha=self.alpha, seed=seed, init_scale=self.init_scale,
                           lam=self.lam if variant == "monet" else 0.0, variant=variant)


def blog_repetition(config, seed, data):
    """Train every method on one walk corpus and score it. Returns raw per-method metrics."""
    g, M, labels = data
    walks = generate_walks(g, config.walks_per_node, config.walk_length, seed)
    cooc = build_cooccurrence(walks, config.window, n=g.n)

    out = {}
    for method in METHODS:
        if method == "random":
            start = time.perf_counter()
            W, Z, sigma = random_embedding(g.n, config.dims, seed), None, None
            elapsed = time.perf_counter() - start
        else:
            state = train(cooc, M, config.train_config(method, method_seed(seed, method)))
            W, Z = combined_embedding(state)
            sigma = metadata_importance(state) if state.has_metadata else None
            elapsed = state.wall_time
        # methods without metadata embeddings are scored against the raw metadata
        leak = metadata_leakage(M if Z is None else Z, W)
        out[method] = {"W": W, "leakage": leak, "sigma_T": sigma, "wall_time_sec": elapsed,
                       "probes": {}}

    for idx, p in enumerate(config.p_grid):
        train_ids, test_ids = split_nodes(g.n, p, [seed, 31, idx], labels)
        for method in METHODS:
            W = out[method]["W"]
            out[method]["probes"][("linear", p)] = probe_accuracy(
                "linear", W, labels, train_ids, test_ids,
                reg=config.linear_reg, iters=config.linear_iters)
            out[method]["probes"][("nonlinear", p)] = probe_accuracy(
                "nonlinear", W, labels, train_ids, test_ids,
                gamma=config.kernel_gamma, reg=config.kernel_reg)
    return out


def _repetition_job(args):
    config, seed, rep = args
    warmup()
    data = load_blog_dataset(config.dataset, config.data_root, seed=config.seed)
    result = blog_repetition(config, seed, data)
    for method, entry in result.items():
        W = entry.pop("W")
        # plot coordinates only for the first repetition
        entry["pca"] = pca_2d(W) if rep == 0 else None
    return result


def aggregate_blogs(per_rep, config, seeds):
    report = {}
    for method in METHODS:
        rows = [rep[method] for rep in per_rep]
        entry = {"leakage": summarize([r["leakage"] for r in rows]),
                 "wall_time_sec": float(np.mean([r["wall_time_sec"] for r in rows]))}
        if rows[0]["sigma_T"] is not None:
            stack = np.array([r["sigma_T"] for r in rows])
            entry["sigma_T"] = stack.mean(axis=0).tolist()
            entry["sigma_T_std"] = stack.std(axis=0).tolist()
        else:
            entry["sigma_T"] = None
        entry["probes"] = [
            {"p": p, "kind": kind, **summarize([r["probes"][(kind, p)] for r in rows])}
            for kind in PROBE_KINDS for p in config.p_grid]
        report[method] = entry
    report["_meta"] = {
        "experiment": "blogs",
        "dataset": config.dataset,
        "repetitions": len(per_rep),
        "seeds": seeds,
        "config": {k: v for k, v in asdict(config).items() if k not in ("data_root", "workers")},
        "notes": ["linear probe: L2 logistic regression (in place of a linear SVM)",
                  "nonlinear probe: RBF kernel ridge with sign readout (in place of an RBF SVM)",
                  "leakage of methods without metadata embeddings uses the raw metadata"],
    }
    return report


def run_blog_experiment(config, pca=None):
    """Average leakage, ``Sigma_T`` and probe curves over ``config.repetitions``.

    Pass a dict as ``pca`` to receive ``{method: n x 2}`` coordinates from the
    first repetition plus the node labels under ``"labels"``.
    """
    data = load_blog_dataset(config.dataset, config.data_root, seed=config.seed)
    seeds = repetition_seeds(config.seed, config.repetitions)
    jobs = [(config, s, rep) for rep, s in enumerate(seeds)]
    per_rep = map_repetitions(_repetition_job, jobs, config.workers)
    if pca is not None:
        pca.update({m: per_rep[0][m]["pca"] for m in METHODS})
        pca["labels"] = data[2]
    return aggregate_blogs(per_rep, config, seeds)


def write_blog_outputs(report, outdir, pca=None):
    """``report.json``, ``leakage.tsv``, ``probes.tsv`` and ``pca_<method>.tsv`` files."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    write_json(report, out / "report.json")
    methods = [m for m in report if not m.startswith("_")]
    with open(out / "leakage.tsv", "w", newline="") as f:
        w = csv.writer(f, delimiter="\t", lineterminator="\n")
        w.writerow(["method", "leakage_mean", "leakage_std", "wall_time_sec"])
        for m in methods:
            e = report[m]
            w.writerow([m, repr(e["leakage"]["mean"]), repr(e["leakage"]["std"]),
                        repr(e["wall_time_sec"])])
    with open(out / "probes.tsv", "w", newline="") as f:
        w = csv.writer(f, delimiter="\t", lineterminator="\n")
        w.writerow(["method", "kind", "p", "accuracy_mean", "accuracy_std"])
        for m in methods:
            for row in report[m]["probes"]:
                w.writerow([m, row["kind"], row["p"], repr(row["mean"]), repr(row["std"])])
    if pca:
        labels = pca["labels"]
        for m in methods:
            with open(out / f"pca_{m}.tsv", "w", newline="") as f:
                w = csv.writer(f, delimiter="\t", lineterminator="\n")
                w.writerow(["node_id", "x", "y", "label"])
                for i, (x, y) in enumerate(pca[m]):
                    w.writerow([i, repr(float(x)), repr(float(y)), int(labels[i])])
