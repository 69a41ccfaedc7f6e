"""Command-line entry point: ``monet {walks,cooc,train,export,experiment}``.

Every command writes its outputs into ``--out`` together with ``config.json``
(the resolved run configuration, loadable again with ``--config``) and
``manifest.json`` (configuration, seed, SHA-256 of every input file and the
library versions). Exit codes: 0 success, 2 usage or invalid input,
3 missing input, 4 numerical failure.
"""

import argparse
import csv
import hashlib
import json
import logging
import platform
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, DatasetMissingError, MonetError, NumericalError
from .graph import CooccurrenceStore, WalkCorpus, build_cooccurrence, generate_walks
from .graph import load_edge_list, load_metadata
from .model import VARIANTS, TrainConfig, combined_embedding, load_checkpoint
from .model import metadata_importance, save_checkpoint
from .report import worker_count

logger = logging.getLogger("monet")

EXIT_OK, EXIT_USAGE, EXIT_MISSING, EXIT_NUMERICAL = 0, 2, 3, 4
EXPERIMENTS = ("blogs", "shilling")


@dataclass
class RunConfig:
    """Flat, JSON-serialisable parameters of one CLI run.

    ``None`` means "use the default of the stage or experiment being run".
    """

    command: str = ""
    experiment: str | None = None
    out: str | None = None
    seed: int = 0
    graph: str | None = None
    metadata: str | None = None
    walks: str | None = None
    cooc: str | None = None
    checkpoint: str | None = None
    data_root: str | None = None
    dataset: str | None = None
    walks_per_node: int = 80
    walk_length: int = 40
    window: int = 10
    variant: str = "monet"
    lam: float | None = None
    lambdas: list | None = None
    dims: int | None = None
    meta_dims: int | None = None
    epochs: int | None = None
    batch_size: int = 100
    lr: float = 0.05
    init_scale: float = 0.1
    repetitions: int = 10

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text):
        try:
            values = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from None
        if not isinstance(values, dict):
            raise ConfigError("config file must hold a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        return cls(**values)

    def train_config(self):
        return TrainConfig(dims=self.dims or 128, meta_dims=self.meta_dims,
                           learning_rate=self.lr, batch_size=self.batch_size,
                           epochs=20 if self.epochs is None else self.epochs, seed=self.seed,
                           init_scale=self.init_scale,
                           lam=1.0 if self.lam is None else self.lam, variant=self.variant)


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _versions():
    import numba
    return {"monet": __version__, "numpy": np.__version__, "numba": numba.__version__,
            "python": platform.python_version()}


def _require_file(path, flag):
    if path is None:
        raise ConfigError(f"{flag} is required")
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"{flag}: no such file: {p}")
    return p


def _outdir(cfg):
    if cfg.out is None:
        raise ConfigError("--out is required")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _finish(cfg, out, inputs, artifacts):
    """Write ``config.json`` and ``manifest.json`` next to the stage outputs."""
    (out / "config.json").write_text(cfg.to_json())
    manifest = {
        "command": cfg.command,
        "config": asdict(cfg),
        "seed": cfg.seed,
        "inputs": {name: {"path": str(p), "sha256": _sha256(p)} for name, p in inputs.items()},
        "outputs": sorted(artifacts),
        "versions": _versions(),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def write_matrix_tsv(path, X, header_prefix):
    """Rows ``node_id, x_0 .. x_{k-1}`` with shortest round-trip float formatting."""
    X = np.asarray(X, dtype=np.float64)
    with open(path, "w", newline="") as f:
        w = csv.writer(f, delimiter="\t", lineterminator="\n")
        w.writerow(["node_id"] + [f"{header_prefix}{k}" for k in range(X.shape[1])])
        for i, row in enumerate(X):
            w.writerow([i] + [repr(float(x)) for x in row])


def _load_graph(cfg):
    return load_edge_list(_require_file(cfg.graph, "--graph"))


def cmd_walks(cfg):
    out = _outdir(cfg)
    g = _load_graph(cfg)
    corpus = generate_walks(g, cfg.walks_per_node, cfg.walk_length, cfg.seed)
    corpus.save(out / "walks.bin")
    _finish(cfg, out, {"graph": Path(cfg.graph)}, ["walks.bin"])
    logger.info("wrote %d walks to %s", len(corpus), out / "walks.bin")


def cmd_cooc(cfg):
    out = _outdir(cfg)
    walks_path = _require_file(cfg.walks, "--walks")
    corpus = WalkCorpus.load(walks_path)
    # the graph, when given, fixes n so isolated trailing nodes keep their ids
    inputs = {"walks": walks_path}
    n = None
    if cfg.graph is not None:
        n = _load_graph(cfg).n
        inputs["graph"] = Path(cfg.graph)
    cooc = build_cooccurrence(corpus, cfg.window, n=n)
    cooc.save(out / "cooc.bin")
    _finish(cfg, out, inputs, ["cooc.bin"])
    logger.info("wrote %d co-occurrence pairs to %s", len(cooc), out / "cooc.bin")


def _export(state, out):
    W, Z = combined_embedding(state)
    write_matrix_tsv(out / "W.tsv", W, "w")
    written = ["W.tsv"]
    if Z is not None:
        write_matrix_tsv(out / "Z.tsv", Z, "z")
        sigma = metadata_importance(state)
        with open(out / "sigma_T.tsv", "w", newline="") as f:
            w = csv.writer(f, delimiter="\t", lineterminator="\n")
            for row in sigma:
                w.writerow([repr(float(x)) for x in row])
        written += ["Z.tsv", "sigma_T.tsv"]
    return written


def cmd_train(cfg):
    from .train import train
    tc = cfg.train_config()
    if tc.variant != "glove" and cfg.metadata is None:
        raise ConfigError(f"--variant {tc.variant} requires --metadata")
    out = _outdir(cfg)
    inputs = {}
    if cfg.cooc is not None:
        inputs["cooc"] = _require_file(cfg.cooc, "--cooc")
        cooc = CooccurrenceStore.load(inputs["cooc"])
    else:
        g = _load_graph(cfg)
        inputs["graph"] = Path(cfg.graph)
        walks = generate_walks(g, cfg.walks_per_node, cfg.walk_length, cfg.seed)
        cooc = build_cooccurrence(walks, cfg.window, n=g.n)
    M = None
    if tc.variant != "glove":
        inputs["metadata"] = _require_file(cfg.metadata, "--metadata")
        M = load_metadata(inputs["metadata"], cooc.n)
    state = train(cooc, M, tc)
    logger.info("trained %s in %.2fs", tc.variant, state.wall_time)
    save_checkpoint(state, out / "checkpoint.bin")
    written = ["checkpoint.bin"] + _export(state, out)
    _finish(cfg, out, inputs, written)


def cmd_export(cfg):
    out = _outdir(cfg)
    path = _require_file(cfg.checkpoint, "--checkpoint")
    state = load_checkpoint(path)
    written = _export(state, out)
    _finish(cfg, out, {"checkpoint": path}, written)


def cmd_experiment(cfg):
    if cfg.experiment not in EXPERIMENTS:
        raise ConfigError(f"experiment must be one of {EXPERIMENTS}")
    out = _outdir(cfg)
    workers = worker_count()
    inputs = {}
    if cfg.experiment == "blogs":
        from .blogs import BlogConfig, run_blog_experiment, write_blog_outputs
        overrides = {k: v for k, v in (("dims", cfg.dims), ("epochs", cfg.epochs),
                                       ("lam", cfg.lam)) if v is not None}
        bc = BlogConfig(dataset=cfg.dataset or "polblogs", data_root=cfg.data_root,
                        repetitions=cfg.repetitions, seed=cfg.seed, learning_rate=cfg.lr,
                        batch_size=cfg.batch_size, init_scale=cfg.init_scale,
                        walks_per_node=cfg.walks_per_node, walk_length=cfg.walk_length,
                        window=cfg.window, workers=workers, **overrides)
        pca = {}
        report = run_blog_experiment(bc, pca=pca)
        write_blog_outputs(report, out, pca)
        if bc.dataset == "polblogs":
            from .datasets import data_root
            base = data_root(cfg.data_root) / "polblogs"
            inputs = {"edges": base / "edges.tsv", "affiliation": base / "affiliation.tsv"}
    else:
        from .datasets import require_movielens
        from .shilling import ShillingConfig, run_shilling_experiment, write_shilling_outputs
        data_path = require_movielens(None if cfg.data_root is None
                                      else Path(cfg.data_root) / "ml-100k" / "u.data")
        overrides = {k: v for k, v in (("dims", cfg.dims), ("epochs", cfg.epochs),
                                       ("lambdas", cfg.lambdas)) if v is not None}
        sc = ShillingConfig(data_path=str(data_path), repetitions=cfg.repetitions,
                            seed=cfg.seed, learning_rate=cfg.lr, batch_size=cfg.batch_size,
                            init_scale=cfg.init_scale, walks_per_node=cfg.walks_per_node,
                            walk_length=cfg.walk_length, window=cfg.window, workers=workers,
                            **overrides)
        report = run_shilling_experiment(sc)
        write_shilling_outputs(report, out)
        inputs = {"ratings": data_path}
    written = sorted(p.name for p in out.iterdir() if p.name not in ("config.json", "manifest.json"))
    _finish(cfg, out, inputs, written)


COMMANDS = {"walks": cmd_walks, "cooc": cmd_cooc, "train": cmd_train,
            "export": cmd_export, "experiment": cmd_experiment}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run config; explicit flags override it")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int)
    common.add_argument("-v", "--verbose", action="store_true")

    walk = argparse.ArgumentParser(add_help=False)
    walk.add_argument("--walks-per-node", type=int)
    walk.add_argument("--walk-length", type=int)
    walk.add_argument("--window", type=int)

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--lambda", dest="lam", type=float)
    model.add_argument("--dims", type=int)
    model.add_argument("--epochs", type=int)
    model.add_argument("--batch-size", type=int)
    model.add_argument("--lr", type=float)
    model.add_argument("--init-scale", type=float)

    parser = _Parser(prog="monet", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("walks", parents=[common, walk], help="random walks from an edge list")
    p.add_argument("--graph")

    p = sub.add_parser("cooc", parents=[common, walk], help="co-occurrence counts from walks")
    p.add_argument("--walks")
    p.add_argument("--graph", help="edge list fixing the node count (optional)")

    p = sub.add_parser("train", parents=[common, walk, model], help="train one embedding")
    p.add_argument("--cooc", help="co-occurrence file; otherwise walks are drawn from --graph")
    p.add_argument("--graph")
    p.add_argument("--metadata")
    p.add_argument("--variant", choices=VARIANTS)
    p.add_argument("--meta-dims", type=int)

    p = sub.add_parser("export", parents=[common], help="W/Z TSVs from a checkpoint")
    p.add_argument("--checkpoint")

    p = sub.add_parser("experiment", parents=[common, walk, model],
                       help="repeated blogs or shilling study")
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--repetitions", type=int)
    p.add_argument("--dataset", choices=("polblogs", "synthetic"),
                   help="blogs graph (default polblogs)")
    p.add_argument("--data-root", help="dataset directory (default $MONET_DATA or ./data)")
    p.add_argument("--lambdas", type=float, nargs="+", help="shilling lambda grid")
    return parser


def resolve_config(args):
    """Merge ``--config`` (if any) with the flags given explicitly on the command line."""
    cfg = RunConfig()
    if args.config:
        path = _require_file(args.config, "--config")
        cfg = RunConfig.from_json(path.read_text())
    names = {f.name for f in fields(RunConfig)}
    for key, value in vars(args).items():
        if key in names and value is not None:
            setattr(cfg, key, value)
    cfg.command = args.command
    return cfg


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        COMMANDS[cfg.command](cfg)
    except DatasetMissingError as exc:
        print(exc, file=sys.stderr)
        return EXIT_MISSING
    except FileNotFoundError as exc:
        print(f"monet: missing input: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except NumericalError as exc:
        print(f"monet: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (MonetError, ValueError) as exc:
        print(f"monet: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
