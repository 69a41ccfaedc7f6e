"""Shared plumbing for repeated experiments: seeds, aggregation, parallel map, JSON."""

import json
import os
import zlib
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .errors import ConfigError


def repetition_seeds(master_seed, repetitions):
    """Independent per-repetition integer seeds spawned from one master seed."""
    if repetitions < 1:
        raise ConfigError("repetitions must be at least 1")
    children = np.random.SeedSequence(master_seed).spawn(repetitions)
    return [int(c.generate_state(1, dtype=np.uint32)[0]) for c in children]


def method_seed(seed, method):
    """Training seed for one method within a repetition.

    Methods share the walk corpus but start from independent initialisations and
    shuffles; keyed by name so it does not depend on which other methods run.
    """
    seq = np.random.SeedSequence([seed, 41, zlib.crc32(method.encode())])
    return int(seq.generate_state(1, dtype=np.uint32)[0])


def summarize(values):
    """``{"mean", "std"}`` with the population std (0 for a single value)."""
    arr = np.asarray(values, dtype=np.float64)
    return {"mean": float(arr.mean()), "std": float(arr.std())}


def worker_count(requested=None):
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get("MONET_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"MONET_THREADS must be an integer, got {env!r}") from None
    return 1


def map_repetitions(fn, args, workers=None):
    """``[fn(a) for a in args]``, in order, optionally across worker processes."""
    workers = min(worker_count(workers), len(args))
    if workers <= 1:
        return [fn(a) for a in args]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, args))


def write_json(obj, path):
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")
