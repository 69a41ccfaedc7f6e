import json

import pytest

from monet import ConfigError
from monet.report import (map_repetitions, method_seed, repetition_seeds, summarize,
                          worker_count, write_json)


def test_repetition_seeds():
    seeds = repetition_seeds(0, 5)
    assert seeds == repetition_seeds(0, 5) and len(set(seeds)) == 5
    assert repetition_seeds(0, 3) == seeds[:3]
    assert repetition_seeds(1, 5) != seeds
    with pytest.raises(ConfigError):
        repetition_seeds(0, 0)


def test_method_seed_is_stable_and_distinct():
    names = ["glove", "glove_meta", "monet", "monet_lambda0.5", "monet_lambda1"]
    seeds = [method_seed(7, n) for n in names]
    assert len(set(seeds)) == len(names)
    assert seeds == [method_seed(7, n) for n in names]
    assert method_seed(8, "glove") != method_seed(7, "glove")


def test_summarize():
    assert summarize([1.0, 3.0]) == {"mean": 2.0, "std": 1.0}
    assert summarize([4.0]) == {"mean": 4.0, "std": 0.0}


def test_worker_count(monkeypatch):
    monkeypatch.delenv("MONET_THREADS", raising=False)
    assert worker_count() == 1 and worker_count(3) == 3
    monkeypatch.setenv("MONET_THREADS", "2")
    assert worker_count() == 2
    monkeypatch.setenv("MONET_THREADS", "x")
    with pytest.raises(ConfigError):
        worker_count()


def test_parallel_map_keeps_order():
    args = list(range(6))
    assert map_repetitions(abs, args, workers=2) == map_repetitions(abs, args, workers=1)


def test_write_json(tmp_path):
    write_json({"b": 1, "a": [0.5]}, tmp_path / "r.json")
    text = (tmp_path / "r.json").read_text()
    assert text.endswith("\n") and json.loads(text) == {"a": [0.5], "b": 1}
