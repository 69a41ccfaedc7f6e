import hashlib
import json
import subprocess
import sys

import numpy as np
import pytest

from monet.cli import RunConfig, main
from monet.datasets import synthetic_polblogs

from test_shilling import write_ratings


@pytest.fixture(scope="module")
def blog_files(tmp_path_factory):
    root = tmp_path_factory.mktemp("blogs")
    g, M, _ = synthetic_polblogs(seed=0, n=120, n_edges=500)
    with open(root / "edges.tsv", "w") as f:
        for i, j in g.edges.tolist():
            f.write(f"{i}\t{j}\n")
    np.savetxt(root / "aff.tsv", M, fmt="%d")
    return root


def run(*argv):
    return main([str(a) for a in argv])


def pipeline(files, out):
    assert run("walks", "--graph", files / "edges.tsv", "--walks-per-node", 3,
               "--walk-length", 12, "--seed", 5, "--out", out / "walks") == 0
    assert run("cooc", "--walks", out / "walks" / "walks.bin", "--window", 4,
               "--graph", files / "edges.tsv", "--out", out / "cooc") == 0
    assert run("train", "--cooc", out / "cooc" / "cooc.bin", "--metadata", files / "aff.tsv",
               "--variant", "monet", "--lambda", 1.0, "--dims", 6, "--epochs", 2,
               "--out", out / "train") == 0


def test_stage_pipeline(blog_files, tmp_path):
    pipeline(blog_files, tmp_path)
    train_dir = tmp_path / "train"
    names = {p.name for p in train_dir.iterdir()}
    assert names == {"checkpoint.bin", "W.tsv", "Z.tsv", "sigma_T.tsv", "config.json",
                     "manifest.json"}
    W = np.loadtxt(train_dir / "W.tsv", skiprows=1)[:, 1:]
    Z = np.loadtxt(train_dir / "Z.tsv", skiprows=1)[:, 1:]
    assert W.shape == (120, 6) and Z.shape == (120, 2)
    assert np.linalg.norm(Z.T @ W) <= 1e-6 * np.linalg.norm(Z) * np.linalg.norm(W)

    manifest = json.loads((train_dir / "manifest.json").read_text())
    digest = hashlib.sha256((blog_files / "aff.tsv").read_bytes()).hexdigest()
    assert manifest["inputs"]["metadata"]["sha256"] == digest
    assert manifest["seed"] == 0 and manifest["config"]["variant"] == "monet"
    assert set(manifest["versions"]) >= {"monet", "numpy", "numba", "python"}


def test_rerun_is_byte_identical(blog_files, tmp_path):
    pipeline(blog_files, tmp_path / "a")
    pipeline(blog_files, tmp_path / "b")
    for stage, name in [("walks", "walks.bin"), ("cooc", "cooc.bin"), ("train", "W.tsv"),
                        ("train", "Z.tsv"), ("train", "checkpoint.bin")]:
        a = (tmp_path / "a" / stage / name).read_bytes()
        assert a == (tmp_path / "b" / stage / name).read_bytes(), name


def test_export_matches_training_output(blog_files, tmp_path):
    pipeline(blog_files, tmp_path)
    assert run("export", "--checkpoint", tmp_path / "train" / "checkpoint.bin",
               "--out", tmp_path / "export") == 0
    for name in ("W.tsv", "Z.tsv", "sigma_T.tsv"):
        assert (tmp_path / "export" / name).read_bytes() == \
            (tmp_path / "train" / name).read_bytes()


def test_train_from_graph_and_config_file(blog_files, tmp_path):
    assert run("train", "--graph", blog_files / "edges.tsv", "--variant", "glove",
               "--walks-per-node", 2, "--dims", 3, "--epochs", 1, "--out", tmp_path / "a") == 0
    assert not (tmp_path / "a" / "Z.tsv").exists()
    cfg = RunConfig.from_json((tmp_path / "a" / "config.json").read_text())
    assert cfg.dims == 3 and cfg.variant == "glove" and cfg.walks_per_node == 2
    # the saved config reproduces the run; explicit flags still override it
    assert run("train", "--config", tmp_path / "a" / "config.json", "--out", tmp_path / "b") == 0
    assert (tmp_path / "a" / "W.tsv").read_bytes() == (tmp_path / "b" / "W.tsv").read_bytes()
    assert run("train", "--config", tmp_path / "a" / "config.json", "--seed", 9,
               "--out", tmp_path / "c") == 0
    assert (tmp_path / "a" / "W.tsv").read_bytes() != (tmp_path / "c" / "W.tsv").read_bytes()


def test_run_config_roundtrip():
    cfg = RunConfig(command="train", dims=4, lambdas=[0.5, 1.0])
    assert RunConfig.from_json(cfg.to_json()) == cfg


class TestExitCodes:
    def test_monet_without_metadata(self, blog_files, tmp_path, capsys):
        code = run("train", "--graph", blog_files / "edges.tsv", "--variant", "monet",
                   "--out", tmp_path)
        assert code == 2 and "--metadata" in capsys.readouterr().err

    def test_bad_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            run("train", "--no-such-flag")
        assert exc.value.code == 2

    def test_bad_choice(self):
        with pytest.raises(SystemExit) as exc:
            run("train", "--variant", "word2vec")
        assert exc.value.code == 2

    def test_missing_input(self, tmp_path, capsys):
        code = run("walks", "--graph", tmp_path / "nope.tsv", "--out", tmp_path / "o")
        assert code == 3 and "nope.tsv" in capsys.readouterr().err

    def test_missing_out(self, blog_files):
        assert run("walks", "--graph", blog_files / "edges.tsv") == 2

    def test_bad_config_file(self, tmp_path):
        (tmp_path / "c.json").write_text('{"depth": 3}')
        assert run("walks", "--config", tmp_path / "c.json", "--out", tmp_path) == 2
        (tmp_path / "c.json").write_text("not json")
        assert run("walks", "--config", tmp_path / "c.json", "--out", tmp_path) == 2

    def test_numerical_failure(self, blog_files, tmp_path, capsys):
        code = run("train", "--graph", blog_files / "edges.tsv", "--metadata",
                   blog_files / "aff.tsv", "--variant", "glove_meta", "--lr", "1e300",
                   "--walks-per-node", 2, "--dims", 3, "--epochs", 3, "--out", tmp_path)
        assert code == 4 and "non-finite" in capsys.readouterr().err

    def test_missing_dataset_prints_instructions(self, tmp_path, capsys):
        code = run("experiment", "blogs", "--data-root", tmp_path, "--out", tmp_path / "o")
        assert code == 3 and "edges.tsv" in capsys.readouterr().err
        code = run("experiment", "shilling", "--data-root", tmp_path, "--out", tmp_path / "o")
        assert code == 3 and "ml-100k" in capsys.readouterr().err

    def test_bad_thread_count(self, tmp_path, monkeypatch):
        monkeypatch.setenv("MONET_THREADS", "many")
        code = run("experiment", "blogs", "--dataset", "synthetic", "--out", tmp_path)
        assert code == 2


def test_blog_experiment_smoke(tmp_path):
    code = run("experiment", "blogs", "--dataset", "synthetic", "--repetitions", 1,
               "--dims", 4, "--epochs", 1, "--walks-per-node", 1, "--walk-length", 8,
               "--out", tmp_path)
    assert code == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["monet"]["leakage"]["std"] == 0.0
    assert report["monet"]["leakage"]["mean"] < 1e-6 * report["glove"]["leakage"]["mean"]
    for name in ("leakage.tsv", "probes.tsv", "pca_monet.tsv", "config.json", "manifest.json"):
        assert (tmp_path / name).exists()


def test_shilling_experiment_smoke(tmp_path):
    (tmp_path / "data" / "ml-100k").mkdir(parents=True)
    write_ratings(tmp_path / "data" / "ml-100k" / "u.data")
    code = run("experiment", "shilling", "--data-root", tmp_path / "data", "--repetitions", 1,
               "--dims", 4, "--epochs", 1, "--walks-per-node", 2, "--walk-length", 10,
               "--lambdas", 0.5, 1.0, "--out", tmp_path / "out")
    assert code == 0
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert {"monet_lambda0.5", "monet_lambda1", "nlp", "random"} <= set(report)
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert "ratings" in manifest["inputs"] and "tradeoff.tsv" in manifest["outputs"]


def test_console_script():
    out = subprocess.run([sys.executable, "-m", "monet.cli", "--help"], capture_output=True,
                         text=True, check=True)
    assert "experiment" in out.stdout
