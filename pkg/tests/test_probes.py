import numpy as np
import pytest

from monet.errors import ConfigError, DimensionError
from monet.probes import (MAX_SPLIT_ATTEMPTS, probe_accuracy, split_nodes, train_linear_probe,
                          train_nonlinear_probe)


def blobs(n=200, seed=0, gap=4.0):
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 2
    X = rng.standard_normal((n, 3))
    X[:, 0] += gap * (y - 0.5)
    return X, y


def xor(n=400, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, size=(n, 2))
    X = X[np.abs(X).min(axis=1) > 0.1]
    y = (X[:, 0] * X[:, 1] > 0).astype(int)
    return X, y


class TestSplit:
    def test_half_split_sizes(self):
        train, test = split_nodes(1107, 0.5, seed=0)
        assert len(train) == 554 and len(test) == 553
        assert np.array_equal(np.sort(np.r_[train, test]), np.arange(1107))

    def test_grid(self):
        sizes = [len(split_nodes(1107, p / 10, seed=p)[0]) for p in range(1, 10)]
        assert sizes == [111, 221, 332, 443, 554, 664, 775, 886, 996]

    def test_seeded(self):
        a = split_nodes(50, 0.3, seed=[4, 2])
        b = split_nodes(50, 0.3, seed=[4, 2])
        assert all(np.array_equal(x, y) for x, y in zip(a, b))

    def test_resamples_until_both_classes_present(self, caplog):
        labels = np.zeros(20, dtype=int)
        labels[[0, 1]] = 1
        for seed in range(30):
            train, test = split_nodes(20, 0.5, seed=seed, labels=labels)
            assert set(labels[train]) == {0, 1} and set(labels[test]) == {0, 1}
        # with two minority nodes about half of all first draws are degenerate
        assert "resampling" in caplog.text

    def test_gives_up(self):
        labels = np.zeros(10, dtype=int)
        labels[3] = 1
        # a single member of class 1 can never be on both sides
        with pytest.raises(ConfigError, match=str(MAX_SPLIT_ATTEMPTS)):
            split_nodes(10, 0.5, seed=0, labels=labels)

    @pytest.mark.parametrize("p", [0.0, 1.0, -0.2])
    def test_bad_fraction(self, p):
        with pytest.raises(ConfigError):
            split_nodes(10, p, seed=0)

    def test_empty_side(self):
        with pytest.raises(ConfigError):
            split_nodes(3, 0.1, seed=0)


class TestLinearProbe:
    def test_separable(self):
        X, y = blobs(gap=10.0)
        probe = train_linear_probe(X, y)
        assert probe.accuracy(X, y) == 1.0

    def test_permuted_labels_near_chance(self):
        accs = []
        for seed in range(20):
            X, y = blobs(n=1500, seed=seed)
            y = np.random.default_rng(seed + 100).permutation(y)
            probe = train_linear_probe(X[:500], y[:500])
            accs.append(probe.accuracy(X[500:], y[500:]))
        assert np.mean(np.abs(np.array(accs) - 0.5) <= 0.06) >= 0.95

    def test_converges_and_reports(self):
        X, y = blobs()
        probe = train_linear_probe(X, y, reg=0.1)
        assert probe.converged and probe.iterations < 10_000

    def test_matches_regularised_optimum(self):
        # at the optimum the penalised gradient vanishes in standardised coordinates
        X, y = blobs(gap=1.0)
        reg = 0.05
        probe = train_linear_probe(X, y, reg=reg, tol=1e-10, iters=100_000)
        mu, sd = X.mean(axis=0), X.std(axis=0)
        S = (X - mu) / sd
        w = probe.weights * sd
        b = probe.intercept + mu @ probe.weights
        p = 1 / (1 + np.exp(-(S @ w + b)))
        grad_w = S.T @ (p - y) / len(y) + reg * w
        grad_b = np.mean(p - y)
        assert np.linalg.norm(np.r_[grad_w, grad_b]) < 1e-8

    def test_string_labels(self):
        X, y = blobs(gap=10.0)
        names = np.array(["left", "right"])[y]
        assert set(train_linear_probe(X, names).predict(X)) == {"left", "right"}

    def test_errors(self):
        X, y = blobs()
        with pytest.raises(ConfigError):
            train_linear_probe(X, np.zeros(len(y)))
        with pytest.raises(DimensionError):
            train_linear_probe(X[:-1], y)


class TestNonlinearProbe:
    def test_xor(self):
        X, y = xor()
        Xt, yt = xor(seed=1)
        assert train_nonlinear_probe(X, y).accuracy(Xt, yt) >= 0.95
        assert train_linear_probe(X, y).accuracy(Xt, yt) <= 0.6

    def test_permuted_labels_near_chance(self):
        accs = []
        for seed in range(20):
            X, y = blobs(n=1500, seed=seed)
            y = np.random.default_rng(seed + 7).permutation(y)
            accs.append(train_nonlinear_probe(X[:500], y[:500]).accuracy(X[500:], y[500:]))
        assert np.mean(np.abs(np.array(accs) - 0.5) <= 0.06) >= 0.95

    def test_default_gamma(self):
        X, y = blobs()
        assert train_nonlinear_probe(X, y).gamma == pytest.approx(1 / 3)
        assert train_nonlinear_probe(X, y, gamma=2.0).gamma == 2.0

    def test_errors(self):
        X, y = blobs()
        with pytest.raises(ConfigError):
            train_nonlinear_probe(X, np.r_[y[:-1], 2])


def test_probe_accuracy_dispatch():
    X, y = blobs(gap=10.0)
    train, test = split_nodes(len(y), 0.5, seed=0, labels=y)
    assert probe_accuracy("linear", X, y, train, test) == 1.0
    assert probe_accuracy("nonlinear", X, y, train, test) == 1.0
    with pytest.raises(ConfigError):
        probe_accuracy("svm", X, y, train, test)
