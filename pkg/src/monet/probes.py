"""Affiliation probes: how much of a binary node attribute an embedding still encodes.

The linear probe is L2-regularised logistic regression fit by gradient descent;
the nonlinear probe is RBF kernel ridge regression on +-1 labels read out by sign.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError

logger = logging.getLogger(__name__)

MAX_SPLIT_ATTEMPTS = 100


def split_nodes(n, p, seed, labels=None):
    """Uniform train/test split with ``round(p * n)`` training nodes (halves round up).

    With ``labels`` given, a split whose training or test side misses a class
    is redrawn (with a warning), up to ``MAX_SPLIT_ATTEMPTS`` times.
    """
    if not 0 < p < 1:
        raise ConfigError("train fraction p must lie in (0, 1)")
    n_train = math.floor(p * n + 0.5)
    if not 0 < n_train < n:
        raise ConfigError(f"p = {p} leaves an empty side for n = {n}")
    rng = np.random.default_rng(seed)
    classes = None if labels is None else np.unique(labels)
    for attempt in range(MAX_SPLIT_ATTEMPTS):
        perm = rng.permutation(n)
        train, test = np.sort(perm[:n_train]), np.sort(perm[n_train:])
        if classes is None or (len(np.unique(labels[train])) == len(classes)
                               and len(np.unique(labels[test])) == len(classes)):
            return train, test
        logger.warning("split %d left a class empty; resampling", attempt)
    raise ConfigError(f"no split with every class on both sides after {MAX_SPLIT_ATTEMPTS} tries")


def _binary_targets(y):
    y = np.asarray(y)
    classes = np.unique(y)
    if len(classes) != 2:
        raise ConfigError(f"probes need exactly two classes, got {len(classes)}")
    return classes, (y == classes[1]).astype(np.float64)


def _check_xy(X, y):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != len(y):
        raise DimensionError("features must be an n x d matrix matching the labels")
    return X


@dataclass
class LinearProbe:
    weights: np.ndarray
    intercept: float
    classes: np.ndarray
    iterations: int
    converged: bool

    def decision(self, X):
        return np.asarray(X, dtype=np.float64) @ self.weights + self.intercept

    def predict(self, X):
        return self.classes[(self.decision(X) > 0).astype(int)]

    def accuracy(self, X, y):
        return float(np.mean(self.predict(X) == np.asarray(y)))


def _sigmoid(t):
    return 0.5 * (1.0 + np.tanh(0.5 * t))


def train_linear_probe(X, y, reg=1e-2, iters=10_000, tol=1e-6):
    """Logistic regression with penalty ``reg/2 * |w|^2`` (intercept unpenalised).

    Plain gradient descent with step ``1/L``, ``L`` the smoothness constant of the
    mean log-loss; stops when the gradient norm drops below ``tol`` or after ``iters``.
    Features are standardised internally and the weights mapped back.
    """
    classes, t = _binary_targets(y)
    X = _check_xy(X, t)
    Xs, mu, sd = _standardize(X)
    n, d = Xs.shape
    A = np.hstack([Xs, np.ones((n, 1))])
    lipschitz = 0.25 * np.linalg.norm(A, 2) ** 2 / n + reg
    step = 1.0 / lipschitz
    theta = np.zeros(d + 1)
    penalty = np.full(d + 1, reg)
    penalty[-1] = 0.0
    converged = False
    it = 0
    for it in range(1, iters + 1):
        grad = A.T @ (_sigmoid(A @ theta) - t) / n + penalty * theta
        if np.linalg.norm(grad) < tol:
            converged = True
            break
        theta -= step * grad
    w = theta[:-1] / sd
    b = theta[-1] - mu @ w
    return LinearProbe(w, float(b), classes, it, converged)


@dataclass
class KernelProbe:
    support: np.ndarray
    coef: np.ndarray
    offset: float
    gamma: float
    classes: np.ndarray
    mean: np.ndarray
    scale: np.ndarray

    def decision(self, X):
        S = (np.asarray(X, dtype=np.float64) - self.mean) / self.scale
        return _rbf(S, self.support, self.gamma) @ self.coef + self.offset

    def predict(self, X):
        return self.classes[(self.decision(X) > 0).astype(int)]

    def accuracy(self, X, y):
        return float(np.mean(self.predict(X) == np.asarray(y)))


def _rbf(A, B, gamma):
    sq = (A * A).sum(axis=1)[:, None] + (B * B).sum(axis=1)[None, :] - 2.0 * A @ B.T
    return np.exp(-gamma * np.maximum(sq, 0.0))


def _standardize(X):
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd[sd == 0] = 1.0
    return (X - mu) / sd, mu, sd


def train_nonlinear_probe(X, y, gamma=None, reg=1e-1):
    """Kernel ridge regression on +-1 targets with an RBF kernel; predict by sign.

    Features are standardised on the training rows, so ``gamma`` (default
    ``1/d``) is on a common scale across embeddings. The target mean is fit as
    an unpenalised offset.
    """
    classes, t = _binary_targets(y)
    X = _check_xy(X, t)
    gamma = 1.0 / X.shape[1] if gamma is None else float(gamma)
    S, mu, sd = _standardize(X)
    target = 2.0 * t - 1.0
    offset = float(target.mean())
    K = _rbf(S, S, gamma)
    K[np.diag_indices_from(K)] += reg
    coef = np.linalg.solve(K, target - offset)
    return KernelProbe(S, coef, offset, gamma, classes, mu, sd)


PROBES = {"linear": train_linear_probe, "nonlinear": train_nonlinear_probe}


def probe_accuracy(kind, W, labels, train, test, **kwargs):
    if kind not in PROBES:
        raise ConfigError(f"unknown probe {kind!r}; expected one of {sorted(PROBES)}")
    probe = PROBES[kind](W[train], labels[train], **kwargs)
    return probe.accuracy(W[test], labels[test])
