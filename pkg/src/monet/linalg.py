"""Orthogonal projection onto the metadata-free subspace and small dense helpers."""

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError, NumericalError

logger = logging.getLogger(__name__)

DEFAULT_RANK_TOL = 1e-8


@dataclass(frozen=True)
class ProjectionBasis:
    """Orthonormal basis ``Q`` (n x rank) of a metadata embedding's column span.

    ``lam`` scales the projection: ``W -> W - lam * Q (Q^T W)``.
    """

    basis: np.ndarray
    rank: int
    tolerance: float
    lam: float = 1.0

    @property
    def n(self):
        return self.basis.shape[0]


def orthonormal_basis(Z, rank_tol=DEFAULT_RANK_TOL, lam=1.0):
    """Left singular vectors of ``Z`` with singular value above ``rank_tol * s_max``."""
    if not 0.0 <= lam <= 1.0:
        raise ConfigError(f"lambda must lie in [0, 1], got {lam}")
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim != 2:
        raise DimensionError("Z must be a 2-D matrix")
    if not np.all(np.isfinite(Z)):
        raise NumericalError("metadata embedding contains non-finite values")
    n, dz = Z.shape
    if dz == 0 or not np.any(Z):
        logger.warning("metadata embedding has rank 0; projection is the identity")
        return ProjectionBasis(np.zeros((n, 0)), 0, rank_tol, lam)
    Uz, s, _ = np.linalg.svd(Z, full_matrices=False)
    rank = int(np.sum(s > rank_tol * s[0]))
    return ProjectionBasis(np.ascontiguousarray(Uz[:, :rank]), rank, rank_tol, lam)


def project(W, basis):
    """Return ``W - lam * Q (Q^T W)`` without forming the n x n projector."""
    W = np.asarray(W, dtype=np.float64)
    if W.shape[0] != basis.n:
        raise DimensionError(f"W has {W.shape[0]} rows, basis has {basis.n}")
    if basis.lam == 0.0 or basis.rank == 0:
        return W.copy()
    Q = basis.basis
    return W - basis.lam * (Q @ (Q.T @ W))


def metadata_leakage(Z, W):
    """Squared Frobenius norm of ``Z^T W``."""
    Z = np.asarray(Z, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    if Z.shape[0] != W.shape[0]:
        raise DimensionError(f"row mismatch: Z has {Z.shape[0]}, W has {W.shape[0]}")
    cross = Z.T @ W
    return float(np.sum(cross * cross))


def pca_2d(W):
    """Project centered rows of ``W`` onto their top two principal directions.

    Each direction is signed so that its largest-magnitude entry is positive.
    """
    W = np.asarray(W, dtype=np.float64)
    n, d = W.shape
    if d < 2:
        raise DimensionError("PCA to 2-D needs at least two columns")
    if n < 2:
        raise DimensionError("PCA needs at least two rows")
    X = W - W.mean(axis=0)
    if not np.any(X):
        return np.zeros((n, 2))
    _, _, Vt = np.linalg.svd(X, full_matrices=False)
    dirs = Vt[:2].T.copy()
    for k in range(2):
        if dirs[np.argmax(np.abs(dirs[:, k])), k] < 0:
            dirs[:, k] *= -1
    return X @ dirs


def unit_rows(W):
    norms = np.linalg.norm(W, axis=1)
    if np.any(norms == 0):
        raise NumericalError("cosine distance undefined for a zero embedding row")
    return W / norms[:, None]


def cosine_distances(W):
    """Full ``n x n`` cosine distance matrix."""
    X = unit_rows(np.asarray(W, dtype=np.float64))
    return 1.0 - X @ X.T


def _pair_cosine(X, i, j):
    return 1.0 - np.einsum("ij,ij->i", X[i], X[j])


def distance_correlation(W_a, W_b, sample_pairs=0, seed=0):
    """Pearson correlation of cosine distances over node pairs shared by both embeddings.

    ``sample_pairs=0`` uses every unordered pair; otherwise that many distinct
    pairs ``i != j`` are drawn with a seeded generator.
    """
    W_a = np.asarray(W_a, dtype=np.float64)
    W_b = np.asarray(W_b, dtype=np.float64)
    n = W_a.shape[0]
    if W_b.shape[0] != n:
        raise DimensionError("embeddings must cover the same nodes")
    if n < 3:
        raise DimensionError("need at least three nodes")
    if sample_pairs == 0:
        i, j = np.triu_indices(n, k=1)
    elif sample_pairs < 2:
        raise ConfigError("sample_pairs must be 0 or at least 2")
    else:
        rng = np.random.default_rng(seed)
        i = rng.integers(0, n, size=sample_pairs)
        j = (i + rng.integers(1, n, size=sample_pairs)) % n
    da = _pair_cosine(unit_rows(W_a), i, j)
    db = _pair_cosine(unit_rows(W_b), i, j)
    if np.std(da) == 0 or np.std(db) == 0:
        raise NumericalError("correlation undefined: a distance vector has zero variance")
    return float(np.corrcoef(da, db)[0, 1])
