"""Initial central-subspace estimation via sliced inverse regression, plus
the predictor standardization and back-transformation it relies on.

Directions estimated on the standardized scale are mapped back to the
original predictor scale with the same inverse square-root covariance used
for whitening.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, DataError

X_SCALE = "original-X"
Z_SCALE = "standardized-Z"

_EIG_RTOL = 1e-10


@dataclass(frozen=True)
class Basis:
    """Columns spanning an estimated subspace, with the predictor scale they
    live on.  Columns are stored with unit Euclidean norm; the span is the
    estimand, unit norms are just a canonical form."""

    columns: np.ndarray
    scale: str = X_SCALE

    def __post_init__(self):
        cols = np.asarray(self.columns, dtype=float)
        if cols.ndim == 1:
            cols = cols[:, None]
        if cols.ndim != 2 or cols.shape[1] == 0:
            raise ConfigError("basis must be a p x k matrix with k >= 1")
        if self.scale not in (X_SCALE, Z_SCALE):
            raise ConfigError(f"unknown basis scale tag {self.scale!r}")
        norms = np.linalg.norm(cols, axis=0)
        if np.any(norms <= 0) or not np.all(np.isfinite(cols)):
            raise ConfigError("basis columns must be finite and nonzero")
        if np.linalg.matrix_rank(cols) < cols.shape[1]:
            raise ConfigError("basis columns must be linearly independent")
        object.__setattr__(self, "columns", cols / norms)

    @property
    def p(self):
        return self.columns.shape[0]

    @property
    def k(self):
        return self.columns.shape[1]


@dataclass(frozen=True)
class StandardizeTransform:
    """Whitening record: sample mean, inverse square-root covariance
    (whitener) and its inverse (dewhitener)."""

    mean: np.ndarray
    whitener: np.ndarray      # Sigma^{-1/2}
    dewhitener: np.ndarray    # Sigma^{1/2}


@dataclass(frozen=True)
class SirConfig:
    n_slices: int
    target_dim: int

    def __post_init__(self):
        if self.n_slices < 2:
            raise ConfigError(f"need at least 2 slices, got {self.n_slices}")
        if self.target_dim < 1:
            raise ConfigError(f"target dimension must be positive, got {self.target_dim}")
        if self.target_dim > self.n_slices - 1:
            raise ConfigError(
                f"target dimension {self.target_dim} exceeds n_slices - 1 = {self.n_slices - 1}"
            )


@dataclass(frozen=True)
class SirResult:
    basis: Basis
    eigenvalues: np.ndarray   # all p, non-increasing
    rank: int


def default_n_slices(n, p):
    """Slice count max(10, ceil(2p/n)); evaluates to 10 whenever n >= p/4."""
    return max(10, int(np.ceil(2.0 * p / n)))


def standardize(X):
    """Center and whiten: Z = (X - mean) @ Sigma^{-1/2}.

    Returns (Z, StandardizeTransform).  The whitener is built from the
    symmetric eigendecomposition of the sample covariance (ddof=1) and
    fails on near-singular covariance.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DataError("X must be an n x p matrix")
    n, p = X.shape
    if n <= p:
        raise DataError(f"need n > p to standardize, got n={n}, p={p}")
    if not np.all(np.isfinite(X)):
        raise DataError("X must be finite")
    mean = X.mean(axis=0)
    centered = X - mean
    cov = centered.T @ centered / (n - 1)
    evals, evecs = np.linalg.eigh(cov)
    if evals[0] <= _EIG_RTOL * evals[-1]:
        raise DataError(
            f"sample covariance is numerically singular: eigenvalue {evals[0]:.3e} "
            f"vs largest {evals[-1]:.3e}"
        )
    whitener = (evecs / np.sqrt(evals)) @ evecs.T
    dewhitener = (evecs * np.sqrt(evals)) @ evecs.T
    Z = centered @ whitener
    return Z, StandardizeTransform(mean=mean, whitener=whitener, dewhitener=dewhitener)


def back_transform(eta, transform):
    """Map a standardized-scale basis back to the original predictor scale
    (whitener @ columns, re-normalized)."""
    if eta.scale != Z_SCALE:
        raise ConfigError(f"back_transform expects a {Z_SCALE} basis, got {eta.scale}")
    return Basis(columns=transform.whitener @ eta.columns, scale=X_SCALE)


def to_z_scale(basis, transform):
    """Map an original-scale basis onto the standardized scale
    (dewhitener @ columns, re-normalized)."""
    if basis.scale != X_SCALE:
        raise ConfigError(f"to_z_scale expects an {X_SCALE} basis, got {basis.scale}")
    return Basis(columns=transform.dewhitener @ basis.columns, scale=Z_SCALE)


def _slice_assignments(y, n_slices):
    n = y.shape[0]
    if np.unique(y).size < n_slices:
        raise DataError(
            f"cannot form {n_slices} slices from {np.unique(y).size} distinct response values"
        )
    order = np.argsort(y, kind="stable")   # ties broken by sample index
    sizes = np.full(n_slices, n // n_slices)
    sizes[: n % n_slices] += 1             # remainder goes to the first slices
    bounds = np.concatenate([[0], np.cumsum(sizes)])
    assign = np.empty(n, dtype=int)
    for k in range(n_slices):
        assign[order[bounds[k]:bounds[k + 1]]] = k
    return assign, sizes


def _deterministic_sign(vectors):
    """Flip eigenvector signs so the largest-magnitude component is positive."""
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def sorted_eigh(m):
    """Symmetric eigendecomposition with non-increasing eigenvalues and the
    deterministic sign convention."""
    evals, evecs = np.linalg.eigh(m)
    order = np.argsort(evals, kind="stable")[::-1]
    return evals[order], _deterministic_sign(evecs[:, order])


def sir(X, y, config):
    """Sliced inverse regression estimate of the central subspace.

    Standardizes X, slices the sample by the order statistics of y, forms
    the slice-proportion-weighted covariance of slice means of Z, and
    returns the leading eigenvectors back-transformed to the original
    scale, ordered by descending eigenvalue.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    n, p = X.shape
    if y.shape[0] != n:
        raise DataError(f"response length {y.shape[0]} != sample size {n}")
    if config.n_slices > n:
        raise DataError(f"more slices ({config.n_slices}) than samples ({n})")
    if config.target_dim > p:
        raise ConfigError(f"target dimension {config.target_dim} exceeds p={p}")
    Z, transform = standardize(X)
    assign, sizes = _slice_assignments(y, config.n_slices)
    m = np.zeros((p, p))
    for k in range(config.n_slices):
        mean_k = Z[assign == k].mean(axis=0)
        m += (sizes[k] / n) * np.outer(mean_k, mean_k)
    evals, evecs = sorted_eigh(m)
    evals = np.maximum(evals, 0.0)
    rank = int(np.sum(evals > _EIG_RTOL * max(evals[0], 1e-300)))
    d = config.target_dim
    if rank < d:
        warnings.warn(
            f"slice-mean covariance has rank {rank} < requested dimension {d}; "
            "returning the available directions",
            RuntimeWarning,
            stacklevel=2,
        )
        d = max(rank, 1)
    basis_z = Basis(columns=evecs[:, :d], scale=Z_SCALE)
    return SirResult(basis=back_transform(basis_z, transform), eigenvalues=evals, rank=rank)
