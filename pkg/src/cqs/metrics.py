"""Distances between estimated and true subspaces.

The error metric is the largest principal angle between the two column
spans, normalized by pi/2.  For spans of unequal dimension the angle is
measured between the smaller space and its best alignment inside the
larger one, so a contained subspace scores zero.
"""

import numpy as np
from scipy.linalg import qr

from .exceptions import DataError


def _orthonormal_columns(basis, side):
    cols = basis.columns if hasattr(basis, "columns") else np.asarray(basis, dtype=float)
    if cols.ndim == 1:
        cols = cols[:, None]
    if cols.ndim != 2 or cols.shape[1] == 0:
        raise DataError(f"{side} basis must be a p x k matrix with k >= 1")
    if not np.all(np.isfinite(cols)):
        raise DataError(f"{side} basis contains non-finite entries")
    # rank-revealing QR with column pivoting; deterministic
    q, r, _ = qr(cols, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = max(cols.shape) * np.finfo(float).eps * (diag[0] if diag.size else 0.0)
    rank = int(np.sum(diag > tol))
    if rank < cols.shape[1]:
        raise DataError(f"{side} basis is rank deficient ({rank} < {cols.shape[1]})")
    return q


def subspace_angle(left, right):
    """Largest principal angle (radians, in [0, pi/2]) between two spans.

    Accepts Basis objects or plain arrays of basis columns.
    """
    ql = _orthonormal_columns(left, "left")
    qr_ = _orthonormal_columns(right, "right")
    if ql.shape[0] != qr_.shape[0]:
        raise DataError(f"ambient dimensions differ: {ql.shape[0]} vs {qr_.shape[0]}")
    if ql.shape[1] > qr_.shape[1]:
        ql, qr_ = qr_, ql
    # sine formula: the spectral norm of Q_small - Q_large (Q_large' Q_small)
    # is the sine of the largest principal angle; accurate near zero
    residual = ql - qr_ @ (qr_.T @ ql)
    sine = np.linalg.norm(residual, 2)
    angle = float(np.arcsin(min(1.0, max(0.0, sine))))
    return min(max(angle, 0.0), np.pi / 2.0)


def estimation_error(left, right):
    """subspace_angle normalized to [0, 1] by pi/2."""
    return subspace_angle(left, right) / (np.pi / 2.0)


def aligned_direction_error(left, right):
    """Smallest principal angle between the spans, normalized by pi/2.

    Measures how well the best-aligned directions agree and ignores the
    remaining ones; coincides with estimation_error when either span is
    one-dimensional and the other contains it, and for two lines.  Kept
    alongside the largest-angle metric because multi-dimensional benchmark
    comparisons are sensitive to which principal angle "the angle between
    subspaces" denotes.
    """
    ql = _orthonormal_columns(left, "left")
    qr_ = _orthonormal_columns(right, "right")
    if ql.shape[0] != qr_.shape[0]:
        raise DataError(f"ambient dimensions differ: {ql.shape[0]} vs {qr_.shape[0]}")
    largest_cos = np.linalg.norm(ql.T @ qr_, 2)
    angle = float(np.arccos(min(1.0, max(0.0, largest_cos))))
    return min(max(angle, 0.0), np.pi / 2.0) / (np.pi / 2.0)
