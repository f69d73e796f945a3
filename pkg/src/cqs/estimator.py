"""Estimation of central quantile subspaces and, more generally, of the
central subspace of any conditional statistical functional.

The pipeline: standardize the predictors, reduce them once with sliced
inverse regression, fit the conditional functional (a quantile by default)
nonparametrically on that projection, and regress the fitted values on the
predictors by least squares.  The resulting slope spans the target space
when it is one-dimensional.  For higher-dimensional targets the slope
seeds an iteration that collects moment vectors E[fitted * X] over
successive one-dimensional projections; the leading eigenvectors of the
collected matrix times its transpose span the estimate.  A modified
BIC-type criterion selects unknown dimensions from eigenvalue profiles.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lstsq, qr

from .exceptions import ConfigError, DataError, EstimationError
from .smoothing import fit_all_means, fit_all_quantiles, _validate_tau
from .subspace import (
    Basis,
    SirConfig,
    X_SCALE,
    Z_SCALE,
    back_transform,
    default_n_slices,
    sir,
    sorted_eigh,
    standardize,
    to_z_scale,
)

_DEGENERATE_NORM = 1e-12


@dataclass(frozen=True)
class CqsConfig:
    """Settings for estimate_cqs.

    ``d_tau`` and ``initial_cs_dim`` are selected by the modified BIC
    criterion when omitted.  ``initial_basis`` injects a pre-computed
    central-subspace basis in place of the internal SIR step.
    """

    tau: float
    d_tau: int | None = None
    initial_cs_dim: int | None = None
    n_slices: int | None = None
    initial_basis: Basis | None = None

    def __post_init__(self):
        _validate_tau(self.tau)
        if self.d_tau is not None and self.d_tau < 1:
            raise ConfigError(f"d_tau must be a positive integer, got {self.d_tau}")
        if self.initial_cs_dim is not None and self.initial_cs_dim < 1:
            raise ConfigError(f"initial_cs_dim must be positive, got {self.initial_cs_dim}")


@dataclass(frozen=True)
class IterationTrace:
    """The p moment vectors and the eigenvalue profile of their outer
    product matrix (columns scale-equalized before eigendecomposition)."""

    vectors: np.ndarray       # (p, p): column j is the j-th iterate
    eigenvalues: np.ndarray   # (p,), non-increasing, nonnegative


@dataclass(frozen=True)
class CqsEstimate:
    basis: Basis
    trace: IterationTrace | None
    cs_dim: int
    subspace_dim: int
    sir_eigenvalues: np.ndarray | None


def quantile_functional(tau):
    """Conditional tau-quantile estimator: fits local linear quantiles on
    the given projection with the rule-of-thumb bandwidth."""
    tau = _validate_tau(tau)

    def fitted_values(projected, y):
        return fit_all_quantiles(projected, y, tau).fitted

    return fitted_values


def mean_functional():
    """Conditional mean estimator (Nadaraya-Watson, base bandwidth)."""

    def fitted_values(projected, y):
        return fit_all_means(projected, y)

    return fitted_values


def ols_fit(X, response):
    """Exact least-squares fit of response on [1, X].

    Returns (intercept, slope).  Raises on rank deficiency, naming the
    dependent columns.
    """
    X = np.asarray(X, dtype=float)
    response = np.asarray(response, dtype=float).ravel()
    if X.ndim != 2 or X.shape[0] != response.shape[0]:
        raise DataError("X must be n x p with one response per row")
    design = np.column_stack([np.ones(X.shape[0]), X])
    _, r, piv = qr(design, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = max(design.shape) * np.finfo(float).eps * (diag[0] if diag.size else 0.0)
    rank = int(np.sum(diag > tol))
    if rank < design.shape[1]:
        dependent = sorted(piv[rank:])
        names = ["intercept" if j == 0 else f"column {j - 1}" for j in dependent]
        raise DataError(f"design matrix is rank deficient; dependent: {', '.join(names)}")
    coef = lstsq(design, response)[0]
    return float(coef[0]), coef[1:]


def single_index_direction(X, y, tau, cs_basis):
    """Slope of the least-squares regression of fitted conditional
    tau-quantiles (estimated on the cs_basis projection) on X.

    Returned unnormalized; spans the quantile subspace when it is
    one-dimensional.
    """
    return _initial_slope(X, y, quantile_functional(tau), cs_basis)


def _initial_slope(X, y, functional, cs_basis):
    X = np.asarray(X, dtype=float)
    cols = cs_basis.columns if isinstance(cs_basis, Basis) else np.asarray(cs_basis, dtype=float)
    fitted = functional(X @ cols, y)
    _, slope = ols_fit(X, fitted)
    return slope


def _iterate_moments(X, y, functional, beta0):
    """Moment-vector iteration: beta_j = mean(fitted_j * X) with fitted_j
    estimated on the normalized previous direction."""
    n, p = X.shape
    vectors = np.empty((p, p))
    vectors[:, 0] = beta0
    beta = beta0
    for j in range(1, p):
        norm = np.linalg.norm(beta)
        if norm < _DEGENERATE_NORM:
            raise EstimationError(f"degenerate iterate at step {j}: previous vector has norm {norm:.2e}")
        fitted = functional(X @ (beta / norm), y)
        beta = fitted @ X / n
        vectors[:, j] = beta
    return vectors


def _eigen_profile(vectors):
    """Eigen-decompose V V^T after equalizing column norms; returns
    (eigenvalues, eigenvectors) sorted non-increasing."""
    norms = np.linalg.norm(vectors, axis=0)
    if np.any(norms < _DEGENERATE_NORM):
        raise EstimationError(
            f"degenerate iterate at step {int(np.flatnonzero(norms < _DEGENERATE_NORM)[0])}: zero column"
        )
    v = vectors / norms
    evals, evecs = sorted_eigh(v @ v.T)
    return np.maximum(evals, 0.0), evecs


def functional_basis(X, y, functional, d_target, cs_basis, scale=X_SCALE):
    """Basis of the central subspace of an arbitrary conditional functional.

    Identical control flow for every functional: initial least-squares
    slope; if ``d_target`` is 1 that direction is the estimate, otherwise
    the moment iteration runs and the top eigenvectors are returned.
    """
    basis, _ = _functional_basis_traced(X, y, functional, d_target, cs_basis, scale)
    return basis


def _functional_basis_traced(X, y, functional, d_target, cs_basis, scale=X_SCALE,
                             force_iteration=False):
    X = np.asarray(X, dtype=float)
    p = X.shape[1]
    if not 1 <= d_target <= p:
        raise ConfigError(f"subspace dimension must lie in [1, {p}], got {d_target}")
    beta0 = _initial_slope(X, y, functional, cs_basis)
    if d_target == 1 and not force_iteration:
        if np.linalg.norm(beta0) < _DEGENERATE_NORM:
            raise EstimationError("degenerate iterate at step 1: initial slope is zero")
        return Basis(columns=beta0, scale=scale), None
    vectors = _iterate_moments(X, y, functional, beta0)
    evals, evecs = _eigen_profile(vectors)
    trace = IterationTrace(vectors=vectors, eigenvalues=evals)
    if d_target == 1:
        if np.linalg.norm(beta0) < _DEGENERATE_NORM:
            raise EstimationError("degenerate iterate at step 1: initial slope is zero")
        return Basis(columns=beta0, scale=scale), trace
    return Basis(columns=evecs[:, :d_target], scale=scale), trace


def multi_index_basis(X, y, tau, d_tau, cs_basis, scale=X_SCALE):
    """Quantile-subspace basis for a target dimension d_tau.

    With d_tau = 1 this returns exactly the normalized
    single_index_direction; otherwise the moment iteration and
    eigendecomposition produce d_tau directions.
    """
    return functional_basis(X, y, quantile_functional(tau), d_tau, cs_basis, scale)


def bic_dimension(eigenvalues, n_samples):
    """Modified BIC-type dimension estimate from an eigenvalue profile.

    Maximizes G(k) = n * sum_{i<=k} lambda_i^2 / sum_i lambda_i^2
    - (2 n^{3/4} / p) * k(k+1)/2 over k = 1..p; ties go to the smaller k.
    Scale-free in the eigenvalues.
    """
    lam = np.asarray(eigenvalues, dtype=float).ravel()
    p = lam.shape[0]
    if p == 0:
        raise ConfigError("empty eigenvalue profile")
    if np.any(lam < -1e-12 * max(abs(lam).max(), 1.0)):
        raise ConfigError("eigenvalues must be nonnegative")
    lam = np.maximum(lam, 0.0)
    if np.any(np.diff(lam) > 1e-12 * max(lam.max(), 1.0)):
        raise ConfigError("eigenvalues must be sorted in non-increasing order")
    total = np.sum(lam**2)
    if total <= 0.0:
        raise EstimationError("all eigenvalues are zero; dimension ratio undefined")
    k = np.arange(1, p + 1)
    g = n_samples * np.cumsum(lam**2) / total - (2.0 * n_samples**0.75 / p) * k * (k + 1) / 2.0
    return int(np.argmax(g)) + 1


def bic_profile(eigenvalues, n_samples):
    """The full G(k) curve used by bic_dimension, for auditing."""
    lam = np.maximum(np.asarray(eigenvalues, dtype=float).ravel(), 0.0)
    p = lam.shape[0]
    total = np.sum(lam**2)
    if total <= 0.0:
        raise EstimationError("all eigenvalues are zero; dimension ratio undefined")
    k = np.arange(1, p + 1)
    return n_samples * np.cumsum(lam**2) / total - (2.0 * n_samples**0.75 / p) * k * (k + 1) / 2.0


def estimate_subspace(X, y, functional, d_target=None, cs_dim=None, n_slices=None,
                      initial_basis=None):
    """Full workflow for an arbitrary conditional functional: standardize,
    reduce once (SIR unless a basis is injected), run the
    functional-regression step and, when needed, the moment iteration on
    the standardized scale; back-transform to the original predictor
    scale.

    Unknown dimensions are selected with the modified BIC criterion: the
    initial reduction dimension from the SIR eigenvalue profile, the
    target dimension from the singular-value profile of the iterate
    matrix.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    n, p = X.shape
    Z, transform = standardize(X)
    sir_evals = None
    if initial_basis is not None:
        basis_z = (to_z_scale(initial_basis, transform)
                   if initial_basis.scale == X_SCALE else initial_basis)
        cs_dim = basis_z.k
    else:
        slices = default_n_slices(n, p) if n_slices is None else n_slices
        max_dim = min(p, slices - 1)
        result = sir(Z, y, SirConfig(n_slices=slices, target_dim=max_dim))
        sir_evals = result.eigenvalues
        if cs_dim is None:
            cs_dim = min(bic_dimension(sir_evals, n), max_dim)
        elif cs_dim > max_dim:
            raise ConfigError(f"initial_cs_dim {cs_dim} exceeds min(p, n_slices - 1) = {max_dim}")
        # SIR ran on Z, so its output lives on the standardized scale
        basis_z = Basis(columns=result.basis.columns[:, :cs_dim], scale=Z_SCALE)
    basis_z, trace = _functional_basis_traced(
        Z, y, functional, d_target if d_target is not None else p,
        basis_z, scale=Z_SCALE, force_iteration=d_target is None,
    )
    if d_target is None:
        singular_values = np.sqrt(trace.eigenvalues)
        d_target = bic_dimension(singular_values, n)
        basis_z = Basis(columns=basis_z.columns[:, :d_target], scale=Z_SCALE)
    return CqsEstimate(
        basis=back_transform(basis_z, transform),
        trace=trace,
        cs_dim=cs_dim,
        subspace_dim=d_target,
        sir_eigenvalues=sir_evals,
    )


def estimate_cqs(X, y, config):
    """Estimate the central quantile subspace at config.tau.

    Returns a CqsEstimate whose basis lives on the original predictor
    scale.  The iteration trace is None when d_tau = 1 was requested
    explicitly (the iteration never runs).
    """
    return estimate_subspace(
        X, y,
        quantile_functional(config.tau),
        d_target=config.d_tau,
        cs_dim=config.initial_cs_dim,
        n_slices=config.n_slices,
        initial_basis=config.initial_basis,
    )
