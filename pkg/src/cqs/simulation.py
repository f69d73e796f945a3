"""Seeded data generation for the benchmark models, Monte Carlo replication,
and the root-n consistency study.

Every model carries its structure function, its known true basis, and the
dimensions used by the estimator.  Replication seeds derive from the cell
seed and the replication index, so cells reproduce bit-identically and
replications are independent.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .estimator import CqsConfig, estimate_cqs, estimate_subspace, mean_functional
from .exceptions import ConfigError, CqsError
from .metrics import aligned_direction_error, estimation_error
from .subspace import Basis

ERROR_DISTS = ("N", "t3", "chisq3")
COV_KINDS = ("independent", "ar_half")


def _basis_from_coeffs(*cols):
    def build(p):
        out = np.zeros((p, len(cols)))
        for j, coeffs in enumerate(cols):
            out[: len(coeffs), j] = coeffs
        return out
    return build


@dataclass(frozen=True)
class _Model:
    response: callable          # (X, eps) -> y
    true_basis: callable        # p -> (p, k) array
    min_p: int
    cs_dim: int                 # dimension of the initial reduction
    target_dim: int             # true dimension of the target subspace
    functional: str = "quantile"


MODELS = {
    "Ex1a": _Model(lambda X, e: 3.0 * X[:, 0] + X[:, 1] + e,
                   _basis_from_coeffs([3.0, 1.0]), 2, 1, 1),
    "I": _Model(lambda X, e: X[:, 0] + X[:, 1] + X[:, 2] + X[:, 3] + e,
                _basis_from_coeffs([1.0, 1.0, 1.0, 1.0]), 4, 1, 1),
    "II": _Model(lambda X, e: np.exp(X[:, 0] + X[:, 1]) + e,
                 _basis_from_coeffs([1.0, 1.0]), 2, 1, 1),
    "III": _Model(lambda X, e: 1.0 + X[:, 0] + 0.4 * X[:, 1] + e,
                  _basis_from_coeffs([1.0, 0.4]), 2, 1, 1),
    "IV": _Model(lambda X, e: X[:, 0] / (1.0 + X[:, 0]) ** 2 + e,
                 _basis_from_coeffs([1.0]), 1, 1, 1),
    "Ex2a": _Model(lambda X, e: X[:, 0] ** 3 + X[:, 1] + e,
                   _basis_from_coeffs([1.0], [0.0, 1.0]), 2, 2, 2),
    "V": _Model(lambda X, e: X[:, 0] ** 3 + np.exp(X[:, 1]) + e,
                _basis_from_coeffs([1.0], [0.0, 1.0]), 2, 2, 2),
    "VI": _Model(lambda X, e: X[:, 0] * (X[:, 0] + X[:, 1] + 1.0) + 0.5 * e,
                 _basis_from_coeffs([1.0], [0.0, 1.0]), 2, 2, 2),
    "VII": _Model(lambda X, e: X[:, 0] / (0.5 + (X[:, 1] + 1.5) ** 2) + 0.5 * e,
                  _basis_from_coeffs([1.0], [0.0, 1.0]), 2, 2, 2),
    "VIII": _Model(lambda X, e: np.cos(1.5 * X[:, 0]) + 0.5 * X[:, 1] ** 3 + e,
                   _basis_from_coeffs([1.0], [0.0, 1.0]), 2, 2, 2),
    "Hetero2c": _Model(lambda X, e: X[:, 0] + X[:, 1] ** 3 + 0.5 * X[:, 1] * e,
                       _basis_from_coeffs([1.0], [0.0, 1.0]), 2, 2, 2),
    "Ex3": _Model(lambda X, e: X[:, 0] ** 3 + X[:, 1] * e,
                  _basis_from_coeffs([1.0]), 2, 2, 1, functional="mean"),
}


@dataclass(frozen=True)
class ModelSpec:
    model_id: str
    n: int = 600
    p: int = 10
    error_dist: str = "N"
    cov: str = "independent"
    seed: int = 0

    def __post_init__(self):
        if self.model_id not in MODELS:
            raise ConfigError(f"unknown model {self.model_id!r}; known: {sorted(MODELS)}")
        if self.error_dist not in ERROR_DISTS:
            raise ConfigError(f"unknown error distribution {self.error_dist!r}")
        if self.cov not in COV_KINDS:
            raise ConfigError(f"unknown covariance kind {self.cov!r}")
        if self.p < MODELS[self.model_id].min_p:
            raise ConfigError(
                f"model {self.model_id} uses {MODELS[self.model_id].min_p} coordinates, p={self.p}"
            )
        if self.n < 1:
            raise ConfigError("n must be positive")


def model_response(model_id, X, eps):
    """Assemble Y from predictors and noise; exposed for noise-free checks."""
    return MODELS[model_id].response(np.asarray(X, dtype=float), eps)


def true_basis(model_id, p):
    """The model's known target-subspace basis, unit-normalized columns."""
    return Basis(columns=MODELS[model_id].true_basis(p))


def draw_errors(rng, dist, n):
    if dist == "N":
        return rng.standard_normal(n)
    if dist == "t3":
        return rng.standard_t(3, n)
    if dist == "chisq3":
        return rng.chisquare(3, n)   # uncentered, as specified by the models
    raise ConfigError(f"unknown error distribution {dist!r}")


def ar_half_covariance(p):
    idx = np.arange(p)
    return 0.5 ** np.abs(idx[:, None] - idx[None, :])


def generate(spec, rng=None):
    """Draw (Dataset, true basis) for a model specification.

    Bit-reproducible from spec.seed; an explicit generator overrides it
    (used for derived per-replication seeding).
    """
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    X = rng.standard_normal((spec.n, spec.p))
    if spec.cov == "ar_half":
        X = X @ np.linalg.cholesky(ar_half_covariance(spec.p)).T
    eps = draw_errors(rng, spec.error_dist, spec.n)
    y = model_response(spec.model_id, X, eps)
    return Dataset(X=X, y=y), true_basis(spec.model_id, spec.p)


@dataclass(frozen=True)
class EstimatorSettings:
    """Estimator configuration for simulation cells.

    Dimensions default to the model's known truth; set them to None to
    exercise BIC selection instead.
    """

    subspace_dim: int | str | None = "true"
    cs_dim: int | str | None = "true"
    n_slices: int | None = None

    def resolve(self, model):
        d = model.target_dim if self.subspace_dim == "true" else self.subspace_dim
        cs = model.cs_dim if self.cs_dim == "true" else self.cs_dim
        return d, cs


@dataclass(frozen=True)
class MonteCarloCell:
    model_id: str
    n: int
    p: int
    tau: float | None
    error_dist: str
    cov: str
    mean_error: float
    sd_error: float
    n_success: int
    n_failed: int
    seconds: float
    failed: bool
    mean_aligned_error: float = float("nan")
    sd_aligned_error: float = 0.0
    selected_dims: list = field(default_factory=list)


def estimate_for_model(dataset, model_id, tau, settings=EstimatorSettings()):
    """Run the estimator appropriate to the model (quantile or mean
    functional) and return its CqsEstimate."""
    model = MODELS[model_id]
    d_target, cs_dim = settings.resolve(model)
    if model.functional == "mean":
        return estimate_subspace(dataset.X, dataset.y, mean_functional(),
                                 d_target=d_target, cs_dim=cs_dim,
                                 n_slices=settings.n_slices)
    return estimate_cqs(dataset.X, dataset.y,
                        CqsConfig(tau=tau, d_tau=d_target, initial_cs_dim=cs_dim,
                                  n_slices=settings.n_slices))


def run_cell(spec, tau, settings=EstimatorSettings(), n_reps=100):
    """Monte Carlo cell: n_reps independent replications of generate ->
    estimate -> estimation error, with per-replication seeds derived from
    (spec.seed, replication index).

    Failures are recorded, not fatal, unless they exceed 20% of n_reps.
    """
    if n_reps < 1:
        raise ConfigError("n_reps must be at least 1")
    errors = []
    aligned = []
    dims = []
    n_failed = 0
    start = time.time()
    for rep in range(n_reps):
        rng = np.random.default_rng((spec.seed, rep))
        dataset, truth = generate(spec, rng=rng)
        try:
            est = estimate_for_model(dataset, spec.model_id, tau, settings)
            errors.append(estimation_error(est.basis, truth))
            aligned.append(aligned_direction_error(est.basis, truth))
            dims.append((est.cs_dim, est.subspace_dim))
        except CqsError:
            n_failed += 1
    elapsed = time.time() - start
    failed = n_failed > 0.2 * n_reps
    errors = np.asarray(errors)
    aligned = np.asarray(aligned)
    mean = float(errors.mean()) if errors.size else float("nan")
    sd = float(errors.std(ddof=1)) if errors.size > 1 else 0.0
    return MonteCarloCell(
        model_id=spec.model_id, n=spec.n, p=spec.p, tau=tau,
        error_dist=spec.error_dist, cov=spec.cov,
        mean_error=mean, sd_error=sd,
        n_success=int(errors.size), n_failed=n_failed,
        seconds=elapsed, failed=failed,
        mean_aligned_error=float(aligned.mean()) if aligned.size else float("nan"),
        sd_aligned_error=float(aligned.std(ddof=1)) if aligned.size > 1 else 0.0,
        selected_dims=dims,
    )


def fit_inverse_sqrt_line(n_values, mean_errors):
    """Least-squares line through (1/sqrt(n), mean error); returns
    (slope, intercept, r_squared)."""
    x = 1.0 / np.sqrt(np.asarray(n_values, dtype=float))
    y = np.asarray(mean_errors, dtype=float)
    if x.shape[0] < 3:
        raise ConfigError("need at least 3 sample sizes for the consistency fit")
    slope, intercept = np.polyfit(x, y, 1)
    fitted = slope * x + intercept
    ss_res = float(np.sum((y - fitted) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), float(r2)


@dataclass(frozen=True)
class ConsistencyStudy:
    model_id: str
    tau: float | None
    n_grid: tuple
    mean_errors: tuple
    slope: float
    intercept: float
    r_squared: float
    cells: tuple
    complete: bool


def consistency_study(model_id, tau, n_grid=(200, 400, 600, 800, 1000),
                      p=10, settings=EstimatorSettings(), n_reps=100, seed=0,
                      error_dist="N", cov="independent", metric="largest"):
    """Mean estimation error over a grid of sample sizes, with the
    least-squares fit against 1/sqrt(n).  Any failed cell leaves the study
    incomplete (partial cells still reported).  ``metric`` selects the
    largest-angle error (default) or the aligned-direction error."""
    cells = []
    for n in n_grid:
        spec = ModelSpec(model_id=model_id, n=n, p=p, error_dist=error_dist,
                         cov=cov, seed=seed)
        cells.append(run_cell(spec, tau, settings, n_reps))
    complete = not any(c.failed for c in cells)
    if metric == "largest":
        means = tuple(c.mean_error for c in cells)
    elif metric == "aligned":
        means = tuple(c.mean_aligned_error for c in cells)
    else:
        raise ConfigError(f"unknown metric {metric!r}")
    if complete:
        slope, intercept, r2 = fit_inverse_sqrt_line(n_grid, means)
    else:
        slope = intercept = r2 = float("nan")
    return ConsistencyStudy(model_id=model_id, tau=tau, n_grid=tuple(n_grid),
                            mean_errors=means, slope=slope, intercept=intercept,
                            r_squared=r2, cells=tuple(cells), complete=complete)
