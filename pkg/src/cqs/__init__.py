"""Central quantile subspace estimation.

Dimension reduction targeted at conditional quantiles: find the fewest
linear combinations of the predictors that carry all the information the
predictors hold about a given conditional quantile of the response.
"""

__version__ = "0.1.0"

from .data import Dataset
from .estimator import (
    CqsConfig,
    CqsEstimate,
    IterationTrace,
    bic_dimension,
    bic_profile,
    estimate_cqs,
    estimate_subspace,
    functional_basis,
    mean_functional,
    multi_index_basis,
    ols_fit,
    quantile_functional,
    single_index_direction,
)
from .exceptions import ConfigError, CqsError, DataError, EstimationError
from .metrics import estimation_error, subspace_angle
from .smoothing import (
    Bandwidth,
    QuantileFit,
    check_loss,
    fit_all_means,
    fit_all_quantiles,
    gaussian_kernel_weight,
    local_linear_quantile,
    mean_regression_bandwidth,
    nadaraya_watson_mean,
    quantile_bandwidth_factor,
    rule_of_thumb_bandwidth,
)
from .subspace import (
    Basis,
    SirConfig,
    SirResult,
    StandardizeTransform,
    back_transform,
    default_n_slices,
    sir,
    standardize,
)

__all__ = [name for name in dir() if not name.startswith("_")]
