"""Exception hierarchy.

Three categories, matching the CLI exit codes: configuration problems
(bad parameters, unknown keys), data problems (parsing, degenerate or
rank-deficient inputs), and numerical estimation failures.
"""


class CqsError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(CqsError):
    """Invalid parameter or configuration (CLI exit code 2)."""


class DataError(CqsError):
    """Unusable input data: parse failures, degenerate designs, rank
    deficiency (CLI exit code 3)."""


class EstimationError(CqsError):
    """Numerical failure during estimation, e.g. a bandwidth leaving no
    effective sample or a degenerate iterate (CLI exit code 4)."""
