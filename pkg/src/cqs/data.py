"""Shared dataset container."""

from dataclasses import dataclass, field

import numpy as np

from .exceptions import DataError


@dataclass(frozen=True)
class Dataset:
    """An n x p predictor matrix with a length-n response vector."""

    X: np.ndarray
    y: np.ndarray
    predictor_names: list[str] = field(default_factory=list)
    response_name: str = "y"

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float).ravel()
        if X.ndim != 2:
            raise DataError("predictors must form an n x p matrix")
        if y.shape[0] != X.shape[0]:
            raise DataError(f"response length {y.shape[0]} != row count {X.shape[0]}")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        if not self.predictor_names:
            object.__setattr__(self, "predictor_names",
                               [f"x{j + 1}" for j in range(X.shape[1])])
        elif len(self.predictor_names) != X.shape[1]:
            raise DataError("one predictor name per column required")

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]
