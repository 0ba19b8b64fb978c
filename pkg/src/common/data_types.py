#  Copyright (c) 2023. DataRobot, Inc. and its affiliates.
#  All rights reserved.
#  This is proprietary source code of DataRobot, Inc. and its affiliates.
#  Released under the terms of DataRobot Tool and Utility Agreement.

"""Contains various data types that are shared between the modules."""

from dataclasses import dataclass
from dataclasses import field

import numpy as np

from common.exceptions import DomainError

WEIGHT_SUM_TOLERANCE = 1e-12


@dataclass
class UnivariateMixture:
    """
    A g-component univariate normal mixture. The components are kept in a canonical order,
    ascending by mean and then by standard deviation, so two mixtures compare component-wise.
    """

    weights: np.ndarray
    means: np.ndarray
    stds: np.ndarray

    def __post_init__(self):
        weights = np.atleast_1d(np.asarray(self.weights, dtype=float))
        means = np.atleast_1d(np.asarray(self.means, dtype=float))
        stds = np.atleast_1d(np.asarray(self.stds, dtype=float))
        if not weights.size or not weights.shape == means.shape == stds.shape:
            raise DomainError(
                "A mixture requires the same non zero number of weights, means and stds. "
                f"weights: {weights.shape}, means: {means.shape}, stds: {stds.shape}"
            )
        if np.any(stds <= 0.0) or not np.all(np.isfinite(stds)):
            raise DomainError(f"Mixture standard deviations must be positive, stds: {stds}")
        if np.any(weights <= 0.0) or np.any(weights > 1.0):
            raise DomainError(f"Mixture weights must be in (0, 1], weights: {weights}")
        if abs(weights.sum() - 1.0) > WEIGHT_SUM_TOLERANCE:
            raise DomainError(f"Mixture weights must sum to 1, sum: {weights.sum()!r}")

        order = np.lexsort((stds, means))
        self.weights = weights[order]
        self.means = means[order]
        self.stds = stds[order]

    @classmethod
    def single(cls, mean, std):
        """Create a 1-component mixture, i.e. a plain normal density."""

        return cls(np.array([1.0]), np.array([mean]), np.array([std]))

    @property
    def num_components(self):
        """The number of components in the mixture."""

        return int(self.weights.size)

    def components(self):
        """
        Iterate over the mixture components.

        Returns
        -------
        list[tuple(float, float, float)],
            A list of (weight, mean, std) tuples in canonical order.
        """

        return list(zip(self.weights.tolist(), self.means.tolist(), self.stds.tolist()))


@dataclass
class MomentSummary:
    """The mean, standard deviation, skewness and kurtosis of a density."""

    mean: float
    std: float
    skewness: float
    kurtosis: float


@dataclass
class ICReport:
    """Information criteria of a fitted model."""

    log_likelihood: float
    free_params: int
    sample_size: int
    aic: float
    aicc: float
    bic: float


@dataclass
class ReturnsPanel:
    """A T x N panel of compounding returns, rows are time points and columns are assets."""

    values: np.ndarray
    asset_names: list = field(default_factory=list)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values.reshape(-1, 1)
        if values.ndim != 2:
            raise DomainError(f"A returns panel must be a 2-D matrix, shape: {values.shape}")
        self.values = values
        if not self.asset_names:
            self.asset_names = [f"asset_{index + 1}" for index in range(values.shape[1])]
        if len(self.asset_names) != values.shape[1]:
            raise DomainError(
                f"Expecting {values.shape[1]} asset names, got: {len(self.asset_names)}"
            )

    @property
    def num_timepoints(self):
        """The number of time points (rows)."""

        return int(self.values.shape[0])

    @property
    def num_assets(self):
        """The number of assets (columns)."""

        return int(self.values.shape[1])

    def column(self, asset_index):
        """Return the returns series of a single asset."""

        return self.values[:, asset_index]
