#  Copyright (c) 2023. DataRobot, Inc. and its affiliates.
#  All rights reserved.
#  This is proprietary source code of DataRobot, Inc. and its affiliates.
#  Released under the terms of DataRobot Tool and Utility Agreement.

"""
Serial correlation diagnostics of a returns series: sample and theoretical autocorrelations,
partial autocorrelations, portmanteau tests and multiple testing corrections.
"""

import logging
from dataclasses import dataclass
from dataclasses import field

import numpy as np
from statsmodels.stats.diagnostic import acorr_ljungbox
from statsmodels.tsa.arima_process import ArmaProcess
from statsmodels.tsa.arima_process import arma_acf
from statsmodels.tsa.stattools import acf as sample_acf
from statsmodels.tsa.stattools import levinson_durbin

from common.exceptions import DomainError
from common.exceptions import NonStationaryProcess

logger = logging.getLogger()


@dataclass
class ARMASpec:
    """
    An ARMA(p, q) process, X_t = sum_i phi_i X_{t-i} + e_t - sum_j theta_j e_{t-j}.
    """

    phi: list = field(default_factory=list)
    theta: list = field(default_factory=list)
    innovation_variance: float = 1.0

    def __post_init__(self):
        if self.innovation_variance <= 0.0:
            raise DomainError(
                f"The innovation variance must be positive: {self.innovation_variance}"
            )

    @property
    def ar_polynomial(self):
        """The autoregressive lag polynomial, 1 - phi_1 L - ... - phi_p L^p."""

        return np.concatenate([[1.0], -np.asarray(self.phi, dtype=float)])

    @property
    def ma_polynomial(self):
        """The moving average lag polynomial, 1 - theta_1 L - ... - theta_q L^q."""

        return np.concatenate([[1.0], -np.asarray(self.theta, dtype=float)])


def default_max_lag(num_observations):
    """The default number of lags, T / 4."""

    return max(1, num_observations // 4)


def _validate_series(series, max_lag, extra=0):
    series = np.asarray(series, dtype=float)
    if series.ndim != 1:
        raise DomainError(f"Expecting a 1-D series, shape: {series.shape}")
    if max_lag < 1 or series.size <= max_lag + extra:
        raise DomainError(
            f"A series of {series.size} observations cannot support {max_lag} lags."
        )
    if np.var(series) <= 0.0:
        raise DomainError("The autocorrelations of a constant series are undefined.")
    return series


def acf(series, max_lag):
    """
    The sample autocorrelations at lags 0..max_lag.

    Parameters
    ----------
    series : numpy.ndarray
        The observations.
    max_lag : int
        The largest lag, smaller than the number of observations.

    Returns
    -------
    numpy.ndarray,
        The autocorrelations, element 0 being 1.
    """

    series = _validate_series(series, max_lag)
    return sample_acf(series, nlags=max_lag, adjusted=False, fft=False)


def pacf(series, max_lag):
    """
    The sample partial autocorrelations at lags 0..max_lag, computed from the sample
    autocorrelations by the Durbin-Levinson recursion.

    Returns
    -------
    numpy.ndarray,
        The partial autocorrelations, element 0 being 1.
    """

    correlations = acf(series, max_lag)
    _, _, partial, _, _ = levinson_durbin(correlations, nlags=max_lag, isacov=True)
    return np.asarray(partial, dtype=float)


@dataclass
class PortmanteauResult:
    """The outcome of a portmanteau test of no serial correlation."""

    statistic_name: str
    max_lag: int
    statistic: float
    p_value: float


def serial_correlation_test(series, max_lag, statistic="ljung-box"):
    """
    Test the null hypothesis of no serial correlation up to a lag.

    Parameters
    ----------
    series : numpy.ndarray
        The observations.
    max_lag : int
        The number of lags.
    statistic : str
        Either 'ljung-box' or 'box-pierce'.

    Returns
    -------
    PortmanteauResult,
        The statistic and its chi-squared p-value.
    """

    if statistic not in ("ljung-box", "box-pierce"):
        raise DomainError(f"Unsupported portmanteau statistic: {statistic}")
    series = _validate_series(series, max_lag, extra=1)
    table = acorr_ljungbox(series, lags=[max_lag], boxpierce=statistic == "box-pierce")
    prefix = "bp" if statistic == "box-pierce" else "lb"
    value = float(table[f"{prefix}_stat"].iloc[-1])
    p_value = max(float(table[f"{prefix}_pvalue"].iloc[-1]), np.finfo(float).tiny)
    logger.debug("%s test, %d lags: Q=%.4f, p-value=%.4g", statistic, max_lag, value, p_value)
    return PortmanteauResult(statistic, max_lag, value, p_value)


def bonferroni_alpha(familywise_alpha, num_tests):
    """The per test significance level that bounds the familywise error, alpha* / n."""

    if num_tests < 1:
        raise DomainError(f"The number of tests must be positive: {num_tests}")
    return familywise_alpha / num_tests


def familywise_error(alpha, num_tests):
    """The probability of at least one false rejection in n independent tests."""

    if num_tests < 1:
        raise DomainError(f"The number of tests must be positive: {num_tests}")
    return 1.0 - (1.0 - alpha) ** num_tests


def theoretical_arma_acf(spec: ARMASpec, max_lag):
    """
    The theoretical autocorrelations of a stationary ARMA process at lags 0..max_lag.

    Parameters
    ----------
    spec : ARMASpec
        The process.
    max_lag : int
        The largest lag.

    Returns
    -------
    numpy.ndarray,
        The autocorrelations.
    """

    if max_lag < 0:
        raise DomainError(f"The maximum lag must be nonnegative: {max_lag}")
    process = ArmaProcess(spec.ar_polynomial, spec.ma_polynomial)
    if not process.isstationary:
        raise NonStationaryProcess(
            f"The autoregressive polynomial {spec.ar_polynomial} has a root on or inside the "
            "unit circle."
        )
    return arma_acf(spec.ar_polynomial, spec.ma_polynomial, lags=max_lag + 1)


def ar1_half_life(phi):
    """The number of periods for an AR(1) autocorrelation to halve, ln(0.5) / ln|phi|."""

    if not 0.0 < abs(phi) < 1.0:
        raise DomainError(f"An AR(1) half life requires 0 < |phi| < 1: {phi}")
    return float(np.log(0.5) / np.log(abs(phi)))


@dataclass
class SeriesDiagnostics:
    """The serial correlation diagnostics of one asset."""

    asset_name: str
    max_lag: int
    acf: np.ndarray
    pacf: np.ndarray
    portmanteau: PortmanteauResult
    significance_bound: float


def diagnose_series(asset_name, series, max_lag=None, statistic="ljung-box"):
    """
    Compute the autocorrelations, partial autocorrelations and a portmanteau test of a series.
    The significance bound is the approximate 95% band 1.96 / sqrt(T).
    """

    series = np.asarray(series, dtype=float)
    max_lag = max_lag or default_max_lag(series.size)
    return SeriesDiagnostics(
        asset_name,
        max_lag,
        acf(series, max_lag),
        pacf(series, max_lag),
        serial_correlation_test(series, max_lag, statistic),
        1.96 / np.sqrt(series.size),
    )
