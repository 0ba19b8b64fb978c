#  Copyright (c) 2023. DataRobot, Inc. and its affiliates.
#  All rights reserved.
#  This is proprietary source code of DataRobot, Inc. and its affiliates.
#  Released under the terms of DataRobot Tool and Utility Agreement.

"""
Elementary densities, mixture moments, information criteria and the future-observation density,
which are used throughout the toolkit. All the functions are pure and thread safe.
"""

import logging

import numpy as np
from scipy import special
from scipy import stats

from common.data_types import ICReport
from common.data_types import MomentSummary
from common.data_types import UnivariateMixture
from common.exceptions import DomainError

logger = logging.getLogger()


def _as_output(value):
    return float(value) if np.ndim(value) == 0 else value


def _validate_std(std):
    if np.any(np.asarray(std, dtype=float) <= 0.0):
        raise DomainError(f"A standard deviation must be positive, std: {std}")


def normal_pdf(x, mean, std):
    """
    The normal density.

    Parameters
    ----------
    x : float or numpy.ndarray
        The point(s) at which to evaluate the density.
    mean : float
        The mean.
    std : float
        The standard deviation, which must be positive.

    Returns
    -------
    float or numpy.ndarray,
        The density value(s).
    """

    _validate_std(std)
    return _as_output(stats.norm.pdf(x, loc=mean, scale=std))


def normal_cdf(x, mean, std):
    """
    The normal cumulative distribution function.

    Parameters
    ----------
    x : float or numpy.ndarray
        The point(s) at which to evaluate the distribution function.
    mean : float
        The mean.
    std : float
        The standard deviation, which must be positive.

    Returns
    -------
    float or numpy.ndarray,
        P(X <= x).
    """

    _validate_std(std)
    return _as_output(special.ndtr((np.asarray(x, dtype=float) - mean) / std))


def mixture_pdf(x, mix: UnivariateMixture):
    """The mixture density, sum_i w_i * phi(x; mu_i, sigma_i)."""

    points = np.asarray(x, dtype=float)
    densities = stats.norm.pdf(points[..., np.newaxis], loc=mix.means, scale=mix.stds)
    return _as_output(densities @ mix.weights)


def mixture_cdf(x, mix: UnivariateMixture):
    """The mixture distribution function, sum_i w_i * Phi(x; mu_i, sigma_i)."""

    points = np.asarray(x, dtype=float)
    cdfs = special.ndtr((points[..., np.newaxis] - mix.means) / mix.stds)
    return _as_output(cdfs @ mix.weights)


def mixture_moments(mix: UnivariateMixture):
    """
    Compute the mean, standard deviation, skewness and kurtosis of a univariate mixture.
    The higher moments are accumulated per component about the overall mean, which is
    algebraically the same as expanding the raw moments E(X^3) = sum w(mu^3 + 3 mu sigma^2) and
    E(X^4) = sum w(mu^4 + 6 mu^2 sigma^2 + 3 sigma^4), without the cancellation.

    Parameters
    ----------
    mix : common.data_types.UnivariateMixture
        The mixture.

    Returns
    -------
    common.data_types.MomentSummary,
        The moment summary.
    """

    mean = float(mix.weights @ mix.means)
    shift = mix.means - mean
    var_c = mix.stds**2
    second = float(mix.weights @ (shift**2 + var_c))
    third = float(mix.weights @ (shift**3 + 3.0 * shift * var_c))
    fourth = float(mix.weights @ (shift**4 + 6.0 * shift**2 * var_c + 3.0 * var_c**2))
    std = np.sqrt(second)
    return MomentSummary(
        mean=mean, std=float(std), skewness=third / std**3, kurtosis=fourth / second**2
    )


def information_criteria(log_likelihood, free_params, sample_size):
    """
    Compute AIC, AICC and BIC.

    Parameters
    ----------
    log_likelihood : float
        The maximized log-likelihood.
    free_params : int
        The number of free parameters.
    sample_size : int
        The number of observations.

    Returns
    -------
    common.data_types.ICReport,
        The information criteria.
    """

    if sample_size < 1 or free_params < 0:
        raise DomainError(
            f"Invalid sample size ({sample_size}) or number of free parameters ({free_params})."
        )
    if sample_size <= free_params + 2:
        raise DomainError(
            "AICC is undefined when the sample size is not larger than the number of free "
            f"parameters + 2. sample size: {sample_size}, free parameters: {free_params}"
        )

    aic = 2.0 * free_params - 2.0 * log_likelihood
    aicc = aic + 2.0 * (free_params + 1) * (free_params + 2) / (sample_size - free_params - 2)
    bic = -2.0 * log_likelihood + free_params * np.log(sample_size)
    return ICReport(
        log_likelihood=float(log_likelihood),
        free_params=int(free_params),
        sample_size=int(sample_size),
        aic=float(aic),
        aicc=float(aicc),
        bic=float(bic),
    )


def count_free_params(model):
    """
    Count the free parameters of a fitted model.

    Parameters
    ----------
    model : common.data_types.UnivariateMixture or joint_mixture.JointMixture
        A univariate mixture (3g - 1 parameters) or a joint mixture, which counts its own
        parameters given its marginals and its marginal constraint system.

    Returns
    -------
    int,
        The number of free parameters.
    """

    if isinstance(model, UnivariateMixture):
        return 3 * model.num_components - 1
    return model.count_free_params()


def future_obs_density(x, sample_mean, sample_std, sample_size):
    """
    The density of a future observation from a normal population whose mean and variance are
    both estimated: a Student-t with T - 1 degrees of freedom, centered at the sample mean and
    scaled by S * sqrt(1 + 1/T).

    Parameters
    ----------
    x : float or numpy.ndarray
        The point(s) at which to evaluate the density.
    sample_mean : float
        The sample mean.
    sample_std : float
        The unbiased sample standard deviation.
    sample_size : int
        The sample size, at least 2.

    Returns
    -------
    float or numpy.ndarray,
        The density value(s).
    """

    if sample_size < 2:
        raise DomainError(f"A future observation density requires T >= 2, T: {sample_size}")
    _validate_std(sample_std)
    scale = sample_std * np.sqrt(1.0 + 1.0 / sample_size)
    return _as_output(stats.t.pdf(x, df=sample_size - 1, loc=sample_mean, scale=scale))


def draw_components(probs, uniforms):
    """
    Select component indices by inverse-CDF lookup: index i is chosen when
    p_1 + ... + p_{i-1} < u <= p_1 + ... + p_i.

    Parameters
    ----------
    probs : numpy.ndarray
        Component probabilities summing to 1.
    uniforms : float or numpy.ndarray
        Uniform(0, 1) draws.

    Returns
    -------
    int or numpy.ndarray,
        The selected component index(es).
    """

    probs = np.asarray(probs, dtype=float)
    cumulative = np.cumsum(probs)
    indices = np.searchsorted(cumulative, uniforms, side="left")
    indices = np.minimum(indices, probs.size - 1)
    return int(indices) if np.ndim(indices) == 0 else indices
