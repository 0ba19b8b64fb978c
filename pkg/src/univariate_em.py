#  Copyright (c) 2023. DataRobot, Inc. and its affiliates.
#  All rights reserved.
#  This is proprietary source code of DataRobot, Inc. and its affiliates.
#  Released under the terms of DataRobot Tool and Utility Agreement.

"""
Multi-start EM estimation of a g-component univariate normal mixture under a variance ratio
constraint. Mixture likelihoods are unbounded, so every start whose largest to smallest standard
deviation ratio exceeds the configured bound is discarded, and the maximum likelihood estimate is
the best converged local optimum among many random starts.
"""

import logging
from dataclasses import dataclass
from dataclasses import field

import numpy as np
from scipy import stats

from common import constants
from common.constants import EMStatus
from common.data_types import UnivariateMixture
from common.exceptions import DomainError
from common.exceptions import InfeasibleStart
from common.exceptions import NoLocalOptimum
from common.parallel import parallel_map
from common.parallel import spawn_generators
from stats_core import draw_components
from stats_core import mixture_pdf

logger = logging.getLogger()


@dataclass
class EMConfig:
    """The EM tuning parameters."""

    std_ratio_bound: float = constants.STD_RATIO_BOUND
    epsilon: float = constants.EPSILON
    max_iters: int = constants.EM_MAX_ITERS
    starts_per_component: int = constants.STARTS_PER_COMPONENT
    enforce_ratio: bool = True
    retry_budget: int = constants.START_RETRY_BUDGET
    workers: int = 1

    def __post_init__(self):
        if self.std_ratio_bound < 1.0:
            raise DomainError(f"The std ratio bound must be >= 1, value: {self.std_ratio_bound}")
        if self.epsilon <= 0.0:
            raise DomainError(f"The EM epsilon must be positive, value: {self.epsilon}")
        if self.max_iters < 1 or self.starts_per_component < 1 or self.retry_budget < 1:
            raise DomainError("EM iteration, start and retry counts must be positive.")

    def ratio_satisfied(self, stds):
        """Whether a set of component standard deviations obeys the variance ratio bound."""

        if not self.enforce_ratio:
            return True
        stds = np.asarray(stds, dtype=float)
        return bool(stds.max() <= self.std_ratio_bound * stds.min())


@dataclass
class EMFitResult:
    """The outcome of a single EM run, or the best of several runs."""

    mixture: UnivariateMixture
    log_likelihood: float
    iterations: int
    status: EMStatus
    ll_trace: list = field(default_factory=list)

    @property
    def converged(self):
        """Whether the run converged."""

        return self.status == EMStatus.CONVERGED


def log_likelihood(data, mix: UnivariateMixture):
    """
    The mixture log-likelihood, sum_t ln(sum_i w_i f_i(x_t)).

    Parameters
    ----------
    data : numpy.ndarray
        The observations.
    mix : common.data_types.UnivariateMixture
        The mixture.

    Returns
    -------
    float,
        The log-likelihood, or the large negative sentinel when the density vanishes at any
        observation.
    """

    data = np.asarray(data, dtype=float)
    if not data.size:
        raise DomainError("A log-likelihood requires at least one observation.")
    densities = mixture_pdf(data, mix)
    if np.any(np.asarray(densities) <= 0.0):
        return constants.NEGATIVE_LL_SENTINEL
    return float(np.sum(np.log(densities)))


def posterior_probs(x, mix: UnivariateMixture):
    """
    The posterior component probabilities of a single observation.

    Parameters
    ----------
    x : float
        The observation.
    mix : common.data_types.UnivariateMixture
        The mixture.

    Returns
    -------
    numpy.ndarray,
        Element i is w_i f_i(x) / f(x).
    """

    terms = mix.weights * stats.norm.pdf(x, loc=mix.means, scale=mix.stds)
    total = terms.sum()
    if total <= 0.0:
        raise DomainError(f"The mixture density is zero at x={x}, posterior is undefined.")
    return terms / total


def variance_ratio(mix: UnivariateMixture):
    """The ratio between the largest and the smallest component variance."""

    return float((mix.stds.max() / mix.stds.min()) ** 2)


def mle_fit(data):
    """
    The analytic 1-component fit: the sample mean and the MLE standard deviation (divides by n).

    Parameters
    ----------
    data : numpy.ndarray
        The observations.

    Returns
    -------
    EMFitResult,
        A converged result with zero iterations.
    """

    data = np.asarray(data, dtype=float)
    if data.size < 2 or np.std(data) <= 0.0:
        raise DomainError("A normal fit requires at least two distinct observations.")
    mixture = UnivariateMixture.single(np.mean(data), np.std(data))
    value = log_likelihood(data, mixture)
    return EMFitResult(mixture, value, 0, EMStatus.CONVERGED, [value])


def sample_mixture(mix: UnivariateMixture, size, rng):
    """
    Draw observations from a univariate mixture: a component is chosen by inverse-CDF lookup on
    a uniform draw, then a value is drawn from that component.

    Parameters
    ----------
    mix : common.data_types.UnivariateMixture
        The mixture.
    size : int
        The number of draws.
    rng : numpy.random.Generator
        The random stream.

    Returns
    -------
    numpy.ndarray,
        The draws.
    """

    comps = draw_components(mix.weights, rng.random(size))
    return mix.means[comps] + mix.stds[comps] * rng.standard_normal(size)


def random_start(data, num_components, seed_mix: UnivariateMixture, rng, cfg=None):
    """
    Generate a random start for a g-component fit. The g means are drawn from a seed mixture,
    each observation is attached to its nearest mean, a component weight is its share of the
    observations and its std is the RMS distance of its observations from its mean. Starts with
    an empty component or violating the variance ratio are regenerated.

    Parameters
    ----------
    data : numpy.ndarray
        The observations.
    num_components : int
        The number of components g.
    seed_mix : common.data_types.UnivariateMixture
        The mixture from which the means are drawn.
    rng : numpy.random.Generator
        The random stream.
    cfg : EMConfig or None
        The EM configuration (variance ratio and retry budget).

    Returns
    -------
    common.data_types.UnivariateMixture,
        The start.
    """

    if num_components < 1:
        raise DomainError(f"The number of components must be positive, value: {num_components}")
    cfg = cfg or EMConfig()
    data = np.asarray(data, dtype=float)
    for _ in range(cfg.retry_budget):
        means = sample_mixture(seed_mix, num_components, rng)
        assignment = np.argmin(np.abs(data[:, np.newaxis] - means[np.newaxis, :]), axis=1)
        counts = np.bincount(assignment, minlength=num_components)
        if np.any(counts == 0):
            continue
        squares = np.bincount(
            assignment, weights=(data - means[assignment]) ** 2, minlength=num_components
        )
        stds = np.sqrt(squares / counts)
        if np.any(stds <= 0.0) or not cfg.ratio_satisfied(stds):
            continue
        return UnivariateMixture(counts / data.size, means, stds)

    raise InfeasibleStart(
        f"Could not generate a valid {num_components}-component start within "
        f"{cfg.retry_budget} attempts."
    )


def _component_densities(data, weights, means, stds):
    return weights * stats.norm.pdf(data[:, np.newaxis], loc=means, scale=stds)


def em_fit(data, start: UnivariateMixture, cfg=None):
    """
    Run the EM algorithm from a given start. Each iteration computes the posterior component
    probabilities (E-step) and the closed form weights, means and variances (M-step). The run
    stops when the log-likelihood gain falls below epsilon * |LL|, and aborts when the variance
    ratio is violated, a weight leaves (0, 1), a variance collapses or the iteration budget is
    exhausted.

    Parameters
    ----------
    data : numpy.ndarray
        The observations.
    start : common.data_types.UnivariateMixture
        The start.
    cfg : EMConfig or None
        The EM configuration.

    Returns
    -------
    EMFitResult,
        The result. Aborted runs carry the last valid mixture and the sentinel log-likelihood.
    """

    cfg = cfg or EMConfig()
    data = np.asarray(data, dtype=float)
    weights, means, stds = start.weights.copy(), start.means.copy(), start.stds.copy()
    num_components = weights.size

    densities = _component_densities(data, weights, means, stds)
    mixture_density = densities.sum(axis=1)
    if np.any(mixture_density <= 0.0):
        return EMFitResult(start, constants.NEGATIVE_LL_SENTINEL, 0, EMStatus.DEGENERATE_WEIGHT)
    ll_old = float(np.sum(np.log(mixture_density)))
    trace = [ll_old]

    status = EMStatus.MAX_ITERS
    iteration = 0
    while iteration < cfg.max_iters:
        iteration += 1
        posterior = densities / mixture_density[:, np.newaxis]
        totals = posterior.sum(axis=0)
        new_weights = totals / data.size
        if np.any(new_weights <= 0.0) or (num_components > 1 and np.any(new_weights >= 1.0)):
            status = EMStatus.DEGENERATE_WEIGHT
            break
        new_means = (posterior.T @ data) / totals
        new_vars = np.sum(posterior * (data[:, np.newaxis] - new_means) ** 2, axis=0) / totals
        if np.any(new_vars <= 0.0):
            status = EMStatus.VARIANCE_RATIO_VIOLATED
            break
        new_stds = np.sqrt(new_vars)
        if not cfg.ratio_satisfied(new_stds):
            status = EMStatus.VARIANCE_RATIO_VIOLATED
            break

        new_densities = _component_densities(data, new_weights, new_means, new_stds)
        new_mixture_density = new_densities.sum(axis=1)
        if np.any(new_mixture_density <= 0.0):
            status = EMStatus.DEGENERATE_WEIGHT
            break

        weights, means, stds = new_weights, new_means, new_stds
        densities, mixture_density = new_densities, new_mixture_density
        ll_new = float(np.sum(np.log(mixture_density)))
        trace.append(ll_new)
        if ll_new - ll_old <= cfg.epsilon * abs(ll_old):
            status = EMStatus.CONVERGED
            break
        ll_old = ll_new

    mixture = UnivariateMixture(weights / weights.sum(), means, stds)
    if status != EMStatus.CONVERGED:
        return EMFitResult(mixture, constants.NEGATIVE_LL_SENTINEL, iteration, status, trace)
    return EMFitResult(mixture, trace[-1], iteration, status, trace)


def multi_start_fit(data, num_components, cfg, rng, seed_mix=None, start_multiplier=1):
    """
    Fit a g-component mixture as the best converged EM run over many random starts. A 1-component
    fit is the analytic MLE. Each start owns a random stream derived from the parent generator,
    and argmax ties are broken by the lowest start index.

    Parameters
    ----------
    data : numpy.ndarray
        The observations.
    num_components : int
        The number of components g.
    cfg : EMConfig
        The EM configuration. It determines starts_per_component * (g - 1) starts.
    rng : numpy.random.Generator
        The random stream.
    seed_mix : common.data_types.UnivariateMixture or None
        The mixture from which start means are drawn. Defaults to the 1-component MLE.
    start_multiplier : int
        Multiplies the number of starts.

    Returns
    -------
    EMFitResult,
        The best converged result.
    """

    if num_components < 1:
        raise DomainError(f"The number of components must be positive, value: {num_components}")
    data = np.asarray(data, dtype=float)
    if num_components == 1:
        return mle_fit(data)

    seed_mix = seed_mix or mle_fit(data).mixture
    num_starts = cfg.starts_per_component * (num_components - 1) * start_multiplier
    generators = spawn_generators(rng, num_starts)

    def _run_start(index):
        try:
            start = random_start(data, num_components, seed_mix, generators[index], cfg)
        except InfeasibleStart:
            return None
        return em_fit(data, start, cfg)

    results = parallel_map(_run_start, range(num_starts), cfg.workers)

    best = None
    for result in results:
        if result is not None and result.converged:
            if best is None or result.log_likelihood > best.log_likelihood:
                best = result
    num_converged = sum(1 for result in results if result is not None and result.converged)
    logger.debug(
        "EM fit, g=%d: %d of %d starts converged.", num_components, num_converged, num_starts
    )
    if best is None:
        raise NoLocalOptimum(
            f"None of the {num_starts} random starts converged for a {num_components}-component "
            "mixture."
        )
    return best
