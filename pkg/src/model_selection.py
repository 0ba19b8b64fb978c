#  Copyright (c) 2023. DataRobot, Inc. and its affiliates.
#  All rights reserved.
#  This is proprietary source code of DataRobot, Inc. and its affiliates.
#  Released under the terms of DataRobot Tool and Utility Agreement.

"""
Bootstrapped likelihood ratio tests and the forward-backward procedure, which selects the number
of components of a univariate mixture.
"""

import dataclasses
import logging
from dataclasses import dataclass
from dataclasses import field

import numpy as np

from common import constants
from common.constants import Direction
from common.exceptions import DomainError
from common.exceptions import InferiorLocalOptimum
from common.exceptions import NoLocalOptimum
from common.parallel import parallel_map
from common.parallel import spawn_generators
from stats_core import information_criteria
from univariate_em import EMConfig
from univariate_em import mle_fit
from univariate_em import multi_start_fit
from univariate_em import sample_mixture

logger = logging.getLogger()


@dataclass
class SelectionConfig:
    """The configuration of the forward-backward component selection."""

    max_components: int = 5
    bootstrap_samples: int = 100
    forward_alpha: float = constants.FORWARD_ALPHA
    backward_alpha: float = constants.BACKWARD_ALPHA
    em: EMConfig = field(default_factory=EMConfig)
    original_start_multiplier: int = constants.ORIGINAL_START_MULTIPLIER
    workers: int = 1

    def __post_init__(self):
        if self.max_components < 1 or self.bootstrap_samples < 1:
            raise DomainError("The maximum components and bootstrap samples must be positive.")
        for alpha in (self.forward_alpha, self.backward_alpha):
            if not 0.0 < alpha < 1.0:
                raise DomainError(f"A significance level must be in (0, 1), value: {alpha}")


@dataclass
class LRTResult:
    """The outcome of a bootstrapped likelihood ratio test of g0 vs g1 components."""

    h0: int
    h1: int
    lambda_obs: float
    p_value: float
    valid_samples: int
    lambdas: list = field(default_factory=list)


@dataclass
class SelectionTest:
    """A single decided test in the forward-backward procedure."""

    h0: int
    h1: int
    lambda_obs: float
    p_value: float
    alpha_used: float
    direction: Direction
    rejected: bool


@dataclass
class SelectionTrace:
    """The full record of a forward-backward selection."""

    tests: list
    chosen_g: int
    fits_by_g: dict
    lrt_results: dict = field(default_factory=dict)
    criteria: dict = field(default_factory=dict)

    @property
    def chosen_fit(self):
        """The fit of the selected number of components."""

        return self.fits_by_g[self.chosen_g]


def lrt_statistic(ll0, ll1):
    """The likelihood ratio statistic, -2 (LL0 - LL1)."""

    return -2.0 * (ll0 - ll1)


def bootstrap_p_value(lambdas, lambda_obs):
    """
    The bootstrap p-value, (1 + #{lambda_b >= lambda_obs}) / (B + 1), with B the number of valid
    bootstrap statistics.
    """

    lambdas = np.asarray(lambdas, dtype=float)
    return float((1 + np.count_nonzero(lambdas >= lambda_obs)) / (lambdas.size + 1))


def bootstrap_lrt(data, g0, g1, num_samples, cfg: SelectionConfig, rng, fits_by_g=None):
    """
    Test g0 vs g1 components by approximating the null distribution of the likelihood ratio
    statistic with a parametric bootstrap from the fitted g0 mixture.

    Parameters
    ----------
    data : numpy.ndarray
        The observations.
    g0 : int
        The number of components under H0.
    g1 : int
        The number of components under H1, g1 > g0.
    num_samples : int
        The number of bootstrap samples B.
    cfg : SelectionConfig
        The selection configuration.
    rng : numpy.random.Generator
        The random stream.
    fits_by_g : dict or None
        Optional fits of the original data, keyed by number of components.

    Returns
    -------
    LRTResult,
        The test outcome. Bootstrap samples whose fits failed or whose statistic is negative are
        discarded and reduce the denominator.
    """

    if g0 >= g1 or g0 < 1:
        raise DomainError(f"A test requires 1 <= g0 < g1, g0: {g0}, g1: {g1}")
    if num_samples < 1:
        raise DomainError(f"At least one bootstrap sample is required, value: {num_samples}")

    data = np.asarray(data, dtype=float)
    fits_by_g = fits_by_g or {}
    fit0 = fits_by_g.get(g0) or multi_start_fit(
        data, g0, cfg.em, rng, start_multiplier=cfg.original_start_multiplier
    )
    fit1 = fits_by_g.get(g1) or multi_start_fit(
        data, g1, cfg.em, rng, seed_mix=fit0.mixture, start_multiplier=cfg.original_start_multiplier
    )
    lambda_obs = lrt_statistic(fit0.log_likelihood, fit1.log_likelihood)

    em_cfg = dataclasses.replace(cfg.em, workers=1) if cfg.workers > 1 else cfg.em
    generators = spawn_generators(rng, num_samples)

    def _bootstrap(index):
        generator = generators[index]
        sample = sample_mixture(fit0.mixture, data.size, generator)
        try:
            sample_fit0 = multi_start_fit(sample, g0, em_cfg, generator)
            sample_fit1 = multi_start_fit(
                sample, g1, em_cfg, generator, seed_mix=sample_fit0.mixture
            )
        except (NoLocalOptimum, DomainError):
            return None
        statistic = lrt_statistic(sample_fit0.log_likelihood, sample_fit1.log_likelihood)
        return statistic if statistic >= 0.0 else None

    statistics = parallel_map(_bootstrap, range(num_samples), cfg.workers)
    lambdas = [statistic for statistic in statistics if statistic is not None]
    if len(lambdas) < num_samples:
        logger.warning(
            "Test %d vs %d: %d of %d bootstrap samples were discarded.",
            g0,
            g1,
            num_samples - len(lambdas),
            num_samples,
        )

    p_value = bootstrap_p_value(lambdas, lambda_obs)
    logger.debug("Test %d vs %d: lambda=%.6f, p-value=%.4f", g0, g1, lambda_obs, p_value)
    return LRTResult(g0, g1, lambda_obs, p_value, len(lambdas), lambdas)


def fit_all_sizes(data, max_components, cfg: SelectionConfig, rng):
    """
    Fit mixtures of 1 to max_components components, seeding the starts of each size from the
    best fit of the previous size.

    Returns
    -------
    dict,
        The fits keyed by number of components.
    """

    data = np.asarray(data, dtype=float)
    fits = {1: mle_fit(data)}
    for num_components in range(2, max_components + 1):
        fit = multi_start_fit(
            data,
            num_components,
            cfg.em,
            rng,
            seed_mix=fits[num_components - 1].mixture,
            start_multiplier=cfg.original_start_multiplier,
        )
        previous = fits[num_components - 1].log_likelihood
        if fit.log_likelihood < previous - 1e-9 * abs(previous):
            raise InferiorLocalOptimum(
                f"The {num_components}-component fit (LL={fit.log_likelihood}) is worse than the "
                f"{num_components - 1}-component fit (LL={previous}). Increase the number of "
                "random starts."
            )
        fits[num_components] = fit
    return fits


def forward_backward(max_components, run_test, forward_alpha, backward_alpha):
    """
    Drive the forward-backward procedure. The forward phase tests the current basis against
    2, 3, ..., max_components components and moves the basis to H1 on each rejection. The
    backward phase tests (basis - 1) vs basis, lowering the basis on each acceptance, and ends
    at the first rejection. A pair that was already run reuses its statistic and p-value and
    is decided against the alpha of the current phase.

    Parameters
    ----------
    max_components : int
        The largest number of components to consider.
    run_test : callable
        A function (h0, h1) -> LRTResult.
    forward_alpha : float
        The significance level of the forward phase.
    backward_alpha : float
        The significance level of the backward phase.

    Returns
    -------
    tuple(list[SelectionTest], int, dict),
        The decided tests, the selected number of components and the test results by pair.
    """

    results = {}
    tests = []

    def _decide(h0, h1, alpha, direction):
        if (h0, h1) not in results:
            results[(h0, h1)] = run_test(h0, h1)
        result = results[(h0, h1)]
        rejected = result.p_value <= alpha
        tests.append(
            SelectionTest(h0, h1, result.lambda_obs, result.p_value, alpha, direction, rejected)
        )
        logger.debug(
            "%s test %d vs %d: p-value=%.4f, alpha=%.4f, H0 %s.",
            direction.value,
            h0,
            h1,
            result.p_value,
            alpha,
            "rejected" if rejected else "accepted",
        )
        return rejected

    basis = 1
    for h1 in range(2, max_components + 1):
        if _decide(basis, h1, forward_alpha, Direction.FORWARD):
            basis = h1

    for h0 in range(basis - 1, 0, -1):
        if _decide(h0, basis, backward_alpha, Direction.BACKWARD):
            break
        basis = h0

    return tests, basis, results


def select_components(data, cfg: SelectionConfig, rng):
    """
    Select the number of univariate mixture components with the forward-backward procedure.

    Parameters
    ----------
    data : numpy.ndarray
        The observations.
    cfg : SelectionConfig
        The selection configuration.
    rng : numpy.random.Generator
        The random stream.

    Returns
    -------
    SelectionTrace,
        The selected number of components, every decided test and the fits of every size.
    """

    data = np.asarray(data, dtype=float)
    if data.size < 3 * cfg.max_components:
        raise DomainError(
            f"At least {3 * cfg.max_components} observations are required to consider up to "
            f"{cfg.max_components} components, found: {data.size}"
        )

    fits = fit_all_sizes(data, cfg.max_components, cfg, rng)

    def _run_test(h0, h1):
        return bootstrap_lrt(data, h0, h1, cfg.bootstrap_samples, cfg, rng, fits)

    tests, chosen, results = forward_backward(
        cfg.max_components, _run_test, cfg.forward_alpha, cfg.backward_alpha
    )

    criteria = {}
    for num_components, fit in fits.items():
        free_params = 3 * num_components - 1
        if data.size > free_params + 2:
            criteria[num_components] = information_criteria(
                fit.log_likelihood, free_params, data.size
            )

    logger.info("Selected a %d-component mixture out of %d.", chosen, cfg.max_components)
    return SelectionTrace(tests, chosen, fits, results, criteria)
