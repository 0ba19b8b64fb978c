#  Copyright (c) 2023. DataRobot, Inc. and its affiliates.
#  All rights reserved.
#  This is proprietary source code of DataRobot, Inc. and its affiliates.
#  Released under the terms of DataRobot Tool and Utility Agreement.

"""
Monte Carlo estimation of the probability of ruin of a retirement portfolio under a fitted joint
mixture, with fixed or random horizons, longevity statistics and static allocation search.

A withdrawal of W_R, inflation-adjusted and as a fraction of the initial wealth, is taken at the
start of each period. Ruin at period t is tracked through the ruin factor: RF(0) = W_R, ruin
occurs when the portfolio return r_t <= RF(t-1), and otherwise RF(t) = RF(t-1) / (r_t - RF(t-1)).
"""

import itertools
import logging
from dataclasses import dataclass
from dataclasses import field

import numpy as np
from scipy import optimize

from common import constants
from common.constants import Horizon
from common.constants import Objective
from common.data_types import ReturnsPanel
from common.data_types import UnivariateMixture
from common.exceptions import DomainError
from common.exceptions import NotPositiveDefinite
from common.parallel import parallel_map
from common.parallel import spawn_generators
from joint_mixture import JointMixture
from joint_mixture import mixture_covariance
from stats_core import draw_components
from univariate_em import sample_mixture

logger = logging.getLogger()


@dataclass
class PortfolioSpec:
    """
    Asset weights, constant (N) or per period (T x N), and the per asset expense ratios.
    """

    weights: np.ndarray
    expenses: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.expenses = np.atleast_1d(np.asarray(self.expenses, dtype=float))
        if self.weights.ndim not in (1, 2) or self.weights.shape[-1] != self.expenses.size:
            raise DomainError(
                f"Weights {self.weights.shape} do not match {self.expenses.size} expense ratios."
            )
        if np.any(self.weights < 0.0) or not np.allclose(self.weights.sum(axis=-1), 1.0):
            raise DomainError(f"Weights must be nonnegative and sum to 1: {self.weights}")
        if np.any(self.expenses < 0.0) or np.any(self.expenses >= 1.0):
            raise DomainError(f"Expense ratios must be in [0, 1): {self.expenses}")

    @property
    def num_assets(self):
        """The number of assets."""

        return int(self.expenses.size)

    @property
    def time_varying(self):
        """Whether the weights change from period to period."""

        return self.weights.ndim == 2

    def effective_weights(self, period):
        """The weights net of expenses, alpha_j (1 - E_j), at a 1-based period."""

        weights = self.weights
        if self.time_varying:
            if not 1 <= period <= weights.shape[0]:
                raise DomainError(f"No weights for period {period}, known: {weights.shape[0]}")
            weights = weights[period - 1]
        return weights * (1.0 - self.expenses)


@dataclass
class DecumulationPlan:
    """
    A withdrawal rate, a horizon (a fixed number of periods or a probability mass function over
    0..T periods) and a portfolio.
    """

    withdrawal_rate: float
    portfolio: PortfolioSpec
    horizon: Horizon = Horizon.FIXED
    fixed_length: int = 0
    pmf: np.ndarray = None

    def __post_init__(self):
        if self.withdrawal_rate < 0.0:
            raise DomainError(f"The withdrawal rate must be nonnegative: {self.withdrawal_rate}")
        if self.horizon == Horizon.FIXED:
            if self.fixed_length < 1:
                raise DomainError(f"A fixed horizon must be positive: {self.fixed_length}")
        else:
            self.pmf = np.asarray(self.pmf, dtype=float)
            if self.pmf.ndim != 1 or self.pmf.size < 2 or np.any(self.pmf < 0.0):
                raise DomainError("A random horizon requires a nonnegative pmf over 0..T.")
            if abs(self.pmf.sum() - 1.0) > 1e-9:
                raise DomainError(f"The horizon pmf must sum to 1, sum: {self.pmf.sum()!r}")
        if self.portfolio.time_varying and self.portfolio.weights.shape[0] < self.max_horizon:
            raise DomainError("Time varying weights must cover every period of the horizon.")

    @property
    def max_horizon(self):
        """The longest horizon that has to be simulated."""

        if self.horizon == Horizon.FIXED:
            return int(self.fixed_length)
        return int(np.max(np.flatnonzero(self.pmf)))


@dataclass
class LongevityStats:
    """Statistics of the portfolio longevity distribution."""

    mean: float
    median: float
    modes: list


@dataclass
class RuinReport:
    """
    The outcome of a ruin simulation.

    Attributes
    ----------
    success_prob : float
        The probability that the portfolio survives the plan horizon.
    std_error : float
        The Monte Carlo standard error of success_prob.
    ruin_by_period : numpy.ndarray
        Element t-1 is P(ruin at period t), t = 1..T.
    success_by_horizon : numpy.ndarray
        Element t is the success probability for a fixed horizon of t periods, t = 0..T.
    longevity_pmf : numpy.ndarray
        Element l is P(longevity = l), l = 0..T-1, and the last element is P(longevity >= T).
    longevity : LongevityStats
        The longevity mean, median and modes. The mean is a lower bound, as survivors are
        counted at T.
    num_paths : int
        The number of simulated paths.
    """

    success_prob: float
    std_error: float
    ruin_by_period: np.ndarray
    success_by_horizon: np.ndarray
    longevity_pmf: np.ndarray
    longevity: LongevityStats
    num_paths: int
    notes: list = field(default_factory=list)


def sample_component(probs, uniform):
    """Select a joint component by inverse-CDF lookup on a uniform draw."""

    return draw_components(probs, uniform)


def sample_mvn(mean, cov, rng, size=1):
    """
    Draw from a multivariate normal through the eigen decomposition of its covariance,
    x = mean + V sqrt(D) z.

    Parameters
    ----------
    mean : numpy.ndarray
        The mean vector.
    cov : numpy.ndarray
        The covariance.
    rng : numpy.random.Generator
        The random stream.
    size : int
        The number of draws.

    Returns
    -------
    numpy.ndarray,
        A size x N matrix of draws.
    """

    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    eigenvalues, eigenvectors = np.linalg.eigh(np.atleast_2d(np.asarray(cov, dtype=float)))
    if eigenvalues.min() <= 0.0:
        raise NotPositiveDefinite(f"Cannot sample a covariance with eigenvalues {eigenvalues}")
    normals = rng.standard_normal((size, mean.size)) * np.sqrt(eigenvalues)
    return mean + normals @ eigenvectors.T


def sample_joint(model: JointMixture, size, rng):
    """
    Draw observations from a joint mixture.

    Returns
    -------
    numpy.ndarray,
        A size x N matrix of draws.
    """

    comps = np.atleast_1d(draw_components(model.probs, rng.random(size)))
    draws = np.empty((size, model.num_assets))
    means = model.means
    for comp in range(model.num_components):
        rows = np.flatnonzero(comps == comp)
        if rows.size:
            draws[rows] = sample_mvn(means[comp], model.covs[comp], rng, rows.size)
    return draws


def seed_black_swans(panel: ReturnsPanel, events):
    """
    Append extreme event observations to a returns panel, for stress testing.

    Parameters
    ----------
    panel : common.data_types.ReturnsPanel
        The returns.
    events : numpy.ndarray
        A k x N matrix of event returns, k may be zero.

    Returns
    -------
    common.data_types.ReturnsPanel,
        The augmented panel, or a copy of the panel when there are no events.
    """

    events = np.asarray(events, dtype=float)
    if not events.size:
        return ReturnsPanel(panel.values.copy(), list(panel.asset_names))
    events = np.atleast_2d(events)
    if events.shape[1] != panel.num_assets:
        raise DomainError(
            f"Events hold {events.shape[1]} assets, the panel holds {panel.num_assets}."
        )
    if np.any(events <= 0.0):
        logger.warning("Some event returns are not positive, they wipe out the asset: %s", events)
    return ReturnsPanel(np.vstack([panel.values, events]), list(panel.asset_names))


def portfolio_return_mixture(model: JointMixture, effective_weights):
    """
    The univariate mixture of the portfolio return, for weights net of expenses w: component c
    has mean w' mu_c and variance w' Sigma_c w.

    Parameters
    ----------
    model : joint_mixture.JointMixture
        The joint mixture.
    effective_weights : numpy.ndarray
        The weights net of expenses.

    Returns
    -------
    common.data_types.UnivariateMixture,
        The portfolio return mixture.
    """

    weights = np.asarray(effective_weights, dtype=float)
    means = model.means @ weights
    variances = np.einsum("j,cjk,k->c", weights, model.covs, weights)
    if np.any(variances <= 0.0):
        raise DomainError(f"Portfolio component variances must be positive: {variances}")
    return UnivariateMixture(model.probs / model.probs.sum(), means, np.sqrt(variances))


def portfolio_std(model: JointMixture, weights, expenses):
    """The standard deviation of the portfolio return, sqrt(w' Cov w) with w = alpha (1 - E)."""

    effective = np.asarray(weights, dtype=float) * (1.0 - np.asarray(expenses, dtype=float))
    _, cov, _ = mixture_covariance(model)
    return float(np.sqrt(effective @ cov @ effective))


def ruin_factor_step(ruin_factor, portfolio_return):
    """
    Advance the ruin factor by one period.

    Parameters
    ----------
    ruin_factor : float
        RF(t-1).
    portfolio_return : float
        The compounding portfolio return of period t.

    Returns
    -------
    float or None,
        RF(t), or None when the portfolio is ruined at period t.
    """

    if portfolio_return <= ruin_factor:
        return None
    return ruin_factor / (portfolio_return - ruin_factor)


def ruin_times(withdrawal_rate, returns):
    """
    The ruin period of every path.

    Parameters
    ----------
    withdrawal_rate : float
        W_R.
    returns : numpy.ndarray
        A paths x T matrix of compounding portfolio returns.

    Returns
    -------
    numpy.ndarray,
        The ruin period (1..T) of every path, or T + 1 for the paths that survive.
    """

    num_paths, horizon = returns.shape
    factors = np.full(num_paths, float(withdrawal_rate))
    times = np.full(num_paths, horizon + 1)
    alive = np.ones(num_paths, dtype=bool)
    for period in range(horizon):
        period_returns = returns[:, period]
        ruined = alive & (period_returns <= factors)
        times[ruined] = period + 1
        alive &= ~ruined
        factors[alive] = factors[alive] / (period_returns[alive] - factors[alive])
    return times


def simulate_ruin_counts(withdrawal_rate, horizon, sampler, num_paths, rng, workers=1):
    """
    Count the ruin periods of simulated paths. The paths are split into blocks, each with its
    own random stream, so the counts do not depend on the number of workers.

    Parameters
    ----------
    withdrawal_rate : float
        W_R.
    horizon : int
        The number of periods T.
    sampler : callable
        A function (period, size, rng) -> portfolio returns of one period.
    num_paths : int
        The number of paths.
    rng : numpy.random.Generator
        The random stream.
    workers : int
        The number of worker threads.

    Returns
    -------
    numpy.ndarray,
        Element t is the number of paths ruined at period t (t = 1..T) and element T + 1 the
        number of surviving paths. Element 0 is always zero.
    """

    if num_paths < 1 or horizon < 1:
        raise DomainError(f"Invalid number of paths ({num_paths}) or horizon ({horizon}).")
    sizes = [constants.PATH_BLOCK_SIZE] * (num_paths // constants.PATH_BLOCK_SIZE)
    if num_paths % constants.PATH_BLOCK_SIZE:
        sizes.append(num_paths % constants.PATH_BLOCK_SIZE)
    generators = spawn_generators(rng, len(sizes))

    def _block(index):
        size, generator = sizes[index], generators[index]
        returns = np.column_stack(
            [sampler(period, size, generator) for period in range(1, horizon + 1)]
        )
        return np.bincount(ruin_times(withdrawal_rate, returns), minlength=horizon + 2)

    return np.sum(parallel_map(_block, range(len(sizes)), workers), axis=0)


def longevity_stats(pmf):
    """
    The mean, median and modes of a longevity distribution.

    Parameters
    ----------
    pmf : numpy.ndarray
        P(longevity = l) for l = 0, 1, ...

    Returns
    -------
    LongevityStats,
        The statistics. The median is the first l whose cumulative probability reaches 0.5, or
        l + 1/2 when the cumulative probability is exactly 0.5 at l.
    """

    pmf = np.asarray(pmf, dtype=float)
    if pmf.ndim != 1 or not pmf.size or abs(pmf.sum() - 1.0) > 1e-9:
        raise DomainError(f"A longevity pmf must sum to 1, sum: {pmf.sum()!r}")
    periods = np.arange(pmf.size)
    cumulative = np.cumsum(pmf)
    index = int(np.argmax(cumulative >= 0.5 - 1e-12))
    median = float(index)
    if abs(cumulative[index] - 0.5) <= 1e-12 and index + 1 < pmf.size:
        median = index + 0.5
    peaks = np.isclose(pmf, pmf.max(), rtol=0.0, atol=1e-12)
    modes = [int(period) for period in np.flatnonzero(peaks)]
    return LongevityStats(float(periods @ pmf), median, modes)


def random_horizon_ruin(success_by_horizon, pmf):
    """
    The ruin probability for a random horizon, sum_t (1 - success(t)) P(T = t).

    Parameters
    ----------
    success_by_horizon : dict or numpy.ndarray
        The success probability of every fixed horizon t.
    pmf : numpy.ndarray
        P(T = t), t = 0..T.

    Returns
    -------
    float,
        The ruin probability.
    """

    pmf = np.asarray(pmf, dtype=float)
    total = 0.0
    for period in np.flatnonzero(pmf):
        if period == 0:
            continue
        try:
            success = success_by_horizon[period]
        except (KeyError, IndexError) as ex:
            raise DomainError(f"No success probability for a horizon of {period} periods.") from ex
        total += (1.0 - success) * pmf[period]
    return float(total)


def _model_sampler(model: JointMixture, portfolio: PortfolioSpec):
    mixtures = {}

    def _sampler(period, size, rng):
        key = period if portfolio.time_varying else 0
        if key not in mixtures:
            mixtures[key] = portfolio_return_mixture(model, portfolio.effective_weights(period))
        return sample_mixture(mixtures[key], size, rng)

    return _sampler


def _report(counts, plan: DecumulationPlan):
    horizon = counts.size - 2
    num_paths = int(counts.sum())
    ruin_by_period = counts[1 : horizon + 1] / num_paths
    success_by_horizon = 1.0 - np.concatenate([[0.0], np.cumsum(ruin_by_period)])
    if plan.horizon == Horizon.FIXED:
        success = float(success_by_horizon[horizon])
    else:
        success = 1.0 - random_horizon_ruin(success_by_horizon, plan.pmf)
    longevity_pmf = np.append(ruin_by_period, success_by_horizon[horizon])
    return RuinReport(
        success_prob=success,
        std_error=float(np.sqrt(success * (1.0 - success) / num_paths)),
        ruin_by_period=ruin_by_period,
        success_by_horizon=success_by_horizon,
        longevity_pmf=longevity_pmf,
        longevity=longevity_stats(longevity_pmf),
        num_paths=num_paths,
    )


def simulate_ruin(plan: DecumulationPlan, model: JointMixture, num_paths, rng, workers=1):
    """
    Estimate the probability of ruin of a decumulation plan.

    Parameters
    ----------
    plan : DecumulationPlan
        The plan.
    model : joint_mixture.JointMixture
        The joint return model.
    num_paths : int
        The number of simulated paths.
    rng : numpy.random.Generator
        The random stream.
    workers : int
        The number of worker threads.

    Returns
    -------
    RuinReport,
        The success probability and the longevity distribution.
    """

    if plan.portfolio.num_assets != model.num_assets:
        raise DomainError(
            f"The plan holds {plan.portfolio.num_assets} assets, the model: {model.num_assets}"
        )
    counts = simulate_ruin_counts(
        plan.withdrawal_rate,
        plan.max_horizon,
        _model_sampler(model, plan.portfolio),
        num_paths,
        rng,
        workers,
    )
    report = _report(counts, plan)
    logger.info(
        "Success probability %.4f (+/- %.4f) over %d paths.",
        report.success_prob,
        report.std_error,
        num_paths,
    )
    return report


@dataclass
class AllocationResult:
    """The outcome of a static allocation search."""

    objective: Objective
    weights: np.ndarray
    value: float


def simplex_lattice(num_assets, step):
    """
    The weight vectors on a simplex lattice, in ascending lexicographic order.

    Parameters
    ----------
    num_assets : int
        The number of assets.
    step : float
        The lattice step, which must divide 1.

    Returns
    -------
    list[numpy.ndarray],
        The weight vectors.
    """

    divisions = int(round(1.0 / step))
    if divisions < 1 or abs(divisions * step - 1.0) > 1e-9:
        raise DomainError(f"The lattice step must divide 1: {step}")
    return [
        np.array(units, dtype=float) / divisions
        for units in itertools.product(range(divisions + 1), repeat=num_assets)
        if sum(units) == divisions
    ]


def _min_variance(model: JointMixture, expenses):
    _, cov, _ = mixture_covariance(model)
    scale = 1.0 - np.asarray(expenses, dtype=float)
    scaled_cov = cov * np.outer(scale, scale)
    num_assets = model.num_assets
    if num_assets == 1:
        return np.ones(1)

    result = optimize.minimize(
        lambda weights: float(weights @ scaled_cov @ weights),
        np.full(num_assets, 1.0 / num_assets),
        jac=lambda weights: 2.0 * scaled_cov @ weights,
        method="SLSQP",
        bounds=[(0.0, 1.0)] * num_assets,
        constraints=[
            {
                "type": "eq",
                "fun": lambda weights: weights.sum() - 1.0,
                "jac": lambda _: np.ones(num_assets),
            }
        ],
        options={"ftol": 1e-15, "maxiter": 1000},
    )
    if not result.success:
        logger.warning("The minimum variance search did not converge: %s", result.message)
    weights = np.clip(result.x, 0.0, None)
    return weights / weights.sum()


def _same_mixture(first: UnivariateMixture, second: UnivariateMixture, tolerance):
    return first.num_components == second.num_components and all(
        np.allclose(a, b, rtol=0.0, atol=tolerance)
        for a, b in (
            (first.weights, second.weights),
            (first.means, second.means),
            (first.stds, second.stds),
        )
    )


def asset_symmetries(model: JointMixture, expenses, tolerance=1e-12):
    """
    The asset permutations under which a joint mixture and the expense ratios are unchanged.
    A permutation maps asset j of the permuted model to asset order[j] of the original one.

    Parameters
    ----------
    model : joint_mixture.JointMixture
        The joint return model.
    expenses : numpy.ndarray
        The per asset expense ratios.
    tolerance : float
        The absolute tolerance of the parameter comparisons.

    Returns
    -------
    list[tuple[int]],
        The permutations, the identity first. They form a group.
    """

    expenses = np.asarray(expenses, dtype=float)
    lookup = {cell: comp for comp, cell in enumerate(model.cells)}
    symmetries = []
    for order in itertools.permutations(range(model.num_assets)):
        index = list(order)
        if not np.allclose(expenses[index], expenses, rtol=0.0, atol=tolerance):
            continue
        if not all(
            _same_mixture(model.marginals[source], model.marginals[target], tolerance)
            for target, source in enumerate(order)
        ):
            continue
        matched = True
        for comp, cell in enumerate(model.cells):
            image = lookup.get(tuple(cell[source] for source in order))
            if (
                image is None
                or abs(model.probs[image] - model.probs[comp]) > tolerance
                or not np.allclose(
                    model.covs[comp][np.ix_(index, index)],
                    model.covs[image],
                    rtol=0.0,
                    atol=tolerance,
                )
            ):
                matched = False
                break
        if matched:
            symmetries.append(order)
    return symmetries


def optimize_static_allocation(
    plan: DecumulationPlan,
    model: JointMixture,
    objective: Objective,
    rng=None,
    num_paths=constants.RUIN_PATHS,
    lattice_step=constants.LATTICE_STEP,
):
    """
    Search for constant asset weights that either minimize the portfolio standard deviation or
    maximize the success probability of a plan.

    Parameters
    ----------
    plan : DecumulationPlan
        The plan, which provides the withdrawal rate, horizon and expense ratios.
    model : joint_mixture.JointMixture
        The joint return model.
    objective : common.constants.Objective
        The objective.
    rng : numpy.random.Generator or None
        The random stream, required when maximizing success.
    num_paths : int
        The number of paths per candidate when maximizing success.
    lattice_step : float
        The simplex lattice step when maximizing success.

    Returns
    -------
    AllocationResult,
        The weights and the objective value. Success maximization evaluates every lattice point
        with the same simulated asset returns, and ties go to the lexicographically smallest
        weights. When the model and the expenses are invariant under a permutation of
        interchangeable assets, the draws are pooled with their permuted copies and only the
        lattice points that weight interchangeable assets alike are searched.
    """

    expenses = plan.portfolio.expenses
    if objective == Objective.MIN_VARIANCE:
        weights = _min_variance(model, expenses)
        return AllocationResult(objective, weights, portfolio_std(model, weights, expenses))

    if rng is None:
        raise DomainError("A random stream is required to maximize the success probability.")
    horizon = plan.max_horizon
    draws = sample_joint(model, num_paths * horizon, rng).reshape(num_paths, horizon, -1)
    candidates = simplex_lattice(model.num_assets, lattice_step)
    symmetries = asset_symmetries(model, expenses)
    if len(symmetries) > 1:
        draws = np.concatenate([draws[..., list(order)] for order in symmetries], axis=0)
        candidates = [
            weights
            for weights in candidates
            if all(np.array_equal(weights[list(order)], weights) for order in symmetries)
        ]
        logger.info(
            "The model is invariant under %d asset permutations, searching %d symmetric weights.",
            len(symmetries),
            len(candidates),
        )

    best = None
    for weights in candidates:
        returns = draws @ (weights * (1.0 - expenses))
        times = ruin_times(plan.withdrawal_rate, returns)
        counts = np.bincount(times, minlength=horizon + 2)
        success = _report(counts, plan).success_prob
        if best is None or success > best.value:
            best = AllocationResult(objective, weights, success)
    logger.info("Best static allocation %s, success %.4f", best.weights, best.value)
    return best


@dataclass
class StressComparison:
    """Ruin reports before and after seeding extreme events."""

    before: RuinReport
    after: RuinReport

    @property
    def success_change(self):
        """The change in success probability caused by the events."""

        return self.after.success_prob - self.before.success_prob


def stress_compare(
    plan: DecumulationPlan, before: JointMixture, after: JointMixture, num_paths, seed
):
    """
    Compare the success probability of a plan under two models, with identical random streams.

    Parameters
    ----------
    plan : DecumulationPlan
        The plan.
    before : joint_mixture.JointMixture
        The model fitted on the original returns.
    after : joint_mixture.JointMixture
        The model fitted on the returns with the extreme events.
    num_paths : int
        The number of paths.
    seed : int
        The seed of both simulations.

    Returns
    -------
    StressComparison,
        Both reports.
    """

    return StressComparison(
        simulate_ruin(plan, before, num_paths, np.random.default_rng(seed)),
        simulate_ruin(plan, after, num_paths, np.random.default_rng(seed)),
    )
