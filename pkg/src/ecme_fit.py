#  Copyright (c) 2023. DataRobot, Inc. and its affiliates.
#  All rights reserved.
#  This is proprietary source code of DataRobot, Inc. and its affiliates.
#  Released under the terms of DataRobot Tool and Utility Agreement.

"""
ECME estimation of a joint mixture with fixed marginals. Every iteration alternates two
conditional maximizations of the log-likelihood:

1. The component probabilities, given the covariances, by Newton iterations on the bordered
   Hessian of the marginal constraints.
2. The covariances, given the probabilities, by randomized Levenberg-Marquardt steps. Many
   candidates with random damping are drawn in parallel and one of the best ones is chosen with
   a probability proportional to its log-likelihood gain.
"""

import logging
from dataclasses import dataclass
from dataclasses import field

import numpy as np
from scipy import linalg
from scipy import special

from common import constants
from common.data_types import ReturnsPanel
from common.exceptions import DegenerateComponent
from common.exceptions import DomainError
from common.exceptions import ECMEInternalError
from common.exceptions import NotPositiveDefinite
from common.exceptions import SingularHessian
from common.parallel import parallel_map
from common.parallel import spawn_generators
from joint_mixture import JointMixture
from joint_mixture import component_log_densities
from joint_mixture import covariance_pairs
from joint_mixture import is_positive_definite
from joint_mixture import joint_log_likelihood
from joint_mixture import ridge_repair
from lp_structure import MarginalConstraints
from lp_structure import reduce_constraints

logger = logging.getLogger()


@dataclass
class LMConfig:
    """The ECME tuning parameters."""

    steps_per_thread: int = constants.LM_STEPS_PER_THREAD
    thread_multiplier: int = constants.LM_THREAD_MULTIPLIER
    beat_pool: int = constants.LM_BEAT_POOL
    ridge_mult_min: float = constants.RIDGE_MULT_MIN
    ridge_mult_max: float = constants.RIDGE_MULT_MAX
    min_eigenvalue: float = constants.PD_MIN_EIGENVALUE
    min_determinant: float = constants.DET_MIN
    convergence_scale: float = constants.LM_CONVERGENCE_SCALE
    epsilon: float = constants.EPSILON
    max_iterations: int = constants.LM_MAX_ITERATIONS
    step1_max_iters: int = constants.STEP1_MAX_ITERS
    rescale_cap: float = constants.HESSIAN_RESCALE_CAP
    workers: int = 1

    def __post_init__(self):
        if min(self.steps_per_thread, self.thread_multiplier, self.beat_pool) < 1:
            raise DomainError("The LM steps, thread multiplier and beat pool must be positive.")
        if not 0.0 < self.ridge_mult_min <= self.ridge_mult_max:
            raise DomainError("Invalid ridge multiplier range.")
        if self.max_iterations < 1 or self.step1_max_iters < 1:
            raise DomainError("The ECME iteration budgets must be positive.")

    @property
    def num_tasks(self):
        """The number of parallel candidate generation tasks."""

        return self.thread_multiplier * max(1, self.workers)


def q_term(x, mean, cov, j, k):
    """
    The derivative of ln f(x) with respect to the covariance sigma_jk (j != k) of a normal
    density, (P r)_j (P r)_k - P_jk, where P is the precision and r = x - mean.

    Parameters
    ----------
    x : numpy.ndarray
        The point.
    mean : numpy.ndarray
        The mean vector.
    cov : numpy.ndarray
        The covariance.
    j : int
        The first asset index.
    k : int
        The second asset index, distinct from j.

    Returns
    -------
    float,
        The derivative.
    """

    if j == k:
        raise DomainError(f"The covariance derivative requires two distinct assets, got: {j}")
    precision = np.linalg.inv(np.asarray(cov, dtype=float))
    scaled = precision @ (np.asarray(x, dtype=float) - np.asarray(mean, dtype=float))
    return float(scaled[j] * scaled[k] - precision[j, k])


class StepWorkspace:
    """
    The per time point quantities behind the gradient and the Hessian of the log-likelihood with
    respect to the free covariances, for a fixed joint mixture.
    """

    def __init__(self, panel: ReturnsPanel, model: JointMixture):
        values = panel.values
        self.num_components = model.num_components
        self.pairs = covariance_pairs(model.num_assets)
        self.precisions = np.linalg.inv(model.covs)
        residuals = values[:, np.newaxis, :] - model.means[np.newaxis, :, :]
        self.scaled = np.einsum("cjk,tck->tcj", self.precisions, residuals)

        weighted = component_log_densities(values, model) + np.log(model.probs)
        log_density = special.logsumexp(weighted, axis=1)
        self.log_likelihood = float(log_density.sum())
        self.posteriors = np.exp(weighted - log_density[:, np.newaxis])

        self.q = np.stack(
            [
                self.scaled[:, :, j] * self.scaled[:, :, k] - self.precisions[np.newaxis, :, j, k]
                for j, k in self.pairs
            ],
            axis=2,
        ).reshape(values.shape[0], self.num_components, len(self.pairs))

    @property
    def size(self):
        """The number of free covariances."""

        return self.num_components * len(self.pairs)

    def q_derivative(self):
        """
        The derivatives of every Q term with respect to every covariance of the same component.

        Returns
        -------
        numpy.ndarray,
            A T x G x M x M array, M being the number of asset pairs.
        """

        u, prec = self.scaled, self.precisions[np.newaxis]
        num_pairs = len(self.pairs)
        derivative = np.zeros(self.q.shape[:2] + (num_pairs, num_pairs))
        for a, (j, k) in enumerate(self.pairs):
            for b, (r, s) in enumerate(self.pairs):
                derivative[:, :, a, b] = (
                    -(prec[..., j, r] * u[..., s] + prec[..., j, s] * u[..., r]) * u[..., k]
                    - u[..., j] * (prec[..., k, r] * u[..., s] + prec[..., k, s] * u[..., r])
                    + prec[..., j, r] * prec[..., s, k]
                    + prec[..., j, s] * prec[..., r, k]
                )
        return derivative

    def gradient(self):
        """The gradient of the log-likelihood, component-major."""

        return np.einsum("tc,tca->ca", self.posteriors, self.q).ravel()

    def hessian(self):
        """The Hessian of the log-likelihood, component-major."""

        num_pairs = len(self.pairs)
        weighted_q = (self.posteriors[:, :, np.newaxis] * self.q).reshape(self.q.shape[0], -1)
        hessian = -weighted_q.T @ weighted_q
        derivative = self.q_derivative()
        for comp in range(self.num_components):
            weights = self.posteriors[:, comp]
            block = np.einsum("t,ta,tb->ab", weights, self.q[:, comp], self.q[:, comp])
            block += np.einsum("t,tab->ab", weights, derivative[:, comp])
            span = slice(comp * num_pairs, (comp + 1) * num_pairs)
            hessian[span, span] += block
        return hessian


@dataclass
class Step1Result:
    """The outcome of the probability maximization."""

    model: JointMixture
    constraints: MarginalConstraints
    log_likelihood: float
    iterations: int
    dropped_cells: list = field(default_factory=list)


def _bordered_newton(hessian, gradient, lhs, rhs, probs, rescale_cap):
    size, rows = gradient.size, lhs.shape[0]
    scale = 1.0
    while True:
        scaled_lhs, scaled_rhs = lhs * scale, rhs * scale
        system = np.block([[hessian, -scaled_lhs.T], [scaled_lhs, np.zeros((rows, rows))]])
        target = np.concatenate([-gradient, scaled_rhs - scaled_lhs @ probs])
        solution, _, rank, _ = linalg.lstsq(system, target)
        if rank == size + rows:
            return solution[:size]
        scale *= 10.0
        if scale > rescale_cap:
            raise SingularHessian(
                f"The bordered Hessian of {size} probabilities and {rows} constraints stays "
                f"singular after rescaling the constraints up to {rescale_cap:g}."
            )


def _scaled_log_likelihood(densities, shift, probs):
    mixed = densities @ probs
    if np.any(mixed <= 0.0):
        return -np.inf
    return float(np.sum(np.log(mixed)) + shift)


def step1_probabilities(panel: ReturnsPanel, model: JointMixture, constraints=None, cfg=None):
    """
    Maximize the log-likelihood over the component probabilities, for fixed covariances and
    subject to the marginal constraints. Each Newton step on the bordered Hessian is shortened
    to stay within the nonnegative orthant and halved until the log-likelihood does not
    decrease. Components whose probability reaches zero are dropped permanently, and the
    constraint system is reduced again.

    Parameters
    ----------
    panel : common.data_types.ReturnsPanel
        The returns.
    model : joint_mixture.JointMixture
        The current mixture.
    constraints : lp_structure.MarginalConstraints or None
        A full row rank system over the model cells. Defaults to the reduced marginal system.
    cfg : LMConfig or None
        The ECME configuration.

    Returns
    -------
    Step1Result,
        The updated mixture, its constraints and log-likelihood.
    """

    cfg = cfg or LMConfig()
    if constraints is None:
        constraints = reduce_constraints(model.grid, model.marginals, model.cell_ids)
    if list(constraints.cells) != model.cell_ids:
        raise DomainError(
            f"The constraint columns {constraints.cells} do not match the model cells "
            f"{model.cell_ids}"
        )

    log_densities = component_log_densities(panel.values, model)
    row_max = log_densities.max(axis=1)
    densities = np.exp(log_densities - row_max[:, np.newaxis])
    shift = float(row_max.sum())
    degenerate = np.flatnonzero(~np.any(densities > 0.0, axis=0))
    if degenerate.size:
        raise DegenerateComponent(
            f"The joint components of cells {[model.cells[comp] for comp in degenerate]} have "
            "zero density at every time point."
        )

    active = list(range(model.num_components))
    probs = model.probs.copy()
    value = _scaled_log_likelihood(densities, shift, probs)
    dropped = []
    iteration = 0
    while iteration < cfg.step1_max_iters:
        iteration += 1
        current, p = densities[:, active], probs[active]
        ratios = current / (current @ p)[:, np.newaxis]
        step = _bordered_newton(
            -ratios.T @ ratios,
            ratios.sum(axis=0),
            constraints.lhs,
            constraints.rhs,
            p,
            cfg.rescale_cap,
        )

        # The longest step along which every probability stays nonnegative
        boundary, hits = 1.0, np.zeros(step.size, dtype=bool)
        decreasing = step < 0.0
        if np.any(decreasing):
            limits = np.full(step.size, np.inf)
            limits[decreasing] = -p[decreasing] / step[decreasing]
            if limits.min() <= 1.0:
                boundary = float(limits.min())
                hits = limits <= boundary * (1.0 + 1e-12)

        fraction = boundary
        for _ in range(60):
            trial = np.maximum(p + fraction * step, 0.0)
            if fraction == boundary:
                trial[hits] = 0.0
            trial_value = _scaled_log_likelihood(current, shift, trial)
            if trial_value >= value - 1e-12 * abs(value):
                break
            fraction /= 2.0
        else:
            break

        gain = trial_value - value
        probs[active] = trial
        value = trial_value
        if fraction == boundary and np.any(hits):
            remaining = [position for position in range(len(active)) if not hits[position]]
            if not remaining:
                raise ECMEInternalError("Step 1 dropped every joint component.")
            dropped.extend(model.cell_ids[active[position]] for position in np.flatnonzero(hits))
            constraints = constraints.restrict(remaining)
            active = [active[position] for position in remaining]
            logger.info("ECME step 1 dropped the components of cells %s.", dropped)
            continue
        if gain <= cfg.epsilon * abs(value) or np.max(np.abs(fraction * step)) <= cfg.epsilon:
            break

    if constraints.residual(probs[active]) > 1e-8:
        raise ECMEInternalError(
            "The marginal constraints could not be satisfied by the remaining components, "
            f"residual: {constraints.residual(probs[active])}"
        )
    updated = model.with_components(active, probs[active])
    return Step1Result(updated, constraints, value, iteration, dropped)


def step2_gradient(panel: ReturnsPanel, model: JointMixture):
    """The gradient of the log-likelihood with respect to the free covariances."""

    return StepWorkspace(panel, model).gradient()


def step2_hessian(panel: ReturnsPanel, model: JointMixture):
    """The Hessian of the log-likelihood with respect to the free covariances."""

    return StepWorkspace(panel, model).hessian()


@dataclass
class LMCandidate:
    """A candidate covariance update."""

    model: JointMixture
    log_likelihood: float
    repairs: int


def _random_damping(hessian, rng):
    magnitude = float(np.abs(hessian).max()) if hessian.size else 0.0
    digits = int(np.floor(np.log10(magnitude))) + 1 if magnitude >= 1.0 else 1
    exponent = int(rng.integers(1, digits + 3))
    return float(10.0**exponent * (1.0 - rng.random()) * rng.choice((-1.0, 1.0)))


def lm_candidate_step(
    panel: ReturnsPanel,
    model: JointMixture,
    gradient,
    hessian,
    cfg,
    rng,
    damping=None,
    step_scale=None,
):
    """
    Draw one Levenberg-Marquardt candidate: solve (H + s I) delta = -lambda g, update the
    covariances and repair the ones that are not positive definite.

    Parameters
    ----------
    panel : common.data_types.ReturnsPanel
        The returns.
    model : joint_mixture.JointMixture
        The incumbent mixture.
    gradient : numpy.ndarray
        The gradient at the incumbent.
    hessian : numpy.ndarray
        The Hessian at the incumbent.
    cfg : LMConfig
        The ECME configuration.
    rng : numpy.random.Generator
        The random stream.
    damping : float or None
        The damping s. Drawn at random when omitted: a random sign times a uniform value in
        (0, 10^e], e being a random integer between 1 and the number of digits of max|H| + 2.
    step_scale : float or None
        The step scale lambda. Drawn uniformly in (0, 1] when omitted.

    Returns
    -------
    LMCandidate or None,
        The candidate, or None when the linear solve or the repair failed or the candidate has
        zero likelihood.
    """

    if damping is None:
        damping = _random_damping(hessian, rng)
    if step_scale is None:
        step_scale = 1.0 - rng.random()

    size = gradient.size
    try:
        delta, _, rank, _ = linalg.lstsq(hessian + damping * np.eye(size), -step_scale * gradient)
    except (linalg.LinAlgError, ValueError):
        return None
    if rank < size:
        return None

    covs = model.with_covariance_vector(model.covariance_vector() + delta).covs
    repairs = 0
    for comp in range(model.num_components):
        if is_positive_definite(covs[comp], cfg.min_eigenvalue, cfg.min_determinant):
            continue
        try:
            covs[comp] = ridge_repair(
                covs[comp],
                rng.uniform(cfg.ridge_mult_min, cfg.ridge_mult_max),
                min_eigenvalue=cfg.min_eigenvalue,
                min_determinant=cfg.min_determinant,
            )
        except NotPositiveDefinite:
            return None
        repairs += 1

    candidate = model.with_covariances(covs)
    value = joint_log_likelihood(panel, candidate)
    if value == constants.NEGATIVE_LL_SENTINEL:
        return None
    return LMCandidate(candidate, value, repairs)


def step2_round(panel: ReturnsPanel, model: JointMixture, incumbent_ll, cfg: LMConfig, rng):
    """
    Draw LM candidates in parallel tasks and choose one of those that beat the incumbent.

    Returns
    -------
    tuple(LMCandidate or None, int),
        The chosen candidate (None when nothing beats the incumbent) and the number of beats.
    """

    workspace = StepWorkspace(panel, model)
    gradient, hessian = workspace.gradient(), workspace.hessian()
    generators = spawn_generators(rng, cfg.num_tasks)

    def _task(index):
        beats = []
        for step in range(cfg.steps_per_thread):
            candidate = lm_candidate_step(panel, model, gradient, hessian, cfg, generators[index])
            if candidate is not None and candidate.log_likelihood > incumbent_ll:
                beats.append((index, step, candidate))
        return beats

    beats = [
        beat
        for task_beats in parallel_map(_task, range(cfg.num_tasks), cfg.workers)
        for beat in task_beats
    ]
    if not beats:
        return None, 0

    beats.sort(key=lambda beat: (-beat[2].log_likelihood, beat[0], beat[1]))
    pool = [candidate for _, _, candidate in beats[: cfg.beat_pool]]
    gains = np.array([candidate.log_likelihood - incumbent_ll for candidate in pool])
    chosen = int(rng.choice(len(pool), p=gains / gains.sum()))
    return pool[chosen], len(beats)


def num_free_covariances(model: JointMixture):
    """The number of free covariances of a joint mixture."""

    return model.num_components * len(covariance_pairs(model.num_assets))


@dataclass
class ECMERecord:
    """The outcome of one ECME iteration."""

    iteration: int
    step1_log_likelihood: float
    step2_log_likelihood: float
    step1_iterations: int
    step2_rounds: int
    beats: int
    dropped_cells: list
    marginal_residual: float
    positive_definite: bool


@dataclass
class ECMETrace:
    """The history of an ECME fit and the curvature at its final estimate."""

    records: list = field(default_factory=list)
    converged: bool = False
    hessian_positive: int = 0
    hessian_negative: int = 0
    eigenvector_condition: float = None

    @property
    def log_likelihoods(self):
        """The accepted log-likelihoods, in order."""

        values = []
        for record in self.records:
            values.extend([record.step1_log_likelihood, record.step2_log_likelihood])
        return values


def ecme_fit(panel: ReturnsPanel, initial: JointMixture, rng, constraints=None, cfg=None):
    """
    Fit the joint probabilities and covariances of a joint mixture with fixed marginals.

    Parameters
    ----------
    panel : common.data_types.ReturnsPanel
        The returns.
    initial : joint_mixture.JointMixture
        The starting mixture, usually a structure LP solution with zero covariances. All its
        covariances must be positive definite.
    rng : numpy.random.Generator
        The random stream.
    constraints : lp_structure.MarginalConstraints or None
        The marginal constraint system over the initial cells.
    cfg : LMConfig or None
        The ECME configuration.

    Returns
    -------
    tuple(joint_mixture.JointMixture, ECMETrace),
        The fitted mixture and the trace.
    """

    cfg = cfg or LMConfig()
    for comp in range(initial.num_components):
        if not is_positive_definite(initial.covs[comp], cfg.min_eigenvalue, cfg.min_determinant):
            raise NotPositiveDefinite(
                f"The starting covariance of cell {initial.cells[comp]} is not positive definite."
            )

    model = initial
    value = joint_log_likelihood(panel, model)
    trace = ECMETrace()
    for iteration in range(1, cfg.max_iterations + 1):
        step1 = step1_probabilities(panel, model, constraints, cfg)
        if step1.log_likelihood < value - 1e-9 * abs(value):
            raise ECMEInternalError(
                f"Step 1 lowered the log-likelihood from {value} to {step1.log_likelihood}."
            )
        model, constraints, value = step1.model, step1.constraints, step1.log_likelihood
        step1_value = value

        rounds, beats = 0, 0
        while num_free_covariances(model) and rounds < cfg.max_iterations:
            candidate, round_beats = step2_round(panel, model, value, cfg, rng)
            if candidate is None:
                break
            if candidate.log_likelihood < value:
                raise ECMEInternalError(
                    f"Step 2 accepted a candidate LL={candidate.log_likelihood} below the "
                    f"incumbent LL={value}."
                )
            gain = candidate.log_likelihood - value
            model, value = candidate.model, candidate.log_likelihood
            rounds += 1
            beats += round_beats
            if gain < cfg.convergence_scale * cfg.epsilon * abs(value):
                break

        trace.records.append(
            ECMERecord(
                iteration,
                step1_value,
                value,
                step1.iterations,
                rounds,
                beats,
                step1.dropped_cells,
                model.marginal_residual(),
                all(
                    is_positive_definite(cov, cfg.min_eigenvalue, cfg.min_determinant)
                    for cov in model.covs
                ),
            )
        )
        logger.info(
            "ECME iteration %d: step 1 LL=%.6f, step 2 LL=%.6f (%d rounds, %d beats).",
            iteration,
            step1_value,
            value,
            rounds,
            beats,
        )
        if not rounds:
            trace.converged = True
            break

    if num_free_covariances(model):
        eigenvalues, eigenvectors = np.linalg.eigh(step2_hessian(panel, model))
        trace.hessian_positive = int(np.count_nonzero(eigenvalues > 0.0))
        trace.hessian_negative = int(np.count_nonzero(eigenvalues < 0.0))
        trace.eigenvector_condition = float(np.linalg.cond(eigenvectors))
        if trace.hessian_positive:
            logger.warning(
                "The final covariance Hessian has %d positive eigenvalues, the estimate may not "
                "be a local maximum.",
                trace.hessian_positive,
            )
    return model, trace
