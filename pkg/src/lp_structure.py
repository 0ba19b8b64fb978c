#  Copyright (c) 2023. DataRobot, Inc. and its affiliates.
#  All rights reserved.
#  This is proprietary source code of DataRobot, Inc. and its affiliates.
#  Released under the terms of DataRobot Tool and Utility Agreement.

"""
Linear programs that choose the joint cell probabilities closest to the empirical cell
frequencies, subject to the marginal mixture weights. Two criteria are supported: the minimax
absolute deviation and a piecewise-linear approximation of the sum of squared deviations.
"""

import logging
from dataclasses import dataclass
from dataclasses import field

import numpy as np
from scipy import optimize

from common import constants
from common.constants import LPStatus
from common.exceptions import DomainError
from common.exceptions import LPCyclingGuard
from common.exceptions import LPInfeasible
from common.exceptions import LPUnbounded
from regime_grid import AssignmentTable
from regime_grid import CellGrid

logger = logging.getLogger()


@dataclass
class LPConfig:
    """The structure LP tuning parameters."""

    penalty: float = constants.LP_PENALTY
    segments: int = constants.LP_SEGMENTS
    zero_tolerance: float = constants.LP_ZERO_TOLERANCE
    pivot_budget: int = constants.LP_PIVOT_BUDGET
    backend: str = "simplex"

    SUPPORTED_BACKENDS = ("simplex", "highs")

    def __post_init__(self):
        if self.penalty <= 0.0 or self.segments < 1 or self.zero_tolerance < 0.0:
            raise DomainError("The LP penalty and segments must be positive.")
        if self.backend not in self.SUPPORTED_BACKENDS:
            raise DomainError(
                f"Unsupported LP backend: {self.backend}, expecting one of: "
                f"{self.SUPPORTED_BACKENDS}"
            )


@dataclass
class LPProblem:
    """
    A linear program over nonnegative variables: optimize cost @ x subject to
    lhs[r] @ x (<=, =, >=) rhs[r].
    """

    LE = "<="
    EQ = "="
    GE = ">="

    cost: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    kinds: list
    maximize: bool = False

    def __post_init__(self):
        self.cost = np.asarray(self.cost, dtype=float)
        self.lhs = np.atleast_2d(np.asarray(self.lhs, dtype=float))
        self.rhs = np.asarray(self.rhs, dtype=float)
        self.kinds = list(self.kinds)
        num_rows, num_vars = self.lhs.shape
        if self.cost.shape != (num_vars,) or self.rhs.shape != (num_rows,):
            raise DomainError(
                f"Inconsistent LP dimensions. cost: {self.cost.shape}, lhs: {self.lhs.shape}, "
                f"rhs: {self.rhs.shape}"
            )
        if len(self.kinds) != num_rows or any(
            kind not in (self.LE, self.EQ, self.GE) for kind in self.kinds
        ):
            raise DomainError(f"Invalid LP row kinds: {self.kinds}")
        if not (np.all(np.isfinite(self.lhs)) and np.all(np.isfinite(self.rhs))):
            raise DomainError("The LP coefficients must be finite.")

    @property
    def num_vars(self):
        """The number of variables."""

        return int(self.lhs.shape[1])


@dataclass
class LPResult:
    """The outcome of a linear program."""

    status: LPStatus
    x: np.ndarray = None
    objective: float = None
    pivots: int = 0

    @property
    def optimal(self):
        """Whether an optimal solution was found."""

        return self.status == LPStatus.OPTIMAL


class _Tableau:
    """A dense simplex tableau with Bland's anti-cycling rule."""

    def __init__(self, matrix, rhs, basis, tolerance, pivot_budget):
        self.table = np.column_stack([matrix, rhs])
        self.basis = list(basis)
        self.tolerance = tolerance
        self.pivot_budget = pivot_budget
        self.pivots = 0

    @property
    def values(self):
        """The values of all the tableau variables at the current basis."""

        solution = np.zeros(self.table.shape[1] - 1)
        solution[self.basis] = self.table[:, -1]
        return solution

    def pivot(self, row, col):
        """Bring a column into the basis at a given row."""

        self.pivots += 1
        if self.pivots > self.pivot_budget:
            raise LPCyclingGuard(f"The simplex exceeded its pivot budget of {self.pivot_budget}.")
        pivot_row = self.table[row] / self.table[row, col]
        self.table -= np.outer(self.table[:, col], pivot_row)
        self.table[row] = pivot_row
        self.basis[row] = col

    def minimize(self, cost, allowed):
        """
        Minimize cost @ x from the current basic feasible solution.

        Returns
        -------
        bool,
            True when optimal, False when unbounded.
        """

        while True:
            reduced = cost - cost[self.basis] @ self.table[:, :-1]
            candidates = np.flatnonzero((reduced < -self.tolerance) & allowed)
            if not candidates.size:
                return True
            col = int(candidates[0])
            column = self.table[:, col]
            rows = np.flatnonzero(column > self.tolerance)
            if not rows.size:
                return False
            ratios = self.table[rows, -1] / column[rows]
            best = ratios.min()
            ties = rows[ratios <= best + self.tolerance * max(1.0, abs(best))]
            row = int(min(ties, key=lambda index: self.basis[index]))
            self.pivot(row, col)

    def drop_row(self, row):
        """Remove a redundant constraint row."""

        self.table = np.delete(self.table, row, axis=0)
        del self.basis[row]


def _solve_simplex(problem: LPProblem, cfg: LPConfig):
    lhs, rhs = problem.lhs.copy(), problem.rhs.copy()
    kinds = list(problem.kinds)
    flip = {LPProblem.LE: LPProblem.GE, LPProblem.GE: LPProblem.LE, LPProblem.EQ: LPProblem.EQ}
    for row in np.flatnonzero(rhs < 0.0):
        lhs[row], rhs[row] = -lhs[row], -rhs[row]
        kinds[row] = flip[kinds[row]]

    num_rows, num_vars = lhs.shape
    slack_rows = [row for row, kind in enumerate(kinds) if kind != LPProblem.EQ]
    artificial_rows = [row for row, kind in enumerate(kinds) if kind != LPProblem.LE]
    slack = np.zeros((num_rows, len(slack_rows)))
    for index, row in enumerate(slack_rows):
        slack[row, index] = 1.0 if kinds[row] == LPProblem.LE else -1.0
    artificial = np.zeros((num_rows, len(artificial_rows)))
    for index, row in enumerate(artificial_rows):
        artificial[row, index] = 1.0

    num_structural = num_vars + len(slack_rows)
    basis = [0] * num_rows
    for index, row in enumerate(slack_rows):
        if kinds[row] == LPProblem.LE:
            basis[row] = num_vars + index
    for index, row in enumerate(artificial_rows):
        basis[row] = num_structural + index

    tableau = _Tableau(
        np.hstack([lhs, slack, artificial]), rhs, basis, cfg.zero_tolerance, cfg.pivot_budget
    )
    num_total = num_structural + len(artificial_rows)
    everything = np.ones(num_total, dtype=bool)

    if artificial_rows:
        phase1_cost = np.zeros(num_total)
        phase1_cost[num_structural:] = 1.0
        tableau.minimize(phase1_cost, everything)
        infeasibility = float(phase1_cost @ tableau.values)
        if infeasibility > cfg.zero_tolerance * max(1.0, float(np.abs(rhs).max())):
            return LPResult(LPStatus.INFEASIBLE, pivots=tableau.pivots)
        for row in reversed(range(len(tableau.basis))):
            if tableau.basis[row] < num_structural:
                continue
            entries = np.abs(tableau.table[row, :num_structural])
            if entries.max() > cfg.zero_tolerance:
                tableau.pivot(row, int(np.argmax(entries)))
            else:
                tableau.drop_row(row)

    sign = -1.0 if problem.maximize else 1.0
    phase2_cost = np.zeros(num_total)
    phase2_cost[:num_vars] = sign * problem.cost
    structural_only = np.arange(num_total) < num_structural
    if not tableau.minimize(phase2_cost, structural_only):
        return LPResult(LPStatus.UNBOUNDED, pivots=tableau.pivots)

    solution = tableau.values[:num_vars]
    solution[np.abs(solution) < cfg.zero_tolerance * 1e-3] = 0.0
    return LPResult(LPStatus.OPTIMAL, solution, float(problem.cost @ solution), tableau.pivots)


def _solve_highs(problem: LPProblem):
    upper_rows = [row for row, kind in enumerate(problem.kinds) if kind != LPProblem.EQ]
    equal_rows = [row for row, kind in enumerate(problem.kinds) if kind == LPProblem.EQ]
    signs = np.array([-1.0 if problem.kinds[row] == LPProblem.GE else 1.0 for row in upper_rows])

    kwargs = {}
    if upper_rows:
        kwargs["A_ub"] = problem.lhs[upper_rows] * signs[:, np.newaxis]
        kwargs["b_ub"] = problem.rhs[upper_rows] * signs
    if equal_rows:
        kwargs["A_eq"] = problem.lhs[equal_rows]
        kwargs["b_eq"] = problem.rhs[equal_rows]

    sign = -1.0 if problem.maximize else 1.0
    result = optimize.linprog(sign * problem.cost, bounds=(0, None), method="highs", **kwargs)
    if result.status == 2:
        return LPResult(LPStatus.INFEASIBLE)
    if result.status == 3:
        return LPResult(LPStatus.UNBOUNDED)
    if result.status != 0:
        raise LPCyclingGuard(f"The HiGHS solver did not finish: {result.message}")
    return LPResult(LPStatus.OPTIMAL, result.x, float(problem.cost @ result.x), int(result.nit))


def solve_lp(problem: LPProblem, cfg=None):
    """
    Solve a linear program over nonnegative variables.

    Parameters
    ----------
    problem : LPProblem
        The program.
    cfg : LPConfig or None
        Selects the backend, the zero tolerance and the pivot budget. The default backend is a
        dense two-phase simplex with Bland's rule. The 'highs' backend delegates to SciPy.

    Returns
    -------
    LPResult,
        The status, and the solution and objective when optimal.
    """

    cfg = cfg or LPConfig()
    if cfg.backend == "highs":
        result = _solve_highs(problem)
    else:
        result = _solve_simplex(problem, cfg)
    logger.debug("LP finished with status %s after %d pivots.", result.status.value, result.pivots)
    return result


@dataclass
class MarginalConstraints:
    """
    A full row rank system lhs @ p = rhs over a list of cells, which pins the marginal mixture
    weights of every asset. A row label is (asset, component), or None for the sum-to-one row.
    """

    lhs: np.ndarray
    rhs: np.ndarray
    cells: list
    labels: list = field(default_factory=list)

    @property
    def rank(self):
        """The number of independent rows."""

        return int(self.lhs.shape[0])

    def residual(self, probs):
        """The largest absolute violation of the system."""

        return float(np.max(np.abs(self.lhs @ np.asarray(probs, dtype=float) - self.rhs)))

    def restrict(self, positions):
        """
        Restrict the system to some of its columns and drop the rows that became dependent.

        Parameters
        ----------
        positions : list[int]
            The positions (not cell ids) of the columns to keep.

        Returns
        -------
        MarginalConstraints,
            The restricted full row rank system.
        """

        positions = list(positions)
        lhs = self.lhs[:, positions]
        keep = _independent_rows(lhs)
        labels = [self.labels[row] for row in keep] if self.labels else []
        return MarginalConstraints(
            lhs[keep], self.rhs[keep], [self.cells[position] for position in positions], labels
        )


def _independent_rows(lhs):
    """Drop, in order, every row without which the rank is unchanged."""

    rank = np.linalg.matrix_rank(lhs)
    keep = list(range(lhs.shape[0]))
    for row in range(lhs.shape[0]):
        if len(keep) == rank:
            break
        trial = [index for index in keep if index != row]
        if np.linalg.matrix_rank(lhs[trial]) == rank:
            keep = trial
    return keep


def marginal_system(grid: CellGrid, marginals, cells=None):
    """
    The full marginal system: one row per (asset, component), holding the indicators of the
    cells that carry that component, with the component weight as its right hand side.

    Parameters
    ----------
    grid : regime_grid.CellGrid
        The grid.
    marginals : list[common.data_types.UnivariateMixture]
        The marginal mixtures.
    cells : list[int] or None
        The cell ids of the columns. Defaults to all cells.

    Returns
    -------
    tuple(numpy.ndarray, numpy.ndarray, list),
        The matrix, the right hand side and the row labels.
    """

    cells = list(range(grid.num_cells)) if cells is None else list(cells)
    tuples = [grid.tuple_of(cell) for cell in cells]
    rows, rhs, labels = [], [], []
    for asset_index, mix in enumerate(marginals):
        for comp_index in range(mix.num_components):
            rows.append([1.0 if comps[asset_index] == comp_index else 0.0 for comps in tuples])
            rhs.append(mix.weights[comp_index])
            labels.append((asset_index, comp_index))
    return np.array(rows, dtype=float).reshape(len(rows), len(cells)), np.array(rhs), labels


def reduce_constraints(grid: CellGrid, marginals, kept_cells):
    """
    Build a full row rank marginal system over the kept cells. Starting from the first g_j - 1
    rows of each asset plus the sum-to-one row, a row is dropped whenever the rank is unchanged
    without it.

    Parameters
    ----------
    grid : regime_grid.CellGrid
        The grid.
    marginals : list[common.data_types.UnivariateMixture]
        The marginal mixtures.
    kept_cells : list[int]
        The cell ids of the columns.

    Returns
    -------
    MarginalConstraints,
        The reduced system.
    """

    kept_cells = list(kept_cells)
    if not kept_cells:
        raise DomainError("A marginal system requires at least one cell.")
    full_lhs, full_rhs, full_labels = marginal_system(grid, marginals, kept_cells)
    selected = []
    offset = 0
    for mix in marginals:
        selected.extend(range(offset, offset + mix.num_components - 1))
        offset += mix.num_components

    lhs = np.vstack([full_lhs[selected], np.ones(len(kept_cells))])
    rhs = np.append(full_rhs[selected], 1.0)
    labels = [full_labels[row] for row in selected] + [None]

    keep = _independent_rows(lhs)
    return MarginalConstraints(lhs[keep], rhs[keep], kept_cells, [labels[row] for row in keep])


@dataclass
class StructureSolution:
    """The joint cell probabilities chosen by a structure LP."""

    method: str
    probs: np.ndarray
    empirical: np.ndarray
    objective: float
    penalty: float
    kept_cells: list
    lp: LPResult

    @property
    def deviations(self):
        """The deviations p_c - p_hat_c."""

        return self.probs - self.empirical


def _unobserved_cells(table: AssignmentTable):
    return [int(cell) for cell in np.flatnonzero(table.counts == 0)]


def _solve_or_raise(problem, cfg, method):
    result = solve_lp(problem, cfg)
    if result.status == LPStatus.INFEASIBLE:
        raise LPInfeasible(f"The {method} structure LP is infeasible.")
    if result.status == LPStatus.UNBOUNDED:
        raise LPUnbounded(f"The {method} structure LP is unbounded.")
    return result


def _finalize(method, table, probs, objective, penalty_values, cfg, lp_result):
    probs = np.where(np.abs(probs) <= cfg.zero_tolerance, 0.0, probs)
    penalty = float(np.sum(penalty_values))
    if penalty > cfg.zero_tolerance:
        logger.warning(
            "The %s structure required probability mass in unobserved cells, penalty: %g",
            method,
            penalty,
        )
    kept = [int(cell) for cell in np.flatnonzero(probs > cfg.zero_tolerance)]
    logger.info("The %s structure keeps %d of %d cells.", method, len(kept), probs.size)
    return StructureSolution(
        method, probs, table.empirical_probs, objective, penalty, kept, lp_result
    )


def minimax_structure(table: AssignmentTable, marginals, cfg=None):
    """
    Choose the cell probabilities that minimize the largest absolute deviation from the
    empirical frequencies, subject to the marginal weights. Unobserved cells receive mass only
    through a heavily penalized slack variable.

    Parameters
    ----------
    table : regime_grid.AssignmentTable
        The tabulated cell counts.
    marginals : list[common.data_types.UnivariateMixture]
        The marginal mixtures.
    cfg : LPConfig or None
        The LP configuration.

    Returns
    -------
    StructureSolution,
        The solution. Its objective is the largest absolute deviation Z.
    """

    cfg = cfg or LPConfig()
    grid = table.grid
    num_cells = grid.num_cells
    empirical = table.empirical_probs
    unobserved = _unobserved_cells(table)
    constraints = reduce_constraints(grid, marginals, range(num_cells))

    # Variables: p (num_cells), Z, X (one per unobserved cell)
    num_vars = num_cells + 1 + len(unobserved)
    z_index = num_cells
    cost = np.zeros(num_vars)
    cost[z_index] = 1.0
    cost[z_index + 1 :] = cfg.penalty

    rows, rhs, kinds = [], [], []
    for cell in range(num_cells):
        for sign in (1.0, -1.0):
            row = np.zeros(num_vars)
            row[z_index] = 1.0
            row[cell] = sign
            rows.append(row)
            rhs.append(sign * empirical[cell])
            kinds.append(LPProblem.GE)
    for index, cell in enumerate(unobserved):
        row = np.zeros(num_vars)
        row[cell] = 1.0
        row[z_index + 1 + index] = -1.0
        rows.append(row)
        rhs.append(table.counts[cell])
        kinds.append(LPProblem.LE)
    for row_values, value in zip(constraints.lhs, constraints.rhs):
        row = np.zeros(num_vars)
        row[:num_cells] = row_values
        rows.append(row)
        rhs.append(value)
        kinds.append(LPProblem.EQ)

    result = _solve_or_raise(LPProblem(cost, np.array(rows), np.array(rhs), kinds), cfg, "minimax")
    return _finalize(
        "minimax",
        table,
        result.x[:num_cells],
        float(result.x[z_index]),
        cfg.penalty * result.x[z_index + 1 :],
        cfg,
        result,
    )


def min_ssd_structure(table: AssignmentTable, marginals, cfg=None):
    """
    Choose the cell probabilities that minimize the sum of squared deviations from the empirical
    frequencies, subject to the marginal weights. Every cell probability is a convex combination
    of the breakpoints k/S, k = 0..S, and its squared deviation is interpolated linearly between
    the breakpoints.

    Parameters
    ----------
    table : regime_grid.AssignmentTable
        The tabulated cell counts.
    marginals : list[common.data_types.UnivariateMixture]
        The marginal mixtures.
    cfg : LPConfig or None
        The LP configuration; 'segments' is S.

    Returns
    -------
    StructureSolution,
        The solution. Its objective is the interpolated sum of squared deviations.
    """

    cfg = cfg or LPConfig()
    grid = table.grid
    num_cells = grid.num_cells
    empirical = table.empirical_probs
    unobserved = _unobserved_cells(table)
    constraints = reduce_constraints(grid, marginals, range(num_cells))

    breakpoints = np.arange(cfg.segments + 1) / cfg.segments
    width = breakpoints.size
    num_weights = num_cells * width
    num_vars = num_weights + len(unobserved)
    cost = np.zeros(num_vars)
    cost[:num_weights] = ((breakpoints[np.newaxis, :] - empirical[:, np.newaxis]) ** 2).ravel()
    cost[num_weights:] = cfg.penalty

    # p_c = sum_k alpha_ck * k / S, as a map from the variables
    to_probs = np.zeros((num_cells, num_vars))
    for cell in range(num_cells):
        to_probs[cell, cell * width : (cell + 1) * width] = breakpoints

    rows, rhs, kinds = [], [], []
    for cell in range(num_cells):
        row = np.zeros(num_vars)
        row[cell * width : (cell + 1) * width] = 1.0
        rows.append(row)
        rhs.append(1.0)
        kinds.append(LPProblem.EQ)
    for index, cell in enumerate(unobserved):
        row = to_probs[cell].copy()
        row[num_weights + index] = -1.0
        rows.append(row)
        rhs.append(table.counts[cell])
        kinds.append(LPProblem.LE)
    for row_values, value in zip(constraints.lhs, constraints.rhs):
        rows.append(row_values @ to_probs)
        rhs.append(value)
        kinds.append(LPProblem.EQ)

    result = _solve_or_raise(LPProblem(cost, np.array(rows), np.array(rhs), kinds), cfg, "SSD")
    weights = result.x[:num_weights]
    return _finalize(
        "ssd",
        table,
        to_probs[:, :num_weights] @ weights,
        float(cost[:num_weights] @ weights),
        cfg.penalty * result.x[num_weights:],
        cfg,
        result,
    )
