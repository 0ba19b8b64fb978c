#  Copyright (c) 2023. DataRobot, Inc. and its affiliates.
#  All rights reserved.
#  This is proprietary source code of DataRobot, Inc. and its affiliates.
#  Released under the terms of DataRobot Tool and Utility Agreement.

"""
The regime grid: every combination of one univariate component per asset is a cell, i.e. a
candidate joint regime. Each time point of a returns panel is attributed to the cell of its most
likely components.
"""

import itertools
import logging
from dataclasses import dataclass

import numpy as np
from scipy import stats

from common.data_types import ReturnsPanel
from common.exceptions import CellNotFound
from common.exceptions import DomainError

logger = logging.getLogger()


@dataclass(frozen=True)
class CellGrid:
    """
    The Cartesian product of the asset component indices. Cells are enumerated in lexicographic
    order, the last asset varying fastest, and identified by their 0-based position.
    """

    comps_per_asset: tuple

    def __post_init__(self):
        if not self.comps_per_asset or any(count < 1 for count in self.comps_per_asset):
            raise DomainError(
                f"Every asset requires at least one component, counts: {self.comps_per_asset}"
            )

    @property
    def num_assets(self):
        """The number of assets N."""

        return len(self.comps_per_asset)

    @property
    def num_cells(self):
        """The number of cells, prod_j g_j."""

        return int(np.prod(self.comps_per_asset))

    @property
    def cells(self):
        """The component tuples of all the cells, in cell id order."""

        return list(itertools.product(*(range(count) for count in self.comps_per_asset)))

    def tuple_of(self, cell_id):
        """The component tuple of a cell id."""

        if not 0 <= cell_id < self.num_cells:
            raise CellNotFound(f"Cell id {cell_id} is outside the grid of {self.num_cells} cells.")
        return tuple(int(index) for index in np.unravel_index(cell_id, self.comps_per_asset))

    def indicator(self, cell_id, asset_index, component_index):
        """I(j, i, c): whether the cell holds component i of asset j."""

        return self.tuple_of(cell_id)[asset_index] == component_index

    def cells_with(self, asset_index, component_index):
        """The ids of the cells that hold component i of asset j."""

        return [
            cell_id
            for cell_id, comps in enumerate(self.cells)
            if comps[asset_index] == component_index
        ]


def build_cell_grid(comps_per_asset):
    """
    Build the regime grid.

    Parameters
    ----------
    comps_per_asset : list[int]
        The number of univariate components g_j of each asset.

    Returns
    -------
    CellGrid,
        The grid.
    """

    return CellGrid(tuple(int(count) for count in comps_per_asset))


def cell_lookup(grid: CellGrid, comps):
    """
    Map a component tuple to its cell id.

    Parameters
    ----------
    grid : CellGrid
        The grid.
    comps : tuple[int]
        One component index per asset.

    Returns
    -------
    int,
        The cell id.
    """

    comps = tuple(comps)
    if len(comps) != grid.num_assets:
        raise DomainError(f"Expecting {grid.num_assets} component indices, got: {comps}")
    if any(not 0 <= index < count for index, count in zip(comps, grid.comps_per_asset)):
        raise CellNotFound(
            f"The component tuple {comps} is outside the grid {grid.comps_per_asset}"
        )
    return int(np.ravel_multi_index(comps, grid.comps_per_asset))


def _posteriors(series, mix):
    terms = mix.weights * stats.norm.pdf(series[:, np.newaxis], loc=mix.means, scale=mix.stds)
    totals = terms.sum(axis=1)
    if np.any(totals <= 0.0):
        raise DomainError("The mixture density vanishes at an observation, posterior is undefined.")
    return terms / totals[:, np.newaxis]


def assign_component(x, mix):
    """
    The most likely component of an observation, argmax_i w_i f_i(x) / f(x). Ties go to the
    lowest component index.

    Parameters
    ----------
    x : float
        The observation.
    mix : common.data_types.UnivariateMixture
        The mixture.

    Returns
    -------
    int,
        The component index.
    """

    return int(np.argmax(_posteriors(np.atleast_1d(float(x)), mix)[0]))


@dataclass
class AssignmentTable:
    """The per time point component assignments and the resulting cell counts."""

    grid: CellGrid
    components: np.ndarray
    cell_ids: np.ndarray
    counts: np.ndarray

    @classmethod
    def from_counts(cls, grid: CellGrid, counts):
        """
        Build a table from cell counts alone. The time points are laid out in cell id order.

        Parameters
        ----------
        grid : CellGrid
            The grid.
        counts : list[int]
            One nonnegative count per cell.

        Returns
        -------
        AssignmentTable,
            The table.
        """

        counts = np.asarray(counts, dtype=int)
        if counts.shape != (grid.num_cells,) or np.any(counts < 0) or not counts.sum():
            raise DomainError(f"Invalid cell counts for {grid.num_cells} cells: {counts}")
        cell_ids = np.repeat(np.arange(grid.num_cells), counts)
        components = np.column_stack(np.unravel_index(cell_ids, grid.comps_per_asset))
        return cls(grid, components.astype(int), cell_ids, counts)

    @property
    def num_timepoints(self):
        """The number of tabulated time points."""

        return int(self.cell_ids.size)

    @property
    def empirical_probs(self):
        """The empirical cell probabilities n_c / T."""

        return self.counts / self.num_timepoints

    def asset_counts(self, asset_index):
        """The number of time points attributed to each component of an asset."""

        return np.bincount(
            self.components[:, asset_index], minlength=self.grid.comps_per_asset[asset_index]
        )


def tabulate(panel: ReturnsPanel, marginals):
    """
    Attribute every time point to the cell of its most likely components and count the cells.

    Parameters
    ----------
    panel : common.data_types.ReturnsPanel
        The T x N returns.
    marginals : list[common.data_types.UnivariateMixture]
        One fitted mixture per asset.

    Returns
    -------
    AssignmentTable,
        The assignments and counts. The counts sum to T.
    """

    if len(marginals) != panel.num_assets:
        raise DomainError(
            f"Expecting {panel.num_assets} marginal mixtures, got: {len(marginals)}"
        )
    grid = build_cell_grid([mix.num_components for mix in marginals])
    components = np.column_stack(
        [
            np.argmax(_posteriors(panel.column(index), mix), axis=1)
            for index, mix in enumerate(marginals)
        ]
    ).astype(int)
    cell_ids = np.ravel_multi_index(components.T, grid.comps_per_asset)
    counts = np.bincount(cell_ids, minlength=grid.num_cells)
    logger.debug("Tabulated %d time points into %d cells.", panel.num_timepoints, grid.num_cells)
    return AssignmentTable(grid, components, np.asarray(cell_ids, dtype=int), counts)
