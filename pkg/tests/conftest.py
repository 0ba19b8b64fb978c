#  Copyright (c) 2023. DataRobot, Inc. and its affiliates.
#  All rights reserved.
#  This is proprietary source code of DataRobot, Inc. and its affiliates.
#  Released under the terms of DataRobot Tool and Utility Agreement.

"""A configuration test for both functional and unit-tests."""

import os
from pathlib import Path
from tempfile import TemporaryDirectory
from unittest.mock import patch

import numpy as np
import pytest

from common.data_types import UnivariateMixture
from joint_mixture import JointMixture
from regime_grid import AssignmentTable
from regime_grid import build_cell_grid

# The fitted marginals of large stocks (L), small stocks (S) and bonds (B): (weight, mean, std).
LARGE_STOCKS = [(1.0, 1.082139318181818, 0.197430382245555)]
SMALL_STOCKS = [
    (0.163796557010864, 0.944667188140307, 0.065233151408053),
    (0.707369571461765, 1.165057494177362, 0.366529325768043),
    (0.128833871527371, 1.191903886074301, 0.023596517545339),
]
BONDS = [
    (0.947744576049301, 1.011164539967906, 0.069579917666149),
    (0.052255423950700, 1.220436091927283, 0.016983666409906),
]

# The fitted joint components: cell, probability and the (LS, LB, SB) correlations. The cells
# index the canonical (ascending mean) component order of each marginal.
JOINT_COMPONENTS = [
    ((0, 0, 0), 0.163796557010864, (0.718841320548123, 0.162032898398328, 0.156156396700733)),
    ((0, 1, 0), 0.683298902828332, (0.846153215066181, -0.095463348011069, -0.082959075055513)),
    ((0, 1, 1), 0.024070668633433, (0.047531637731748, -0.703796286452937, -0.743051448755313)),
    ((0, 2, 0), 0.100649116210105, (0.577235331054455, 0.555733717419093, 0.698818203652309)),
    ((0, 2, 1), 0.028184755317266, (0.962441058378833, 0.487911866790132, 0.673278286734948)),
]

# The number of years attributed to every cell of the 1 x 3 x 2 grid, out of 88.
CELL_COUNTS = [14, 0, 57, 3, 12, 2]


def make_mixture(components):
    """Build a univariate mixture from (weight, mean, std) tuples."""

    weights, means, stds = zip(*components)
    return UnivariateMixture(np.array(weights), np.array(means), np.array(stds))


@pytest.fixture(name="marginals")
def fixture_marginals():
    """A fixture to return the fitted marginals of large stocks, small stocks and bonds."""

    return [make_mixture(LARGE_STOCKS), make_mixture(SMALL_STOCKS), make_mixture(BONDS)]


@pytest.fixture(name="joint_model")
def fixture_joint_model(marginals):
    """A fixture to return the fitted five component joint mixture."""

    cells, probs, correlations = zip(*JOINT_COMPONENTS)
    return JointMixture.from_correlations(marginals, list(cells), list(probs), list(correlations))


@pytest.fixture(name="cell_table")
def fixture_cell_table():
    """A fixture to return the cell counts of the fitted marginals on the historical years."""

    return AssignmentTable.from_counts(build_cell_grid([1, 3, 2]), CELL_COUNTS)


@pytest.fixture(name="rng")
def fixture_rng():
    """A fixture to return a seeded random stream."""

    return np.random.default_rng(20230314)


@pytest.fixture(name="tmp_dir")
def fixture_tmp_dir():
    """A fixture to return a temporary directory that is removed at the end of a test."""

    with TemporaryDirectory() as tmp_dir:
        yield Path(tmp_dir)


@pytest.fixture
def github_output(tmp_dir):
    """
    A fixture to emulate the 'GITHUB_OUTPUT' environment variable, which points to an
    existing output file.
    """

    github_output_filepath = tmp_dir / "github_output"
    github_output_filepath.touch()
    with patch.dict(os.environ, {"GITHUB_OUTPUT": str(github_output_filepath)}):
        yield github_output_filepath
