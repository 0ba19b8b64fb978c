#  Copyright (c) 2023. DataRobot, Inc. and its affiliates.
#  All rights reserved.
#  This is proprietary source code of DataRobot, Inc. and its affiliates.
#  Released under the terms of DataRobot Tool and Utility Agreement.

"""
A functional test configuration module. The fits run on small synthetic panels with a reduced
search effort, so a complete pipeline takes seconds.
"""

from pathlib import Path

import numpy as np
import pytest

MODELS_DIR = Path(__file__).parent.parent / "models" / "stocks_and_bonds"

# A reduced search effort for the extended section of the control files.
FAST_SETTINGS = {
    "seed": 3,
    "epsilon": 1e-8,
    "em_max_iters": 5000,
    "original_start_multiplier": 1,
    "lp_segments": 20,
    "lm_steps_per_thread": 10,
    "lm_thread_multiplier": 1,
    "lm_beat_pool": 5,
    "lm_max_iterations": 3,
}


def write_control_file(file_path, n_assets, n_timepoints, asset_names):
    """Write a control file that selects up to two components per asset."""

    settings = dict(FAST_SETTINGS, asset_names=",".join(asset_names))
    with open(file_path, "w", encoding="utf-8") as fd:
        fd.write(f"{n_assets} {n_timepoints}\n")
        fd.write("4 2 9  # starts multiplier, components, bootstrap samples\n")
        fd.write("0.25 0.25\n")
        fd.write("[extended]\n")
        for key, value in settings.items():
            fd.write(f"{key}={value}\n")


def write_returns_file(file_path, returns):
    """Write a returns panel, one time point per line."""

    np.savetxt(file_path, returns, fmt="%.10f", header="annual compounding returns")


def two_regime_returns(num_timepoints, seed=2023):
    """
    Draw a panel of two assets whose returns switch between a bear and a bull regime. Every
    combination of the regimes is visited.
    """

    rng = np.random.default_rng(seed)
    regimes = np.array([(0, 0), (0, 1), (1, 0), (1, 1)])[
        rng.choice(4, size=num_timepoints, p=[0.35, 0.15, 0.15, 0.35])
    ]
    regimes[:4] = [(0, 0), (0, 1), (1, 0), (1, 1)]
    means = np.array([[0.85, 1.0], [1.2, 1.08]])
    stds = np.array([[0.05, 0.02], [0.06, 0.025]])
    columns = [
        rng.normal(means[regimes[:, j], j], stds[regimes[:, j], j]) for j in range(2)
    ]
    return np.column_stack(columns)


@pytest.fixture
def two_asset_inputs(tmp_dir):
    """A fixture to write the control and returns files of a two asset panel."""

    num_timepoints = 80
    control_file = tmp_dir / "control.txt"
    returns_file = tmp_dir / "returns.txt"
    write_control_file(control_file, 2, num_timepoints, ["stocks", "bonds"])
    write_returns_file(returns_file, two_regime_returns(num_timepoints))
    return control_file, returns_file


@pytest.fixture
def single_asset_inputs(tmp_dir):
    """A fixture to write the control and returns files of a single asset panel."""

    num_timepoints = 60
    control_file = tmp_dir / "control.txt"
    returns_file = tmp_dir / "returns.txt"
    write_control_file(control_file, 1, num_timepoints, ["stocks"])
    write_returns_file(returns_file, two_regime_returns(num_timepoints)[:, :1])
    return control_file, returns_file


@pytest.fixture
def single_asset_plan(tmp_dir):
    """A fixture to write a ten year single asset plan."""

    file_path = tmp_dir / "plan.yaml"
    with open(file_path, "w", encoding="utf-8") as fd:
        fd.write("withdrawal_rate: 0.05\nhorizon:\n  fixed: 10\nweights: [1.0]\n")
    return file_path
