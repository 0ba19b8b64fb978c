#  Copyright (c) 2023. DataRobot, Inc. and its affiliates.
#  All rights reserved.
#  This is proprietary source code of DataRobot, Inc. and its affiliates.
#  Released under the terms of DataRobot Tool and Utility Agreement.

"""A configuration test module for unit-tests."""

import pytest
import yaml

from schema_validator import ModelSchema
from schema_validator import PlanSchema
from tests.conftest import BONDS
from tests.conftest import JOINT_COMPONENTS
from tests.conftest import LARGE_STOCKS
from tests.conftest import SMALL_STOCKS

ASSET_NAMES = ["large", "small", "bonds"]


def write_to_file(file_path, content):
    """A method to write into a file."""

    with open(file_path, "w", encoding="utf-8") as fd:
        fd.write(content)


def create_model_document(with_correlations=True):
    """
    Create the document of the fitted five component joint mixture. The components define
    either their correlations or no dependence at all.
    """

    document = {
        ModelSchema.ASSETS_KEY: list(ASSET_NAMES),
        ModelSchema.MARGINALS_KEY: [
            {
                ModelSchema.NAME_KEY: name,
                ModelSchema.MARGINAL_COMPONENTS_KEY: [
                    {ModelSchema.WEIGHT_KEY: w, ModelSchema.MEAN_KEY: m, ModelSchema.STD_KEY: s}
                    for w, m, s in components
                ],
            }
            for name, components in zip(ASSET_NAMES, [LARGE_STOCKS, SMALL_STOCKS, BONDS])
        ],
        ModelSchema.COMPONENTS_KEY: [],
    }
    for cell, prob, correlations in JOINT_COMPONENTS:
        component = {ModelSchema.CELL_KEY: list(cell), ModelSchema.PROBABILITY_KEY: prob}
        if with_correlations:
            component[ModelSchema.CORRELATIONS_KEY] = list(correlations)
        document[ModelSchema.COMPONENTS_KEY].append(component)
    return document


def create_plan_document(withdrawal_rate=0.04, fixed=30, pmf=None):
    """Create a three asset plan document with constant weights."""

    horizon = {PlanSchema.HORIZON_PMF_KEY: pmf} if pmf else {PlanSchema.HORIZON_FIXED_KEY: fixed}
    return {
        PlanSchema.WITHDRAWAL_RATE_KEY: withdrawal_rate,
        PlanSchema.HORIZON_KEY: horizon,
        PlanSchema.WEIGHTS_KEY: [0.5, 0.2, 0.3],
        PlanSchema.EXPENSES_KEY: [0.0015, 0.0025, 0.002],
    }


@pytest.fixture(name="model_document")
def fixture_model_document():
    """A fixture to return the document of the fitted joint mixture, using correlations."""

    return create_model_document()


@pytest.fixture(name="plan_document")
def fixture_plan_document():
    """A fixture to return a 30 year plan document with a 4% withdrawal rate."""

    return create_plan_document()


@pytest.fixture
def model_file(tmp_dir, model_document):
    """A fixture to write the model document into a YAML file and return its path."""

    file_path = tmp_dir / "model.yaml"
    write_to_file(file_path, yaml.safe_dump(model_document))
    return file_path


@pytest.fixture
def plan_file(tmp_dir, plan_document):
    """A fixture to write the plan document into a YAML file and return its path."""

    file_path = tmp_dir / "plan.yaml"
    write_to_file(file_path, yaml.safe_dump(plan_document))
    return file_path
