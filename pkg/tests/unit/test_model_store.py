#  Copyright (c) 2023. DataRobot, Inc. and its affiliates.
#  All rights reserved.
#  This is proprietary source code of DataRobot, Inc. and its affiliates.
#  Released under the terms of DataRobot Tool and Utility Agreement.

"""A module that contains unit-tests for the model, plan and samples persistence."""

import numpy as np
import pytest
import yaml

from common.constants import Horizon
from common.exceptions import InvalidModelSchema
from common.exceptions import InvalidPlanSchema
from model_store import load_model
from model_store import load_plan
from model_store import model_from_document
from model_store import model_to_document
from model_store import save_model
from model_store import save_samples
from schema_validator import ModelSchema
from schema_validator import PlanSchema
from tests.unit.conftest import ASSET_NAMES
from tests.unit.conftest import create_model_document
from tests.unit.conftest import create_plan_document
from tests.unit.conftest import write_to_file


class TestModelDocuments:
    """Contains cases to test the persistence of joint models."""

    def test_save_and_load_are_bit_exact(self, joint_model, tmp_dir):
        """A case to test that a saved model is read back bit-identical."""

        file_path = tmp_dir / "model.yaml"
        save_model(file_path, joint_model, ASSET_NAMES, -12.345678901234567)
        stored = load_model(file_path)

        assert stored.asset_names == ASSET_NAMES
        assert stored.log_likelihood == -12.345678901234567
        assert stored.free_params == 28
        assert stored.model.cells == joint_model.cells
        np.testing.assert_array_equal(stored.model.probs, joint_model.probs)
        np.testing.assert_array_equal(stored.model.covs, joint_model.covs)
        for loaded, origin in zip(stored.model.marginals, joint_model.marginals):
            np.testing.assert_array_equal(loaded.weights, origin.weights)
            np.testing.assert_array_equal(loaded.means, origin.means)
            np.testing.assert_array_equal(loaded.stds, origin.stds)

    def test_document_content(self, joint_model):
        """A case to test the structure of a model document."""

        document = model_to_document(joint_model)
        assert document[ModelSchema.ASSETS_KEY] == ["asset_1", "asset_2", "asset_3"]
        assert len(document[ModelSchema.MARGINALS_KEY][1][ModelSchema.MARGINAL_COMPONENTS_KEY]) == 3
        assert document[ModelSchema.COMPONENTS_KEY][2][ModelSchema.CELL_KEY] == [0, 1, 1]
        assert ModelSchema.LOG_LIKELIHOOD_KEY not in document
        assert ModelSchema.validate_and_transform(document)

    def test_load_correlations_document(self, model_file, joint_model):
        """A case to test a document whose components define correlations."""

        stored = load_model(model_file)
        assert stored.model.cells == joint_model.cells
        assert stored.log_likelihood is None
        np.testing.assert_allclose(stored.model.covs, joint_model.covs, rtol=1e-12, atol=0)

    def test_reordered_marginal_components(self, joint_model):
        """
        A case to test that cells refer to the components in their document order, and are
        mapped to the canonical order on load.
        """

        document = create_model_document()
        small = document[ModelSchema.MARGINALS_KEY][1]
        small[ModelSchema.MARGINAL_COMPONENTS_KEY].reverse()
        for component in document[ModelSchema.COMPONENTS_KEY]:
            component[ModelSchema.CELL_KEY][1] = 2 - component[ModelSchema.CELL_KEY][1]

        stored = model_from_document(ModelSchema.validate_and_transform(document))
        assert stored.model.cells == joint_model.cells
        np.testing.assert_allclose(stored.model.covs, joint_model.covs, rtol=1e-12, atol=0)

    def test_components_without_dependence(self):
        """A case to test that components without correlations are uncorrelated."""

        document = create_model_document(with_correlations=False)
        stored = model_from_document(ModelSchema.validate_and_transform(document))
        correlations = stored.model.correlations()
        np.testing.assert_allclose(correlations, np.broadcast_to(np.eye(3), (5, 3, 3)))

    def test_asset_names_from_marginals(self):
        """A case to test that the marginal names are used when the assets key is absent."""

        document = create_model_document()
        document.pop(ModelSchema.ASSETS_KEY)
        stored = model_from_document(ModelSchema.validate_and_transform(document))
        assert stored.asset_names == ASSET_NAMES

    def test_unknown_component(self, model_document):
        """A case to test a cell that refers to a component the marginal does not have."""

        model_document[ModelSchema.COMPONENTS_KEY][0][ModelSchema.CELL_KEY] = [0, 5, 0]
        with pytest.raises(InvalidModelSchema) as ex:
            model_from_document(ModelSchema.validate_and_transform(model_document))
        assert "The cell [0, 5, 0] refers to an unknown component." in str(ex.value)

    def test_empty_document(self, tmp_dir):
        """A case to test an empty model file."""

        file_path = tmp_dir / "model.yaml"
        write_to_file(file_path, "")
        with pytest.raises(InvalidModelSchema) as ex:
            load_model(file_path)
        assert "Detected an invalid or empty yaml file" in str(ex.value)

    def test_invalid_yaml(self, tmp_dir):
        """A case to test a model file that is not a valid YAML."""

        file_path = tmp_dir / "model.yaml"
        write_to_file(file_path, "marginals: [unclosed\n")
        with pytest.raises(InvalidModelSchema) as ex:
            load_model(file_path)
        assert "Failed to parse" in str(ex.value)

    def test_missing_file(self, tmp_dir):
        """A case to test a model file that does not exist."""

        with pytest.raises(InvalidModelSchema) as ex:
            load_model(tmp_dir / "model.yaml")
        assert "Failed to read" in str(ex.value)


class TestPlanDocuments:
    """Contains cases to test the loading of decumulation plans."""

    def test_fixed_horizon(self, plan_file):
        """A case to test a plan with a fixed horizon."""

        plan = load_plan(plan_file)
        assert plan.horizon == Horizon.FIXED
        assert plan.fixed_length == 30
        assert plan.max_horizon == 30
        assert plan.withdrawal_rate == 0.04
        np.testing.assert_array_equal(plan.portfolio.weights, [0.5, 0.2, 0.3])
        np.testing.assert_array_equal(plan.portfolio.expenses, [0.0015, 0.0025, 0.002])

    def test_random_horizon(self, tmp_dir):
        """A case to test a plan with a horizon pmf."""

        file_path = tmp_dir / "plan.yaml"
        document = create_plan_document(pmf=[0.0, 0.25, 0.25, 0.5, 0.0])
        write_to_file(file_path, yaml.safe_dump(document))
        plan = load_plan(file_path)
        assert plan.horizon == Horizon.RANDOM
        assert plan.max_horizon == 3
        np.testing.assert_array_equal(plan.pmf, [0.0, 0.25, 0.25, 0.5, 0.0])

    def test_time_varying_weights_without_expenses(self, tmp_dir):
        """A case to test a plan with per period weights and default expenses."""

        document = create_plan_document(fixed=2)
        document[PlanSchema.WEIGHTS_KEY] = [[0.6, 0.1, 0.3], [0.4, 0.1, 0.5]]
        document.pop(PlanSchema.EXPENSES_KEY)
        file_path = tmp_dir / "plan.yaml"
        write_to_file(file_path, yaml.safe_dump(document))

        plan = load_plan(file_path)
        assert plan.portfolio.time_varying
        np.testing.assert_array_equal(plan.portfolio.expenses, [0.0, 0.0, 0.0])
        np.testing.assert_allclose(plan.portfolio.effective_weights(2), [0.4, 0.1, 0.5])

    def test_invalid_plan(self, tmp_dir):
        """A case to test a plan document that fails the schema."""

        document = create_plan_document()
        document[PlanSchema.WEIGHTS_KEY] = [0.5, 0.5, 0.5]
        file_path = tmp_dir / "plan.yaml"
        write_to_file(file_path, yaml.safe_dump(document))
        with pytest.raises(InvalidPlanSchema) as ex:
            load_plan(file_path)
        assert "The weights must sum to 1" in str(ex.value)


class TestSaveSamples:
    """Contains cases to test the samples file writer."""

    def test_samples_round_trip(self, tmp_dir, rng):
        """A case to test that samples are written under a header and read back exactly."""

        samples = rng.normal(1.0, 0.2, size=(7, 3))
        file_path = tmp_dir / "samples.txt"
        save_samples(file_path, samples, ASSET_NAMES)

        with open(file_path, encoding="utf-8") as fd:
            assert fd.readline().strip() == "# large small bonds"
        np.testing.assert_array_equal(np.loadtxt(file_path, ndmin=2), samples)

    def test_no_samples(self, tmp_dir):
        """A case to test that zero draws write only the header."""

        file_path = tmp_dir / "samples.txt"
        save_samples(file_path, np.zeros((0, 3)), ASSET_NAMES)
        with open(file_path, encoding="utf-8") as fd:
            assert fd.read().strip() == "# large small bonds"
