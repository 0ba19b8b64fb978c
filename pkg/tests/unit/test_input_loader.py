#  Copyright (c) 2023. DataRobot, Inc. and its affiliates.
#  All rights reserved.
#  This is proprietary source code of DataRobot, Inc. and its affiliates.
#  Released under the terms of DataRobot Tool and Utility Agreement.

"""A module that contains unit-tests for the control, returns and events file loaders."""

import numpy as np
import pytest

from common import constants
from common.exceptions import InvalidControlFile
from common.exceptions import InvalidControlSchema
from common.exceptions import InvalidReturnsFile
from input_loader import ControlConfig
from input_loader import load_events
from input_loader import parse_control
from input_loader import parse_returns
from schema_validator import ControlSchema
from tests.unit.conftest import write_to_file


@pytest.fixture(name="control_file")
def fixture_control_file(tmp_dir):
    """A fixture to return a control file with core values and an extended section."""

    file_path = tmp_dir / "control.txt"
    write_to_file(
        file_path,
        "# assets and time points\n"
        "3 88\n"
        "2 5 100  # starts multiplier, components, bootstrap samples\n"
        "0.25 0.2\n"
        "\n"
        "[extended]\n"
        "seed = 7\n"
        "threads=2\n"
        "lp_backend=highs  # a comment\n"
        "asset_names=large,small,bonds\n",
    )
    return file_path


class TestParseControl:
    """Contains cases to test the control file loader."""

    def test_core_and_extended_values(self, control_file):
        """A case to test a control file that spans several lines and has an extended section."""

        config = parse_control(control_file)
        assert config.n_assets == 3
        assert config.n_timepoints == 88
        assert config.starts_multiplier == 2
        assert config.max_components == 5
        assert config.bootstrap_samples == 100
        assert config.forward_alpha == 0.25
        assert config.backward_alpha == 0.2
        assert config.seed == 7
        assert config.threads == 2
        assert config.asset_names == ["large", "small", "bonds"]
        assert config.extended[ControlSchema.LP_BACKEND_KEY] == "highs"

    def test_without_extended_section(self, tmp_dir):
        """A case to test that the extended settings default when the section is absent."""

        file_path = tmp_dir / "control.txt"
        write_to_file(file_path, "1 40 1 3 19 0.1 0.1\n")
        config = parse_control(file_path)
        assert config.seed is None
        assert config.threads == 1
        assert config.asset_names == []
        assert config.extended[ControlSchema.LP_SEGMENTS_KEY] == constants.LP_SEGMENTS

    def test_missing_fields(self, tmp_dir):
        """A case to test a control file that misses core values."""

        file_path = tmp_dir / "control.txt"
        write_to_file(file_path, "3 88 2\n")
        with pytest.raises(InvalidControlFile) as ex:
            parse_control(file_path)
        assert (
            "The control file is missing 4 fields: max_components, bootstrap_samples, "
            "forward_alpha, backward_alpha" in str(ex.value)
        )

    def test_too_many_fields(self, tmp_dir):
        """A case to test a control file with extra core values."""

        file_path = tmp_dir / "control.txt"
        write_to_file(file_path, "3 88 2 5 100 0.25 0.25 9\n")
        with pytest.raises(InvalidControlFile) as ex:
            parse_control(file_path)
        assert "The control file holds 8 values, expecting 7" in str(ex.value)

    @pytest.mark.parametrize(
        "content, message",
        [
            ("3 88.5 2 5 100 0.25 0.25", "The n_timepoints value is not an integer"),
            ("3 88 2 5 100 high 0.25", "The forward_alpha value is not a number"),
            ("0 88 2 5 100 0.25 0.25", "The n_assets value must be a positive integer"),
            ("3 88 2 5 100 0.25 1.0", "The backward_alpha value must be in (0, 1)"),
        ],
        ids=["fractional-int", "non-numeric", "zero-assets", "alpha-one"],
    )
    def test_invalid_core_value(self, tmp_dir, content, message):
        """A case to test invalid core values."""

        file_path = tmp_dir / "control.txt"
        write_to_file(file_path, content)
        with pytest.raises(InvalidControlFile) as ex:
            parse_control(file_path)
        assert message in str(ex.value)

    def test_malformed_extended_setting(self, tmp_dir):
        """A case to test an extended line that is not a 'key=value' pair."""

        file_path = tmp_dir / "control.txt"
        write_to_file(file_path, "3 88 2 5 100 0.25 0.25\n[EXTENDED]\nseed 7\n")
        with pytest.raises(InvalidControlFile) as ex:
            parse_control(file_path)
        assert "Expecting a 'key=value' extended setting, got: 'seed 7'" in str(ex.value)

    def test_duplicated_extended_setting(self, tmp_dir):
        """A case to test an extended setting that is defined twice."""

        file_path = tmp_dir / "control.txt"
        write_to_file(file_path, "3 88 2 5 100 0.25 0.25\n[extended]\nseed=7\nseed=8\n")
        with pytest.raises(InvalidControlFile) as ex:
            parse_control(file_path)
        assert "The extended setting 'seed' is defined more than once." in str(ex.value)

    def test_invalid_extended_value(self, tmp_dir):
        """A case to test an extended setting that fails the schema."""

        file_path = tmp_dir / "control.txt"
        write_to_file(file_path, "3 88 2 5 100 0.25 0.25\n[extended]\nthreads=none\n")
        with pytest.raises(InvalidControlSchema):
            parse_control(file_path)

    def test_missing_file(self, tmp_dir):
        """A case to test a control file that does not exist."""

        with pytest.raises(InvalidControlFile) as ex:
            parse_control(tmp_dir / "non-existing.txt")
        assert "Failed to read" in str(ex.value)


class TestControlConfig:
    """Contains cases to test the configuration builders of a control file."""

    @pytest.fixture(name="config")
    def fixture_config(self):
        """A fixture to return a control configuration with default extended settings."""

        return ControlConfig(3, 88, 2, 4, 50, 0.25, 0.2)

    def test_with_overrides(self, config):
        """A case to test that command line overrides do not change the original config."""

        overridden = config.with_overrides(seed=11, threads=3)
        assert overridden.seed == 11
        assert overridden.threads == 3
        assert config.seed is None
        assert config.threads == 1

    def test_with_no_overrides(self, config):
        """A case to test that absent overrides keep the control file values."""

        assert config.with_overrides() == config

    def test_em_config(self, config):
        """A case to test the EM configuration builder."""

        em_cfg = config.with_overrides(threads=4).em_config()
        assert em_cfg.starts_per_component == 2
        assert em_cfg.std_ratio_bound == constants.STD_RATIO_BOUND
        assert em_cfg.epsilon == constants.EPSILON
        assert em_cfg.workers == 4

    def test_selection_config(self, config):
        """A case to test the forward-backward selection configuration builder."""

        selection_cfg = config.selection_config()
        assert selection_cfg.max_components == 4
        assert selection_cfg.bootstrap_samples == 50
        assert selection_cfg.forward_alpha == 0.25
        assert selection_cfg.backward_alpha == 0.2
        assert selection_cfg.original_start_multiplier == constants.ORIGINAL_START_MULTIPLIER

    def test_lp_config(self, config):
        """A case to test the structure LP configuration builder."""

        lp_cfg = config.lp_config()
        assert lp_cfg.penalty == constants.LP_PENALTY
        assert lp_cfg.segments == constants.LP_SEGMENTS
        assert lp_cfg.backend == "simplex"

    def test_lm_config(self, config):
        """A case to test the ECME configuration builder."""

        lm_cfg = config.with_overrides(threads=2).lm_config()
        assert lm_cfg.ridge_mult_min == constants.RIDGE_MULT_MIN
        assert lm_cfg.ridge_mult_max == constants.RIDGE_MULT_MAX
        assert lm_cfg.beat_pool == constants.LM_BEAT_POOL
        assert lm_cfg.workers == 2
        assert lm_cfg.num_tasks == 2 * constants.LM_THREAD_MULTIPLIER

    def test_invalid_core_value(self):
        """A case to test that a configuration validates its core values."""

        with pytest.raises(InvalidControlFile) as ex:
            ControlConfig(3, 88, 2, 4, 0, 0.25, 0.2)
        assert "The bootstrap_samples value must be a positive integer: 0" in str(ex.value)


class TestParseReturns:
    """Contains cases to test the returns file loader."""

    def test_rows_wrap_over_lines(self, tmp_dir):
        """A case to test that values are read in row-major order regardless of line breaks."""

        file_path = tmp_dir / "returns.txt"
        write_to_file(file_path, "1.1 1.2 1.3\n0.9\n# a comment\n1.0 1.05  # end\n")
        panel = parse_returns(file_path, 2, 3, ["large", "bonds"])
        assert panel.values.tolist() == [[1.1, 1.2], [1.3, 0.9], [1.0, 1.05]]
        assert panel.asset_names == ["large", "bonds"]

    def test_extra_values_are_ignored(self, tmp_dir):
        """A case to test that values beyond the expected panel are ignored."""

        file_path = tmp_dir / "returns.txt"
        write_to_file(file_path, "1.1 1.2\n1.3 0.9\n7.0\n")
        panel = parse_returns(file_path, 2, 2)
        assert panel.values.shape == (2, 2)
        assert panel.asset_names == ["asset_1", "asset_2"]

    def test_single_asset(self, tmp_dir):
        """A case to test a single column panel."""

        file_path = tmp_dir / "returns.txt"
        write_to_file(file_path, "1.1\n0.95\n1.2\n")
        panel = parse_returns(file_path, 1, 3)
        np.testing.assert_array_equal(panel.column(0), [1.1, 0.95, 1.2])

    def test_too_few_values(self, tmp_dir):
        """A case to test a returns file that holds fewer rows than expected."""

        file_path = tmp_dir / "returns.txt"
        write_to_file(file_path, "1.1 1.2\n1.3 0.9\n1.0\n")
        with pytest.raises(InvalidReturnsFile) as ex:
            parse_returns(file_path, 2, 3)
        assert "The returns file should have 3 rows of returns, found 2 rows" in str(ex.value)

    def test_non_numeric_value(self, tmp_dir):
        """A case to test a returns file with a non-numeric token."""

        file_path = tmp_dir / "returns.txt"
        write_to_file(file_path, "1.1 1.2\n1.3 n/a\n")
        with pytest.raises(InvalidReturnsFile) as ex:
            parse_returns(file_path, 2, 2)
        assert "The line 2 value is not a number: 'n/a'" in str(ex.value)


class TestLoadEvents:
    """Contains cases to test the extreme events file loader."""

    def test_events(self, tmp_dir):
        """A case to test an events file with comments and blank lines."""

        file_path = tmp_dir / "events.txt"
        write_to_file(file_path, "# 1929-like crash\n0.5 0.4 1.05\n\n0.7 0.6 0.95\n")
        events = load_events(file_path, 3)
        assert events.tolist() == [[0.5, 0.4, 1.05], [0.7, 0.6, 0.95]]

    def test_empty_events_file(self, tmp_dir):
        """A case to test that an empty events file yields no events."""

        file_path = tmp_dir / "events.txt"
        write_to_file(file_path, "# no events\n")
        assert load_events(file_path, 3).shape == (0, 3)

    def test_wrong_number_of_returns(self, tmp_dir):
        """A case to test an event line with a wrong number of returns."""

        file_path = tmp_dir / "events.txt"
        write_to_file(file_path, "0.5 0.4 1.05\n0.7 0.6\n")
        with pytest.raises(InvalidReturnsFile) as ex:
            load_events(file_path, 3)
        assert "Line 2 of the events file should have 3 returns, found: 2" in str(ex.value)
