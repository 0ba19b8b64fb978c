#  Copyright (c) 2023. DataRobot, Inc. and its affiliates.
#  All rights reserved.
#  This is proprietary source code of DataRobot, Inc. and its affiliates.
#  Released under the terms of DataRobot Tool and Utility Agreement.

"""A module that contains unit-tests for the bootstrapped component selection."""

import numpy as np
import pytest

from common.constants import Direction
from common.data_types import UnivariateMixture
from common.exceptions import DomainError
from common.exceptions import NoLocalOptimum
from common.parallel import spawn_generators
from model_selection import LRTResult
from model_selection import SelectionConfig
from model_selection import bootstrap_lrt
from model_selection import bootstrap_p_value
from model_selection import fit_all_sizes
from model_selection import forward_backward
from model_selection import lrt_statistic
from model_selection import select_components
from tests.conftest import make_mixture
from univariate_em import EMConfig
from univariate_em import sample_mixture


@pytest.fixture(name="selection_cfg")
def fixture_selection_cfg():
    """A fixture to return a light selection configuration of up to two components."""

    return SelectionConfig(
        max_components=2,
        bootstrap_samples=9,
        em=EMConfig(epsilon=1e-8, starts_per_component=5),
        original_start_multiplier=2,
    )


@pytest.fixture(name="bimodal_data")
def fixture_bimodal_data(rng):
    """A fixture to return observations of two well separated normal components."""

    return sample_mixture(make_mixture([(0.5, -1.0, 0.2), (0.5, 1.0, 0.2)]), 80, rng)


def _replay(p_values):
    def _run_test(h0, h1):
        return LRTResult(h0, h1, 1.0, p_values[(h0, h1)], 100)

    return _run_test


class TestStatistics:
    """Contains cases to test the likelihood ratio statistic and the bootstrap p-value."""

    @pytest.mark.parametrize(
        "ll0, ll1, expected",
        [(-24.7605, -18.3915, 12.738), (17.9019, 18.6383, 1.4728)],
        ids=["small-stocks", "large-stocks"],
    )
    def test_lrt_statistic(self, ll0, ll1, expected):
        """A case to test the likelihood ratio statistic of observed fits."""

        assert lrt_statistic(ll0, ll1) == pytest.approx(expected, abs=1e-4)

    @pytest.mark.parametrize(
        "lambdas, lambda_obs, expected",
        [([1.0, 2.0, 3.0, 4.0], 2.5, 0.6), ([1.0, 2.0, 3.0], 2.0, 0.75), ([], 1.0, 1.0)],
        ids=["between", "ties-count", "no-samples"],
    )
    def test_p_value(self, lambdas, lambda_obs, expected):
        """A case to test the bootstrap p-value, which counts ties as exceedances."""

        assert bootstrap_p_value(lambdas, lambda_obs) == pytest.approx(expected)


class TestForwardBackward:
    """Contains cases to test the forward-backward procedure with replayed p-values."""

    def test_replayed_selection(self):
        """A case to test the selection of 5 components from a fixed set of p-values."""

        p_values = {
            (1, 2): 0.5,
            (1, 3): 0.4,
            (1, 4): 0.1,
            (4, 5): 0.17,
            (4, 6): 0.3,
            (4, 7): 0.05,
            (7, 8): 0.6,
            (7, 9): 0.5,
            (7, 10): 0.9,
            (6, 7): 0.5,
            (5, 6): 0.3,
        }
        tests, chosen, results = forward_backward(10, _replay(p_values), 0.15, 0.20)
        assert chosen == 5

        forward = [(t.h0, t.h1) for t in tests if t.direction == Direction.FORWARD]
        backward = [(t.h0, t.h1) for t in tests if t.direction == Direction.BACKWARD]
        assert forward == [(1, 2), (1, 3), (1, 4), (4, 5), (4, 6), (4, 7), (7, 8), (7, 9), (7, 10)]
        assert backward == [(6, 7), (5, 6), (4, 5)]
        # The 4 vs 5 test is run once and decided against both levels.
        assert len(results) == len(p_values)
        decisions = [(t.alpha_used, t.rejected) for t in tests if (t.h0, t.h1) == (4, 5)]
        assert decisions == [(0.15, False), (0.20, True)]

    def test_boundary_rejects(self):
        """A case to test that a p-value equal to the level rejects the null hypothesis."""

        _, chosen, _ = forward_backward(2, _replay({(1, 2): 0.25}), 0.25, 0.25)
        assert chosen == 2

    def test_single_component(self):
        """A case to test that a maximum of one component runs no test."""

        tests, chosen, _ = forward_backward(1, _replay({}), 0.25, 0.25)
        assert not tests
        assert chosen == 1

    def test_backward_lowers_basis(self):
        """A case to test that the backward phase lowers a forward choice."""

        p_values = {(1, 2): 0.3, (1, 3): 0.1, (2, 3): 0.6}
        tests, chosen, _ = forward_backward(3, _replay(p_values), 0.25, 0.25)
        assert chosen == 1
        assert [t.direction for t in tests] == [
            Direction.FORWARD,
            Direction.FORWARD,
            Direction.BACKWARD,
            Direction.BACKWARD,
        ]


class TestBootstrap:
    """Contains cases to test the bootstrapped likelihood ratio test."""

    def test_two_components_are_significant(self, bimodal_data, selection_cfg, rng):
        """A case to test that two well separated components reject a single normal."""

        result = bootstrap_lrt(bimodal_data, 1, 2, 9, selection_cfg, rng)
        assert result.lambda_obs > 20.0
        assert result.valid_samples >= 3
        assert result.p_value == pytest.approx(1.0 / (result.valid_samples + 1))
        assert all(value >= 0.0 for value in result.lambdas)

    @pytest.mark.parametrize("g0, g1", [(2, 2), (3, 2), (0, 1)])
    def test_invalid_pair(self, bimodal_data, selection_cfg, rng, g0, g1):
        """A case to test that an invalid pair of hypotheses is rejected."""

        with pytest.raises(DomainError) as ex:
            bootstrap_lrt(bimodal_data, g0, g1, 9, selection_cfg, rng)
        assert "1 <= g0 < g1" in str(ex.value)

    @pytest.mark.slow
    def test_null_rejection_rate(self):
        """A case to test that a single normal is rejected at about the nominal level."""

        cfg = SelectionConfig(
            max_components=2,
            bootstrap_samples=50,
            em=EMConfig(epsilon=1e-8, starts_per_component=5),
            original_start_multiplier=2,
        )
        null = UnivariateMixture.single(1.1, 0.2)
        p_values = []
        for trial_rng in spawn_generators(np.random.default_rng(20230314), 200):
            data = sample_mixture(null, 88, trial_rng)
            try:
                p_values.append(bootstrap_lrt(data, 1, 2, 50, cfg, trial_rng).p_value)
            except NoLocalOptimum:
                continue
        assert len(p_values) >= 190
        rejection_rate = np.mean(np.asarray(p_values) <= 0.25)
        assert 0.15 <= rejection_rate <= 0.35

    def test_fit_all_sizes(self, bimodal_data, selection_cfg, rng):
        """A case to test that larger fits never have a lower log-likelihood."""

        fits = fit_all_sizes(bimodal_data, 2, selection_cfg, rng)
        assert sorted(fits) == [1, 2]
        assert fits[2].log_likelihood >= fits[1].log_likelihood


class TestSelectComponents:
    """Contains cases to test the full component selection."""

    def test_selects_two(self, bimodal_data, selection_cfg, rng):
        """A case to test the selection of two components from bimodal data."""

        trace = select_components(bimodal_data, selection_cfg, rng)
        assert trace.chosen_g == 2
        assert trace.chosen_fit.mixture.num_components == 2
        assert set(trace.criteria) == {1, 2}
        assert trace.criteria[2].aic < trace.criteria[1].aic
        assert (1, 2) in trace.lrt_results

    def test_reproducible(self, bimodal_data, selection_cfg):
        """A case to test that a selection is a pure function of the seed."""

        first = select_components(bimodal_data, selection_cfg, np.random.default_rng(3))
        second = select_components(bimodal_data, selection_cfg, np.random.default_rng(3))
        assert [t.p_value for t in first.tests] == [t.p_value for t in second.tests]
        assert first.chosen_fit.log_likelihood == second.chosen_fit.log_likelihood

    def test_small_sample(self, selection_cfg, rng):
        """A case to test that a sample too small for the maximum components is rejected."""

        with pytest.raises(DomainError) as ex:
            select_components(np.array([0.1, 0.2, 0.3, 0.4, 0.5]), selection_cfg, rng)
        assert "At least 6 observations are required" in str(ex.value)

    def test_invalid_config(self):
        """A case to test that an invalid significance level is rejected."""

        with pytest.raises(DomainError):
            SelectionConfig(forward_alpha=1.0)
