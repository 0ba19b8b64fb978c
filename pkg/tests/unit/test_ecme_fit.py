#  Copyright (c) 2023. DataRobot, Inc. and its affiliates.
#  All rights reserved.
#  This is proprietary source code of DataRobot, Inc. and its affiliates.
#  Released under the terms of DataRobot Tool and Utility Agreement.

"""A module that contains unit-tests for the ECME estimation of a joint mixture."""

import numpy as np
import pytest
from scipy import stats

from common.data_types import ReturnsPanel
from common.data_types import UnivariateMixture
from common.exceptions import DomainError
from common.exceptions import NotPositiveDefinite
from ecme_fit import LMConfig
from ecme_fit import ecme_fit
from ecme_fit import lm_candidate_step
from ecme_fit import num_free_covariances
from ecme_fit import q_term
from ecme_fit import step1_probabilities
from ecme_fit import step2_gradient
from ecme_fit import step2_hessian
from ecme_fit import step2_round
from joint_mixture import JointMixture
from joint_mixture import is_positive_definite
from joint_mixture import joint_log_likelihood
from simulate_ruin import sample_joint
from simulate_ruin import sample_mvn
from tests.conftest import make_mixture

CELLS = [(0, 0), (0, 1), (1, 0), (1, 1)]


@pytest.fixture(name="two_asset_marginals")
def fixture_two_asset_marginals():
    """A fixture to return two 2-component marginals."""

    return [
        make_mixture([(0.4, -0.1, 0.10), (0.6, 0.1, 0.15)]),
        make_mixture([(0.5, 0.0, 0.05), (0.5, 0.08, 0.08)]),
    ]


@pytest.fixture(name="panel")
def fixture_panel(two_asset_marginals):
    """A fixture to return returns drawn from a correlated joint mixture."""

    truth = JointMixture.from_correlations(
        two_asset_marginals, CELLS, [0.3, 0.1, 0.2, 0.4], [[0.6], [0.0], [-0.3], [0.7]]
    )
    return ReturnsPanel(sample_joint(truth, 200, np.random.default_rng(11)))


@pytest.fixture(name="start")
def fixture_start(two_asset_marginals):
    """A fixture to return an uncorrelated start that honors the marginal weights."""

    return JointMixture(two_asset_marginals, CELLS, [0.2, 0.2, 0.3, 0.3], np.zeros((4, 2, 2)))


@pytest.fixture(name="lm_cfg")
def fixture_lm_cfg():
    """A fixture to return a light ECME configuration."""

    return LMConfig(steps_per_thread=20, thread_multiplier=1, beat_pool=10, max_iterations=3)


def _numeric_gradient(panel, model, step=1e-6):
    vector = model.covariance_vector()
    gradient = np.zeros(vector.size)
    for index in range(vector.size):
        shift = np.zeros(vector.size)
        shift[index] = step
        upper = joint_log_likelihood(panel, model.with_covariance_vector(vector + shift))
        lower = joint_log_likelihood(panel, model.with_covariance_vector(vector - shift))
        gradient[index] = (upper - lower) / (2.0 * step)
    return gradient


def _random_model_and_panel(rng):
    marginals = [
        make_mixture(
            [
                (weight, rng.uniform(-0.1, 0.05), rng.uniform(0.05, 0.2)),
                (1.0 - weight, rng.uniform(0.05, 0.2), rng.uniform(0.05, 0.2)),
            ]
        )
        for weight in rng.uniform(0.2, 0.8, size=2)
    ]
    probs = rng.uniform(0.2, 0.8)
    model = JointMixture.from_correlations(
        marginals, [(0, 0), (1, 1)], [probs, 1.0 - probs], rng.uniform(-0.7, 0.7, size=(2, 1))
    )
    return model, ReturnsPanel(sample_joint(model, 150, rng))


class TestDerivatives:
    """Contains cases to test the covariance derivatives of the log-likelihood."""

    def test_q_term(self):
        """A case to test the covariance derivative of a normal log density."""

        mean = np.array([0.1, 0.0, -0.1])
        cov = np.array([[0.04, 0.01, 0.0], [0.01, 0.09, 0.02], [0.0, 0.02, 0.01]])
        x = np.array([0.3, -0.2, 0.05])
        step = 1e-7
        shifted = cov.copy()
        shifted[1, 2] = shifted[2, 1] = cov[1, 2] + step
        upper = stats.multivariate_normal(mean, shifted).logpdf(x)
        shifted[1, 2] = shifted[2, 1] = cov[1, 2] - step
        lower = stats.multivariate_normal(mean, shifted).logpdf(x)
        assert q_term(x, mean, cov, 1, 2) == pytest.approx((upper - lower) / (2 * step), rel=1e-5)

    def test_q_term_diagonal(self):
        """A case to test that a variance is not a free covariance."""

        with pytest.raises(DomainError):
            q_term(np.zeros(2), np.zeros(2), np.eye(2), 1, 1)

    def test_gradient(self, panel, start):
        """A case to test the analytic gradient against central differences."""

        model = start.with_covariance_vector([0.002, 0.0, -0.001, 0.003])
        scale = max(1.0, float(np.abs(step2_gradient(panel, model)).max()))
        assert step2_gradient(panel, model) == pytest.approx(
            _numeric_gradient(panel, model), rel=1e-4, abs=1e-5 * scale
        )

    def test_hessian(self, panel, start):
        """A case to test the analytic Hessian against differences of the gradient."""

        model = start.with_covariance_vector([0.002, 0.0, -0.001, 0.003])
        vector = model.covariance_vector()
        hessian = step2_hessian(panel, model)
        scale = float(np.abs(hessian).max())
        step = 1e-7
        for index in range(vector.size):
            shift = np.zeros(vector.size)
            shift[index] = step
            upper = step2_gradient(panel, model.with_covariance_vector(vector + shift))
            lower = step2_gradient(panel, model.with_covariance_vector(vector - shift))
            numeric = (upper - lower) / (2 * step)
            assert hessian[:, index] == pytest.approx(numeric, rel=1e-3, abs=1e-5 * scale)
        assert hessian == pytest.approx(hessian.T)

    @pytest.mark.parametrize("seed", range(20))
    def test_random_models(self, seed):
        """A case to test the gradient and the Hessian of random two component models."""

        model, panel = _random_model_and_panel(np.random.default_rng(seed))
        gradient = step2_gradient(panel, model)
        scale = max(1.0, float(np.abs(gradient).max()))
        assert gradient == pytest.approx(
            _numeric_gradient(panel, model, step=1e-7), rel=1e-5, abs=1e-6 * scale
        )

        vector = model.covariance_vector()
        hessian = step2_hessian(panel, model)
        hessian_scale = float(np.abs(hessian).max())
        step = 1e-6
        for index in range(vector.size):
            shift = np.zeros(vector.size)
            shift[index] = step
            upper = step2_gradient(panel, model.with_covariance_vector(vector + shift))
            lower = step2_gradient(panel, model.with_covariance_vector(vector - shift))
            numeric = (upper - lower) / (2 * step)
            assert hessian[:, index] == pytest.approx(numeric, rel=1e-4, abs=1e-5 * hessian_scale)

    def test_gradient_vanishes_at_normal_fit(self, rng):
        """A case to test that a single normal component has no gradient at its sample fit."""

        values = sample_mvn([1.05, 1.02], [[0.04, 0.006], [0.006, 0.01]], rng, 150)
        centered = values - values.mean(axis=0)
        cov = centered.T @ centered / values.shape[0]
        marginals = [
            UnivariateMixture.single(values[:, index].mean(), values[:, index].std())
            for index in range(2)
        ]
        panel = ReturnsPanel(values)
        model = JointMixture(marginals, [(0, 0)], [1.0], cov[np.newaxis])
        shifted = model.with_covariance_vector(model.covariance_vector() + 0.002)
        assert step2_gradient(panel, model) == pytest.approx([0.0], abs=1e-6)
        assert abs(step2_gradient(panel, shifted)[0]) > 1.0

    def test_free_covariances(self, joint_model, start):
        """A case to test the number of free covariances."""

        assert num_free_covariances(joint_model) == 15
        assert num_free_covariances(start) == 4


class TestStep1:
    """Contains cases to test the probability maximization."""

    def test_increases_likelihood(self, panel, start, lm_cfg):
        """A case to test that the probabilities improve and honor the marginals."""

        result = step1_probabilities(panel, start, cfg=lm_cfg)
        assert result.log_likelihood >= joint_log_likelihood(panel, start) - 1e-9
        assert result.log_likelihood == pytest.approx(joint_log_likelihood(panel, result.model))
        assert result.model.marginal_residual() < 1e-8
        assert np.all(result.model.probs > 0.0)
        assert result.iterations >= 1

    def test_constraint_mismatch(self, panel, start, lm_cfg):
        """A case to test that constraints over other cells are rejected."""

        first = step1_probabilities(panel, start, cfg=lm_cfg)
        restricted = start.with_components([0, 1, 2], [0.4, 0.3, 0.3])
        with pytest.raises(DomainError) as ex:
            step1_probabilities(panel, restricted, first.constraints, lm_cfg)
        assert "do not match the model cells" in str(ex.value)


class TestStep2:
    """Contains cases to test the Levenberg-Marquardt covariance steps."""

    def test_small_ascent_step(self, panel, start, lm_cfg, rng):
        """A case to test that a heavily damped step along the gradient improves the fit."""

        gradient = step2_gradient(panel, start)
        hessian = step2_hessian(panel, start)
        damping = -10.0 * max(1.0, float(np.abs(hessian).max()))
        candidate = lm_candidate_step(
            panel, start, gradient, hessian, lm_cfg, rng, damping=damping, step_scale=1e-3
        )
        assert candidate is not None
        assert candidate.log_likelihood > joint_log_likelihood(panel, start)
        assert candidate.repairs == 0
        assert candidate.model.probs == pytest.approx(start.probs)

    def test_candidates_are_positive_definite(self, panel, start, lm_cfg, rng):
        """A case to test that every random candidate holds positive definite covariances."""

        gradient = step2_gradient(panel, start)
        hessian = step2_hessian(panel, start)
        for _ in range(20):
            candidate = lm_candidate_step(panel, start, gradient, hessian, lm_cfg, rng)
            if candidate is None:
                continue
            assert all(is_positive_definite(cov) for cov in candidate.model.covs)

    def test_nothing_beats(self, panel, start, lm_cfg, rng):
        """A case to test a round in which no candidate beats the incumbent."""

        assert step2_round(panel, start, np.inf, lm_cfg, rng) == (None, 0)


class TestECMEFit:
    """Contains cases to test the full ECME fit."""

    def test_fit(self, panel, start, lm_cfg, rng):
        """A case to test that the fit improves on its start and keeps the marginals."""

        model, trace = ecme_fit(panel, start, rng, cfg=lm_cfg)
        assert trace.records
        values = trace.log_likelihoods
        assert np.all(np.diff(values) >= -1e-8 * abs(values[0]))
        assert joint_log_likelihood(panel, model) == pytest.approx(values[-1])
        assert values[-1] > joint_log_likelihood(panel, start)
        assert model.marginal_residual() < 1e-8
        assert all(is_positive_definite(cov) for cov in model.covs)
        assert trace.hessian_positive + trace.hessian_negative <= num_free_covariances(model)

    def test_invariants_every_iteration(self, panel, start, rng):
        """A case to test the marginals and positive definiteness after every iteration."""

        cfg = LMConfig(steps_per_thread=20, thread_multiplier=1, beat_pool=10, max_iterations=6)
        _, trace = ecme_fit(panel, start, rng, cfg=cfg)
        assert trace.records
        previous = joint_log_likelihood(panel, start)
        for record in trace.records:
            assert record.marginal_residual < 1e-8
            assert record.positive_definite
            assert record.step1_log_likelihood >= previous - 1e-9 * abs(previous)
            assert record.step2_log_likelihood >= record.step1_log_likelihood
            previous = record.step2_log_likelihood

    def test_reproducible(self, panel, start, lm_cfg):
        """A case to test that a threaded fit is a pure function of the seed."""

        lm_cfg.workers = 2
        first, _ = ecme_fit(panel, start, np.random.default_rng(5), cfg=lm_cfg)
        second, _ = ecme_fit(panel, start, np.random.default_rng(5), cfg=lm_cfg)
        assert np.array_equal(first.covs, second.covs)
        assert np.array_equal(first.probs, second.probs)

    def test_indefinite_start(self, panel, two_asset_marginals, lm_cfg, rng):
        """A case to test that an indefinite starting covariance is rejected."""

        start = JointMixture.from_correlations(
            two_asset_marginals, CELLS, [0.2, 0.2, 0.3, 0.3], [[1.5], [0.0], [0.0], [0.0]]
        )
        with pytest.raises(NotPositiveDefinite) as ex:
            ecme_fit(panel, start, rng, cfg=lm_cfg)
        assert "(0, 0)" in str(ex.value)

    @pytest.mark.parametrize(
        "kwargs",
        [{"beat_pool": 0}, {"ridge_mult_min": 5.0, "ridge_mult_max": 2.0}, {"max_iterations": 0}],
        ids=["beat-pool", "ridge-range", "iterations"],
    )
    def test_invalid_config(self, kwargs):
        """A case to test that invalid ECME settings are rejected."""

        with pytest.raises(DomainError):
            LMConfig(**kwargs)
