#  Copyright (c) 2023. DataRobot, Inc. and its affiliates.
#  All rights reserved.
#  This is proprietary source code of DataRobot, Inc. and its affiliates.
#  Released under the terms of DataRobot Tool and Utility Agreement.

"""
The fit pipeline. It selects and fits a univariate mixture per asset, attributes the time points
to the regime grid cells, solves both structure LPs, fits a joint mixture from each LP start and
compares the fits with a single multivariate normal. The report is written even when a stage
fails, so the completed stages can be inspected.
"""

import logging
from dataclasses import dataclass

import numpy as np

from common.data_types import ICReport
from common.data_types import ReturnsPanel
from common.exceptions import GenericException
from ecme_fit import ECMETrace
from ecme_fit import ecme_fit
from input_loader import ControlConfig
from joint_mixture import JointMixture
from joint_mixture import joint_log_likelihood
from joint_mixture import mixture_covariance
from joint_mixture import mvn_baseline
from joint_mixture import structure_to_model
from lp_structure import min_ssd_structure
from lp_structure import minimax_structure
from lp_structure import reduce_constraints
from model_selection import select_components
from model_store import save_model
from regime_grid import tabulate
from report_writer import ReportWriter
from stats_core import information_criteria

logger = logging.getLogger()


@dataclass
class JointFit:
    """A fitted joint mixture and the structure LP it was started from."""

    method: str
    model: JointMixture
    log_likelihood: float
    criteria: ICReport = None
    trace: ECMETrace = None


def _criteria_or_none(log_likelihood, free_params, sample_size):
    if sample_size <= free_params + 2:
        return None
    return information_criteria(log_likelihood, free_params, sample_size)


# pylint: disable=too-many-instance-attributes
class MixturePipeline:
    """The implementation of the joint mixture fit."""

    STRUCTURE_SOLVERS = (minimax_structure, min_ssd_structure)

    def __init__(self, config: ControlConfig, panel: ReturnsPanel, out_dir):
        if panel.num_assets != config.n_assets:
            raise GenericException(
                f"The control file declares {config.n_assets} assets, the panel holds "
                f"{panel.num_assets}."
            )
        self._config = config
        self._panel = panel
        self._writer = ReportWriter(out_dir)
        self._rng = np.random.default_rng(config.seed)
        self._selection_traces = []
        self._marginals = []
        self._table = None
        self._solutions = []
        self._fits = []
        self._baseline = None

    @property
    def writer(self):
        """A property to return the report writer attribute."""

        return self._writer

    @property
    def marginals(self):
        """A property to return the selected marginal mixtures."""

        return self._marginals

    @property
    def table(self):
        """A property to return the cell assignment table."""

        return self._table

    @property
    def solutions(self):
        """A property to return the structure LP solutions."""

        return self._solutions

    @property
    def fits(self):
        """A property to return the joint fits, one per successful LP start."""

        return self._fits

    @property
    def best(self):
        """The joint fit of the largest log-likelihood."""

        return max(self._fits, key=lambda fit: fit.log_likelihood) if self._fits else None

    def run(self):
        """
        Executes every stage of the fit and writes the report and the model documents.

        Returns
        -------
        JointFit,
            The best joint fit.
        """

        try:
            self.select_marginals()
            if self._panel.num_assets == 1:
                self.fit_single_asset()
            else:
                self.tabulate_cells()
                self.solve_structures()
                self.fit_joint_models()
            self.compare_models()
            self.save_models()
        finally:
            self._writer.write()
        return self.best

    def select_marginals(self):
        """Select the number of components and fit the mixture of every asset."""

        selection_cfg = self._config.selection_config()
        for index, name in enumerate(self._panel.asset_names):
            logger.info("Selecting the univariate mixture of %s.", name)
            trace = select_components(self._panel.column(index), selection_cfg, self._rng)
            self._selection_traces.append(trace)
            self._marginals.append(trace.chosen_fit.mixture)
            self._writer.add_univariate_selection(name, trace)

    def fit_single_asset(self):
        """A single asset joint mixture is its marginal, one component per cell."""

        mix = self._marginals[0]
        model = JointMixture(
            [mix],
            [(index,) for index in range(mix.num_components)],
            mix.weights,
            np.zeros((mix.num_components, 1, 1)),
        )
        self._add_fit("marginal", model)

    def tabulate_cells(self):
        """Attribute every time point to its most likely cell."""

        self._table = tabulate(self._panel, self._marginals)
        self._writer.add_cell_counts(self._table)

    def solve_structures(self):
        """Solve the minimax and the least squares structure LPs."""

        lp_cfg = self._config.lp_config()
        for solver in self.STRUCTURE_SOLVERS:
            solution = solver(self._table, self._marginals, lp_cfg)
            logger.info("The %s structure LP objective: %.6f", solution.method, solution.objective)
            self._solutions.append(solution)
            self._writer.add_structure(solution, self._table.grid)

    def fit_joint_models(self):
        """
        Run ECME from every structure LP start. A start whose fit fails is skipped, unless all
        of them fail.
        """

        lm_cfg = self._config.lm_config()
        failure = None
        for solution in self._solutions:
            initial = structure_to_model(solution, self._marginals)
            constraints = reduce_constraints(
                self._table.grid, self._marginals, solution.kept_cells
            )
            try:
                model, trace = ecme_fit(self._panel, initial, self._rng, constraints, lm_cfg)
            except GenericException as ex:
                logger.warning("The ECME fit from the %s start failed: %s", solution.method, ex)
                failure = ex
                continue
            self._add_fit(solution.method, model, trace)
        if not self._fits and failure is not None:
            raise failure

    def _add_fit(self, method, model, trace=None):
        value = joint_log_likelihood(self._panel, model)
        fit = JointFit(
            method,
            model,
            value,
            _criteria_or_none(value, model.count_free_params(), self._panel.num_timepoints),
            trace,
        )
        self._fits.append(fit)
        self._writer.add_joint_model(
            f"Joint mixture ({method} start)", model, value, fit.criteria, trace
        )

    def compare_models(self):
        """Compare the joint fits with a multivariate normal and report the correlations."""

        self._baseline = mvn_baseline(self._panel)
        rows = [("multivariate normal", self._baseline.criteria)]
        rows.extend((f"mixture ({fit.method} start)", fit.criteria) for fit in self._fits)
        self._writer.add_model_comparison([(name, ic) for name, ic in rows if ic is not None])

        best = self.best
        _, _, correlations = mixture_covariance(best.model)
        names = self._panel.asset_names
        self._writer.add_matrix("Overall correlations (best mixture)", names, correlations)
        baseline_stds = np.sqrt(np.diag(self._baseline.cov))
        self._writer.add_matrix(
            "Overall correlations (multivariate normal)",
            names,
            self._baseline.cov / np.outer(baseline_stds, baseline_stds),
        )
        logger.info(
            "Best joint mixture: %s start, LL=%.6f, multivariate normal LL=%.6f",
            best.method,
            best.log_likelihood,
            self._baseline.log_likelihood,
        )

    def save_models(self):
        """Write a model document per joint fit, and the best one as 'model.yaml'."""

        names = self._panel.asset_names
        for fit in self._fits:
            save_model(
                self._writer.out_dir / f"model_{fit.method}.yaml",
                fit.model,
                names,
                fit.log_likelihood,
            )
        best = self.best
        save_model(self._writer.out_dir / "model.yaml", best.model, names, best.log_likelihood)
