#  Copyright (c) 2023. DataRobot, Inc. and its affiliates.
#  All rights reserved.
#  This is proprietary source code of DataRobot, Inc. and its affiliates.
#  Released under the terms of DataRobot Tool and Utility Agreement.

"""
Writes the human readable report of a run, 'output.txt', and the one line error record of a
failed run, 'issues/error.txt', into an output directory. Joint model parameters are written
with 17 significant digits; summary statistics are rounded.
"""

import logging
from pathlib import Path

import numpy as np

from common.convertors import FloatConvertor

logger = logging.getLogger()


class ReportWriter:
    """Accumulates report sections and writes them into the output directory."""

    REPORT_FILENAME = "output.txt"
    ISSUES_DIRNAME = "issues"
    ERROR_FILENAME = "error.txt"

    def __init__(self, out_dir):
        self._out_dir = Path(out_dir)
        self._out_dir.mkdir(parents=True, exist_ok=True)
        self._sections = []

    @property
    def out_dir(self):
        """The output directory."""

        return self._out_dir

    @property
    def report_path(self):
        """The path of the report file."""

        return self._out_dir / self.REPORT_FILENAME

    @property
    def error_path(self):
        """The path of the error record."""

        return self._out_dir / self.ISSUES_DIRNAME / self.ERROR_FILENAME

    @property
    def sections(self):
        """The (title, lines) sections collected so far."""

        return list(self._sections)

    def add_section(self, title, lines):
        """Append a titled section of text lines."""

        self._sections.append((title, list(lines)))

    @staticmethod
    def format_table(header, rows, precision=6):
        """
        Format rows as whitespace aligned columns.

        Parameters
        ----------
        header : list[str]
            The column titles.
        rows : list[list]
            The rows. Floats are written with the given number of decimals.
        precision : int
            The number of decimals.

        Returns
        -------
        list[str],
            The formatted lines, the header first.
        """

        def _cell(value):
            if isinstance(value, (float, np.floating)):
                return f"{value:.{precision}f}"
            return str(value)

        text_rows = [list(header)] + [[_cell(value) for value in row] for row in rows]
        widths = [max(len(row[index]) for row in text_rows) for index in range(len(header))]
        return [
            "  ".join(value.rjust(width) for value, width in zip(row, widths)).rstrip()
            for row in text_rows
        ]

    def add_univariate_selection(self, asset_name, trace):
        """Report the per size fits, their information criteria and the selection tests."""

        rows = []
        for num_components, fit in sorted(trace.fits_by_g.items()):
            criteria = trace.criteria.get(num_components)
            rows.append(
                [
                    num_components,
                    fit.log_likelihood,
                    criteria.aic if criteria else "-",
                    criteria.aicc if criteria else "-",
                    criteria.bic if criteria else "-",
                ]
            )
        lines = self.format_table(["g", "LL", "AIC", "AICC", "BIC"], rows)
        lines.append("")
        lines.extend(
            self.format_table(
                ["H0", "H1", "lambda", "p-value", "alpha", "phase", "rejected"],
                [
                    [
                        test.h0,
                        test.h1,
                        test.lambda_obs,
                        test.p_value,
                        test.alpha_used,
                        test.direction.value,
                        test.rejected,
                    ]
                    for test in trace.tests
                ],
            )
        )
        lines.append("")
        lines.append(f"Selected components: {trace.chosen_g}")
        lines.extend(
            self.format_table(
                ["weight", "mean", "std"], [list(c) for c in trace.chosen_fit.mixture.components()]
            )
        )
        self.add_section(f"Univariate mixture of {asset_name}", lines)

    def add_cell_counts(self, table):
        """Report the number of time points attributed to every cell."""

        rows = [
            [cell_id, str(comps), int(count), float(count) / table.num_timepoints]
            for cell_id, (comps, count) in enumerate(zip(table.grid.cells, table.counts))
        ]
        self.add_section(
            "Cell counts", self.format_table(["cell", "components", "count", "share"], rows)
        )

    def add_structure(self, solution, grid):
        """Report a structure LP solution next to the empirical cell probabilities."""

        rows = [
            [cell_id, str(grid.tuple_of(cell_id)), solution.empirical[cell_id], prob]
            for cell_id, prob in enumerate(solution.probs)
        ]
        lines = self.format_table(["cell", "components", "empirical", "fitted"], rows)
        lines.append(f"Objective: {solution.objective:.6f}")
        if solution.penalty > 0.0:
            lines.append(f"Penalty (nonzero probability in an unobserved cell): {solution.penalty}")
        self.add_section(f"Structure LP ({solution.method})", lines)

    def add_joint_model(self, title, model, log_likelihood, criteria=None, trace=None):
        """Report the components of a joint mixture, with full precision parameters."""

        num_assets = model.num_assets
        pairs = [(j, k) for j in range(num_assets) for k in range(j + 1, num_assets)]
        correlations = model.correlations()
        determinants = model.determinants()
        rows = []
        for index, comps in enumerate(model.cells):
            rows.append(
                [str(comps), FloatConvertor.to_text(model.probs[index])]
                + [FloatConvertor.to_text(correlations[index, j, k]) for j, k in pairs]
                + [FloatConvertor.to_text(determinants[index])]
            )
        header = ["cell", "probability"] + [f"rho{j + 1}{k + 1}" for j, k in pairs] + ["det"]
        lines = self.format_table(header, rows)
        lines.append(f"LL: {log_likelihood:.6f}")
        lines.append(f"Free parameters: {model.count_free_params()}")
        if criteria is not None:
            lines.append(
                f"AIC: {criteria.aic:.6f}  AICC: {criteria.aicc:.6f}  BIC: {criteria.bic:.6f}"
            )
        if trace is not None:
            lines.append(
                f"ECME iterations: {len(trace.records)}, converged: {trace.converged}, "
                f"Hessian eigenvalues (+/-): {trace.hessian_positive}/{trace.hessian_negative}"
            )
        self.add_section(title, lines)

    def add_model_comparison(self, rows):
        """Report the information criteria of competing models, as (name, ICReport) rows."""

        self.add_section(
            "Model comparison",
            self.format_table(
                ["model", "LL", "params", "AIC", "AICC", "BIC"],
                [
                    [name, ic.log_likelihood, ic.free_params, ic.aic, ic.aicc, ic.bic]
                    for name, ic in rows
                ],
            ),
        )

    def add_matrix(self, title, names, matrix):
        """Report a labeled square matrix."""

        rows = [[name] + [float(value) for value in row] for name, row in zip(names, matrix)]
        self.add_section(title, self.format_table([""] + list(names), rows))

    def add_ruin_report(self, report, plan):
        """Report a ruin simulation: the success probability and the longevity distribution."""

        lines = [
            f"Withdrawal rate: {plan.withdrawal_rate}",
            f"Horizon: {plan.horizon.value}, periods simulated: {plan.max_horizon}",
            f"Paths: {report.num_paths}",
            f"Success probability: {report.success_prob:.6f} (+/- {report.std_error:.6f})",
            f"Longevity mean: {report.longevity.mean:.4f}, median: {report.longevity.median}, "
            f"modes: {report.longevity.modes}",
            "",
        ]
        horizon = report.longevity_pmf.size - 1
        rows = [[f"{period}", report.longevity_pmf[period]] for period in range(horizon)]
        rows.append([f">={horizon}", report.longevity_pmf[horizon]])
        lines.extend(self.format_table(["longevity", "probability"], rows))
        self.add_section("Ruin analysis", lines)

    def add_stress_comparison(self, comparison):
        """Report the success probabilities before and after seeding extreme events."""

        self.add_section(
            "Stress comparison",
            [
                f"Success before: {comparison.before.success_prob:.6f}",
                f"Success after: {comparison.after.success_prob:.6f}",
                f"Change: {comparison.success_change:+.6f}",
            ],
        )

    def add_allocation(self, result, names):
        """Report a static allocation."""

        rows = [[name, weight] for name, weight in zip(names, result.weights)]
        lines = self.format_table(["asset", "weight"], rows)
        lines.append(f"{result.objective.value}: {result.value:.6f}")
        self.add_section("Static allocation", lines)

    def add_diagnostics(self, diagnostics):
        """Report the autocorrelations and the portmanteau test of an asset."""

        rows = [
            [lag, diagnostics.acf[lag], diagnostics.pacf[lag]]
            for lag in range(1, diagnostics.max_lag + 1)
        ]
        lines = self.format_table(["lag", "acf", "pacf"], rows)
        lines.append(f"Significance bound: +/-{diagnostics.significance_bound:.6f}")
        test = diagnostics.portmanteau
        lines.append(f"{test.statistic_name}: Q={test.statistic:.6f}, p-value={test.p_value:.6g}")
        self.add_section(f"Serial correlation of {diagnostics.asset_name}", lines)

    def write(self):
        """Write the collected sections into the report file."""

        with open(self.report_path, "w", encoding="utf-8") as file:
            for title, lines in self._sections:
                file.write(f"== {title} ==\n")
                for line in lines:
                    file.write(f"{line}\n")
                file.write("\n")
        logger.info("Report was written to %s", self.report_path)

    def write_issue(self, ex):
        """Write a one line '<ErrorClass>: <message>' record of a failure."""

        self.error_path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.error_path, "w", encoding="utf-8") as file:
            file.write(f"{type(ex).__name__}: {str(ex).splitlines()[0] if str(ex) else ''}\n")
