#!/usr/bin/env python

#  Copyright (c) 2023. DataRobot, Inc. and its affiliates.
#  All rights reserved.
#  This is proprietary source code of DataRobot, Inc. and its affiliates.
#  Released under the terms of DataRobot Tool and Utility Agreement.

"""
The main entry point of the joint mixture toolkit. It fits joint return models with fixed
marginals, samples from saved models, analyzes the ruin of decumulation plans, stress tests them
with extreme events and runs serial correlation diagnostics.
"""

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from common import constants
from common.constants import Horizon
from common.constants import Objective
from common.exceptions import GenericException
from common.github_env import GitHubEnv
from diagnostics import bonferroni_alpha
from diagnostics import diagnose_series
from diagnostics import familywise_error
from input_loader import load_events
from input_loader import parse_control
from input_loader import parse_returns
from mixture_pipeline import MixturePipeline
from model_store import load_model
from model_store import load_plan
from model_store import save_samples
from report_writer import ReportWriter
from simulate_ruin import DecumulationPlan
from simulate_ruin import PortfolioSpec
from simulate_ruin import optimize_static_allocation
from simulate_ruin import sample_joint
from simulate_ruin import seed_black_swans
from simulate_ruin import simulate_ruin
from simulate_ruin import stress_compare

logger = logging.getLogger()

SAMPLES_FILENAME = "samples.txt"


def _add_fit_inputs(parser):
    parser.add_argument("--config", required=True, help="The control file.")
    parser.add_argument("--data", required=True, help="The returns file.")


def _add_common(parser, paths=False):
    parser.add_argument("--out", required=True, help="The output directory.")
    parser.add_argument("--seed", type=int, help="The seed of the random streams.")
    parser.add_argument("--threads", type=int, help="The number of worker threads.")
    if paths:
        parser.add_argument(
            "--paths",
            type=int,
            default=constants.RUIN_PATHS,
            help="The number of simulated paths.",
        )


def argparse_options(args=None):
    """
    Retrieve command line arguments.

    Parameters
    ----------
    args : list or None
        A list of arguments.

    Returns
    -------
    argparse.Namespace,
        The command line argument values.
    """

    parser = argparse.ArgumentParser(description=__doc__)
    subparsers = parser.add_subparsers(dest="command", required=True)

    fit_parser = subparsers.add_parser("fit", help="Fit a joint mixture to a returns panel.")
    _add_fit_inputs(fit_parser)
    _add_common(fit_parser)

    sample_parser = subparsers.add_parser("sample", help="Draw returns from a saved model.")
    sample_parser.add_argument("--model", required=True, help="The model document.")
    sample_parser.add_argument("--n", type=int, required=True, help="The number of draws.")
    _add_common(sample_parser)

    ruin_parser = subparsers.add_parser("ruin", help="Analyze the ruin of a decumulation plan.")
    ruin_parser.add_argument("--model", required=True, help="The model document.")
    ruin_parser.add_argument("--plan", required=True, help="The plan document.")
    ruin_parser.add_argument(
        "--optimize",
        action="store_true",
        help="Whether to also search the constant weights of the largest success probability.",
    )
    ruin_parser.add_argument(
        "--lattice-step",
        type=float,
        default=constants.LATTICE_STEP,
        help="The weight lattice step of the allocation search.",
    )
    _add_common(ruin_parser, paths=True)

    stress_parser = subparsers.add_parser(
        "stress", help="Compare the ruin of a plan before and after seeding extreme events."
    )
    _add_fit_inputs(stress_parser)
    stress_parser.add_argument("--events", required=True, help="The extreme events file.")
    stress_parser.add_argument("--plan", required=True, help="The plan document.")
    _add_common(stress_parser, paths=True)

    diagnose_parser = subparsers.add_parser(
        "diagnose", help="Serial correlation diagnostics of every asset."
    )
    _add_fit_inputs(diagnose_parser)
    diagnose_parser.add_argument("--max-lag", type=int, help="The number of lags, T/4 if unset.")
    diagnose_parser.add_argument(
        "--statistic", choices=["ljung-box", "box-pierce"], default="ljung-box"
    )
    diagnose_parser.add_argument(
        "--alpha", type=float, default=0.05, help="The familywise significance level."
    )
    _add_common(diagnose_parser)

    minvar_parser = subparsers.add_parser(
        "minvar", help="The minimum variance constant allocation of a saved model."
    )
    minvar_parser.add_argument("--model", required=True, help="The model document.")
    minvar_parser.add_argument("--plan", help="A plan document that provides expense ratios.")
    _add_common(minvar_parser)

    options = parser.parse_args(args)
    logger.debug("Command line args: %s", options)

    return options


def setup_log_configuration():
    """
    Setup logging configuration.
    """

    log_level = os.environ.get("LOGLEVEL", "INFO").upper()
    log_format = "%(asctime)s [%(levelname)s]  %(message)s"
    try:
        logging.basicConfig(format=log_format, level=log_level)
    except ValueError:
        logging.basicConfig(format=log_format, level=logging.INFO)


def _load_fit_inputs(options):
    config = parse_control(options.config).with_overrides(options.seed, options.threads)
    panel = parse_returns(options.data, config.n_assets, config.n_timepoints, config.asset_names)
    return config, panel


def _rng(options):
    return np.random.default_rng(options.seed)


def run_fit(options):
    """Fit a joint mixture and write the report and the model documents."""

    config, panel = _load_fit_inputs(options)
    best = MixturePipeline(config, panel, options.out).run()
    GitHubEnv.set_output_param("log-likelihood", best.log_likelihood)


def run_sample(options):
    """Draw returns from a saved model into a text file."""

    if options.n < 0:
        raise GenericException(f"The number of draws must be nonnegative: {options.n}")
    stored = load_model(options.model)
    samples = sample_joint(stored.model, options.n, _rng(options))
    out_dir = Path(options.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_samples(out_dir / SAMPLES_FILENAME, samples, stored.asset_names)


def run_ruin(options):
    """Simulate the ruin of a plan under a saved model."""

    stored = load_model(options.model)
    plan = load_plan(options.plan)
    rng = _rng(options)
    writer = ReportWriter(options.out)
    try:
        report = simulate_ruin(plan, stored.model, options.paths, rng, options.threads or 1)
        writer.add_ruin_report(report, plan)
        GitHubEnv.set_output_param("success-probability", report.success_prob)
        if options.optimize:
            result = optimize_static_allocation(
                plan,
                stored.model,
                Objective.MAX_SUCCESS,
                rng,
                options.paths,
                options.lattice_step,
            )
            writer.add_allocation(result, stored.asset_names)
    finally:
        writer.write()


def run_stress(options):
    """Refit after seeding extreme events and compare the ruin of a plan under both fits."""

    config, panel = _load_fit_inputs(options)
    events = load_events(options.events, panel.num_assets)
    plan = load_plan(options.plan)
    out_dir = Path(options.out)
    before = MixturePipeline(config, panel, out_dir / "before").run()
    after = MixturePipeline(config, seed_black_swans(panel, events), out_dir / "after").run()
    seed = config.seed if config.seed is not None else int(_rng(options).integers(2**31))
    comparison = stress_compare(plan, before.model, after.model, options.paths, seed)

    writer = ReportWriter(out_dir)
    writer.add_section("Seeded events", [" ".join(f"{v:.6f}" for v in row) for row in events])
    writer.add_stress_comparison(comparison)
    writer.add_ruin_report(comparison.before, plan)
    writer.add_ruin_report(comparison.after, plan)
    writer.write()
    GitHubEnv.set_output_param("success-change", comparison.success_change)


def run_diagnose(options):
    """Write the serial correlation diagnostics of every asset."""

    config, panel = _load_fit_inputs(options)
    writer = ReportWriter(options.out)
    for index, name in enumerate(panel.asset_names):
        writer.add_diagnostics(
            diagnose_series(name, panel.column(index), options.max_lag, options.statistic)
        )
    writer.add_section(
        "Multiple testing",
        [
            f"Tests: {config.n_assets}",
            f"Per test alpha (Bonferroni): {bonferroni_alpha(options.alpha, config.n_assets):.6f}",
            "Familywise error without adjustment: "
            f"{familywise_error(options.alpha, config.n_assets):.6f}",
        ],
    )
    writer.write()


def run_minvar(options):
    """Write the minimum variance constant allocation of a saved model."""

    stored = load_model(options.model)
    num_assets = stored.model.num_assets
    if options.plan:
        plan = load_plan(options.plan)
    else:
        portfolio = PortfolioSpec(np.full(num_assets, 1.0 / num_assets), np.zeros(num_assets))
        plan = DecumulationPlan(0.0, portfolio, Horizon.FIXED, 1)
    result = optimize_static_allocation(plan, stored.model, Objective.MIN_VARIANCE)
    writer = ReportWriter(options.out)
    writer.add_allocation(result, stored.asset_names)
    writer.write()


COMMANDS = {
    "fit": run_fit,
    "sample": run_sample,
    "ruin": run_ruin,
    "stress": run_stress,
    "diagnose": run_diagnose,
    "minvar": run_minvar,
}


def main(args=None):
    """
    The main entry point method of the toolkit. The method makes sure to catch any exception
    and to exit the program with a proper exit code. The exit is being called only when the
    method is being called as a standalone program (from a command line). Otherwise, the
    exception is just re-raised for handling in higher layers.

    Parameters
    ----------
    args : list or None
        An optional list of command line arguments.
    """

    setup_log_configuration()
    options = argparse_options(args)

    try:
        COMMANDS[options.command](options)
        GitHubEnv.set_output_param("message", f"The {options.command} command completed.")
    except GenericException as ex:
        # Avoid printing the stacktrace
        logger.error("%s: %s", type(ex).__name__, ex)
        ReportWriter(options.out).write_issue(ex)
        GitHubEnv.set_output_param("message", str(ex))
        if args:
            # It was called from the functional tests
            raise ex
        sys.exit(ex.code)


if __name__ == "__main__":
    main()
