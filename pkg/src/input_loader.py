#  Copyright (c) 2023. DataRobot, Inc. and its affiliates.
#  All rights reserved.
#  This is proprietary source code of DataRobot, Inc. and its affiliates.
#  Released under the terms of DataRobot Tool and Utility Agreement.

"""
Loaders of the two text inputs of a fit: the control file and the returns file.

A control file starts with seven whitespace separated values: the number of assets, the number
of time points, the random starts multiplier, the maximum number of univariate components, the
number of bootstrap samples and the forward and backward significance levels. An optional
'[extended]' section follows, holding one 'key=value' setting per line. Text after a '#' is a
comment in both files.
"""

import dataclasses
import logging
import re
from dataclasses import dataclass
from dataclasses import field

import numpy as np

from common.convertors import FloatConvertor
from common.data_types import ReturnsPanel
from common.exceptions import InvalidControlFile
from common.exceptions import InvalidReturnsFile
from common.exceptions import UnexpectedInput
from ecme_fit import LMConfig
from lp_structure import LPConfig
from model_selection import SelectionConfig
from schema_validator import ControlSchema
from univariate_em import EMConfig

logger = logging.getLogger()

EXTENDED_SECTION_PATTERN = re.compile(r"^\s*\[extended\]\s*$", re.IGNORECASE)


def _default_extended():
    return ControlSchema.validate_and_transform({})


@dataclass
class ControlConfig:
    """The settings of a fit, as read from a control file."""

    n_assets: int
    n_timepoints: int
    starts_multiplier: int
    max_components: int
    bootstrap_samples: int
    forward_alpha: float
    backward_alpha: float
    extended: dict = field(default_factory=_default_extended)

    CORE_FIELDS = (
        ("n_assets", int),
        ("n_timepoints", int),
        ("starts_multiplier", int),
        ("max_components", int),
        ("bootstrap_samples", int),
        ("forward_alpha", float),
        ("backward_alpha", float),
    )

    def __post_init__(self):
        for name, kind in self.CORE_FIELDS:
            value = getattr(self, name)
            if kind is int and value < 1:
                raise InvalidControlFile(f"The {name} value must be a positive integer: {value}")
            if kind is float and not 0.0 < value < 1.0:
                raise InvalidControlFile(f"The {name} value must be in (0, 1): {value}")

    @property
    def seed(self):
        """The seed of the random streams, or None for a fresh seed."""

        return self.extended[ControlSchema.SEED_KEY]

    @property
    def threads(self):
        """The number of worker threads."""

        return self.extended[ControlSchema.THREADS_KEY]

    @property
    def asset_names(self):
        """The configured asset names, possibly empty."""

        return self.extended[ControlSchema.ASSET_NAMES_KEY]

    def with_overrides(self, seed=None, threads=None):
        """A copy of the configuration with command line overrides applied."""

        extended = dict(self.extended)
        if seed is not None:
            extended[ControlSchema.SEED_KEY] = seed
        if threads is not None:
            extended[ControlSchema.THREADS_KEY] = threads
        return dataclasses.replace(self, extended=extended)

    def em_config(self):
        """The EM configuration. The starts multiplier sets the starts per extra component."""

        return EMConfig(
            std_ratio_bound=self.extended[ControlSchema.STD_RATIO_BOUND_KEY],
            epsilon=self.extended[ControlSchema.EPSILON_KEY],
            max_iters=self.extended[ControlSchema.EM_MAX_ITERS_KEY],
            starts_per_component=self.starts_multiplier,
            workers=self.threads,
        )

    def selection_config(self):
        """The forward-backward selection configuration."""

        return SelectionConfig(
            max_components=self.max_components,
            bootstrap_samples=self.bootstrap_samples,
            forward_alpha=self.forward_alpha,
            backward_alpha=self.backward_alpha,
            em=self.em_config(),
            original_start_multiplier=self.extended[ControlSchema.ORIGINAL_START_MULTIPLIER_KEY],
            workers=self.threads,
        )

    def lp_config(self):
        """The structure LP configuration."""

        return LPConfig(
            penalty=self.extended[ControlSchema.LP_PENALTY_KEY],
            segments=self.extended[ControlSchema.LP_SEGMENTS_KEY],
            zero_tolerance=self.extended[ControlSchema.LP_ZERO_TOLERANCE_KEY],
            backend=self.extended[ControlSchema.LP_BACKEND_KEY],
        )

    def lm_config(self):
        """The ECME configuration."""

        return LMConfig(
            steps_per_thread=self.extended[ControlSchema.LM_STEPS_PER_THREAD_KEY],
            thread_multiplier=self.extended[ControlSchema.LM_THREAD_MULTIPLIER_KEY],
            beat_pool=self.extended[ControlSchema.LM_BEAT_POOL_KEY],
            ridge_mult_min=self.extended[ControlSchema.LM_RIDGE_MIN_KEY],
            ridge_mult_max=self.extended[ControlSchema.LM_RIDGE_MAX_KEY],
            epsilon=self.extended[ControlSchema.EPSILON_KEY],
            max_iterations=self.extended[ControlSchema.LM_MAX_ITERATIONS_KEY],
            workers=self.threads,
        )


def _strip_comment(line):
    return line.split("#", 1)[0].strip()


def _read_lines(path, error_class):
    try:
        with open(path, "r", encoding="utf-8") as file:
            return file.read().splitlines()
    except OSError as ex:
        raise error_class(f"Failed to read '{path}': {ex.strerror}") from ex


def _parse_extended(lines):
    settings = {}
    for line in lines:
        line = _strip_comment(line)
        if not line:
            continue
        key, separator, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not separator or not key:
            raise InvalidControlFile(f"Expecting a 'key=value' extended setting, got: '{line}'")
        if key in settings:
            raise InvalidControlFile(f"The extended setting '{key}' is defined more than once.")
        settings[key] = value
    return ControlSchema.validate_and_transform(settings)


def parse_control(path):
    """
    Load a control file.

    Parameters
    ----------
    path : str
        The control file path.

    Returns
    -------
    ControlConfig,
        The settings, with defaults for the absent extended settings.
    """

    lines = _read_lines(path, InvalidControlFile)
    split_at = next(
        (index for index, line in enumerate(lines) if EXTENDED_SECTION_PATTERN.match(line)),
        len(lines),
    )
    tokens = " ".join(_strip_comment(line) for line in lines[:split_at]).split()

    names = [name for name, _ in ControlConfig.CORE_FIELDS]
    if len(tokens) < len(names):
        missing = names[len(tokens) :]
        raise InvalidControlFile(
            f"The control file is missing {len(missing)} fields: {', '.join(missing)}"
        )
    if len(tokens) > len(names):
        raise InvalidControlFile(
            f"The control file holds {len(tokens)} values, expecting {len(names)}: "
            f"{', '.join(names)}"
        )

    values = {}
    for token, (name, kind) in zip(tokens, ControlConfig.CORE_FIELDS):
        try:
            if kind is int:
                values[name] = FloatConvertor.to_int(token, name)
            else:
                values[name] = FloatConvertor.to_float(token, name)
        except UnexpectedInput as ex:
            raise InvalidControlFile(str(ex)) from ex

    extended = _parse_extended(lines[split_at + 1 :])
    config = ControlConfig(**values, extended=extended)
    logger.debug("Control settings: %s", config)
    return config


def parse_returns(path, n_assets, n_timepoints, asset_names=None):
    """
    Load a returns file. The values are read in row-major time order, so a row may wrap over
    several lines. Values beyond the expected panel are ignored.

    Parameters
    ----------
    path : str
        The returns file path.
    n_assets : int
        The number of assets N, i.e. the number of columns.
    n_timepoints : int
        The number of time points T, i.e. the number of rows.
    asset_names : list[str] or None
        Optional asset names.

    Returns
    -------
    common.data_types.ReturnsPanel,
        The T x N panel.
    """

    values = []
    for line_number, line in enumerate(_read_lines(path, InvalidReturnsFile), start=1):
        for token in _strip_comment(line).split():
            try:
                values.append(FloatConvertor.to_float(token, f"line {line_number}"))
            except UnexpectedInput as ex:
                raise InvalidReturnsFile(str(ex)) from ex

    expected = n_assets * n_timepoints
    if len(values) < expected:
        raise InvalidReturnsFile(
            f"The returns file should have {n_timepoints} rows of returns, found "
            f"{len(values) // n_assets} rows of {n_assets} returns."
        )
    if len(values) > expected:
        logger.warning(
            "The returns file holds %d values, only the first %d are used.", len(values), expected
        )
    matrix = np.array(values[:expected], dtype=float).reshape(n_timepoints, n_assets)
    return ReturnsPanel(matrix, list(asset_names or []))


def load_events(path, n_assets):
    """
    Load extreme event returns, one line of N compounding returns per event.

    Returns
    -------
    numpy.ndarray,
        A k x N matrix, possibly with no rows.
    """

    events = []
    for line_number, line in enumerate(_read_lines(path, InvalidReturnsFile), start=1):
        tokens = _strip_comment(line).split()
        if not tokens:
            continue
        if len(tokens) != n_assets:
            raise InvalidReturnsFile(
                f"Line {line_number} of the events file should have {n_assets} returns, "
                f"found: {len(tokens)}"
            )
        try:
            events.append([FloatConvertor.to_float(t, f"line {line_number}") for t in tokens])
        except UnexpectedInput as ex:
            raise InvalidReturnsFile(str(ex)) from ex
    return np.array(events, dtype=float).reshape(-1, n_assets)
