#  Copyright (c) 2023. DataRobot, Inc. and its affiliates.
#  All rights reserved.
#  This is proprietary source code of DataRobot, Inc. and its affiliates.
#  Released under the terms of DataRobot Tool and Utility Agreement.

"""
Persistence of joint models, decumulation plans and simulated samples. Model and plan documents
are YAML files. Floats are written with 17 significant digits, so a model read back is
bit-identical to the one that was written.
"""

import logging
from dataclasses import dataclass

import numpy as np
import yaml

from common.constants import Horizon
from common.constants import MODEL_FLOAT_DIGITS
from common.convertors import FloatConvertor
from common.data_types import UnivariateMixture
from common.exceptions import InvalidModelSchema
from common.exceptions import InvalidPlanSchema
from joint_mixture import JointMixture
from joint_mixture import covariance_pairs
from schema_validator import ModelSchema
from schema_validator import PlanSchema
from simulate_ruin import DecumulationPlan
from simulate_ruin import PortfolioSpec

logger = logging.getLogger()


class _ModelDumper(yaml.SafeDumper):
    """A YAML dumper that writes floats with enough digits to round-trip exactly."""


def _represent_float(dumper, value):
    return dumper.represent_scalar("tag:yaml.org,2002:float", FloatConvertor.to_text(value))


_ModelDumper.add_representer(float, _represent_float)


@dataclass
class StoredModel:
    """A joint model read from a document, along with its metadata."""

    model: JointMixture
    asset_names: list
    log_likelihood: float = None
    free_params: int = None


def _load_document(path, error_class):
    try:
        with open(path, encoding="utf-8") as fd:
            content = yaml.safe_load(fd)
    except OSError as ex:
        raise error_class(f"Failed to read '{path}': {ex.strerror}") from ex
    except yaml.YAMLError as ex:
        raise error_class(f"Failed to parse '{path}': {ex}") from ex
    if not content:
        raise error_class(f"Detected an invalid or empty yaml file: {path}")
    return content


def model_to_document(model: JointMixture, asset_names=None, log_likelihood=None):
    """
    Convert a joint model into a document.

    Parameters
    ----------
    model : joint_mixture.JointMixture
        The model.
    asset_names : list[str] or None
        The asset names. Defaults to generic names.
    log_likelihood : float or None
        The log-likelihood of the model on the data it was fitted on.

    Returns
    -------
    dict,
        The document.
    """

    asset_names = list(asset_names or [f"asset_{j + 1}" for j in range(model.num_assets)])
    document = {
        ModelSchema.ASSETS_KEY: asset_names,
        ModelSchema.MARGINALS_KEY: [
            {
                ModelSchema.NAME_KEY: name,
                ModelSchema.MARGINAL_COMPONENTS_KEY: [
                    {
                        ModelSchema.WEIGHT_KEY: weight,
                        ModelSchema.MEAN_KEY: mean,
                        ModelSchema.STD_KEY: std,
                    }
                    for weight, mean, std in mix.components()
                ],
            }
            for name, mix in zip(asset_names, model.marginals)
        ],
        ModelSchema.COMPONENTS_KEY: [
            {
                ModelSchema.CELL_KEY: list(comps),
                ModelSchema.PROBABILITY_KEY: float(prob),
                ModelSchema.COVARIANCE_KEY: cov.tolist(),
            }
            for comps, prob, cov in zip(model.cells, model.probs, model.covs)
        ],
        ModelSchema.FREE_PARAMS_KEY: model.count_free_params(),
    }
    if log_likelihood is not None:
        ModelSchema.set_value(document, ModelSchema.LOG_LIKELIHOOD_KEY, value=float(log_likelihood))
    return document


def save_model(path, model: JointMixture, asset_names=None, log_likelihood=None):
    """Write a joint model document."""

    document = model_to_document(model, asset_names, log_likelihood)
    with open(path, "w", encoding="utf-8") as fd:
        yaml.dump(document, fd, Dumper=_ModelDumper, sort_keys=False, default_flow_style=None)
    logger.info("Saved a %d-component joint model to %s", model.num_components, path)


def _marginal_from_document(marginal):
    components = marginal[ModelSchema.MARGINAL_COMPONENTS_KEY]
    weights = np.array([c[ModelSchema.WEIGHT_KEY] for c in components])
    means = np.array([c[ModelSchema.MEAN_KEY] for c in components])
    stds = np.array([c[ModelSchema.STD_KEY] for c in components])
    # Cells index the canonical component order, whatever the order in the document.
    order = np.lexsort((stds, means))
    position = np.empty_like(order)
    position[order] = np.arange(order.size)
    return UnivariateMixture(weights, means, stds), position


def model_from_document(document):
    """
    Convert a validated document into a joint model.

    Parameters
    ----------
    document : dict
        A document that complies with ModelSchema.

    Returns
    -------
    StoredModel,
        The model and its metadata. Components without covariances or correlations are
        uncorrelated.
    """

    marginals, positions = zip(*map(_marginal_from_document, document[ModelSchema.MARGINALS_KEY]))
    num_assets = len(marginals)
    components = document[ModelSchema.COMPONENTS_KEY]
    cells, probs = [], []
    covs = np.zeros((len(components), num_assets, num_assets))
    for index, component in enumerate(components):
        try:
            comps = tuple(
                int(positions[j][i]) for j, i in enumerate(component[ModelSchema.CELL_KEY])
            )
        except IndexError as ex:
            raise InvalidModelSchema(
                f"The cell {component[ModelSchema.CELL_KEY]} refers to an unknown component."
            ) from ex
        cells.append(comps)
        probs.append(component[ModelSchema.PROBABILITY_KEY])
        if ModelSchema.COVARIANCE_KEY in component:
            covs[index] = np.asarray(component[ModelSchema.COVARIANCE_KEY], dtype=float)
        elif ModelSchema.CORRELATIONS_KEY in component:
            stds = [marginals[j].stds[comps[j]] for j in range(num_assets)]
            pairs = covariance_pairs(num_assets)
            for (j, k), rho in zip(pairs, component[ModelSchema.CORRELATIONS_KEY]):
                covs[index, j, k] = covs[index, k, j] = rho * stds[j] * stds[k]

    asset_names = document.get(ModelSchema.ASSETS_KEY) or [
        marginal.get(ModelSchema.NAME_KEY, f"asset_{j + 1}")
        for j, marginal in enumerate(document[ModelSchema.MARGINALS_KEY])
    ]
    return StoredModel(
        JointMixture(list(marginals), cells, probs, covs),
        list(asset_names),
        document.get(ModelSchema.LOG_LIKELIHOOD_KEY),
        document.get(ModelSchema.FREE_PARAMS_KEY),
    )


def load_model(path):
    """
    Read and validate a joint model document.

    Parameters
    ----------
    path : str
        The document path.

    Returns
    -------
    StoredModel,
        The model and its metadata.
    """

    document = ModelSchema.validate_and_transform(_load_document(path, InvalidModelSchema))
    stored = model_from_document(document)
    logger.info("Loaded a %d-component joint model from %s", stored.model.num_components, path)
    return stored


def load_plan(path):
    """
    Read and validate a decumulation plan document.

    Parameters
    ----------
    path : str
        The document path.

    Returns
    -------
    simulate_ruin.DecumulationPlan,
        The plan.
    """

    document = PlanSchema.validate_and_transform(_load_document(path, InvalidPlanSchema))
    portfolio = PortfolioSpec(
        np.asarray(document[PlanSchema.WEIGHTS_KEY], dtype=float),
        np.asarray(document[PlanSchema.EXPENSES_KEY], dtype=float),
    )
    horizon = document[PlanSchema.HORIZON_KEY]
    withdrawal_rate = document[PlanSchema.WITHDRAWAL_RATE_KEY]
    if PlanSchema.HORIZON_FIXED_KEY in horizon:
        return DecumulationPlan(
            withdrawal_rate, portfolio, Horizon.FIXED, horizon[PlanSchema.HORIZON_FIXED_KEY]
        )
    return DecumulationPlan(
        withdrawal_rate, portfolio, Horizon.RANDOM, pmf=horizon[PlanSchema.HORIZON_PMF_KEY]
    )


def save_samples(path, samples, asset_names):
    """Write simulated returns, one row per draw, under a commented header of asset names."""

    samples = np.asarray(samples, dtype=float).reshape(-1, len(asset_names))
    np.savetxt(path, samples, fmt=f"%.{MODEL_FLOAT_DIGITS}g", header=" ".join(asset_names))
    logger.info("Saved %d samples to %s", samples.shape[0], path)
