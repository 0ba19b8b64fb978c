#  Copyright (c) 2023. DataRobot, Inc. and its affiliates.
#  All rights reserved.
#  This is proprietary source code of DataRobot, Inc. and its affiliates.
#  Released under the terms of DataRobot Tool and Utility Agreement.

"""
A module that contains schema validators for the extended control settings, joint model
documents and decumulation plan documents.
"""

import logging

import numpy as np
from schema import And
from schema import Optional
from schema import Or
from schema import Schema
from schema import SchemaError
from schema import Use

from common import constants
from common.convertors import FloatConvertor
from common.exceptions import EmptyKey
from common.exceptions import InvalidControlSchema
from common.exceptions import InvalidModelSchema
from common.exceptions import InvalidPlanSchema
from common.exceptions import InvalidSchema
from common.exceptions import UnexpectedType

logger = logging.getLogger()


def _float(value):
    return FloatConvertor.to_float(value)


def _int(value):
    return FloatConvertor.to_int(value)


def _names(value):
    if isinstance(value, str):
        value = [name.strip() for name in value.split(",")]
    return value


class SharedSchema:
    """
    A shared schema that contains attributes and methods that are shared between the control,
    model and plan schemas.
    """

    SCHEMA_EXCEPTION = InvalidSchema

    @classmethod
    def _validate_and_transform_single(cls, schema, metadata):
        try:
            transformed = schema.validate(metadata)
        except SchemaError as ex:
            raise cls.SCHEMA_EXCEPTION(ex.code) from ex
        cls._validate_single_transformed(transformed)
        return transformed

    @classmethod
    def _validate_single_transformed(cls, single_transformed_metadata):
        cls._validate_mutual_exclusive_keys(single_transformed_metadata)
        cls._validate_dependent_keys(single_transformed_metadata)
        cls._validate_data_integrity(single_transformed_metadata)

    @classmethod
    def _validate_mutual_exclusive_keys(cls, single_transformed_metadata):
        """
        Validates mutual exclusive keys in a single transformed metadata.
        Expected to be implemented by inherited class.

        Parameters
        ----------
        single_transformed_metadata : dict
            A metadata representation of a single entity after validation and transformation.
        """

    @classmethod
    def _validate_dependent_keys(cls, single_transformed_metadata):
        """
        Validates dependent keys in a single transformed metadata.
        Expected to be implemented by inherited class.

        Parameters
        ----------
        single_transformed_metadata : dict
            A metadata representation of a single entity after validation and transformation.
        """

    @classmethod
    def _validate_data_integrity(cls, single_transformed_metadata):
        """
        Validates data integrity in a single transformed metadata.
        Expected to be implemented by inherited class.

        Parameters
        ----------
        single_transformed_metadata : dict
            A metadata representation of a single entity after validation and transformation.
        """

    @staticmethod
    def get_value(metadata: dict, key, *sub_keys):
        """
        Extract a value from the metadata, for a given key hierarchy. The assumption is that parent
        keys are always dictionaries.

        Parameters
        ----------
        metadata : dict
            A metadata dictionary.
        key: str
           A top level metadata key.
        sub_keys : list[str]
            Optional. A variable number of strings, representing sub-keys under the 'key' argument.

        Returns
        -------
            A value or None
        """

        if not isinstance(metadata, dict):
            raise UnexpectedType(
                "Expecting first argument (metadata) to be a dict! "
                f"type: {type(metadata)}, value: '{metadata}'"
            )
        if not key:
            raise EmptyKey("An invalid empty key is provided to read a value from.")

        value = metadata.get(key)
        for sub_key in sub_keys:
            if not isinstance(value, dict):
                return None
            value = value.get(sub_key)
        return value

    @staticmethod
    def set_value(metadata: dict, key, *sub_keys, value):
        """
        Set a value in the metadata. If the key(s) do not exist, they'll be added.

        Parameters
        ----------
        metadata : dict
            The metadata.
        key: str
            A key name from the associated metadata schema.
        sub_keys: tuple
            Optional sub-keys, which are expected to reside under the top level key.
        value : Any
            A value to set

        Returns
        -------
        dict,
            The revised metadata after the value was set.
        """

        if not isinstance(metadata, dict):
            raise UnexpectedType(
                "Expecting first argument (metadata) to be a dict! "
                f"type: {type(metadata)}, value: '{metadata}'"
            )

        section = metadata
        keys = (key,) + sub_keys
        for a_key in keys[:-1]:
            if a_key not in section:
                section[a_key] = {}
            section = section[a_key]
            if not isinstance(section, dict):
                raise UnexpectedType(
                    f"A section in a metadata is expected to be a dict. Section: {section}"
                )
        section[keys[-1]] = value

        return metadata


class ControlSchema(SharedSchema):
    """
    A schema definition of the optional extended section of a control file. Values arrive as
    text and are converted, defaults are filled in for absent keys.
    """

    SCHEMA_EXCEPTION = InvalidControlSchema

    SEED_KEY = "seed"
    STD_RATIO_BOUND_KEY = "std_ratio_bound"
    EPSILON_KEY = "epsilon"
    EM_MAX_ITERS_KEY = "em_max_iters"
    LP_PENALTY_KEY = "lp_penalty"
    LP_SEGMENTS_KEY = "lp_segments"
    LP_ZERO_TOLERANCE_KEY = "lp_zero_tolerance"
    LP_BACKEND_KEY = "lp_backend"
    LM_STEPS_PER_THREAD_KEY = "lm_steps_per_thread"
    LM_THREAD_MULTIPLIER_KEY = "lm_thread_multiplier"
    LM_BEAT_POOL_KEY = "lm_beat_pool"
    LM_RIDGE_MIN_KEY = "lm_ridge_min"
    LM_RIDGE_MAX_KEY = "lm_ridge_max"
    LM_MAX_ITERATIONS_KEY = "lm_max_iterations"
    THREADS_KEY = "threads"
    ORIGINAL_START_MULTIPLIER_KEY = "original_start_multiplier"
    ASSET_NAMES_KEY = "asset_names"

    CONTROL_SCHEMA = Schema(
        {
            Optional(SEED_KEY, default=None): Or(None, And(Use(_int), lambda v: v >= 0)),
            Optional(STD_RATIO_BOUND_KEY, default=constants.STD_RATIO_BOUND): And(
                Use(_float), lambda v: v >= 1.0
            ),
            Optional(EPSILON_KEY, default=constants.EPSILON): And(Use(_float), lambda v: v > 0),
            Optional(EM_MAX_ITERS_KEY, default=constants.EM_MAX_ITERS): And(
                Use(_int), lambda v: v > 0
            ),
            Optional(LP_PENALTY_KEY, default=constants.LP_PENALTY): And(
                Use(_float), lambda v: v > 0
            ),
            Optional(LP_SEGMENTS_KEY, default=constants.LP_SEGMENTS): And(
                Use(_int), lambda v: v > 0
            ),
            Optional(LP_ZERO_TOLERANCE_KEY, default=constants.LP_ZERO_TOLERANCE): And(
                Use(_float), lambda v: v >= 0
            ),
            Optional(LP_BACKEND_KEY, default="simplex"): Or("simplex", "highs"),
            Optional(LM_STEPS_PER_THREAD_KEY, default=constants.LM_STEPS_PER_THREAD): And(
                Use(_int), lambda v: v > 0
            ),
            Optional(LM_THREAD_MULTIPLIER_KEY, default=constants.LM_THREAD_MULTIPLIER): And(
                Use(_int), lambda v: v > 0
            ),
            Optional(LM_BEAT_POOL_KEY, default=constants.LM_BEAT_POOL): And(
                Use(_int), lambda v: v > 0
            ),
            Optional(LM_RIDGE_MIN_KEY, default=constants.RIDGE_MULT_MIN): And(
                Use(_float), lambda v: v > 0
            ),
            Optional(LM_RIDGE_MAX_KEY, default=constants.RIDGE_MULT_MAX): And(
                Use(_float), lambda v: v > 0
            ),
            Optional(LM_MAX_ITERATIONS_KEY, default=constants.LM_MAX_ITERATIONS): And(
                Use(_int), lambda v: v > 0
            ),
            Optional(THREADS_KEY, default=1): And(Use(_int), lambda v: v > 0),
            Optional(
                ORIGINAL_START_MULTIPLIER_KEY, default=constants.ORIGINAL_START_MULTIPLIER
            ): And(Use(_int), lambda v: v > 0),
            Optional(ASSET_NAMES_KEY, default=[]): And(
                Use(_names), list, lambda names: all(isinstance(n, str) and n for n in names)
            ),
        }
    )

    @classmethod
    def validate_and_transform(cls, extended_metadata):
        """
        Validate the extended control settings and fill in the defaults.

        Parameters
        ----------
        extended_metadata : dict
            The raw key/value pairs of the extended section.

        Returns
        -------
        dict,
            The converted settings.
        """

        settings = cls._validate_and_transform_single(cls.CONTROL_SCHEMA, extended_metadata)
        logger.debug("Extended control settings are valid: %s", settings)
        return settings

    @classmethod
    def _validate_data_integrity(cls, single_transformed_metadata):
        ridge_min = single_transformed_metadata[cls.LM_RIDGE_MIN_KEY]
        ridge_max = single_transformed_metadata[cls.LM_RIDGE_MAX_KEY]
        if ridge_min >= ridge_max:
            raise InvalidControlSchema(
                f"The ridge multiplier range is empty, min: {ridge_min}, max: {ridge_max}."
            )
        if ridge_min < constants.RIDGE_MULT_MIN or ridge_max > constants.RIDGE_MULT_MAX:
            raise InvalidControlSchema(
                f"The ridge multipliers must be within [{constants.RIDGE_MULT_MIN}, "
                f"{constants.RIDGE_MULT_MAX}]."
            )


class ModelSchema(SharedSchema):
    """
    A schema definition of a joint mixture document. A component defines either its full
    covariance matrix or the correlations of its asset pairs, never both.
    """

    SCHEMA_EXCEPTION = InvalidModelSchema

    ASSETS_KEY = "assets"
    MARGINALS_KEY = "marginals"
    NAME_KEY = "name"
    MARGINAL_COMPONENTS_KEY = "components"
    WEIGHT_KEY = "weight"
    MEAN_KEY = "mean"
    STD_KEY = "std"
    COMPONENTS_KEY = "components"
    CELL_KEY = "cell"
    PROBABILITY_KEY = "probability"
    COVARIANCE_KEY = "covariance"
    CORRELATIONS_KEY = "correlations"
    LOG_LIKELIHOOD_KEY = "log_likelihood"
    FREE_PARAMS_KEY = "free_params"

    MODEL_SCHEMA = Schema(
        {
            Optional(ASSETS_KEY): And(list, len, lambda l: all(isinstance(n, str) for n in l)),
            MARGINALS_KEY: And(
                [
                    {
                        Optional(NAME_KEY): And(str, len),
                        MARGINAL_COMPONENTS_KEY: And(
                            [
                                {
                                    WEIGHT_KEY: And(Use(_float), lambda v: 0 < v <= 1),
                                    MEAN_KEY: Use(_float),
                                    STD_KEY: And(Use(_float), lambda v: v > 0),
                                }
                            ],
                            len,
                        ),
                    }
                ],
                len,
            ),
            COMPONENTS_KEY: And(
                [
                    {
                        CELL_KEY: And([And(int, lambda v: v >= 0)], len),
                        PROBABILITY_KEY: And(Use(_float), lambda v: 0 < v <= 1),
                        Optional(COVARIANCE_KEY): [[Use(_float)]],
                        Optional(CORRELATIONS_KEY): [And(Use(_float), lambda v: -1 < v < 1)],
                    }
                ],
                len,
            ),
            Optional(LOG_LIKELIHOOD_KEY): Use(_float),
            Optional(FREE_PARAMS_KEY): And(int, lambda v: v >= 0),
        }
    )

    @classmethod
    def validate_and_transform(cls, model_metadata):
        """
        Validate a joint model document and convert its numeric values.

        Parameters
        ----------
        model_metadata : dict
            The loaded document.

        Returns
        -------
        dict,
            The converted document.
        """

        model_metadata = cls._validate_and_transform_single(cls.MODEL_SCHEMA, model_metadata)
        logger.debug(
            "Model document is valid (%d components).", len(model_metadata[cls.COMPONENTS_KEY])
        )
        return model_metadata

    @classmethod
    def _validate_mutual_exclusive_keys(cls, single_transformed_metadata):
        mutual_exclusive_keys = {cls.COVARIANCE_KEY, cls.CORRELATIONS_KEY}
        for component in single_transformed_metadata[cls.COMPONENTS_KEY]:
            if len(mutual_exclusive_keys & component.keys()) > 1:
                raise InvalidModelSchema(f"Only one of '{mutual_exclusive_keys}' keys is allowed.")

    @classmethod
    def _validate_dependent_keys(cls, single_transformed_metadata):
        num_assets = len(single_transformed_metadata[cls.MARGINALS_KEY])
        assets = single_transformed_metadata.get(cls.ASSETS_KEY)
        if assets is not None and len(assets) != num_assets:
            raise InvalidModelSchema(
                f"The model lists {len(assets)} assets but defines {num_assets} marginals."
            )
        num_pairs = num_assets * (num_assets - 1) // 2
        for component in single_transformed_metadata[cls.COMPONENTS_KEY]:
            if len(component[cls.CELL_KEY]) != num_assets:
                raise InvalidModelSchema(
                    f"The cell {component[cls.CELL_KEY]} must hold one index per asset "
                    f"({num_assets})."
                )
            correlations = component.get(cls.CORRELATIONS_KEY)
            if correlations is not None and len(correlations) != num_pairs:
                raise InvalidModelSchema(
                    f"Expecting {num_pairs} correlations in cell {component[cls.CELL_KEY]}, "
                    f"got: {len(correlations)}"
                )
            covariance = component.get(cls.COVARIANCE_KEY)
            if covariance is not None and np.shape(covariance) != (num_assets, num_assets):
                raise InvalidModelSchema(
                    f"Expecting a {num_assets}x{num_assets} covariance in cell "
                    f"{component[cls.CELL_KEY]}."
                )

    @classmethod
    def _validate_data_integrity(cls, single_transformed_metadata):
        for marginal in single_transformed_metadata[cls.MARGINALS_KEY]:
            total = sum(c[cls.WEIGHT_KEY] for c in marginal[cls.MARGINAL_COMPONENTS_KEY])
            if abs(total - 1.0) > 1e-9:
                raise InvalidModelSchema(
                    f"The weights of marginal '{marginal.get(cls.NAME_KEY)}' sum to {total!r}."
                )
        total = sum(c[cls.PROBABILITY_KEY] for c in single_transformed_metadata[cls.COMPONENTS_KEY])
        if abs(total - 1.0) > 1e-9:
            raise InvalidModelSchema(f"The component probabilities sum to {total!r}.")


class PlanSchema(SharedSchema):
    """
    A schema definition of a decumulation plan document. The horizon is either a fixed number of
    periods or a probability mass function over 0..T periods.
    """

    SCHEMA_EXCEPTION = InvalidPlanSchema

    WITHDRAWAL_RATE_KEY = "withdrawal_rate"
    HORIZON_KEY = "horizon"
    HORIZON_FIXED_KEY = "fixed"
    HORIZON_PMF_KEY = "pmf"
    WEIGHTS_KEY = "weights"
    EXPENSES_KEY = "expenses"

    PLAN_SCHEMA = Schema(
        {
            WITHDRAWAL_RATE_KEY: And(Use(_float), lambda v: v >= 0),
            HORIZON_KEY: {
                Optional(HORIZON_FIXED_KEY): And(int, lambda v: v > 0),
                Optional(HORIZON_PMF_KEY): And([And(Use(_float), lambda v: v >= 0)], len),
            },
            WEIGHTS_KEY: Or(
                And([And(Use(_float), lambda v: v >= 0)], len),
                And([And([And(Use(_float), lambda v: v >= 0)], len)], len),
            ),
            Optional(EXPENSES_KEY): [And(Use(_float), lambda v: 0 <= v < 1)],
        }
    )

    @classmethod
    def validate_and_transform(cls, plan_metadata):
        """
        Validate a decumulation plan document and convert its numeric values.

        Parameters
        ----------
        plan_metadata : dict
            The loaded document.

        Returns
        -------
        dict,
            The converted document. Absent expenses default to zero.
        """

        plan_metadata = cls._validate_and_transform_single(cls.PLAN_SCHEMA, plan_metadata)
        weights = np.asarray(plan_metadata[cls.WEIGHTS_KEY], dtype=float)
        if cls.EXPENSES_KEY not in plan_metadata:
            cls.set_value(plan_metadata, cls.EXPENSES_KEY, value=[0.0] * weights.shape[-1])
        logger.debug("Plan document is valid.")
        return plan_metadata

    @classmethod
    def _validate_mutual_exclusive_keys(cls, single_transformed_metadata):
        horizon = single_transformed_metadata[cls.HORIZON_KEY]
        mutual_exclusive_keys = {cls.HORIZON_FIXED_KEY, cls.HORIZON_PMF_KEY}
        if len(mutual_exclusive_keys & horizon.keys()) != 1:
            raise InvalidPlanSchema(f"Exactly one of '{mutual_exclusive_keys}' keys is required.")

    @classmethod
    def _validate_dependent_keys(cls, single_transformed_metadata):
        weights = single_transformed_metadata[cls.WEIGHTS_KEY]
        if isinstance(weights[0], list) and len({len(row) for row in weights}) != 1:
            raise InvalidPlanSchema("Every period must define the same number of weights.")
        expenses = single_transformed_metadata.get(cls.EXPENSES_KEY)
        num_assets = len(weights[0]) if isinstance(weights[0], list) else len(weights)
        if expenses is not None and len(expenses) != num_assets:
            raise InvalidPlanSchema(
                f"Expecting {num_assets} expense ratios, got: {len(expenses)}"
            )

    @classmethod
    def _validate_data_integrity(cls, single_transformed_metadata):
        weights = np.atleast_2d(np.asarray(single_transformed_metadata[cls.WEIGHTS_KEY], float))
        if not np.allclose(weights.sum(axis=1), 1.0, rtol=0.0, atol=1e-9):
            raise InvalidPlanSchema(f"The weights must sum to 1: {weights.sum(axis=1)}")
        pmf = cls.get_value(single_transformed_metadata, cls.HORIZON_KEY, cls.HORIZON_PMF_KEY)
        if pmf is not None and abs(sum(pmf) - 1.0) > 1e-9:
            raise InvalidPlanSchema(f"The horizon pmf must sum to 1, sum: {sum(pmf)!r}")
