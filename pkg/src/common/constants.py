#  Copyright (c) 2023. DataRobot, Inc. and its affiliates.
#  All rights reserved.
#  This is proprietary source code of DataRobot, Inc. and its affiliates.
#  Released under the terms of DataRobot Tool and Utility Agreement.

"""Contains common constants."""

from enum import Enum

# EM tuning
STD_RATIO_BOUND = 16.0
EPSILON = 0.1**15
NEGATIVE_LL_SENTINEL = -(9.0**10)
EM_MAX_ITERS = 10**9
STARTS_PER_COMPONENT = 200
START_RETRY_BUDGET = 10_000
ORIGINAL_START_MULTIPLIER = 3

# Model selection
FORWARD_ALPHA = 0.25
BACKWARD_ALPHA = 0.25

# Structure LPs
LP_PENALTY = 10.0**6
LP_SEGMENTS = 500
LP_ZERO_TOLERANCE = 1e-9
LP_PIVOT_BUDGET = 50_000

# Covariance repair & ECME step 2
RIDGE_MULT_MIN = 2.0
RIDGE_MULT_MAX = 10.0
RIDGE_MAX_ITERS = 2_000
PD_MIN_EIGENVALUE = 0.1**13
DET_MIN = 0.1**13
LM_STEPS_PER_THREAD = 1_000
LM_THREAD_MULTIPLIER = 2
LM_BEAT_POOL = 80
LM_CONVERGENCE_SCALE = 10.0**6
LM_MAX_ITERATIONS = 200
STEP1_MAX_ITERS = 1_000
HESSIAN_RESCALE_CAP = 10.0**10

# Ruin simulation
RUIN_PATHS = 100_000
PATH_BLOCK_SIZE = 10_000
LATTICE_STEP = 0.05

MODEL_FLOAT_DIGITS = 17


class EMStatus(Enum):
    """Termination reasons of a single EM run."""

    CONVERGED = "converged"
    VARIANCE_RATIO_VIOLATED = "variance-ratio-violated"
    MAX_ITERS = "max-iters"
    DEGENERATE_WEIGHT = "degenerate-weight"


class Direction(Enum):
    """The phase of the forward-backward selection in which a test was decided."""

    FORWARD = "forward"
    BACKWARD = "backward"


class LPStatus(Enum):
    """Linear program outcomes."""

    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


class Objective(Enum):
    """Static allocation objectives."""

    MAX_SUCCESS = "max-success"
    MIN_VARIANCE = "min-variance"


class Horizon(Enum):
    """Kinds of decumulation horizons."""

    FIXED = "fixed"
    RANDOM = "random"
