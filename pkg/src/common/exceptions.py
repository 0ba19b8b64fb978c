#  Copyright (c) 2023. DataRobot, Inc. and its affiliates.
#  All rights reserved.
#  This is proprietary source code of DataRobot, Inc. and its affiliates.
#  Released under the terms of DataRobot Tool and Utility Agreement.

"""Contains definitions of the exception classes that are used in this repository."""


class GenericException(Exception):
    """A generic exception, which is used as the base of all other exception."""

    def __init__(self, msg, *args, code=-1):
        super().__init__(msg, *args)
        self.code = code


class DomainError(GenericException):
    """Raised when a numeric argument is outside the domain of an operation."""


class InvalidSchema(GenericException):
    """
    Raised when a document does not comply with its schema. It is also used as the base
    exception for the model, plan and control schema exceptions.
    """

    def __init__(self, msg, *args, code=-1):
        super().__init__(msg.split("\n")[-1], *args, code=code)


class InvalidModelSchema(InvalidSchema):
    """Raised when an invalid joint model document is detected."""


class InvalidPlanSchema(InvalidSchema):
    """Raised when an invalid decumulation plan document is detected."""


class InvalidControlSchema(InvalidSchema):
    """Raised when the extended section of a control file is invalid."""


class InvalidControlFile(GenericException):
    """Raised when the control file is missing tokens or holds invalid values."""


class InvalidReturnsFile(GenericException):
    """Raised when a returns file does not hold the expected panel of returns."""


class InfeasibleStart(GenericException):
    """Raised when no valid EM random start could be generated within the retry budget."""


class NoLocalOptimum(GenericException):
    """Raised when none of the EM random starts converged."""


class InferiorLocalOptimum(GenericException):
    """Raised when a larger mixture fits worse than the smaller mixture it was seeded from."""


class CellNotFound(GenericException):
    """Raised when a component tuple does not belong to the cell grid."""


class LPInfeasible(GenericException):
    """Raised when a linear program has no feasible solution."""


class LPUnbounded(GenericException):
    """Raised when a linear program objective is unbounded."""


class LPCyclingGuard(GenericException):
    """Raised when the simplex iterations exceed the configured pivot budget."""


class NotPositiveDefinite(GenericException):
    """Raised when a covariance matrix is not positive definite."""


class SingularHessian(GenericException):
    """Raised when a bordered Hessian stays singular after all the rescaling attempts."""


class DegenerateComponent(GenericException):
    """Raised when a joint component has zero density at every time point."""


class ECMEInternalError(GenericException):
    """Raised when an accepted ECME update lowers the incumbent log-likelihood."""


class NonStationaryProcess(GenericException):
    """Raised when an autoregressive polynomial has a root on or inside the unit circle."""


class UnexpectedType(GenericException):
    """Raised when an unexpected variable or argument type is detected."""


class UnexpectedInput(GenericException):
    """Raised when unexpected input is detected."""


class EmptyKey(GenericException):
    """Raised when an invalid empty key is provided to get a value from a document."""
