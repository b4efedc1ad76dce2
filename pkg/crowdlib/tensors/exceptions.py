from crowdlib.exceptions.exceptions import CrowdLibException


class ShapeMismatchError(CrowdLibException):
    description = "tensor shapes cannot be broadcast together. "


class InvalidAxisError(CrowdLibException):
    description = "axis index out of range for tensor rank. "


class NonFiniteError(CrowdLibException):
    description = "an operation produced NaN or Inf values. "


class NonScalarBackwardError(CrowdLibException):
    description = "backward requires a loss tensor with exactly one element. "


class TapeConsumedError(CrowdLibException):
    description = "the computation tape of this tensor was already consumed. "


class PrecisionError(CrowdLibException):
    description = "operation requires a different engine precision. "


class LeafUpdateError(CrowdLibException):
    description = "only leaf tensors (parameters, buffers) can be updated in place. "


class InvalidEpsilonError(CrowdLibException):
    description = "epsilon must be nonnegative. "


class UnknownOperationError(CrowdLibException):
    description = "unknown operation kind. "
