from crowdlib.exceptions.exceptions import CrowdLibException


class CheckpointFormatError(CrowdLibException):
    description = "checkpoint file is malformed. "


class ChecksumMismatchError(CheckpointFormatError):
    description = "checkpoint checksum does not match its payload. "


class GradientMismatchError(CrowdLibException):
    description = "gradients do not match the trainable parameters. "


class NonFiniteLossError(CrowdLibException):
    description = "training produced a non-finite loss. "


class InsufficientDataError(CrowdLibException):
    description = "training needs at least two scenes. "


class EmptyEvaluationError(CrowdLibException):
    description = "no scenes to evaluate. "
