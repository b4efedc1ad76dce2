from crowdlib.exceptions.exceptions import CrowdLibException


class ChannelMismatchError(CrowdLibException):
    description = "input channel count does not match the layer. "


class InvalidKernelError(CrowdLibException):
    description = "kernel extent must be a positive odd number. "


class InvalidGroupsError(CrowdLibException):
    description = "groups must divide both input and output channels. "


class ExtentError(CrowdLibException):
    description = "invalid spatial extent for this operation. "


class StateMismatchError(CrowdLibException):
    description = "state does not match the module's parameters. "
