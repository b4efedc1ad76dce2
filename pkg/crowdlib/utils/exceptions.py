from crowdlib.exceptions.exceptions import CrowdLibException


class UnknownFaultError(CrowdLibException):
    description = "unknown fault name. "
