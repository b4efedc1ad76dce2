from crowdlib.exceptions.exceptions import CrowdLibException


class UnknownSuiteError(CrowdLibException):
    description = "no verification suite or group with that name. "


class DuplicateSuiteError(CrowdLibException):
    description = "a verification suite with that name is already registered. "
