from crowdlib.exceptions.exceptions import CrowdLibException


class ConfigError(CrowdLibException):
    description = "invalid run configuration. "


class MissingDataError(CrowdLibException):
    description = "data directory has no annotations file. "
