from crowdlib.exceptions.exceptions import CrowdLibException


class InvalidBandwidthError(CrowdLibException):
    description = "Gaussian bandwidth sigma must be positive. "


class PosteriorShapeError(CrowdLibException):
    description = "posterior rows do not match the density cells. "
