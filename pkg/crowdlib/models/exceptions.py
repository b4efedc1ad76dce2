from crowdlib.exceptions.exceptions import CrowdLibException


class StrideAlignmentError(CrowdLibException):
    description = "input extents must be multiples of the backbone stride. "


class WeightFileError(CrowdLibException):
    description = "external weight file does not match the backbone. "
