from crowdlib.exceptions.exceptions import CrowdLibException


class AnnotationFormatError(CrowdLibException):
    description = "malformed annotation line. "


class MissingImageError(CrowdLibException):
    description = "annotated image file does not exist. "


class ImageDecodeError(CrowdLibException):
    description = "image is not an 8-bit binary PGM or PPM file. "


class RasterFormatError(CrowdLibException):
    description = "density raster file is malformed. "


class SceneBoundsError(CrowdLibException):
    description = "scene points must lie inside the image. "


class InvalidSplatError(CrowdLibException):
    description = "Gaussian splat sigma must be positive. "


class DatasetExistsError(CrowdLibException):
    description = "output directory is not empty. "


class DatasetSizeError(CrowdLibException):
    description = "a synthetic dataset needs at least one scene. "
