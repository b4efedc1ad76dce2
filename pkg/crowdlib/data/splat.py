import numpy as np

from crowdlib.data.exceptions import InvalidSplatError
from crowdlib.data.rasters import DensityRaster


def _axis_weights(center: float, extent: int, sigma: float) -> np.ndarray:
    """
    Gaussian sampled at pixel centers, normalized over an untruncated support and
    then cut to [0, extent).
    """
    reach = int(np.ceil(6 * sigma)) + 1
    start = int(np.floor(center)) - reach
    positions = np.arange(start, start + 2 * reach + 1) + 0.5
    weights = np.exp(-((positions - center) ** 2) / (2 * sigma**2))
    weights /= weights.sum()
    inside = np.zeros(extent)
    lo, hi = max(start, 0), min(start + len(weights), extent)
    if lo < hi:
        inside[lo:hi] = weights[lo - start : hi - start]
    return inside


def gaussian_splat(
    points: np.ndarray, height: int, width: int, sigma: float
) -> DensityRaster:
    """
    Ground-truth density: one unit-mass discretized Gaussian per point, truncated at
    the raster edges (so the total mass can fall below the point count).
    """
    if sigma <= 0:
        raise InvalidSplatError(f"splat sigma must be positive, got {sigma}. ")
    values = np.zeros((height, width))
    for x, y in np.asarray(points, dtype=np.float64).reshape(-1, 2):
        values += np.outer(
            _axis_weights(y, height, sigma), _axis_weights(x, width, sigma)
        )
    return DensityRaster(values.astype(np.float32))
