"""
Posterior assignment of output cells to annotation points.

For cell center x_m and point z_n the log-likelihood is -|x_m - z_n|^2 / (2 sigma^2).
The background class scores -(d_m - d)^2 / (2 sigma^2), where d_m is the distance
to the nearest point and d the background margin. Rows are normalized with
max-subtracted exponentials.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from crowdlib.supervision.config import SupervisionConfig
from crowdlib.supervision.exceptions import InvalidBandwidthError

BACKGROUND = 0


def grid_coordinates(out_h: int, out_w: int, stride: int = 8) -> np.ndarray:
    """M x 2 input-space (x, y) centers of the output cells, row-major."""
    rows, cols = np.meshgrid(np.arange(out_h), np.arange(out_w), indexing="ij")
    half = stride / 2
    return np.stack(
        [stride * cols.ravel() + half, stride * rows.ravel() + half], axis=1
    ).astype(np.float64)


@dataclass(frozen=True)
class PosteriorMatrix:
    """M x (N + 1) probabilities; column 0 is the background class."""

    probabilities: np.ndarray
    use_background: bool

    @property
    def num_cells(self) -> int:
        return self.probabilities.shape[0]

    @property
    def num_points(self) -> int:
        return self.probabilities.shape[1] - 1

    def row_sums(self) -> np.ndarray:
        return self.probabilities.sum(axis=1)


def _inferred_extents(grid: np.ndarray) -> tuple[float, float]:
    # centers sit half a stride inside the edges
    width = grid[:, 0].max() + grid[:, 0].min()
    height = grid[:, 1].max() + grid[:, 1].min()
    return height, width


def build_posterior(
    points: np.ndarray,
    grid: np.ndarray,
    config: SupervisionConfig,
    margin: Optional[float] = None,
) -> PosteriorMatrix:
    """
    `margin` is the background distance d; by default it is derived from the
    extents covered by `grid`.
    """
    if config.sigma <= 0:
        raise InvalidBandwidthError(f"sigma must be positive, got {config.sigma}. ")
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    cells = grid.shape[0]
    if len(points) == 0:
        return PosteriorMatrix(np.ones((cells, 1)), config.use_background)

    if margin is None:
        margin = config.background_margin(*_inferred_extents(grid))
    scale = 2 * config.sigma**2
    offsets = grid[:, None, :] - points[None, :, :]
    squared = (offsets * offsets).sum(axis=2)
    logits = np.empty((cells, len(points) + 1))
    logits[:, 1:] = -squared / scale
    if config.use_background:
        nearest = np.sqrt(squared.min(axis=1))
        logits[:, BACKGROUND] = -((nearest - margin) ** 2) / scale
    else:
        logits[:, BACKGROUND] = -np.inf
    logits -= logits.max(axis=1, keepdims=True)
    weights = np.exp(logits)
    return PosteriorMatrix(
        weights / weights.sum(axis=1, keepdims=True), config.use_background
    )
