from dataclasses import dataclass

import numpy as np

from crowdlib.data.exceptions import SceneBoundsError


@dataclass(frozen=True)
class AnnotatedScene:
    """
    A 3 x H x W image in [0, 1] with its head annotations.

    `points` is an N x 2 array of continuous (x, y) coordinates satisfying
    0 <= x < W and 0 <= y < H.
    """

    image: np.ndarray
    points: np.ndarray
    id: str

    def __post_init__(self) -> None:
        if self.image.ndim != 3 or self.image.shape[0] != 3:
            raise SceneBoundsError(
                f"scene {self.id!r}: image must be 3 x H x W, got {self.image.shape}. "
            )
        points = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)
        object.__setattr__(self, "points", points)
        if len(points) == 0:
            return
        x, y = points[:, 0], points[:, 1]
        outside = (x < 0) | (x >= self.width) | (y < 0) | (y >= self.height)
        if outside.any():
            first = int(np.flatnonzero(outside)[0])
            raise SceneBoundsError(
                f"scene {self.id!r}: point {first} at {tuple(points[first])} lies "
                f"outside the {self.width}x{self.height} image. "
            )

    @property
    def height(self) -> int:
        return self.image.shape[1]

    @property
    def width(self) -> int:
        return self.image.shape[2]

    @property
    def count(self) -> int:
        return len(self.points)

    def with_image(self, image: np.ndarray, points: np.ndarray) -> "AnnotatedScene":
        return AnnotatedScene(image=image, points=points, id=self.id)


def clamp_points(
    points: np.ndarray, height: int, width: int
) -> tuple[np.ndarray, int]:
    """Clamp to [0, W) x [0, H); the upper edge maps to the largest float below it."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    upper = np.array([np.nextafter(width, 0), np.nextafter(height, 0)])
    clamped = np.clip(points, 0.0, upper)
    moved = int(np.any(clamped != points, axis=1).sum())
    return clamped, moved
