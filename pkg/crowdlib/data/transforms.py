"""
Scene resizing and training augmentation.

Crop windows are half-open, so a point on the right or bottom edge of a window
belongs to the neighbouring window. Horizontal flips map x to extent - x; a point
at x = 0 lands on the excluded edge and is clamped just inside it.
"""
import logging
from typing import Sequence

import numpy as np

from crowdlib.data.scene import AnnotatedScene, clamp_points
from crowdlib.nn.functional import resize_array
from crowdlib.utils.seeding import make_rng

logger = logging.getLogger(__name__)

MAX_SHORTER_SIDE = 2048


def limit_shorter_side(
    scene: AnnotatedScene, max_side: int = MAX_SHORTER_SIDE
) -> AnnotatedScene:
    """Downscale so that the shorter side is at most `max_side`; never upscales."""
    shorter = min(scene.height, scene.width)
    if shorter <= max_side:
        return scene
    ratio = max_side / shorter
    if scene.height <= scene.width:
        height, width = max_side, max(1, round(scene.width * ratio))
    else:
        height, width = max(1, round(scene.height * ratio)), max_side
    image = resize_array(scene.image, height, width)
    points, _ = clamp_points(scene.points * ratio, height, width)
    logger.debug(
        "resized %s from %dx%d to %dx%d", scene.id, scene.height, scene.width, height, width
    )
    return scene.with_image(image, points)


def pad_to_size(scene: AnnotatedScene, size: int) -> AnnotatedScene:
    """Zero-pad on the right and bottom up to `size` on each short axis."""
    pad_h, pad_w = max(0, size - scene.height), max(0, size - scene.width)
    if not pad_h and not pad_w:
        return scene
    image = np.pad(scene.image, ((0, 0), (0, pad_h), (0, pad_w)))
    return scene.with_image(image, scene.points)


def crop(scene: AnnotatedScene, top: int, left: int, size: int) -> AnnotatedScene:
    """The window [left, left + size) x [top, top + size), with points shifted into it."""
    image = scene.image[:, top : top + size, left : left + size]
    x, y = scene.points[:, 0], scene.points[:, 1]
    inside = (x >= left) & (x < left + size) & (y >= top) & (y < top + size)
    points = scene.points[inside] - np.array([left, top], dtype=np.float64)
    return scene.with_image(np.ascontiguousarray(image), points)


def hflip(scene: AnnotatedScene) -> AnnotatedScene:
    """
    Mirror the image columns and map x to width - x. Flipping twice restores the
    image exactly; coordinates come back exactly only when both subtractions are
    exact in floating point (dyadic values), otherwise within a few ulps of the
    width.
    """
    image = np.ascontiguousarray(scene.image[:, :, ::-1])
    points = scene.points.copy()
    points[:, 0] = scene.width - points[:, 0]
    points, _ = clamp_points(points, scene.height, scene.width)
    return scene.with_image(image, points)


def augment(
    scene: AnnotatedScene, crop_size: int, rng: np.random.Generator
) -> AnnotatedScene:
    """
    Uniform random crop_size x crop_size window, then a horizontal flip with
    probability 0.5. Draws top, left and the flip from `rng` in that order.
    """
    scene = pad_to_size(scene, crop_size)
    top = int(rng.integers(0, scene.height - crop_size + 1))
    left = int(rng.integers(0, scene.width - crop_size + 1))
    flip = bool(rng.random() < 0.5)
    cropped = crop(scene, top, left, crop_size)
    return hflip(cropped) if flip else cropped


def validation_split(
    ids: Sequence[str], fraction: float, seed: int
) -> tuple[list[str], list[str]]:
    """
    Seeded shuffle of scene ids into (train, validation). A positive fraction keeps
    at least one validation and one training scene; 0 disables validation.
    """
    ids = list(ids)
    if fraction <= 0 or len(ids) < 2:
        return ids, []
    count = min(len(ids) - 1, max(1, round(fraction * len(ids))))
    order = make_rng(seed).permutation(len(ids))
    held_out = {int(i) for i in order[:count]}
    train = [ids[i] for i in range(len(ids)) if i not in held_out]
    validation = [ids[int(i)] for i in order[:count]]
    return train, validation
