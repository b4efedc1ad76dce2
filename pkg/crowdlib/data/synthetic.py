"""
Synthetic crowd scenes: unit-amplitude Gaussian blobs on a noisy background,
annotated at the blob centers.
"""
import logging
from pathlib import Path
from typing import Union

import numpy as np

from crowdlib.data.annotations import ANNOTATIONS_FILE, write_annotations
from crowdlib.data.exceptions import DatasetExistsError, DatasetSizeError
from crowdlib.data.images import write_pgm
from crowdlib.data.scene import AnnotatedScene
from crowdlib.utils.seeding import make_rng

logger = logging.getLogger(__name__)

BLOB_SIGMA = 2.0
NOISE = 0.05


def render_blobs(points: np.ndarray, size: int, blob_sigma: float) -> np.ndarray:
    """Unclipped sum of unit-amplitude Gaussians sampled at pixel centers."""
    centers = np.arange(size) + 0.5
    field = np.zeros((size, size))
    for x, y in np.asarray(points, dtype=np.float64).reshape(-1, 2):
        rows = np.exp(-((centers - y) ** 2) / (2 * blob_sigma**2))
        cols = np.exp(-((centers - x) ** 2) / (2 * blob_sigma**2))
        field += np.outer(rows, cols)
    return field


def synth_scene(
    rng: np.random.Generator,
    size: int,
    n_points: int,
    blob_sigma: float = BLOB_SIGMA,
    noise: float = NOISE,
    scene_id: str = "synthetic",
) -> AnnotatedScene:
    points = rng.uniform(0.0, size, size=(n_points, 2))
    field = render_blobs(points, size, blob_sigma)
    if noise:
        field = field + noise * rng.random((size, size))
    gray = np.clip(field, 0.0, 1.0).astype(np.float32)
    image = np.repeat(gray[None], 3, axis=0)
    # uniform draws can round up to `size` itself
    points = np.minimum(points, np.nextafter(size, 0))
    return AnnotatedScene(image=image, points=points, id=scene_id)


def synth_scenes(
    n: int,
    size: int = 128,
    seed: int = 0,
    min_points: int = 5,
    max_points: int = 20,
    blob_sigma: float = BLOB_SIGMA,
    noise: float = NOISE,
) -> list[AnnotatedScene]:
    """
    `n` in-memory scenes named scene_0000.pgm, scene_0001.pgm, ... Scene i draws
    its point count uniformly from [min_points, max_points] with its own stream.
    """
    if n < 1:
        raise DatasetSizeError(f"cannot synthesize {n} scenes. ")
    scenes = []
    for index in range(n):
        rng = make_rng(seed, index)
        count = int(rng.integers(min_points, max_points + 1))
        name = f"scene_{index:04d}.pgm"
        scenes.append(synth_scene(rng, size, count, blob_sigma, noise, scene_id=name))
    return scenes


def synth_dataset(
    out_dir: Union[str, Path],
    n: int,
    size: int = 128,
    seed: int = 0,
    min_points: int = 5,
    max_points: int = 20,
    blob_sigma: float = BLOB_SIGMA,
    noise: float = NOISE,
    force: bool = False,
) -> list[AnnotatedScene]:
    """
    Write the scenes of `synth_scenes` as PGM images plus an annotations file
    into `out_dir`.
    """
    if n < 1:
        raise DatasetSizeError(f"cannot synthesize {n} scenes. ")
    out_dir = Path(out_dir)
    if out_dir.exists() and any(out_dir.iterdir()) and not force:
        raise DatasetExistsError(
            f"{out_dir} is not empty; pass force to write into it anyway. "
        )
    out_dir.mkdir(parents=True, exist_ok=True)
    scenes = synth_scenes(
        n, size, seed, min_points, max_points, blob_sigma=blob_sigma, noise=noise
    )
    for scene in scenes:
        write_pgm(out_dir / scene.id, scene.image[0])
    write_annotations(
        out_dir / ANNOTATIONS_FILE, ((scene.id, scene.points) for scene in scenes)
    )
    logger.info("wrote %d synthetic %dx%d scenes to %s", n, size, size, out_dir)
    return scenes
