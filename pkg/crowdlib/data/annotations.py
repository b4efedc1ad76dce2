"""
JSON Lines annotation files.

Each line describes one scene: {"image": <path relative to the file>,
"points": [[x, y], ...]}. Lines are parsed eagerly; images are decoded only when
a scene is loaded.
"""
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Iterable, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, ValidationError

from crowdlib.data.exceptions import AnnotationFormatError, MissingImageError
from crowdlib.data.images import read_pnm
from crowdlib.data.scene import AnnotatedScene, clamp_points
from crowdlib.data.transforms import limit_shorter_side

logger = logging.getLogger(__name__)

ANNOTATIONS_FILE = "annotations.jsonl"


class AnnotationLine(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid", allow_inf_nan=False)

    image: str
    points: list[tuple[float, float]]


class SceneDescriptor(BaseModel):
    """A parsed annotation line, resolved against the annotation file's directory."""

    model_config = ConfigDict(frozen=True)

    image_path: Path
    points: tuple[tuple[float, float], ...]
    id: str
    line: int

    def read(self) -> tuple[AnnotatedScene, int]:
        """Decode the image; returns the scene and the number of clamped points."""
        if not self.image_path.is_file():
            raise MissingImageError(
                f"line {self.line}: image {str(self.image_path)!r} does not exist. "
            )
        image = read_pnm(self.image_path)
        points, clamped = clamp_points(
            np.asarray(self.points, dtype=np.float64).reshape(-1, 2),
            height=image.shape[1],
            width=image.shape[2],
        )
        return AnnotatedScene(image=image, points=points, id=self.id), clamped

    def load(self) -> AnnotatedScene:
        return self.read()[0]


def load_annotations(path: Union[str, Path]) -> list[SceneDescriptor]:
    path = Path(path)
    root = path.parent
    descriptors: list[SceneDescriptor] = []
    with path.open(encoding="utf-8") as lines:
        for number, text in enumerate(lines, start=1):
            if not text.strip():
                continue
            try:
                entry = AnnotationLine.model_validate_json(text)
            except ValidationError as error:
                reason = error.errors()[0]["msg"]
                raise AnnotationFormatError(
                    f"{path}: line {number}: {reason}. "
                ) from None
            descriptors.append(
                SceneDescriptor(
                    image_path=root / entry.image,
                    points=tuple(entry.points),
                    id=entry.image,
                    line=number,
                )
            )
    logger.debug("parsed %d annotation lines from %s", len(descriptors), path)
    return descriptors


def load_scenes(
    path: Union[str, Path],
    max_shorter_side: Optional[int] = None,
    threads: int = 1,
) -> list[AnnotatedScene]:
    """
    Load every scene of an annotation file in file order, downscaling images whose
    shorter side exceeds `max_shorter_side`.
    """
    descriptors = load_annotations(path)
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        loaded = list(pool.map(SceneDescriptor.read, descriptors))
    clamped = sum(count for _, count in loaded)
    if clamped:
        logger.warning(
            "clamped %d out-of-bounds points into their images in %s", clamped, path
        )
    scenes = [scene for scene, _ in loaded]
    if max_shorter_side is not None:
        scenes = [limit_shorter_side(scene, max_shorter_side) for scene in scenes]
    return scenes


def write_annotations(
    path: Union[str, Path], entries: Iterable[tuple[str, np.ndarray]]
) -> None:
    """Write (relative image path, N x 2 points) pairs, one JSON object per line."""
    with Path(path).open("w", encoding="utf-8") as out:
        for image, points in entries:
            rows = np.asarray(points, dtype=np.float64).reshape(-1, 2).tolist()
            out.write(json.dumps({"image": image, "points": rows}) + "\n")
