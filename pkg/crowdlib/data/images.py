"""
Binary 8-bit PGM (P5) and PPM (P6) images.

Decoded images are 3 x H x W float32 arrays in [0, 1]; grayscale is replicated
to three channels.
"""
import re
from pathlib import Path
from typing import Union

import numpy as np

from crowdlib.data.exceptions import ImageDecodeError

_CHANNELS = {b"P5": 1, b"P6": 3}
_HEADER = re.compile(
    rb"(P[56])(?:\s|#[^\n]*\n)+(\d+)(?:\s|#[^\n]*\n)+(\d+)(?:\s|#[^\n]*\n)+(\d+)\s"
)


def decode_pnm(blob: bytes, source: str = "image") -> np.ndarray:
    match = _HEADER.match(blob)
    if match is None:
        raise ImageDecodeError(f"{source} has no binary PGM/PPM header. ")
    kind, width, height, maxval = match.groups()
    width, height, maxval = int(width), int(height), int(maxval)
    if maxval != 255:
        raise ImageDecodeError(f"{source} has maxval {maxval}; only 8-bit is supported. ")
    if width < 1 or height < 1:
        raise ImageDecodeError(f"{source} has empty extents {width}x{height}. ")
    channels = _CHANNELS[kind]
    size = width * height * channels
    raw = blob[match.end() : match.end() + size]
    if len(raw) != size:
        raise ImageDecodeError(
            f"{source} holds {len(raw)} of {size} pixel bytes for {width}x{height}. "
        )
    pixels = np.frombuffer(raw, dtype=np.uint8).reshape(height, width, channels)
    image = pixels.transpose(2, 0, 1).astype(np.float32) / np.float32(255)
    if channels == 1:
        image = np.repeat(image, 3, axis=0)
    return image


def read_pnm(path: Union[str, Path]) -> np.ndarray:
    path = Path(path)
    return decode_pnm(path.read_bytes(), source=str(path))


def to_bytes(values: np.ndarray) -> np.ndarray:
    """[0, 1] floats to rounded 8-bit levels."""
    return np.clip(np.rint(np.asarray(values) * 255), 0, 255).astype(np.uint8)


def write_pgm(path: Union[str, Path], gray: np.ndarray) -> None:
    """Write an H x W array of [0, 1] values."""
    height, width = gray.shape
    header = f"P5\n{width} {height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + to_bytes(gray).tobytes())


def write_ppm(path: Union[str, Path], image: np.ndarray) -> None:
    """Write a 3 x H x W array of [0, 1] values."""
    _, height, width = image.shape
    header = f"P6\n{width} {height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + to_bytes(image.transpose(1, 2, 0)).tobytes())
