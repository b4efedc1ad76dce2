"""
DMF1 density raster files: magic "DMF1", height and width as little-endian u32,
then height * width little-endian float32 values in row-major order.
"""
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from crowdlib.data.exceptions import RasterFormatError

MAGIC = b"DMF1"
HEADER = struct.Struct("<4sII")
_FLOAT = np.dtype("<f4")


@dataclass(frozen=True)
class DensityRaster:
    values: np.ndarray

    def __post_init__(self) -> None:
        if self.values.ndim != 2:
            raise RasterFormatError(
                f"density raster must be two-dimensional, got {self.values.shape}. "
            )
        if not np.all(np.isfinite(self.values)):
            raise RasterFormatError("density raster contains non-finite values. ")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def mass(self) -> float:
        return float(self.values.sum(dtype=np.float64))


def encode_raster(raster: DensityRaster) -> bytes:
    values = np.ascontiguousarray(raster.values, dtype=_FLOAT)
    return HEADER.pack(MAGIC, raster.height, raster.width) + values.tobytes()


def decode_raster(blob: bytes) -> DensityRaster:
    if len(blob) < HEADER.size:
        raise RasterFormatError(f"raster truncated: {len(blob)} header bytes. ")
    magic, height, width = HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise RasterFormatError(f"bad raster magic {magic!r}. ")
    expected = height * width * _FLOAT.itemsize
    available = len(blob) - HEADER.size
    if expected > available:
        raise RasterFormatError(
            f"raster of {height}x{width} needs {expected} payload bytes, "
            f"file holds {available}. "
        )
    if expected < available:
        raise RasterFormatError(
            f"{available - expected} trailing bytes after a {height}x{width} raster. "
        )
    values = np.frombuffer(blob, dtype=_FLOAT, offset=HEADER.size)
    return DensityRaster(values.astype(np.float32).reshape(height, width))


def write_raster(path: Union[str, Path], raster: DensityRaster) -> None:
    Path(path).write_bytes(encode_raster(raster))


def read_raster(path: Union[str, Path]) -> DensityRaster:
    return decode_raster(Path(path).read_bytes())
