"""
PSCK checkpoint files.

Layout (little-endian): magic "PSCK"; u32 tensor count; per tensor a u16 name
length, the UTF-8 name, a u8 rank, rank u32 extents and the row-major float32
values; finally the u32 CRC-32 of every byte between the magic and the checksum.
"""
import struct
import zlib
from pathlib import Path
from typing import Mapping, Union

import numpy as np

from crowdlib.tensors.tensor import Tensor
from crowdlib.training.exceptions import CheckpointFormatError, ChecksumMismatchError

MAGIC = b"PSCK"
_FLOAT = np.dtype("<f4")


def encode_checkpoint(tensors: Mapping[str, Union[Tensor, np.ndarray]]) -> bytes:
    payload = bytearray(struct.pack("<I", len(tensors)))
    for name, value in tensors.items():
        array = value.data if isinstance(value, Tensor) else np.asarray(value)
        encoded = name.encode("utf-8")
        payload += struct.pack("<H", len(encoded)) + encoded
        payload += struct.pack("<B", array.ndim)
        payload += struct.pack(f"<{array.ndim}I", *array.shape)
        payload += np.ascontiguousarray(array, dtype=_FLOAT).tobytes()
    checksum = zlib.crc32(bytes(payload)) & 0xFFFFFFFF
    return MAGIC + bytes(payload) + struct.pack("<I", checksum)


class _Reader:
    def __init__(self, blob: bytes, start: int, stop: int) -> None:
        self.blob, self.offset, self.stop = blob, start, stop

    def take(self, size: int, what: str) -> bytes:
        if self.offset + size > self.stop:
            raise CheckpointFormatError(
                f"checkpoint truncated while reading {what} at byte {self.offset}. "
            )
        chunk = self.blob[self.offset : self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt: str, what: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def decode_checkpoint(blob: bytes) -> dict[str, np.ndarray]:
    """Parse checkpoint bytes into name -> float32 array, in file order."""
    if blob[:4] != MAGIC:
        raise CheckpointFormatError(f"bad checkpoint magic {blob[:4]!r}. ")
    if len(blob) < 12:
        raise CheckpointFormatError(f"checkpoint truncated at {len(blob)} bytes. ")
    payload = blob[4:-4]
    (stored,) = struct.unpack("<I", blob[-4:])
    actual = zlib.crc32(payload) & 0xFFFFFFFF
    if stored != actual:
        raise ChecksumMismatchError(
            f"checkpoint checksum {stored:#010x} does not match payload {actual:#010x}. "
        )
    reader = _Reader(blob, 4, len(blob) - 4)
    (count,) = reader.unpack("<I", "tensor count")
    tensors: dict[str, np.ndarray] = {}
    for index in range(count):
        (length,) = reader.unpack("<H", f"name length of tensor {index}")
        try:
            name = reader.take(length, f"name of tensor {index}").decode("utf-8")
        except UnicodeDecodeError:
            raise CheckpointFormatError(f"name of tensor {index} is not UTF-8. ")
        if name in tensors:
            raise CheckpointFormatError(f"duplicate tensor name {name!r}. ")
        (rank,) = reader.unpack("<B", f"rank of {name!r}")
        shape = reader.unpack(f"<{rank}I", f"extents of {name!r}")
        size = int(np.prod(shape, dtype=np.int64))
        raw = reader.take(size * _FLOAT.itemsize, f"values of {name!r}")
        tensors[name] = np.frombuffer(raw, dtype=_FLOAT).astype(np.float32).reshape(shape)
    if reader.offset != reader.stop:
        raise CheckpointFormatError(
            f"{reader.stop - reader.offset} trailing bytes after {count} tensors. "
        )
    return tensors


def write_checkpoint(
    path: Union[str, Path], tensors: Mapping[str, Union[Tensor, np.ndarray]]
) -> None:
    Path(path).write_bytes(encode_checkpoint(tensors))


def read_checkpoint(path: Union[str, Path]) -> dict[str, np.ndarray]:
    return decode_checkpoint(Path(path).read_bytes())
