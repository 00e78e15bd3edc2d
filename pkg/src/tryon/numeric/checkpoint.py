"""
Flat binary checkpoint format.

Layout (little-endian):
    magic  b"LFT1"
    version u32
    repeated, sorted by id:
        id length u32, id bytes (utf-8), rank u32, dims u32 * rank, f64 * prod(dims)
"""

import logging
import os
import struct
from typing import Dict, Mapping

import numpy as np

from ..error_handling import CheckpointError

logger = logging.getLogger(__name__)

MAGIC = b"LFT1"
VERSION = 1


def save_checkpoint(path: str, state: Mapping[str, np.ndarray]):
    """Write `state` (id -> array) to `path`, records sorted by id."""
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        for param_id in sorted(state):
            array = np.asarray(state[param_id], dtype="<f8")
            encoded = param_id.encode("utf-8")
            f.write(struct.pack("<I", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<I", array.ndim))
            f.write(struct.pack(f"<{array.ndim}I", *array.shape))
            f.write(np.ascontiguousarray(array).tobytes())
    logger.info(f"Wrote checkpoint {path} ({len(state)} records)")


class _Reader:
    def __init__(self, buffer: bytes, path: str):
        self.buffer = buffer
        self.offset = 0
        self.path = path

    def take(self, count: int, what: str) -> bytes:
        if self.offset + count > len(self.buffer):
            raise CheckpointError(
                f"Truncated checkpoint {self.path}: {what} at byte {self.offset} needs {count} bytes",
                code="LFT-E603",
                suggestions=["The file was probably cut short while writing; re-run training"],
            )
        chunk = self.buffer[self.offset:self.offset + count]
        self.offset += count
        return chunk

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    @property
    def exhausted(self) -> bool:
        return self.offset >= len(self.buffer)


def load_checkpoint(path: str) -> Dict[str, np.ndarray]:
    """
    Read a checkpoint written by `save_checkpoint`.

    Raises:
        CheckpointError: missing file, bad magic or version, truncated record
    """
    if not os.path.isfile(path):
        raise CheckpointError(
            f"Checkpoint not found: {path}",
            code="LFT-E601",
            suggestions=["Run the train command first, or pass the path of model.lft"],
        )
    with open(path, "rb") as f:
        reader = _Reader(f.read(), path)

    if reader.take(4, "magic") != MAGIC:
        raise CheckpointError(f"{path} is not a layerfit checkpoint (bad magic)", code="LFT-E602")
    version = reader.u32("version")
    if version != VERSION:
        raise CheckpointError(f"Unsupported checkpoint version {version} in {path}", code="LFT-E602")

    state: Dict[str, np.ndarray] = {}
    while not reader.exhausted:
        name_length = reader.u32("id length")
        param_id = reader.take(name_length, "id").decode("utf-8")
        rank = reader.u32(f"rank of {param_id}")
        dims = struct.unpack(f"<{rank}I", reader.take(4 * rank, f"dims of {param_id}"))
        count = int(np.prod(dims)) if rank else 1
        data = np.frombuffer(reader.take(8 * count, f"data of {param_id}"), dtype="<f8")
        state[param_id] = data.reshape(dims).astype(np.float64)
    logger.debug(f"Loaded {len(state)} records from {path}")
    return state
