"""
Network checkpoints

Little-endian layout:

    magic 'BLCK', u32 version = 1
    u32 config length, config as UTF-8 JSON (NetworkConfig.to_dict)
    u32 tensor count, then per tensor:
        u16 name length, UTF-8 name, u8 ndim, ndim x u32 dims,
        prod(dims) float64 values (row-major)

Tensors cover parameters and batchnorm buffers, in network order.
"""

import json
import logging
import struct
from pathlib import Path
from typing import Dict, Union

import numpy as np

from src.utils.errors import FormatError

from .network import Network, NetworkConfig

logger = logging.getLogger(__name__)

MAGIC = b"BLCK"
VERSION = 1


def save_checkpoint(net: Network, path: Union[str, Path]):
    state = net.state_dict()
    chunks = [MAGIC, struct.pack("<I", VERSION)]
    config_blob = json.dumps(net.config.to_dict(), sort_keys=True).encode("utf-8")
    chunks += [struct.pack("<I", len(config_blob)), config_blob, struct.pack("<I", len(state))]
    for name, value in state.items():
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)) + encoded)
        chunks.append(struct.pack("<B", value.ndim) + struct.pack(f"<{value.ndim}I", *value.shape))
        chunks.append(np.ascontiguousarray(value, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(chunks))
    logger.debug(f"Checkpoint written to {path} ({len(state)} tensors)")


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.offset = 0

    def take(self, size: int) -> bytes:
        if self.offset + size > len(self.blob):
            raise FormatError(f"truncated checkpoint: need {size} bytes, {len(self.blob) - self.offset} left",
                              self.offset)
        chunk = self.blob[self.offset:self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path: Union[str, Path]) -> Network:
    """Rebuild the network described by the checkpoint and load its tensors"""
    reader = _Reader(Path(path).read_bytes())
    magic = reader.take(4)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}", 0)
    (version,) = reader.unpack("<I")
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", 4)
    (config_len,) = reader.unpack("<I")
    try:
        config = NetworkConfig.from_dict(json.loads(reader.take(config_len).decode("utf-8")))
    except (ValueError, KeyError, TypeError) as e:
        raise FormatError(f"unreadable network config: {e}", 12) from e

    (count,) = reader.unpack("<I")
    state: Dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = reader.unpack("<H")
        name = reader.take(name_len).decode("utf-8")
        (ndim,) = reader.unpack("<B")
        dims = reader.unpack(f"<{ndim}I")
        size = int(np.prod(dims, dtype=np.int64)) * 8
        values = np.frombuffer(reader.take(size), dtype="<f8").reshape(dims)
        state[name] = values.astype(np.float64)

    net = Network(config)
    net.load_state_dict(state)
    net.eval()
    logger.debug(f"Checkpoint loaded from {path}")
    return net
