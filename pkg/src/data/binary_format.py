"""
Binary dataset files

Little-endian layout:

    magic 'BLDS', u32 version = 1, u32 C, u32 channels, u32 H, u32 W
    then for train, val, test_aligned, test_conflicting in that order:
        u64 count, count records of
            u16 label, u16 bias_attr, u8 aligned, channels*H*W float32 pixels

Records are packed (no padding), so a record is 5 + 4*channels*H*W bytes.
"""

import logging
import struct
from pathlib import Path
from typing import Union

import numpy as np

from src.utils.errors import FormatError

from .biased import SPLIT_NAMES, BiasedDataset, BiasSpec, DatasetSplit

logger = logging.getLogger(__name__)

MAGIC = b"BLDS"
VERSION = 1
HEADER = struct.Struct("<4sIIIII")
COUNT = struct.Struct("<Q")
MAX_PIXELS = 1 << 24


def record_dtype(pixels: int) -> np.dtype:
    return np.dtype([("label", "<u2"), ("bias_attr", "<u2"), ("aligned", "u1"), ("pixels", "<f4", (pixels,))])


def save_binary(ds: BiasedDataset, path: Union[str, Path]):
    channels, height, width = ds.train.images.shape[1:]
    pixels = channels * height * width
    dtype = record_dtype(pixels)
    chunks = [HEADER.pack(MAGIC, VERSION, ds.num_classes, channels, height, width)]
    for name, split in ds.splits().items():
        records = np.zeros(len(split), dtype=dtype)
        records["label"] = split.labels
        records["bias_attr"] = split.bias_attrs
        records["aligned"] = split.aligned
        records["pixels"] = split.images.reshape(len(split), pixels)
        chunks.append(COUNT.pack(len(split)))
        chunks.append(records.tobytes())
    Path(path).write_bytes(b"".join(chunks))
    logger.info(f"Dataset written to {path}")


def load_binary(path: Union[str, Path]) -> BiasedDataset:
    """
    Read a dataset file. Any inconsistency raises FormatError with the byte
    offset where it was detected; nothing is returned on failure.
    """
    blob = Path(path).read_bytes()
    if len(blob) < HEADER.size:
        raise FormatError(f"truncated header: {len(blob)} of {HEADER.size} bytes", len(blob))
    magic, version, num_classes, channels, height, width = HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}", 0)
    if version != VERSION:
        raise FormatError(f"unsupported dataset version {version}", 4)
    if num_classes < 1 or num_classes > 0xFFFF:
        raise FormatError(f"class count {num_classes} out of range", 8)
    pixels = channels * height * width
    if pixels == 0 or pixels > MAX_PIXELS:
        raise FormatError(f"image shape {channels}x{height}x{width} out of range", 12)

    dtype = record_dtype(pixels)
    offset = HEADER.size
    splits = {}
    for name in SPLIT_NAMES:
        if offset + COUNT.size > len(blob):
            raise FormatError(f"truncated before '{name}' count", offset)
        (count,) = COUNT.unpack_from(blob, offset)
        offset += COUNT.size
        available = (len(blob) - offset) // dtype.itemsize
        if count > available:
            raise FormatError(f"'{name}' declares {count} records, only {available} present", offset)
        records = np.frombuffer(blob, dtype=dtype, count=count, offset=offset)
        if count and (records["label"].max() >= num_classes or records["bias_attr"].max() >= num_classes):
            raise FormatError(f"'{name}' has a label or bias attribute >= {num_classes}", offset)
        if count and records["aligned"].max() > 1:
            raise FormatError(f"'{name}' has an aligned flag other than 0/1", offset)
        splits[name] = DatasetSplit(
            name,
            records["pixels"].reshape(count, channels, height, width).astype(np.float32),
            records["label"].astype(np.int64),
            records["bias_attr"].astype(np.int64),
            records["aligned"].astype(bool),
        )
        offset += count * dtype.itemsize

    if offset != len(blob):
        raise FormatError(f"{len(blob) - offset} trailing bytes after the last split", offset)

    train = splits["train"]
    ratio = train.conflicting_count / len(train) if len(train) else 0.0
    spec = BiasSpec(
        num_classes=num_classes,
        image_shape=(channels, height, width),
        diversity_ratio=ratio,
        train_count=len(train),
        val_count=len(splits["val"]),
        test_count=len(splits["test_aligned"]),
    )
    logger.info(f"Dataset loaded from {path}: " + ", ".join(f"{n}={len(s)}" for n, s in splits.items()))
    return BiasedDataset(spec, **splits)
