"""
Biased dataset generator

Procedural stand-in for colour-biased digit data. Each class owns a
fixed binary glyph (the semantic content); each image paints its glyph
in one palette colour (the bias attribute). Aligned samples use the
palette of their own class, conflicting samples a different palette.
The fraction of conflicting training samples is the diversity ratio.

Split structure: train and val at the diversity ratio, test_aligned with
only aligned samples, test_conflicting with only conflicting ones.
"""

import colorsys
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Tuple

import numpy as np

from src.numerics import Rng
from src.utils.errors import ArgumentError

logger = logging.getLogger(__name__)

GLYPH_GRID = 5
GLYPH_SEED = 0x61797068  # fixed: glyph shapes are class identity, not per-dataset
NOISE_AMPLITUDE = 0.05
DIVERSITY_PRESETS = (0.005, 0.01, 0.05)
SPLIT_NAMES = ("train", "val", "test_aligned", "test_conflicting")


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def parse_diversity(text: str) -> float:
    """'5%' -> 0.05, '0.05' -> 0.05"""
    text = str(text).strip()
    try:
        if text.endswith("%"):
            return float(text[:-1]) / 100.0
        return float(text)
    except ValueError:
        raise ArgumentError(f"cannot parse diversity ratio '{text}'") from None


@dataclass(frozen=True)
class BiasSpec:
    """Recipe for a generated dataset"""
    num_classes: int = 10
    image_shape: Tuple[int, int, int] = (3, 16, 16)
    diversity_ratio: float = 0.05
    train_count: int = 1000
    val_count: int = 200
    test_count: int = 200
    seed: int = 0

    def validate(self):
        if self.num_classes < 2:
            raise ArgumentError(f"num_classes must be >= 2, got {self.num_classes}")
        if len(self.image_shape) != 3 or self.image_shape[0] != 3:
            raise ArgumentError(f"image_shape must be (3, H, W), got {self.image_shape}")
        if self.image_shape[1] < GLYPH_GRID or self.image_shape[2] < GLYPH_GRID:
            raise ArgumentError(f"images must be at least {GLYPH_GRID}x{GLYPH_GRID}")
        if not 0.0 <= self.diversity_ratio < 0.5:
            raise ArgumentError(f"diversity_ratio must lie in [0, 0.5), got {self.diversity_ratio}")
        for name in ("train_count", "val_count", "test_count"):
            if getattr(self, name) < self.num_classes:
                raise ArgumentError(f"{name} must be >= num_classes ({self.num_classes})")

    def conflicting_count(self, count: int) -> int:
        return round_half_up(self.diversity_ratio * count)


@dataclass
class BiasedSample:
    image: np.ndarray
    label: int
    bias_attr: int
    aligned: bool


@dataclass
class DatasetSplit:
    """Column storage for one split: images (n, 3, H, W) float32 in [0, 1]"""
    name: str
    images: np.ndarray
    labels: np.ndarray
    bias_attrs: np.ndarray
    aligned: np.ndarray

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    def __getitem__(self, index: int) -> BiasedSample:
        return BiasedSample(self.images[index], int(self.labels[index]),
                            int(self.bias_attrs[index]), bool(self.aligned[index]))

    @property
    def conflicting_count(self) -> int:
        return int(np.sum(~self.aligned))

    def same_as(self, other: "DatasetSplit") -> bool:
        """Bitwise equality of every column"""
        return (self.images.shape == other.images.shape
                and self.images.tobytes() == other.images.tobytes()
                and np.array_equal(self.labels, other.labels)
                and np.array_equal(self.bias_attrs, other.bias_attrs)
                and np.array_equal(self.aligned, other.aligned))

    @staticmethod
    def concat(name: str, parts: List["DatasetSplit"]) -> "DatasetSplit":
        return DatasetSplit(
            name,
            np.concatenate([p.images for p in parts]),
            np.concatenate([p.labels for p in parts]),
            np.concatenate([p.bias_attrs for p in parts]),
            np.concatenate([p.aligned for p in parts]),
        )


@dataclass
class BiasedDataset:
    spec: BiasSpec
    train: DatasetSplit
    val: DatasetSplit
    test_aligned: DatasetSplit
    test_conflicting: DatasetSplit
    _mixed: DatasetSplit = field(default=None, repr=False, compare=False)

    @property
    def test_mixed(self) -> DatasetSplit:
        """Aligned and conflicting test samples together"""
        if self._mixed is None:
            self._mixed = DatasetSplit.concat("test_mixed", [self.test_aligned, self.test_conflicting])
        return self._mixed

    def splits(self) -> Dict[str, DatasetSplit]:
        return {name: getattr(self, name) for name in SPLIT_NAMES}

    def same_as(self, other: "BiasedDataset") -> bool:
        return all(self.splits()[name].same_as(other.splits()[name]) for name in SPLIT_NAMES)

    @property
    def num_classes(self) -> int:
        return self.spec.num_classes


# ---------------------------------------------------------------------------
# Glyphs and palettes
# ---------------------------------------------------------------------------

def glyph_templates(num_classes: int, height: int, width: int) -> np.ndarray:
    """
    One distinct binary glyph per class, drawn on a 5x5 grid and
    upscaled (nearest) to height x width. Returns (C, H, W) of 0/1.
    """
    rng = Rng(GLYPH_SEED)
    grids: List[np.ndarray] = []
    seen = set()
    while len(grids) < num_classes:
        bits = rng.uniforms(GLYPH_GRID * GLYPH_GRID) < 0.5
        key = bits.tobytes()
        if bits.sum() < 6 or key in seen:
            continue
        seen.add(key)
        grids.append(bits.reshape(GLYPH_GRID, GLYPH_GRID))
    rows = (np.arange(height) * GLYPH_GRID) // height
    cols = (np.arange(width) * GLYPH_GRID) // width
    return np.stack([g[np.ix_(rows, cols)] for g in grids]).astype(np.float64)


def palette(num_classes: int) -> np.ndarray:
    """Fully saturated colours at evenly spaced hues, (C, 3)"""
    return np.array([colorsys.hsv_to_rgb(a / num_classes, 1.0, 1.0) for a in range(num_classes)])


# ---------------------------------------------------------------------------
# Generation
# ---------------------------------------------------------------------------

def _stratify(total: int, num_classes: int) -> np.ndarray:
    """Even split of total over classes; the remainder goes to the lowest class indices"""
    base = np.full(num_classes, total // num_classes, dtype=np.int64)
    base[: total % num_classes] += 1
    return base


def _render(labels: np.ndarray, bias_attrs: np.ndarray, glyphs: np.ndarray,
            colors: np.ndarray, rng: Rng) -> np.ndarray:
    images = glyphs[labels][:, None, :, :] * colors[bias_attrs][:, :, None, None]
    images = images + rng.uniform_array(-NOISE_AMPLITUDE, NOISE_AMPLITUDE, images.shape)
    lo = images.min(axis=(1, 2, 3), keepdims=True)
    hi = images.max(axis=(1, 2, 3), keepdims=True)
    return ((images - lo) / (hi - lo)).astype(np.float32)


def _build_split(name: str, count: int, conflicting: int, spec: BiasSpec,
                 glyphs: np.ndarray, colors: np.ndarray, rng: Rng) -> DatasetSplit:
    num_classes = spec.num_classes
    per_class = _stratify(count, num_classes)
    conflict_per_class = _stratify(conflicting, num_classes)
    if np.any(conflict_per_class > per_class):
        raise ArgumentError(f"{name}: {conflicting} conflicting samples do not fit {count} total")

    labels = np.repeat(np.arange(num_classes), per_class)
    aligned = np.concatenate([
        np.r_[np.zeros(k, dtype=bool), np.ones(m - k, dtype=bool)]
        for m, k in zip(per_class, conflict_per_class)
    ])
    bias_attrs = labels.copy()
    wrong = np.flatnonzero(~aligned)
    offsets = rng.integers(num_classes - 1, wrong.size)
    bias_attrs[wrong] = offsets + (offsets >= labels[wrong])

    order = rng.permutation(count)
    labels, bias_attrs, aligned = labels[order], bias_attrs[order], aligned[order]
    images = _render(labels, bias_attrs, glyphs, colors, rng)
    return DatasetSplit(name, images, labels.astype(np.int64), bias_attrs.astype(np.int64), aligned)


def generate(spec: BiasSpec) -> BiasedDataset:
    """
    Build the four splits. Fully determined by spec (including its seed).

    Raises:
        ArgumentError: inconsistent spec
    """
    spec.validate()
    _, height, width = spec.image_shape
    glyphs = glyph_templates(spec.num_classes, height, width)
    colors = palette(spec.num_classes)
    root = Rng(spec.seed)

    plan = {
        "train": (spec.train_count, spec.conflicting_count(spec.train_count)),
        "val": (spec.val_count, spec.conflicting_count(spec.val_count)),
        "test_aligned": (spec.test_count, 0),
        "test_conflicting": (spec.test_count, spec.test_count),
    }
    splits = {
        name: _build_split(name, count, conflicting, spec, glyphs, colors, root.fork(name))
        for name, (count, conflicting) in plan.items()
    }
    logger.info(f"Generated dataset: {spec.num_classes} classes, diversity {spec.diversity_ratio:.3%}, "
                f"train {spec.train_count} ({splits['train'].conflicting_count} conflicting), "
                f"val {spec.val_count}, test {spec.test_count}+{spec.test_count}")
    return BiasedDataset(spec, **splits)


def with_seed(spec: BiasSpec, seed: int) -> BiasSpec:
    return replace(spec, seed=seed)
