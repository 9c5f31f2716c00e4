"""
Layer-by-layer similarity matrices

`layer_similarity` compares every pair of captured layers of one network
with mini-batch CKA and stores the result as a SimilarityMatrix, which
serialises to a plain text grid:

    block1.conv1 block1.bn1 ...        <- header: layer names
    1 0.912345678 ...                  <- one row per line, 9 significant digits
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence, Union

import numpy as np

from src.numerics import flatten_samples
from src.utils.errors import ArgumentError, DegenerateInputError, FormatError, ShapeError

from .hsic import HsicTerms, gram_linear, hsic_from_terms, ratio_from_sums

logger = logging.getLogger(__name__)

# reported values never go below -DISPLAY_EPSILON; stored values keep the raw estimate
DISPLAY_EPSILON = 0.01


@dataclass
class SimilarityMatrix:
    values: np.ndarray
    layer_names: List[str] = field(default_factory=list)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[0] != self.values.shape[1]:
            raise ShapeError(f"similarity matrix must be square, got {self.values.shape}")
        if not self.layer_names:
            self.layer_names = [f"layer{i}" for i in range(self.size)]
        if len(self.layer_names) != self.size:
            raise ArgumentError(f"{len(self.layer_names)} layer names for a {self.size}x{self.size} matrix")
        if any(not name or any(ch.isspace() for ch in name) for name in self.layer_names):
            raise ArgumentError("layer names must be non-empty and contain no whitespace")

    @property
    def size(self) -> int:
        return int(self.values.shape[0])

    def is_symmetric(self, tol: float = 1e-8) -> bool:
        return bool(np.all(np.abs(self.values - self.values.T) <= tol))

    def display_values(self, eps: float = DISPLAY_EPSILON) -> np.ndarray:
        """Values for heatmaps, with unbiased-estimator negatives clamped at -eps"""
        return np.maximum(self.values, -eps)

    def to_text(self) -> str:
        lines = [" ".join(self.layer_names)]
        lines += [" ".join(format(v, ".9g") for v in row) for row in self.values]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "SimilarityMatrix":
        lines = [line for line in text.splitlines() if line.strip()]
        if not lines:
            raise FormatError("empty similarity grid", 0)
        names = lines[0].split()
        try:
            rows = [[float(v) for v in line.split()] for line in lines[1:]]
        except ValueError as e:
            raise FormatError(f"unreadable similarity grid: {e}") from e
        if len(rows) != len(names) or any(len(row) != len(names) for row in rows):
            raise FormatError(f"similarity grid is not {len(names)}x{len(names)}")
        return cls(np.array(rows, dtype=np.float64).reshape(len(names), len(names)), names)

    def save(self, path: Union[str, Path]):
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path: Union[str, Path]) -> "SimilarityMatrix":
        return cls.from_text(Path(path).read_text())


def _layer_names(trace_batches: Sequence) -> List[str]:
    if not trace_batches:
        raise ArgumentError("layer_similarity needs at least one trace batch")
    names = trace_batches[0].names
    for i, trace in enumerate(trace_batches[1:], start=1):
        if trace.names != names:
            raise ArgumentError(f"trace batch {i} has a different layer list")
    if len(names) == 0:
        raise ArgumentError("traces contain no layers")
    return names


def layer_similarity(trace_batches: Sequence) -> SimilarityMatrix:
    """
    S[i, j] = mini-batch CKA between layers i and j over all trace batches.

    Every batch is one eval-mode ActivationTrace of the same network on a
    different set of >= 4 samples. The diagonal is exactly 1. A layer with
    no variance in any batch gets similarity 0 to every other layer.
    """
    names = _layer_names(trace_batches)
    num_layers = len(names)

    # per batch, per layer Gram terms; the per-pair HSIC sums accumulate across batches
    pair_terms: Dict[tuple, List[float]] = {(i, j): [] for i in range(num_layers) for j in range(i, num_layers)}
    for trace in trace_batches:
        terms = [HsicTerms.from_gram(gram_linear(flatten_samples(act))) for _, act in trace.entries]
        for (i, j), acc in pair_terms.items():
            acc.append(hsic_from_terms(terms[i], terms[j]))

    self_sums = [math.fsum(pair_terms[(i, i)]) for i in range(num_layers)]
    values = np.eye(num_layers)
    for i in range(num_layers):
        for j in range(i + 1, num_layers):
            try:
                value = ratio_from_sums(math.fsum(pair_terms[(i, j)]), self_sums[i], self_sums[j])
            except DegenerateInputError:
                logger.warning(f"No variance in '{names[i]}' or '{names[j]}'; similarity set to 0")
                value = 0.0
            values[i, j] = values[j, i] = value

    negatives = int(np.sum(values < 0))
    if negatives:
        logger.warning(f"{negatives} similarity entries are negative (unbiased estimator noise); "
                       f"heatmaps clamp them at -{DISPLAY_EPSILON}")
    logger.debug(f"Similarity matrix over {num_layers} layers from {len(trace_batches)} batches")
    return SimilarityMatrix(values, list(names))
