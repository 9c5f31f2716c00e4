"""
Structure scores read off a similarity matrix

block_score: size of the largest contiguous diagonal block (at least two
layers) whose pairwise similarities all exceed tau, divided by L.

progressive_score: minus the Spearman rank correlation between layer
distance |i - j| and S[i, j] over all pairs i <= j. The distance-0 pairs
anchor the ranking, so a matrix that decays with depth scores positive
and a matrix with every entry tied scores 0.
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from src.utils.errors import ArgumentError

from .similarity import SimilarityMatrix

logger = logging.getLogger(__name__)

DEFAULT_TAU = 0.9


@dataclass
class StructureReport:
    block_score: float
    progressive_score: float
    tau: float = DEFAULT_TAU
    block: Optional[Tuple[int, int]] = None
    redundant: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["block"] = list(self.block) if self.block else None
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "StructureReport":
        block = data.get("block")
        return cls(
            block_score=float(data["block_score"]),
            progressive_score=float(data["progressive_score"]),
            tau=float(data.get("tau", DEFAULT_TAU)),
            block=tuple(block) if block else None,
            redundant=list(data.get("redundant", [])),
        )

    def to_text(self, layer_names: Optional[List[str]] = None) -> str:
        lines = [
            f"tau = {self.tau:.4f}",
            f"block_score = {self.block_score:.6f}",
            f"progressive_score = {self.progressive_score:.6f}",
        ]
        if self.block is None:
            lines.append("largest_block = none")
        else:
            start, end = self.block
            label = f"{start}..{end}"
            if layer_names:
                label += f" ({layer_names[start]} .. {layer_names[end]})"
            lines.append(f"largest_block = {label}")
        lines.append(f"redundant_layers = {', '.join(self.redundant) if self.redundant else 'none'}")
        return "\n".join(lines) + "\n"


def _block_end(values: np.ndarray, start: int, tau: float) -> int:
    """Last index j such that every pair within [start, j] exceeds tau"""
    end = start
    for j in range(start + 1, values.shape[0]):
        column = values[start:j, j]
        row = values[j, start:j]
        if np.all(column > tau) and np.all(row > tau):
            end = j
        else:
            break
    return end


def largest_block(values: np.ndarray, tau: float) -> Optional[Tuple[int, int]]:
    best = None
    for start in range(values.shape[0]):
        end = _block_end(values, start, tau)
        if end > start and (best is None or end - start > best[1] - best[0]):
            best = (start, end)
    return best


def spearman(a: np.ndarray, b: np.ndarray) -> float:
    """Rank correlation with average ranks for ties; 0 when either side is constant"""
    ra = pd.Series(a, dtype=np.float64).rank(method="average").to_numpy()
    rb = pd.Series(b, dtype=np.float64).rank(method="average").to_numpy()
    ra -= ra.mean()
    rb -= rb.mean()
    denom = np.sqrt(np.sum(ra * ra) * np.sum(rb * rb))
    if denom == 0.0:
        return 0.0
    return float(np.clip(np.sum(ra * rb) / denom, -1.0, 1.0))


def _check(s: SimilarityMatrix):
    if s.size < 3:
        raise ArgumentError(f"structure scores need at least 3 layers, got {s.size}")


def redundant_layers(s: SimilarityMatrix, tau: float = DEFAULT_TAU) -> List[str]:
    """
    Truncation candidates: for every maximal contiguous block above tau,
    every layer after the block's first.
    """
    values = s.values
    names: List[str] = []
    start = 0
    while start < s.size:
        end = _block_end(values, start, tau)
        if end > start:
            names.extend(s.layer_names[start + 1:end + 1])
        start = end + 1
    return names


def structure_report(s: SimilarityMatrix, tau: float = DEFAULT_TAU) -> StructureReport:
    _check(s)
    block = largest_block(s.values, tau)
    block_score = 0.0 if block is None else (block[1] - block[0] + 1) / s.size

    rows, cols = np.triu_indices(s.size)
    progressive = -spearman((cols - rows).astype(np.float64), s.values[rows, cols])
    # avoid -0.0 in reports
    progressive = progressive + 0.0

    report = StructureReport(block_score, progressive, tau, block, redundant_layers(s, tau))
    logger.debug(f"Structure: block={report.block_score:.4f} progressive={report.progressive_score:.4f}")
    return report
