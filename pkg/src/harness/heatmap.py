"""
Similarity heatmaps

The P6 pixmap is the reproducible artifact: each cell (i, j) becomes a
cell x cell block coloured from a fixed 256-entry table (viridis, sampled
once from matplotlib), with [min(S), max(S)] mapped linearly onto the
table and row 0 drawn at the bottom-left. Negative entries are clamped at
-DISPLAY_EPSILON before the mapping.

The PNG rendering is for reading, not for comparison.
"""

import logging
from functools import lru_cache
from pathlib import Path
from typing import Union

import matplotlib
import numpy as np
from matplotlib.figure import Figure

from src.cka import SimilarityMatrix
from src.utils.errors import ArgumentError

logger = logging.getLogger(__name__)

COLORMAP = "viridis"
LUT_SIZE = 256
DEFAULT_CELL = 8


@lru_cache(maxsize=None)
def colormap_table(name: str = COLORMAP) -> np.ndarray:
    """(256, 3) uint8 RGB table"""
    rgba = matplotlib.colormaps[name](np.linspace(0.0, 1.0, LUT_SIZE))
    table = np.round(rgba[:, :3] * 255.0).astype(np.uint8)
    table.setflags(write=False)
    return table


def color_indices(values: np.ndarray) -> np.ndarray:
    """Linear map of [min, max] onto 0..255; a constant matrix maps to 0"""
    values = np.asarray(values, dtype=np.float64)
    lo, hi = float(values.min()), float(values.max())
    if hi <= lo:
        return np.zeros(values.shape, dtype=np.int64)
    scaled = (values - lo) / (hi - lo) * (LUT_SIZE - 1)
    return np.clip(np.round(scaled), 0, LUT_SIZE - 1).astype(np.int64)


def render_pixels(s: SimilarityMatrix, cell: int = DEFAULT_CELL) -> np.ndarray:
    """(L*cell, L*cell, 3) uint8 image, image row 0 at the top"""
    if cell < 1:
        raise ArgumentError(f"cell size must be >= 1, got {cell}")
    grid = colormap_table()[color_indices(s.display_values())]
    grid = grid[::-1]  # matrix row 0 goes to the bottom
    return np.repeat(np.repeat(grid, cell, axis=0), cell, axis=1)


def emit_heatmap(s: SimilarityMatrix, path: Union[str, Path], cell: int = DEFAULT_CELL) -> Path:
    pixels = render_pixels(s, cell)
    height, width = pixels.shape[:2]
    header = f"P6\n{width} {height}\n255\n".encode("ascii")
    path = Path(path)
    path.write_bytes(header + np.ascontiguousarray(pixels).tobytes())
    logger.debug(f"Heatmap written to {path}")
    return path


def emit_heatmap_png(s: SimilarityMatrix, path: Union[str, Path], title: str = "") -> Path:
    """Annotated rendering with layer names and a colour bar"""
    size = max(4.0, 0.35 * s.size + 2.0)
    fig = Figure(figsize=(size + 1.0, size))
    ax = fig.add_subplot()
    image = ax.imshow(s.display_values(), origin="lower", cmap=COLORMAP, interpolation="nearest")
    ticks = np.arange(s.size)
    ax.set_xticks(ticks)
    ax.set_yticks(ticks)
    ax.set_xticklabels(s.layer_names, rotation=90, fontsize=6)
    ax.set_yticklabels(s.layer_names, fontsize=6)
    if title:
        ax.set_title(title)
    fig.colorbar(image, ax=ax, label="CKA")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    logger.debug(f"Heatmap image written to {path}")
    return path
