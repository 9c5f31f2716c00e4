"""
Procedurally generated colour-biased image datasets.
"""

from .baselines import color_only_baseline, mean_colors, mutual_information
from .biased import (
    DIVERSITY_PRESETS,
    SPLIT_NAMES,
    BiasedDataset,
    BiasedSample,
    BiasSpec,
    DatasetSplit,
    generate,
    glyph_templates,
    palette,
    parse_diversity,
)
from .binary_format import load_binary, save_binary

__all__ = [
    "DIVERSITY_PRESETS",
    "SPLIT_NAMES",
    "BiasSpec",
    "BiasedDataset",
    "BiasedSample",
    "DatasetSplit",
    "color_only_baseline",
    "generate",
    "glyph_templates",
    "load_binary",
    "mean_colors",
    "mutual_information",
    "palette",
    "parse_diversity",
    "save_binary",
]
