"""
HSIC / CKA similarity between layers and the structure scores derived from it.
"""

from .hsic import cka_full, cka_full_unbiased, cka_minibatch, gram_linear, hsic_unbiased
from .similarity import DISPLAY_EPSILON, SimilarityMatrix, layer_similarity
from .structure import DEFAULT_TAU, StructureReport, largest_block, redundant_layers, spearman, structure_report

__all__ = [
    "DEFAULT_TAU",
    "DISPLAY_EPSILON",
    "SimilarityMatrix",
    "StructureReport",
    "cka_full",
    "cka_full_unbiased",
    "cka_minibatch",
    "gram_linear",
    "hsic_unbiased",
    "largest_block",
    "layer_similarity",
    "redundant_layers",
    "spearman",
    "structure_report",
]
