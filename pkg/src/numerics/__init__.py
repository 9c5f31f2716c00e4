"""
Numerics: matrix helpers and the seeded generator every module draws from.
"""

from .matrix import Matrix, as_matrix, center_columns, flatten_samples, matmul, transpose
from .rng import Rng

__all__ = [
    "Matrix",
    "Rng",
    "as_matrix",
    "center_columns",
    "flatten_samples",
    "matmul",
    "transpose",
]
