"""
Matrix helpers

The lab's universal carrier is a dense, C-contiguous 2-D float64 ndarray.
These helpers validate that carrier and provide the few reductions whose
accumulation order matters for reproducibility.
"""

import logging
from typing import Iterable, Union

import numpy as np

from src.utils.errors import ArgumentError, ShapeError

logger = logging.getLogger(__name__)

Matrix = np.ndarray
ArrayLike = Union[np.ndarray, Iterable]


def as_matrix(data: ArrayLike, name: str = "matrix") -> Matrix:
    """
    Validate user input and return it as a float64 row-major matrix.

    Args:
        data: anything numpy can turn into a 2-D array
        name: label used in error messages

    Raises:
        ShapeError: input is not 2-D
        ArgumentError: input contains NaN or Inf
    """
    arr = np.array(data, dtype=np.float64, order="C")
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ArgumentError(f"{name} contains non-finite entries")
    return arr


def matmul(a: Matrix, b: Matrix) -> Matrix:
    """
    Matrix product with a fixed accumulation order.

    einsum without path optimisation runs its own sum-of-products loop
    (no BLAS dispatch, no threading), accumulating over k in index order
    for each output cell.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return np.einsum("ik,kj->ij", a, b, optimize=False)


def transpose(x: Matrix) -> Matrix:
    return np.ascontiguousarray(np.asarray(x).T)


def center_columns(x: Matrix) -> Matrix:
    """Subtract each column's mean; result columns have mean 0"""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ShapeError(f"center_columns needs a non-empty 2-D matrix, got {x.shape}")
    return x - x.mean(axis=0, keepdims=True)


def flatten_samples(x: np.ndarray) -> Matrix:
    """Collapse every axis after the first: (n, c, h, w) -> (n, c*h*w)"""
    x = np.asarray(x, dtype=np.float64)
    return np.ascontiguousarray(x.reshape(x.shape[0], -1))
