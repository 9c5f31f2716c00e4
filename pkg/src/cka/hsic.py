"""
HSIC and linear CKA

The unbiased estimator works on Grams with their diagonals zeroed
(K~, L~):

    HSIC1(K, L) = [ tr(K~ L~) + (1'K~1)(1'L~1) / ((n-1)(n-2))
                    - 2/(n-2) * 1'K~L~1 ] / (n(n-3))

Mini-batch CKA sums HSIC1 terms over batches before normalising:

    CKA = sum_i HSIC1(Xi, Yi) / sqrt(sum_i HSIC1(Xi, Xi) * sum_i HSIC1(Yi, Yi))

Within a batch the terms reduce with numpy. The sums across batches use
math.fsum, which is exactly rounded and so independent of batch order.
"""

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from src.numerics import as_matrix, center_columns, matmul, transpose
from src.utils.errors import ArgumentError, DegenerateInputError, ShapeError

MIN_HSIC_SAMPLES = 4


def gram_linear(x: np.ndarray) -> np.ndarray:
    """K = x x^T for an n x d activation matrix"""
    x = as_matrix(x, "x")
    k = matmul(x, transpose(x))
    # exact symmetry regardless of summation order
    return 0.5 * (k + k.T)


@dataclass(frozen=True)
class HsicTerms:
    """Pieces of HSIC1 that depend on one Gram only"""
    zeroed: np.ndarray
    total: float
    col_sums: np.ndarray

    @property
    def n(self) -> int:
        return int(self.zeroed.shape[0])

    @classmethod
    def from_gram(cls, k: np.ndarray) -> "HsicTerms":
        k = np.asarray(k, dtype=np.float64)
        if k.ndim != 2 or k.shape[0] != k.shape[1]:
            raise ShapeError(f"Gram must be square, got {k.shape}")
        if k.shape[0] < MIN_HSIC_SAMPLES:
            raise ArgumentError(f"unbiased HSIC needs n >= {MIN_HSIC_SAMPLES}, got {k.shape[0]}")
        zeroed = k.copy()
        np.fill_diagonal(zeroed, 0.0)
        return cls(zeroed, float(zeroed.sum()), zeroed.sum(axis=0))


def hsic_from_terms(a: HsicTerms, b: HsicTerms) -> float:
    n = a.n
    if b.n != n:
        raise ShapeError(f"Gram sizes differ: {n} vs {b.n}")
    trace = float(np.sum(a.zeroed * b.zeroed.T))
    middle = a.total * b.total / ((n - 1) * (n - 2))
    cross = float(np.dot(a.col_sums, b.col_sums))
    return (trace + middle - 2.0 / (n - 2) * cross) / (n * (n - 3))


def hsic_unbiased(k: np.ndarray, l: np.ndarray) -> float:  # noqa: E741
    """Unbiased HSIC1 between two n x n Grams (n >= 4)"""
    return hsic_from_terms(HsicTerms.from_gram(k), HsicTerms.from_gram(l))


def _check_pair(x: np.ndarray, y: np.ndarray):
    if x.shape[0] != y.shape[0]:
        raise ShapeError(f"sample counts differ: x {x.shape}, y {y.shape}")


def _is_constant(centered: np.ndarray, raw: np.ndarray) -> bool:
    scale = max(1.0, float(np.max(np.abs(raw))))
    return float(np.max(np.abs(centered))) <= 1e-12 * scale


def cka_full(x: np.ndarray, y: np.ndarray) -> float:
    """
    Linear CKA on column-centred features:
        ||Y'X||_F^2 / (||X'X||_F ||Y'Y||_F)

    Raises:
        DegenerateInputError: either input has no variance
    """
    x = as_matrix(x, "x")
    y = as_matrix(y, "y")
    _check_pair(x, y)
    xc = center_columns(x)
    yc = center_columns(y)
    if _is_constant(xc, x) or _is_constant(yc, y):
        raise DegenerateInputError("cka_full: input has zero variance (all rows identical)")

    n = x.shape[0]
    if n <= max(x.shape[1], y.shape[1]):
        # n x n Grams are the smaller products; ||X'X||_F == ||XX'||_F
        k = gram_linear(xc)
        l = gram_linear(yc)  # noqa: E741
        return float(np.sum(k * l) / (np.linalg.norm(k) * np.linalg.norm(l)))
    cross = matmul(transpose(yc), xc)
    xx = matmul(transpose(xc), xc)
    yy = matmul(transpose(yc), yc)
    return float(np.sum(cross * cross) / (np.linalg.norm(xx) * np.linalg.norm(yy)))


def cka_full_unbiased(x: np.ndarray, y: np.ndarray) -> float:
    """Single-batch CKA built on the unbiased HSIC estimator"""
    x = as_matrix(x, "x")
    y = as_matrix(y, "y")
    _check_pair(x, y)
    return cka_minibatch([x], [y])


def cka_minibatch(xs: Sequence[np.ndarray], ys: Sequence[np.ndarray]) -> float:
    """
    Mini-batch CKA over paired batches (xs[i], ys[i]).

    The value is not clamped; small negatives from the unbiased estimator
    are returned as computed.

    Raises:
        ArgumentError: batch lists differ in length or are empty
        DegenerateInputError: a self-HSIC sum is not positive
    """
    if len(xs) != len(ys):
        raise ArgumentError(f"batch counts differ: {len(xs)} vs {len(ys)}")
    if len(xs) == 0:
        raise ArgumentError("cka_minibatch needs at least one batch")

    xy, xx, yy = [], [], []
    for i, (x, y) in enumerate(zip(xs, ys)):
        x = as_matrix(x, f"xs[{i}]")
        y = as_matrix(y, f"ys[{i}]")
        _check_pair(x, y)
        kx = HsicTerms.from_gram(gram_linear(x))
        ky = HsicTerms.from_gram(gram_linear(y))
        xy.append(hsic_from_terms(kx, ky))
        xx.append(hsic_from_terms(kx, kx))
        yy.append(hsic_from_terms(ky, ky))
    return ratio_from_sums(math.fsum(xy), math.fsum(xx), math.fsum(yy))


def ratio_from_sums(xy: float, xx: float, yy: float) -> float:
    if xx <= 0.0 or yy <= 0.0:
        raise DegenerateInputError(f"mini-batch CKA denominator is not positive (xx={xx:.3e}, yy={yy:.3e})")
    return xy / math.sqrt(xx * yy)
