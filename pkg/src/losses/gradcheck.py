"""
Finite-difference gradient oracle

Central differences over every coordinate, used to verify the analytic
gradients of the objectives and of the network.
"""

from typing import Callable

import numpy as np

from src.utils.errors import ArgumentError

from .objectives import LossSpec, TargetsLike, compute_loss

MIN_STEP = 1e-8
MAX_STEP = 1e-3
GRADIENT_FLOOR = 1e-4


def _check_step(h: float):
    if not MIN_STEP <= h <= MAX_STEP:
        raise ArgumentError(f"step h must lie in [{MIN_STEP}, {MAX_STEP}], got {h}")


def numeric_gradient(func: Callable[[np.ndarray], float], x: np.ndarray, h: float) -> np.ndarray:
    """
    (f(x + h e_i) - f(x - h e_i)) / 2h for each coordinate i.

    x is perturbed in place and restored, so callers may pass a live
    parameter array and have func read it.
    """
    _check_step(h)
    grad = np.zeros_like(x, dtype=np.float64)
    flat_x = x.reshape(-1)
    flat_g = grad.reshape(-1)
    for i in range(flat_x.size):
        original = flat_x[i]
        flat_x[i] = original + h
        upper = func(x)
        flat_x[i] = original - h
        lower = func(x)
        flat_x[i] = original
        flat_g[i] = (upper - lower) / (2.0 * h)
    return grad


def finite_diff_grad(spec: LossSpec, fv: np.ndarray, y: TargetsLike, h: float = 1e-6) -> np.ndarray:
    """Numerical d(loss)/d(fv) for the objective selected by spec"""
    work = np.array(fv, dtype=np.float64, copy=True)
    return numeric_gradient(lambda z: compute_loss(spec, z, y).value, work, h)


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = GRADIENT_FLOOR) -> float:
    """
    ||a - b|| / max(||a||, ||b||, floor)

    The floor turns the comparison absolute for gradients that are zero
    in exact arithmetic (a conv bias ahead of train-mode batchnorm), where
    both sides are rounding noise of order eps / h.
    """
    a = np.asarray(analytic, dtype=np.float64).reshape(-1)
    b = np.asarray(numeric, dtype=np.float64).reshape(-1)
    scale = max(np.linalg.norm(a), np.linalg.norm(b), floor)
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(a - b) / scale)
