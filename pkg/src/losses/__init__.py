"""
Objective functions with analytic gradients, plus the finite-difference oracle.
"""

from .gradcheck import finite_diff_grad, numeric_gradient, relative_error
from .objectives import (
    LossFamily,
    LossKind,
    LossResult,
    LossSpec,
    Targets,
    compute_loss,
    log_softmax,
    loss_bce,
    loss_l1,
    loss_l2,
    loss_nll,
    loss_sce,
    loss_sos,
    sigmoid,
    softmax,
    softplus,
)

__all__ = [
    "LossFamily",
    "LossKind",
    "LossResult",
    "LossSpec",
    "Targets",
    "compute_loss",
    "finite_diff_grad",
    "log_softmax",
    "loss_bce",
    "loss_l1",
    "loss_l2",
    "loss_nll",
    "loss_sce",
    "loss_sos",
    "numeric_gradient",
    "relative_error",
    "sigmoid",
    "softmax",
    "softplus",
]
