"""
Adam with weight decay

Bias-corrected Adam. Weight decay is applied multiplicatively with the
learning rate alongside the Adam step, using the pre-update parameter:

    theta <- theta - lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * theta)
"""

from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from src.utils.errors import ShapeError


@dataclass
class AdamState:
    """First/second moments per parameter name, plus hyperparameters"""
    lr: float = 1e-3
    weight_decay: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(state: AdamState, params: Dict[str, np.ndarray],
              grads: Dict[str, np.ndarray]) -> Dict[str, np.ndarray]:
    """
    Update every parameter that has a gradient, in place.

    Returns the same params dict for chaining.
    """
    state.step += 1
    t = state.step
    correction1 = 1.0 - state.beta1 ** t
    correction2 = 1.0 - state.beta2 ** t

    for name, grad in grads.items():
        theta = params[name]
        if grad.shape != theta.shape:
            raise ShapeError(f"gradient for '{name}' has shape {grad.shape}, parameter {theta.shape}")
        if name not in state.m:
            state.m[name] = np.zeros_like(theta)
            state.v[name] = np.zeros_like(theta)
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * grad * grad

        m_hat = m / correction1
        v_hat = v / correction2
        update = m_hat / (np.sqrt(v_hat) + state.eps) + state.weight_decay * theta
        theta -= state.lr * update
    return params
