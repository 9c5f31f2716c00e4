"""
Objective functions

The six classification objectives benchmarked by the lab, each returning
the batch-mean value and its analytic gradient with respect to the raw
network outputs fv.

Probabilistic objectives:
- SCE: softmax cross-entropy
- BCE: one-vs-rest binary cross-entropy on sigmoid outputs
- NLL: negative log-likelihood of softmax probabilities (explicit
  log-softmax stage; analytically the same function as SCE)

Margin-based objectives:
- L1: Manhattan distance between one-hot targets and softmax outputs
- L2: squared Euclidean distance between targets and softmax outputs
- SoS: rescaled sum of squares on raw outputs,
  (1/C) sum_c [alpha y_c (fv_c - beta)^2 + (1 - y_c) fv_c^2]

All objectives use standard non-negative signs and mean over samples.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, Union

import numpy as np

from src.utils.errors import ArgumentError, ShapeError

logger = logging.getLogger(__name__)


class LossFamily(Enum):
    """How an objective reads the network outputs"""
    PROBABILISTIC = "probabilistic"
    MARGIN = "margin"


class LossKind(Enum):
    """Supported objectives, named as accepted in configs and on the CLI"""
    SCE = "sce"
    BCE = "bce"
    NLL = "nll"
    L1 = "l1"
    L2 = "l2"
    SOS = "sos"

    @property
    def family(self) -> LossFamily:
        if self in (LossKind.SCE, LossKind.BCE, LossKind.NLL):
            return LossFamily.PROBABILISTIC
        return LossFamily.MARGIN

    @property
    def label(self) -> str:
        return {"sce": "L_SCE", "bce": "L_BCE", "nll": "L_NLL",
                "l1": "L_1", "l2": "L_2", "sos": "L_SoS"}[self.value]

    @classmethod
    def parse(cls, name: str) -> "LossKind":
        try:
            return cls(name.strip().lower())
        except ValueError:
            valid = "|".join(k.value for k in cls)
            raise ArgumentError(f"unknown loss '{name}', expected one of {valid}") from None


@dataclass(frozen=True)
class LossSpec:
    """Selects an objective; alpha and beta only matter for SoS"""
    kind: LossKind
    alpha: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ArgumentError(f"alpha must be > 0, got {self.alpha}")

    @classmethod
    def from_name(cls, name: str, alpha: float = 1.0, beta: float = 1.0) -> "LossSpec":
        return cls(LossKind.parse(name), float(alpha), float(beta))


@dataclass
class LossResult:
    """Scalar batch loss and d(loss)/d(fv), shaped like fv"""
    value: float
    grad: np.ndarray


class Targets:
    """One-hot targets, n x C, exactly one 1 per row"""

    def __init__(self, one_hot: np.ndarray):
        one_hot = np.asarray(one_hot, dtype=np.float64)
        if one_hot.ndim != 2:
            raise ShapeError(f"targets must be 2-D, got shape {one_hot.shape}")
        if not np.all((one_hot == 0.0) | (one_hot == 1.0)) or not np.all(one_hot.sum(axis=1) == 1.0):
            raise ArgumentError("targets must be one-hot rows")
        self.one_hot = one_hot

    @classmethod
    def from_labels(cls, labels: np.ndarray, num_classes: int) -> "Targets":
        labels = np.asarray(labels, dtype=np.int64)
        if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
            raise ArgumentError(f"labels must lie in [0, {num_classes})")
        one_hot = np.zeros((labels.shape[0], num_classes), dtype=np.float64)
        one_hot[np.arange(labels.shape[0]), labels] = 1.0
        return cls(one_hot)

    @property
    def labels(self) -> np.ndarray:
        return np.argmax(self.one_hot, axis=1)

    @property
    def shape(self):
        return self.one_hot.shape


TargetsLike = Union[Targets, np.ndarray]


def _prepare(fv: np.ndarray, y: TargetsLike):
    fv = np.asarray(fv, dtype=np.float64)
    one_hot = y.one_hot if isinstance(y, Targets) else np.asarray(y, dtype=np.float64)
    if fv.ndim != 2 or fv.shape != one_hot.shape:
        raise ShapeError(f"outputs {fv.shape} and targets {one_hot.shape} must match")
    return fv, one_hot, fv.shape[0]


# ---------------------------------------------------------------------------
# Activations
# ---------------------------------------------------------------------------

def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction"""
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Elementwise logistic function; each sign branch only exponentiates non-positive values"""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def softplus(x: np.ndarray) -> np.ndarray:
    """log(1 + e^x) without overflow"""
    x = np.asarray(x, dtype=np.float64)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def _softmax_backward(p: np.ndarray, grad_p: np.ndarray) -> np.ndarray:
    """Chain rule through row-wise softmax: dL/dz_j = p_j (g_j - sum_k g_k p_k)"""
    return p * (grad_p - (grad_p * p).sum(axis=1, keepdims=True))


# ---------------------------------------------------------------------------
# Objectives
# ---------------------------------------------------------------------------

def loss_sce(fv: np.ndarray, y: TargetsLike) -> LossResult:
    fv, one_hot, n = _prepare(fv, y)
    shift = fv.max(axis=1, keepdims=True)
    lse = shift[:, 0] + np.log(np.exp(fv - shift).sum(axis=1))
    per_sample = lse - (one_hot * fv).sum(axis=1)
    grad = (softmax(fv) - one_hot) / n
    return LossResult(float(per_sample.mean()), grad)


def loss_bce(fv: np.ndarray, y: TargetsLike) -> LossResult:
    fv, one_hot, n = _prepare(fv, y)
    # -[y log s(x) + (1-y) log(1-s(x))] == softplus(x) - y x
    per_sample = (softplus(fv) - one_hot * fv).sum(axis=1)
    grad = (sigmoid(fv) - one_hot) / n
    return LossResult(float(per_sample.mean()), grad)


def loss_nll(fv: np.ndarray, y: TargetsLike) -> LossResult:
    fv, one_hot, n = _prepare(fv, y)
    log_probs = log_softmax(fv)
    per_sample = -(one_hot * log_probs).sum(axis=1)
    probs = np.exp(log_probs)
    grad = (probs * one_hot.sum(axis=1, keepdims=True) - one_hot) / n
    return LossResult(float(per_sample.mean()), grad)


def loss_l1(fv: np.ndarray, y: TargetsLike) -> LossResult:
    fv, one_hot, n = _prepare(fv, y)
    p = softmax(fv)
    residual = p - one_hot
    per_sample = np.abs(residual).sum(axis=1)
    # np.sign(0) == 0 is the subgradient at a kink
    grad = _softmax_backward(p, np.sign(residual)) / n
    return LossResult(float(per_sample.mean()), grad)


def loss_l2(fv: np.ndarray, y: TargetsLike) -> LossResult:
    fv, one_hot, n = _prepare(fv, y)
    p = softmax(fv)
    residual = p - one_hot
    per_sample = (residual ** 2).sum(axis=1)
    grad = _softmax_backward(p, 2.0 * residual) / n
    return LossResult(float(per_sample.mean()), grad)


def loss_sos(fv: np.ndarray, y: TargetsLike, alpha: float = 1.0, beta: float = 1.0) -> LossResult:
    if not alpha > 0:
        raise ArgumentError(f"alpha must be > 0, got {alpha}")
    fv, one_hot, n = _prepare(fv, y)
    num_classes = fv.shape[1]
    on_target = alpha * one_hot * (fv - beta) ** 2
    off_target = (1.0 - one_hot) * fv ** 2
    per_sample = (on_target + off_target).sum(axis=1) / num_classes
    grad = (2.0 / (n * num_classes)) * (alpha * one_hot * (fv - beta) + (1.0 - one_hot) * fv)
    return LossResult(float(per_sample.mean()), grad)


_DISPATCH: Dict[LossKind, Callable[[np.ndarray, TargetsLike], LossResult]] = {
    LossKind.SCE: loss_sce,
    LossKind.BCE: loss_bce,
    LossKind.NLL: loss_nll,
    LossKind.L1: loss_l1,
    LossKind.L2: loss_l2,
}


def compute_loss(spec: LossSpec, fv: np.ndarray, y: TargetsLike) -> LossResult:
    """Evaluate the objective selected by spec"""
    if spec.kind is LossKind.SOS:
        return loss_sos(fv, y, spec.alpha, spec.beta)
    return _DISPATCH[spec.kind](fv, y)
