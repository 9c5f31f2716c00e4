"""
Layers with hand-written backpropagation

Every layer caches what its backward pass needs during forward and keeps
its parameters and gradients in dicts keyed by parameter name. Shapes
follow the (batch, channels, height, width) convention for images and
(batch, features) for vectors. All arithmetic is float64.
"""

import logging
import math
from abc import ABC, abstractmethod
from typing import Dict, List, Optional, Tuple

import numpy as np

from src.numerics import Rng
from src.utils.errors import ArgumentError, ShapeError, StateError

logger = logging.getLogger(__name__)

Shape = Tuple[int, ...]
TraceEntry = Tuple[str, np.ndarray]


class Layer(ABC):
    """
    Abstraction for a single layer in the network.

    Subclasses fill `params` (learnable arrays) and `buffers` (state that is
    saved in checkpoints but not optimised, e.g. batchnorm running stats).
    """

    capturable = True

    def __init__(self, name: str):
        self.name = name
        self.params: Dict[str, np.ndarray] = {}
        self.grads: Dict[str, np.ndarray] = {}
        self.buffers: Dict[str, np.ndarray] = {}

    @abstractmethod
    def output_shape(self, input_shape: Shape) -> Shape:
        """Per-sample output shape for a per-sample input shape"""

    @abstractmethod
    def forward(self, x: np.ndarray, training: bool) -> np.ndarray:
        """Activation of the layer; caches intermediates for backward"""

    @abstractmethod
    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        """Fill self.grads and return d(loss)/d(input)"""

    def leaves(self) -> List["Layer"]:
        return [self]

    def trace_entries(self, output: np.ndarray) -> List[TraceEntry]:
        return [(self.name, output)] if self.capturable else []

    def _require_cache(self, cache):
        if cache is None:
            raise StateError(f"{self.name}: backward called without a cached forward pass")
        return cache


class Conv2D(Layer):
    """
    2-D convolution with 'same'-style padding of kernel_size // 2.

    Implemented as a sum over kernel offsets of strided input windows
    contracted against the (out, in) weight slice at that offset.
    """

    def __init__(self, name: str, in_channels: int, out_channels: int,
                 kernel_size: int, stride: int, rng: Rng):
        super().__init__(name)
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.stride = stride
        self.padding = kernel_size // 2
        fan_in = in_channels * kernel_size * kernel_size
        scale = math.sqrt(2.0 / fan_in)
        self.params = {
            "weight": rng.normal_array((out_channels, in_channels, kernel_size, kernel_size)) * scale,
            "bias": np.zeros(out_channels),
        }
        self._cache = None

    def output_shape(self, input_shape: Shape) -> Shape:
        if len(input_shape) != 3 or input_shape[0] != self.in_channels:
            raise ShapeError(f"{self.name}: expected ({self.in_channels}, H, W), got {input_shape}")
        _, h, w = input_shape
        k, s, p = self.kernel_size, self.stride, self.padding
        ho = (h + 2 * p - k) // s + 1
        wo = (w + 2 * p - k) // s + 1
        if ho < 1 or wo < 1:
            raise ShapeError(f"{self.name}: input {input_shape} too small for kernel {k}")
        return (self.out_channels, ho, wo)

    def _windows(self, ho: int, wo: int):
        k, s = self.kernel_size, self.stride
        for i in range(k):
            for j in range(k):
                yield i, j, slice(i, i + s * (ho - 1) + 1, s), slice(j, j + s * (wo - 1) + 1, s)

    def forward(self, x: np.ndarray, training: bool) -> np.ndarray:
        n, _, h, w = x.shape
        _, ho, wo = self.output_shape(x.shape[1:])
        p = self.padding
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
        weight = self.params["weight"]
        out = np.zeros((n, ho, wo, self.out_channels))
        for i, j, rows, cols in self._windows(ho, wo):
            out += np.tensordot(xp[:, :, rows, cols], weight[:, :, i, j], axes=([1], [1]))
        out += self.params["bias"]
        self._cache = (xp, h, w, ho, wo)
        return np.ascontiguousarray(out.transpose(0, 3, 1, 2))

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        xp, h, w, ho, wo = self._require_cache(self._cache)
        weight = self.params["weight"]
        g = grad_out.transpose(0, 2, 3, 1)
        d_weight = np.zeros_like(weight)
        d_xp = np.zeros_like(xp)
        for i, j, rows, cols in self._windows(ho, wo):
            d_weight[:, :, i, j] = np.tensordot(g, xp[:, :, rows, cols], axes=([0, 1, 2], [0, 2, 3]))
            d_xp[:, :, rows, cols] += np.tensordot(g, weight[:, :, i, j], axes=([3], [0])).transpose(0, 3, 1, 2)
        self.grads = {"weight": d_weight, "bias": g.sum(axis=(0, 1, 2))}
        p = self.padding
        return d_xp[:, :, p:p + h, p:p + w] if p else d_xp


class BatchNorm(Layer):
    """
    Batch normalisation over every axis except channels (axis 1).

    Train mode normalises with batch statistics and updates running stats
    with momentum 0.9 (running = 0.9 * running + 0.1 * batch, unbiased
    variance); eval mode uses the running stats.
    """

    def __init__(self, name: str, channels: int, momentum: float = 0.9, eps: float = 1e-5):
        super().__init__(name)
        self.channels = channels
        self.momentum = momentum
        self.eps = eps
        self.params = {"gamma": np.ones(channels), "beta": np.zeros(channels)}
        self.buffers = {"running_mean": np.zeros(channels), "running_var": np.ones(channels)}
        self._cache = None

    def output_shape(self, input_shape: Shape) -> Shape:
        if input_shape[0] != self.channels:
            raise ShapeError(f"{self.name}: expected {self.channels} channels, got {input_shape}")
        return input_shape

    def _broadcast(self, v: np.ndarray, ndim: int) -> np.ndarray:
        return v.reshape((1, -1) + (1,) * (ndim - 2))

    def forward(self, x: np.ndarray, training: bool) -> np.ndarray:
        axes = (0,) + tuple(range(2, x.ndim))
        gamma = self._broadcast(self.params["gamma"], x.ndim)
        beta = self._broadcast(self.params["beta"], x.ndim)
        if training:
            mean = x.mean(axis=axes, keepdims=True)
            var = x.var(axis=axes, keepdims=True)
            inv_std = 1.0 / np.sqrt(var + self.eps)
            count = x.size // self.channels
            unbiased = var * count / (count - 1) if count > 1 else var
            m = self.momentum
            self.buffers["running_mean"] = m * self.buffers["running_mean"] + (1 - m) * mean.reshape(-1)
            self.buffers["running_var"] = m * self.buffers["running_var"] + (1 - m) * unbiased.reshape(-1)
        else:
            mean = self._broadcast(self.buffers["running_mean"], x.ndim)
            inv_std = 1.0 / np.sqrt(self._broadcast(self.buffers["running_var"], x.ndim) + self.eps)
        x_hat = (x - mean) * inv_std
        self._cache = (x_hat, inv_std, axes, training)
        return gamma * x_hat + beta

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        x_hat, inv_std, axes, training = self._require_cache(self._cache)
        gamma = self._broadcast(self.params["gamma"], grad_out.ndim)
        self.grads = {
            "gamma": (grad_out * x_hat).sum(axis=axes),
            "beta": grad_out.sum(axis=axes),
        }
        d_xhat = grad_out * gamma
        if not training:
            return d_xhat * inv_std
        count = grad_out.size // self.channels
        return (inv_std / count) * (
            count * d_xhat
            - d_xhat.sum(axis=axes, keepdims=True)
            - x_hat * (d_xhat * x_hat).sum(axis=axes, keepdims=True)
        )


class ReLU(Layer):
    def __init__(self, name: str):
        super().__init__(name)
        self._mask = None

    def output_shape(self, input_shape: Shape) -> Shape:
        return input_shape

    def forward(self, x: np.ndarray, training: bool) -> np.ndarray:
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        mask = self._require_cache(self._mask)
        return np.where(mask, grad_out, 0.0)


class GlobalAvgPool(Layer):
    """(n, c, h, w) -> (n, c)"""

    def __init__(self, name: str):
        super().__init__(name)
        self._spatial = None

    def output_shape(self, input_shape: Shape) -> Shape:
        if len(input_shape) != 3:
            raise ShapeError(f"{self.name}: expected (C, H, W), got {input_shape}")
        return (input_shape[0],)

    def forward(self, x: np.ndarray, training: bool) -> np.ndarray:
        self._spatial = x.shape[2:]
        return x.mean(axis=(2, 3))

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        h, w = self._require_cache(self._spatial)
        return np.broadcast_to(grad_out[:, :, None, None] / (h * w), grad_out.shape + (h, w)).copy()


class Dropout(Layer):
    """Inverted dropout; identity (the same array object) in eval mode"""

    capturable = False

    def __init__(self, name: str, rate: float, rng: Rng):
        super().__init__(name)
        if not 0.0 <= rate < 1.0:
            raise ArgumentError(f"{self.name}: dropout rate must lie in [0, 1), got {rate}")
        self.rate = rate
        self.rng = rng
        self._mask: Optional[np.ndarray] = None
        self._seen = False

    def output_shape(self, input_shape: Shape) -> Shape:
        return input_shape

    def forward(self, x: np.ndarray, training: bool) -> np.ndarray:
        self._seen = True
        if not training or self.rate == 0.0:
            self._mask = None
            return x
        keep = self.rng.uniform_array(0.0, 1.0, x.shape) >= self.rate
        self._mask = keep / (1.0 - self.rate)
        return x * self._mask

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if not self._seen:
            raise StateError(f"{self.name}: backward called without a cached forward pass")
        return grad_out if self._mask is None else grad_out * self._mask


class Dense(Layer):
    def __init__(self, name: str, in_features: int, out_features: int, rng: Rng):
        super().__init__(name)
        self.in_features = in_features
        self.out_features = out_features
        self.params = {
            "weight": rng.normal_array((in_features, out_features)) * math.sqrt(2.0 / in_features),
            "bias": np.zeros(out_features),
        }
        self._input = None

    def output_shape(self, input_shape: Shape) -> Shape:
        if input_shape != (self.in_features,):
            raise ShapeError(f"{self.name}: expected ({self.in_features},), got {input_shape}")
        return (self.out_features,)

    def forward(self, x: np.ndarray, training: bool) -> np.ndarray:
        self._input = x
        return x @ self.params["weight"] + self.params["bias"]

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        x = self._require_cache(self._input)
        self.grads = {"weight": x.T @ grad_out, "bias": grad_out.sum(axis=0)}
        return grad_out @ self.params["weight"].T


class ResidualBlock(Layer):
    """
    Basic residual block: conv3x3-bn-relu-conv3x3-bn, plus shortcut, then relu.

    The shortcut is a 1x1 strided convolution (+ batchnorm) when the
    channel count or resolution changes, otherwise the identity. Traced
    sub-layers: conv1, bn1, relu1, conv2, bn2 and the block output (relu);
    the shortcut branch is not traced.
    """

    def __init__(self, name: str, in_channels: int, out_channels: int, stride: int,
                 rng: Rng, use_batchnorm: bool = True):
        super().__init__(name)
        self.use_batchnorm = use_batchnorm
        main: List[Layer] = [Conv2D(f"{name}.conv1", in_channels, out_channels, 3, stride, rng)]
        if use_batchnorm:
            main.append(BatchNorm(f"{name}.bn1", out_channels))
        main.append(ReLU(f"{name}.relu1"))
        main.append(Conv2D(f"{name}.conv2", out_channels, out_channels, 3, 1, rng))
        if use_batchnorm:
            main.append(BatchNorm(f"{name}.bn2", out_channels))
        self.main = main

        self.shortcut: List[Layer] = []
        if stride != 1 or in_channels != out_channels:
            self.shortcut.append(Conv2D(f"{name}.shortcut", in_channels, out_channels, 1, stride, rng))
            if use_batchnorm:
                self.shortcut.append(BatchNorm(f"{name}.shortcut_bn", out_channels))
        self.out_relu = ReLU(f"{name}.relu")
        self._outputs: List[TraceEntry] = []

    def leaves(self) -> List[Layer]:
        return self.main + self.shortcut + [self.out_relu]

    def output_shape(self, input_shape: Shape) -> Shape:
        shape = input_shape
        for layer in self.main:
            shape = layer.output_shape(shape)
        short = input_shape
        for layer in self.shortcut:
            short = layer.output_shape(short)
        if short != shape:
            raise ShapeError(f"{self.name}: branch shapes {shape} and {short} differ")
        return shape

    def forward(self, x: np.ndarray, training: bool) -> np.ndarray:
        outputs: List[TraceEntry] = []
        h = x
        for layer in self.main:
            h = layer.forward(h, training)
            outputs.append((layer.name, h))
        s = x
        for layer in self.shortcut:
            s = layer.forward(s, training)
        out = self.out_relu.forward(h + s, training)
        outputs.append((self.out_relu.name, out))
        self._outputs = outputs
        return out

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        g = self.out_relu.backward(grad_out)
        g_main = g
        for layer in reversed(self.main):
            g_main = layer.backward(g_main)
        g_short = g
        for layer in reversed(self.shortcut):
            g_short = layer.backward(g_short)
        return g_main + g_short

    def trace_entries(self, output: np.ndarray) -> List[TraceEntry]:
        return list(self._outputs)
