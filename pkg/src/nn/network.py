"""
Network assembly

Builds a layer stack from a NetworkConfig, runs forward passes with
optional activation capture, and backpropagates a loss gradient into
per-parameter gradients.
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.numerics import Rng, flatten_samples
from src.utils.errors import ArgumentError, ShapeError, StateError

from .layers import (
    BatchNorm,
    Conv2D,
    Dense,
    Dropout,
    GlobalAvgPool,
    Layer,
    ReLU,
    ResidualBlock,
)

logger = logging.getLogger(__name__)

LAYER_KINDS = ("conv", "batchnorm", "relu", "residual_block", "global_avg_pool", "dropout", "dense")


@dataclass(frozen=True)
class LayerSpec:
    """One entry of the layer stack; unused fields keep their defaults"""
    kind: str
    out: int = 0
    kernel_size: int = 3
    stride: int = 1
    rate: float = 0.4
    batchnorm: bool = True

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ArgumentError(f"unknown layer kind '{self.kind}', expected one of {LAYER_KINDS}")

    @staticmethod
    def conv(out: int, kernel_size: int = 3, stride: int = 1) -> "LayerSpec":
        return LayerSpec("conv", out=out, kernel_size=kernel_size, stride=stride)

    @staticmethod
    def residual_block(out: int, stride: int = 1, batchnorm: bool = True) -> "LayerSpec":
        return LayerSpec("residual_block", out=out, stride=stride, batchnorm=batchnorm)

    @staticmethod
    def dense(out: int) -> "LayerSpec":
        return LayerSpec("dense", out=out)

    @staticmethod
    def dropout(rate: float = 0.4) -> "LayerSpec":
        return LayerSpec("dropout", rate=rate)


@dataclass(frozen=True)
class NetworkConfig:
    """Input shape (channels, height, width) or (features,), layer stack and class count"""
    input_shape: Tuple[int, ...]
    layers: Tuple[LayerSpec, ...]
    num_classes: int

    def to_dict(self) -> Dict[str, Any]:
        return {
            "input_shape": list(self.input_shape),
            "layers": [asdict(spec) for spec in self.layers],
            "num_classes": self.num_classes,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "NetworkConfig":
        return cls(
            input_shape=tuple(int(v) for v in data["input_shape"]),
            layers=tuple(LayerSpec(**spec) for spec in data["layers"]),
            num_classes=int(data["num_classes"]),
        )


def mini_resnet(input_shape: Sequence[int], num_classes: int, stem_width: int = 8,
                widths: Sequence[int] = (8, 16), dropout: float = 0.4) -> NetworkConfig:
    """
    Desk-scale residual network.

    conv3x3 stem -> bn -> relu -> one residual block per width (stride 2
    from the second block on) -> global average pooling -> dropout ->
    dense head [widths[-1] - C].
    """
    if not widths:
        raise ArgumentError("mini_resnet needs at least one block width")
    layers: List[LayerSpec] = [
        LayerSpec.conv(stem_width, 3, 1),
        LayerSpec("batchnorm"),
        LayerSpec("relu"),
    ]
    for index, width in enumerate(widths):
        layers.append(LayerSpec.residual_block(width, stride=1 if index == 0 else 2))
    layers += [LayerSpec("global_avg_pool"), LayerSpec.dropout(dropout), LayerSpec.dense(num_classes)]
    return NetworkConfig(tuple(input_shape), tuple(layers), num_classes)


@dataclass
class ActivationTrace:
    """Per-layer activations of one forward pass, each flattened to n x d"""
    entries: List[Tuple[str, np.ndarray]] = field(default_factory=list)

    @property
    def names(self) -> List[str]:
        return [name for name, _ in self.entries]

    @property
    def num_samples(self) -> int:
        return self.entries[0][1].shape[0] if self.entries else 0

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, index: int) -> Tuple[str, np.ndarray]:
        return self.entries[index]


class Network:
    """
    Layer stack with parameters, batchnorm buffers and a train/eval mode.

    A network and its optimiser state belong to one training loop; eval
    forward passes do not mutate parameters or buffers.
    """

    def __init__(self, config: NetworkConfig, seed: int = 0):
        self.config = config
        self.training = True
        self.layers: List[Layer] = self._build(config, Rng(seed))
        self._has_cache = False
        logger.debug(f"Built network with {len(self.layers)} layers, {self.num_parameters} parameters")

    def _build(self, config: NetworkConfig, rng: Rng) -> List[Layer]:
        layers: List[Layer] = []
        counters: Dict[str, int] = {}
        shape = tuple(config.input_shape)

        for spec in config.layers:
            counters[spec.kind] = counters.get(spec.kind, 0) + 1
            index = counters[spec.kind]
            if spec.kind == "conv":
                layer = Conv2D(f"conv{index}", shape[0], spec.out, spec.kernel_size, spec.stride, rng)
            elif spec.kind == "batchnorm":
                layer = BatchNorm(f"bn{index}", shape[0])
            elif spec.kind == "relu":
                layer = ReLU(f"relu{index}")
            elif spec.kind == "residual_block":
                layer = ResidualBlock(f"block{index}", shape[0], spec.out, spec.stride, rng,
                                      use_batchnorm=spec.batchnorm)
            elif spec.kind == "global_avg_pool":
                layer = GlobalAvgPool("gap" if index == 1 else f"gap{index}")
            elif spec.kind == "dropout":
                layer = Dropout(f"dropout{index}", spec.rate, rng.fork(f"dropout{index}"))
            else:
                if len(shape) != 1:
                    raise ShapeError(f"dense layer needs a flat input, got {shape}")
                layer = Dense(f"dense{index}", shape[0], spec.out, rng)
            shape = layer.output_shape(shape)
            layers.append(layer)

        if shape != (config.num_classes,):
            raise ShapeError(f"network output {shape} does not match ({config.num_classes},)")
        return layers

    # -- mode -----------------------------------------------------------------

    def train(self) -> "Network":
        self.training = True
        return self

    def eval(self) -> "Network":
        self.training = False
        return self

    @property
    def mode(self) -> str:
        return "train" if self.training else "eval"

    # -- parameters -----------------------------------------------------------

    def leaves(self) -> List[Layer]:
        return [leaf for layer in self.layers for leaf in layer.leaves()]

    def parameters(self) -> Dict[str, np.ndarray]:
        """Live parameter arrays keyed '<layer>.<param>'"""
        return {f"{leaf.name}.{key}": value for leaf in self.leaves() for key, value in leaf.params.items()}

    def buffers(self) -> Dict[str, np.ndarray]:
        return {f"{leaf.name}.{key}": value for leaf in self.leaves() for key, value in leaf.buffers.items()}

    @property
    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.parameters().values()))

    def state_dict(self) -> Dict[str, np.ndarray]:
        """Deep copy of parameters and buffers"""
        state = {name: value.copy() for name, value in self.parameters().items()}
        state.update({name: value.copy() for name, value in self.buffers().items()})
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray]):
        for leaf in self.leaves():
            for store in (leaf.params, leaf.buffers):
                for key in store:
                    full = f"{leaf.name}.{key}"
                    if full not in state:
                        raise ArgumentError(f"state is missing '{full}'")
                    value = np.asarray(state[full], dtype=np.float64)
                    if value.shape != store[key].shape:
                        raise ShapeError(f"'{full}' has shape {value.shape}, expected {store[key].shape}")
                    store[key] = value.copy()

    # -- passes ---------------------------------------------------------------

    def forward(self, batch: np.ndarray, capture: bool = False) -> Tuple[np.ndarray, Optional[ActivationTrace]]:
        """
        Run the stack on a batch.

        Args:
            batch: (n, *input_shape)
            capture: also return the flattened activation of every capturable layer

        Returns:
            (logits n x C, trace or None)
        """
        x = np.asarray(batch, dtype=np.float64)
        if x.shape[1:] != tuple(self.config.input_shape):
            raise ShapeError(f"batch shape {x.shape} does not match input {self.config.input_shape}")

        trace = ActivationTrace() if capture else None
        for layer in self.layers:
            x = layer.forward(x, self.training)
            if trace is not None:
                trace.entries.extend((name, flatten_samples(out)) for name, out in layer.trace_entries(x))
        self._has_cache = True
        return x, trace

    def backward(self, loss_grad: np.ndarray) -> Dict[str, np.ndarray]:
        """Gradients of the batch loss for every parameter, given d(loss)/d(logits)"""
        if not self._has_cache:
            raise StateError("backward called without a cached forward pass")
        g = np.asarray(loss_grad, dtype=np.float64)
        for layer in reversed(self.layers):
            g = layer.backward(g)
        self._has_cache = False
        return {f"{leaf.name}.{key}": value for leaf in self.leaves() for key, value in leaf.grads.items()}

    def predict(self, images: np.ndarray, batch_size: int = 512) -> np.ndarray:
        """Logits for a whole array, in chunks, without touching the mode"""
        chunks = [self.forward(images[start:start + batch_size])[0]
                  for start in range(0, images.shape[0], batch_size)]
        self._has_cache = False
        return np.concatenate(chunks, axis=0) if chunks else np.zeros((0, self.config.num_classes))
