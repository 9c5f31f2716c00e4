"""
Typed experiment configuration

Built from a ConfigManager (defaults -> file -> environment) and then
optionally overridden by CLI flags.
"""

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, List, Optional, Tuple

from src.data import BiasSpec, parse_diversity
from src.losses import LossKind, LossSpec
from src.nn import NetworkConfig, TrainSchedule, mini_resnet
from src.utils.config import ConfigManager
from src.utils.errors import BiasLensError, ConfigError

logger = logging.getLogger(__name__)

MODEL_PRESETS = ("mini_resnet",)


def _as_list(value: Any) -> List[Any]:
    if value is None:
        return []
    if isinstance(value, (list, tuple)):
        return list(value)
    if isinstance(value, str) and "," in value:
        return [part.strip() for part in value.split(",") if part.strip()]
    return [value]


@dataclass(frozen=True)
class CkaConfig:
    """Mini-batch size N_b, batch count N and block threshold tau"""
    batch_size: int = 512
    batches: int = 2
    tau: float = 0.9


@dataclass(frozen=True)
class ExperimentConfig:
    bias: BiasSpec = field(default_factory=BiasSpec)
    dataset_path: Optional[Path] = None
    model_preset: str = "mini_resnet"
    stem_width: int = 8
    widths: Tuple[int, ...] = (8, 16)
    dropout: float = 0.4
    losses: Tuple[LossSpec, ...] = tuple(LossSpec(kind) for kind in LossKind)
    seeds: Tuple[int, ...] = (1, 2, 3)
    lr: float = 1e-3
    weight_decay: float = 1e-5
    batch_size: int = 512
    patience: int = 12
    max_epochs: int = 60
    cka: CkaConfig = field(default_factory=CkaConfig)
    output_dir: Path = Path("runs")
    threads: int = 1

    def validate(self) -> "ExperimentConfig":
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if not self.losses:
            raise ConfigError("at least one loss is required")
        if len({spec.kind for spec in self.losses}) != len(self.losses):
            raise ConfigError("loss list contains duplicates")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seed list contains duplicates")
        if self.model_preset not in MODEL_PRESETS:
            raise ConfigError(f"unknown model preset '{self.model_preset}', expected one of {MODEL_PRESETS}")
        if not self.widths or any(w < 1 for w in self.widths) or self.stem_width < 1:
            raise ConfigError("model widths must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.lr < 0 or self.weight_decay < 0:
            raise ConfigError("lr and weight_decay must be >= 0")
        if self.cka.batches < 1 or self.cka.batch_size < 4:
            raise ConfigError("cka needs batches >= 1 and batch_size >= 4")
        if self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")
        try:
            self.schedule(0)
            if self.dataset_path is None:
                self.bias.validate()
        except BiasLensError as e:
            raise ConfigError(str(e)) from e
        return self

    def schedule(self, seed: int) -> TrainSchedule:
        return TrainSchedule(batch_size=self.batch_size, max_epochs=self.max_epochs, patience=self.patience,
                             seed=seed, lr=self.lr, weight_decay=self.weight_decay)

    def network_config(self, image_shape: Tuple[int, ...], num_classes: int) -> NetworkConfig:
        return mini_resnet(image_shape, num_classes, self.stem_width, self.widths, self.dropout)

    def loss(self, name: str) -> LossSpec:
        kind = LossKind.parse(name)
        for spec in self.losses:
            if spec.kind == kind:
                return spec
        first = self.losses[0]
        return LossSpec(kind, first.alpha, first.beta)

    def with_overrides(self, **changes: Any) -> "ExperimentConfig":
        """Copy with top-level fields replaced; None values are ignored"""
        changes = {k: v for k, v in changes.items() if v is not None}
        return replace(self, **changes).validate()

    @classmethod
    def from_manager(cls, cfg: ConfigManager) -> "ExperimentConfig":
        try:
            alpha = float(cfg.get("losses.alpha", 1.0))
            beta = float(cfg.get("losses.beta", 1.0))
            losses = tuple(LossSpec(LossKind.parse(str(name)), alpha, beta)
                           for name in _as_list(cfg.get("losses.names")))
            dataset_path = cfg.get("data.dataset_path")
            config = cls(
                bias=BiasSpec(
                    num_classes=int(cfg.get("data.num_classes", 10)),
                    image_shape=(int(cfg.get("data.channels", 3)),
                                 int(cfg.get("data.height", 16)),
                                 int(cfg.get("data.width", 16))),
                    diversity_ratio=parse_diversity(cfg.get("data.diversity", 0.05)),
                    train_count=int(cfg.get("data.train_count", 5000)),
                    val_count=int(cfg.get("data.val_count", 500)),
                    test_count=int(cfg.get("data.test_count", 1000)),
                ),
                dataset_path=Path(dataset_path) if dataset_path else None,
                model_preset=str(cfg.get("model.preset", "mini_resnet")),
                stem_width=int(cfg.get("model.stem_width", 8)),
                widths=tuple(int(w) for w in _as_list(cfg.get("model.widths", [8, 16]))),
                dropout=float(cfg.get("model.dropout", 0.4)),
                losses=losses,
                seeds=tuple(int(s) for s in _as_list(cfg.get("seeds.values"))),
                lr=float(cfg.get("training.lr", 1e-3)),
                weight_decay=float(cfg.get("training.weight_decay", 1e-5)),
                batch_size=int(cfg.get("training.batch_size", 512)),
                patience=int(cfg.get("training.patience", 12)),
                max_epochs=int(cfg.get("training.max_epochs", 60)),
                cka=CkaConfig(
                    batch_size=int(cfg.get("cka.batch_size", 512)),
                    batches=int(cfg.get("cka.batches", 2)),
                    tau=float(cfg.get("cka.tau", 0.9)),
                ),
                output_dir=Path(cfg.get("output.dir", "runs")),
                threads=int(cfg.get("threads", 1)),
            )
        except ConfigError:
            raise
        except (BiasLensError, TypeError, ValueError) as e:
            raise ConfigError(f"invalid configuration: {e}") from e
        return config.validate()
