"""
Training loop

Mini-batch Adam training with early stopping on validation accuracy.
The best-epoch parameters (and batchnorm buffers) are restored at the end.
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Protocol

import numpy as np
from tqdm import tqdm

from src.losses import LossSpec, Targets, compute_loss
from src.numerics import Rng
from src.utils.errors import ArgumentError, DataError

from .network import Network
from .optim import AdamState, adam_step

logger = logging.getLogger(__name__)


class LabeledSplit(Protocol):
    images: np.ndarray
    labels: np.ndarray


class TrainValData(Protocol):
    train: LabeledSplit
    val: LabeledSplit


@dataclass(frozen=True)
class TrainSchedule:
    batch_size: int = 512
    max_epochs: int = 60
    patience: int = 12
    seed: int = 0
    lr: float = 1e-3
    weight_decay: float = 1e-5

    def __post_init__(self):
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ArgumentError("batch_size, max_epochs and patience must be >= 1")


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    train_accuracy: float
    val_accuracy: float


@dataclass
class TrainReport:
    """Per-epoch history, the best epoch and why training stopped"""
    epochs: List[EpochStats] = field(default_factory=list)
    best_epoch: int = 0
    best_val_accuracy: float = 0.0
    stop_reason: str = ""

    @property
    def num_epochs(self) -> int:
        return len(self.epochs)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "epochs": [asdict(e) for e in self.epochs],
            "best_epoch": self.best_epoch,
            "best_val_accuracy": self.best_val_accuracy,
            "stop_reason": self.stop_reason,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TrainReport":
        return cls(
            epochs=[EpochStats(**e) for e in data["epochs"]],
            best_epoch=int(data["best_epoch"]),
            best_val_accuracy=float(data["best_val_accuracy"]),
            stop_reason=str(data["stop_reason"]),
        )


def _check_split(split: LabeledSplit, name: str):
    if split is None or len(split.labels) == 0:
        raise DataError(f"{name} split is empty")


def accuracy_from_logits(logits: np.ndarray, labels: np.ndarray) -> float:
    """Fraction of argmax hits; np.argmax breaks ties toward the lowest class index"""
    if len(labels) == 0:
        return 0.0
    return float(np.mean(np.argmax(logits, axis=1) == np.asarray(labels)))


def evaluate(net: Network, split: LabeledSplit, batch_size: int = 512) -> float:
    """Accuracy of argmax(logits) against labels; switches the network to eval mode"""
    net.eval()
    if len(split.labels) == 0:
        return 0.0
    logits = net.predict(split.images, batch_size)
    return accuracy_from_logits(logits, split.labels)


def train(net: Network, dataset: TrainValData, spec: LossSpec, schedule: TrainSchedule,
          progress: bool = False) -> TrainReport:
    """
    Train until `patience` epochs pass without a strictly higher validation
    accuracy, or until `max_epochs`.

    The batch order comes from Rng(schedule.seed); dropout masks come from
    the network's own streams, so identical seeds give identical reports.
    """
    _check_split(dataset.train, "train")
    _check_split(dataset.val, "val")

    images = dataset.train.images
    labels = np.asarray(dataset.train.labels, dtype=np.int64)
    num_classes = net.config.num_classes
    n = labels.shape[0]

    optimizer = AdamState(lr=schedule.lr, weight_decay=schedule.weight_decay)
    order_rng = Rng(schedule.seed).fork("batch-order")
    report = TrainReport()
    best_state = None
    since_best = 0

    logger.info(f"Training {spec.kind.value} for up to {schedule.max_epochs} epochs "
                f"({n} samples, batch {schedule.batch_size}, patience {schedule.patience})")

    epochs = tqdm(range(1, schedule.max_epochs + 1), desc=f"train[{spec.kind.value}]",
                  disable=not progress, leave=False)
    for epoch in epochs:
        net.train()
        order = order_rng.permutation(n)
        loss_sum = 0.0
        correct = 0
        for start in range(0, n, schedule.batch_size):
            idx = order[start:start + schedule.batch_size]
            logits, _ = net.forward(images[idx])
            result = compute_loss(spec, logits, Targets.from_labels(labels[idx], num_classes))
            grads = net.backward(result.grad)
            adam_step(optimizer, net.parameters(), grads)
            loss_sum += result.value * len(idx)
            correct += int(np.sum(np.argmax(logits, axis=1) == labels[idx]))

        if not np.isfinite(loss_sum):
            logger.warning(f"Epoch {epoch}: non-finite training loss")

        val_accuracy = evaluate(net, dataset.val, schedule.batch_size)
        stats = EpochStats(epoch, loss_sum / n, correct / n, val_accuracy)
        report.epochs.append(stats)
        logger.debug(f"Epoch {epoch}: loss={stats.train_loss:.6f} "
                     f"train_acc={stats.train_accuracy:.4f} val_acc={val_accuracy:.4f}")
        epochs.set_postfix(val=f"{val_accuracy:.3f}")

        if best_state is None or val_accuracy > report.best_val_accuracy:
            report.best_epoch = epoch
            report.best_val_accuracy = val_accuracy
            best_state = net.state_dict()
            since_best = 0
        else:
            since_best += 1
            if since_best >= schedule.patience:
                report.stop_reason = "early_stop"
                break
    else:
        report.stop_reason = "max_epochs"

    net.load_state_dict(best_state)
    net.eval()
    logger.info(f"Stopped after {report.num_epochs} epochs ({report.stop_reason}); "
                f"best val accuracy {report.best_val_accuracy:.4f} at epoch {report.best_epoch}")
    return report
