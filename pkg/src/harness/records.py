"""
Run records

One RunRecord per (loss, seed), persisted as record.json next to the
run's other artifacts so `report` can rebuild tables later.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Union

from src.cka import StructureReport
from src.losses import LossKind
from src.nn import TrainReport
from src.utils.data_loader import DataLoader
from src.utils.errors import FormatError

TEST_SPLITS = ("test_aligned", "test_conflicting", "test_mixed")

RECORD_FILE = "record.json"
REPORT_FILE = "report.txt"
SIM_FILE = "sim_matrix.txt"
STRUCTURE_FILE = "structure.txt"
HEATMAP_FILE = "heatmap.ppm"
CHECKPOINT_FILE = "checkpoint.bin"
RUN_FILES = (REPORT_FILE, SIM_FILE, STRUCTURE_FILE, HEATMAP_FILE, CHECKPOINT_FILE, RECORD_FILE)


def run_dir(output_dir: Union[str, Path], loss: str, seed: int) -> Path:
    return Path(output_dir) / loss / str(seed)


@dataclass
class RunRecord:
    """Outcome of one (loss, seed) run; `baseline` holds the colour-only accuracies on the same data"""
    loss: str
    seed: int
    accuracies: Dict[str, float]
    val_accuracy: float
    training: TrainReport
    structure: StructureReport
    sim_matrix_path: str
    wall_time: float = 0.0
    layer_names: List[str] = field(default_factory=list)
    baseline: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        LossKind.parse(self.loss)
        for split in TEST_SPLITS:
            value = self.accuracies.get(split)
            if value is None or not 0.0 <= value <= 1.0:
                raise FormatError(f"record {self.loss}/{self.seed}: accuracy '{split}' missing or outside [0, 1]")

    @property
    def kind(self) -> LossKind:
        return LossKind.parse(self.loss)

    @property
    def headline(self) -> float:
        """Accuracy on bias-conflicting test samples"""
        return self.accuracies["test_conflicting"]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "loss": self.loss,
            "seed": self.seed,
            "accuracies": dict(self.accuracies),
            "val_accuracy": self.val_accuracy,
            "training": self.training.to_dict(),
            "structure": self.structure.to_dict(),
            "sim_matrix_path": self.sim_matrix_path,
            "wall_time": self.wall_time,
            "layer_names": list(self.layer_names),
            "baseline": dict(self.baseline),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunRecord":
        try:
            return cls(
                loss=str(data["loss"]),
                seed=int(data["seed"]),
                accuracies={k: float(v) for k, v in data["accuracies"].items()},
                val_accuracy=float(data["val_accuracy"]),
                training=TrainReport.from_dict(data["training"]),
                structure=StructureReport.from_dict(data["structure"]),
                sim_matrix_path=str(data["sim_matrix_path"]),
                wall_time=float(data.get("wall_time", 0.0)),
                layer_names=list(data.get("layer_names", [])),
                baseline={k: float(v) for k, v in data.get("baseline", {}).items()},
            )
        except (KeyError, TypeError, ValueError) as e:
            raise FormatError(f"malformed run record: {e}") from e

    def save(self, path: Union[str, Path]):
        DataLoader.save_data_to_json(self.to_dict(), path)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "RunRecord":
        return cls.from_dict(DataLoader.load_json(path))

    def summary_text(self) -> str:
        t = self.training
        lines = [
            f"loss = {self.loss} ({self.kind.label}, {self.kind.family.value})",
            f"seed = {self.seed}",
            f"epochs = {t.num_epochs}",
            f"best_epoch = {t.best_epoch}",
            f"stop_reason = {t.stop_reason}",
            f"val_accuracy = {self.val_accuracy:.4f}",
        ]
        lines += [f"{split} = {self.accuracies[split]:.4f}" for split in TEST_SPLITS]
        lines += [
            f"block_score = {self.structure.block_score:.6f}",
            f"progressive_score = {self.structure.progressive_score:.6f}",
            f"wall_time_s = {self.wall_time:.2f}",
        ]
        return "\n".join(lines) + "\n"


def load_records(output_dir: Union[str, Path]) -> List[RunRecord]:
    """Every record.json under <output_dir>/<loss>/<seed>/, sorted by path"""
    return [RunRecord.from_dict(data) for data in DataLoader.load_records(output_dir)]
