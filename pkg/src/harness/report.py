"""
Results tables

Aggregates run records per objective: mean +- sample standard deviation
over seeds for each test split plus a Mean column (equal weight per
split). The best mean in every column is marked `*`, the second best `_`.
"""

import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from src.losses import LossFamily, LossKind
from src.utils.errors import DataError

from .records import TEST_SPLITS, RunRecord

logger = logging.getLogger(__name__)

TABLE_FILE = "results.txt"
CSV_FILE = "results.csv"
STRUCTURE_SUMMARY_FILE = "structure_summary.csv"

METRICS = TEST_SPLITS + ("mean",)
HEADERS = {"test_aligned": "Aligned", "test_conflicting": "Conflicting", "test_mixed": "Mixed", "mean": "Mean"}
BEST, SECOND, PLAIN = "*", "_", " "


def loss_order() -> List[LossKind]:
    """Probabilistic objectives first, then margin-based, each in declaration order"""
    families = [LossFamily.PROBABILISTIC, LossFamily.MARGIN]
    return sorted(LossKind, key=lambda kind: families.index(kind.family))


def format_mean_std(mean: float, std: float) -> str:
    return f"{mean:.4f} ± {std:.4f}"


def _records_frame(records: Sequence[RunRecord]) -> pd.DataFrame:
    if not records:
        raise DataError("no run records to tabulate")
    frame = pd.DataFrame([
        {"loss": r.loss, "seed": r.seed, **{split: r.accuracies[split] for split in TEST_SPLITS}}
        for r in records
    ])
    frame["mean"] = frame[list(TEST_SPLITS)].mean(axis=1)
    # record order must not change the sums
    return frame.sort_values(["loss", "seed"], kind="stable").reset_index(drop=True)


def aggregate(records: Sequence[RunRecord]) -> pd.DataFrame:
    """One row per loss: seeds, <metric>_mean and <metric>_std (ddof=1, 0 for one seed)"""
    frame = _records_frame(records)
    grouped = frame.groupby("loss", sort=False)
    summary = pd.DataFrame({"seeds": grouped["seed"].count()})
    for metric in METRICS:
        summary[f"{metric}_mean"] = grouped[metric].mean()
        summary[f"{metric}_std"] = grouped[metric].std(ddof=1).fillna(0.0)

    present = [kind for kind in loss_order() if kind.value in summary.index]
    summary = summary.loc[[kind.value for kind in present]]
    summary.insert(0, "family", [kind.family.value for kind in present])
    summary.insert(0, "objective", [kind.label for kind in present])
    return summary


def rank_markers(means: Sequence[float]) -> List[str]:
    """`*` for the highest value, `_` for the second; ties keep row order"""
    order = sorted(range(len(means)), key=lambda i: -means[i])
    markers = [PLAIN] * len(means)
    for position, marker in zip(order, (BEST, SECOND)):
        markers[position] = marker
    return markers


def baseline_line(records: Sequence[RunRecord]) -> str:
    """Mean colour-only baseline over distinct seeds, or '' when no record carries one"""
    per_seed = {r.seed: r.baseline for r in records if r.baseline}
    if not per_seed:
        return ""
    seeds = sorted(per_seed)
    aligned = np.mean([per_seed[s]["test_aligned"] for s in seeds])
    conflicting = np.mean([per_seed[s]["test_conflicting"] for s in seeds])
    return f"colour-only baseline: aligned {aligned:.4f}, conflicting {conflicting:.4f}"


def format_table(summary: pd.DataFrame, footer: str = "") -> str:
    columns: Dict[str, List[str]] = {
        "Objective": list(summary["objective"]),
        "Family": list(summary["family"]),
        "Seeds": [str(n) for n in summary["seeds"]],
    }
    for metric in METRICS:
        means = summary[f"{metric}_mean"].to_numpy(dtype=np.float64)
        stds = summary[f"{metric}_std"].to_numpy(dtype=np.float64)
        markers = rank_markers(list(means))
        columns[HEADERS[metric]] = [format_mean_std(m, s) + marker for m, s, marker in zip(means, stds, markers)]
    table = pd.DataFrame(columns).to_string(index=False)
    legend = "accuracy mean ± sample std over seeds; * best, _ second best; headline = Conflicting"
    if footer:
        legend += f"\n{footer}"
    return f"{table}\n\n{legend}\n"


def emit_table(records: Sequence[RunRecord], out_dir: Optional[Union[str, Path]] = None) -> str:
    """
    Build the results table; with out_dir, also write results.txt and
    results.csv there. Returns the text table.
    """
    summary = aggregate(records)
    text = format_table(summary, baseline_line(records))
    if out_dir is not None:
        out = Path(out_dir)
        (out / TABLE_FILE).write_text(text)
        summary.rename_axis("loss").reset_index().to_csv(out / CSV_FILE, index=False, float_format="%.6f")
        logger.info(f"Results table written to {out / TABLE_FILE} and {out / CSV_FILE}")
    return text


def emit_structure_summary(records: Sequence[RunRecord],
                           out_dir: Optional[Union[str, Path]] = None) -> pd.DataFrame:
    """Mean block and progressive scores per loss across seeds"""
    if not records:
        raise DataError("no run records to summarise")
    frame = pd.DataFrame([
        {"loss": r.loss, "block_score": r.structure.block_score,
         "progressive_score": r.structure.progressive_score}
        for r in sorted(records, key=lambda r: (r.loss, r.seed))
    ])
    summary = frame.groupby("loss", sort=False).agg(
        seeds=("block_score", "count"),
        block_score=("block_score", "mean"),
        progressive_score=("progressive_score", "mean"),
    )
    order = [kind.value for kind in loss_order() if kind.value in summary.index]
    summary = summary.loc[order]
    if out_dir is not None:
        path = Path(out_dir) / STRUCTURE_SUMMARY_FILE
        summary.reset_index().to_csv(path, index=False, float_format="%.6f")
        logger.info(f"Structure summary written to {path}")
    return summary
