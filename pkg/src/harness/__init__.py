"""
Experiment orchestration: configuration, sweeps, persisted records, tables and heatmaps.
"""

from .config import CkaConfig, ExperimentConfig
from .experiment import (
    capture_traces,
    regenerate_reports,
    run_experiment,
    run_one,
    run_single,
    similarity_from_checkpoint,
)
from .heatmap import colormap_table, emit_heatmap, emit_heatmap_png
from .records import TEST_SPLITS, RunRecord, load_records, run_dir
from .report import aggregate, emit_structure_summary, emit_table, format_mean_std
from .selftest import SuiteResult, run_selftest

__all__ = [
    "CkaConfig",
    "ExperimentConfig",
    "RunRecord",
    "SuiteResult",
    "TEST_SPLITS",
    "aggregate",
    "capture_traces",
    "colormap_table",
    "emit_heatmap",
    "emit_heatmap_png",
    "emit_structure_summary",
    "emit_table",
    "format_mean_std",
    "load_records",
    "regenerate_reports",
    "run_dir",
    "run_experiment",
    "run_one",
    "run_selftest",
    "run_single",
    "similarity_from_checkpoint",
]
