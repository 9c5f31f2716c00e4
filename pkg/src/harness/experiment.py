"""
Experiment runner

For every (loss, seed): build or load the dataset, train a network,
evaluate the test splits, capture eval-mode traces on test batches,
compute the layer similarity matrix and its structure scores, and
persist everything under <output_dir>/<loss>/<seed>/.

Each run derives its random streams from (seed, loss) alone, so results
do not depend on how runs are scheduled across threads.
"""

import logging
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from src.cka import SimilarityMatrix, StructureReport, layer_similarity, structure_report
from src.data import BiasedDataset, DatasetSplit, color_only_baseline, generate, load_binary
from src.data.biased import with_seed
from src.losses import LossSpec
from src.nn import ActivationTrace, Network, evaluate, load_checkpoint, save_checkpoint, train
from src.numerics import Rng
from src.utils.errors import ArgumentError

from .config import CkaConfig, ExperimentConfig
from .heatmap import emit_heatmap
from .records import (
    CHECKPOINT_FILE,
    HEATMAP_FILE,
    RECORD_FILE,
    REPORT_FILE,
    SIM_FILE,
    STRUCTURE_FILE,
    TEST_SPLITS,
    RunRecord,
    run_dir,
)
from .report import emit_structure_summary, emit_table

logger = logging.getLogger(__name__)

MIN_CKA_BATCH = 4


def check_writable(directory: Path):
    """Create the directory and prove a file can be written there; raises OSError otherwise"""
    directory.mkdir(parents=True, exist_ok=True)
    with tempfile.NamedTemporaryFile(dir=directory, prefix=".write-check-"):
        pass


def load_or_generate(cfg: ExperimentConfig, seed: int) -> BiasedDataset:
    if cfg.dataset_path is not None:
        return load_binary(cfg.dataset_path)
    return generate(with_seed(cfg.bias, seed))


def run_streams(loss: str, seed: int) -> Tuple[int, int, Rng]:
    """(network init seed, batch-order seed, CKA batch sampler) for one run"""
    root = Rng(seed).fork(f"run:{loss}")
    net_seed, order_seed = (int(v) for v in root.next_u64(2))
    return net_seed, order_seed, root.fork("cka-batches")


def capture_traces(net: Network, split: DatasetSplit, cka: CkaConfig, rng: Rng) -> List[ActivationTrace]:
    """
    Eval-mode traces on `cka.batches` disjoint batches drawn without
    replacement. The batch size shrinks when the split is too small.
    """
    n = len(split)
    size = min(cka.batch_size, n // cka.batches)
    if size < MIN_CKA_BATCH:
        raise ArgumentError(f"{n} samples cannot fill {cka.batches} CKA batches of >= {MIN_CKA_BATCH}")
    if size < cka.batch_size:
        logger.warning(f"CKA batch size reduced from {cka.batch_size} to {size} ({n} samples available)")

    order = rng.permutation(n)
    net.eval()
    traces = []
    for b in range(cka.batches):
        idx = np.sort(order[b * size:(b + 1) * size])
        _, trace = net.forward(split.images[idx], capture=True)
        traces.append(trace)
    return traces


def similarity_for(net: Network, split: DatasetSplit, cka: CkaConfig,
                   rng: Rng) -> Tuple[SimilarityMatrix, StructureReport]:
    sim = layer_similarity(capture_traces(net, split, cka, rng))
    # downstream artifacts use the persisted precision, so `report` reproduces them
    sim = SimilarityMatrix.from_text(sim.to_text())
    return sim, structure_report(sim, cka.tau)


def write_similarity(target: Path, sim: SimilarityMatrix, structure: StructureReport):
    sim.save(target / SIM_FILE)
    (target / STRUCTURE_FILE).write_text(structure.to_text(sim.layer_names))
    emit_heatmap(sim, target / HEATMAP_FILE)


def run_single(cfg: ExperimentConfig, dataset: BiasedDataset, spec: LossSpec, seed: int,
               baseline: Optional[Tuple[float, float]] = None, progress: bool = False) -> RunRecord:
    """Train and analyse one (loss, seed) pair and persist its artifacts"""
    started = time.perf_counter()
    loss = spec.kind.value
    target = run_dir(cfg.output_dir, loss, seed)
    target.mkdir(parents=True, exist_ok=True)

    net_seed, order_seed, cka_rng = run_streams(loss, seed)
    image_shape = tuple(dataset.train.images.shape[1:])
    net = Network(cfg.network_config(image_shape, dataset.num_classes), seed=net_seed)
    training = train(net, dataset, spec, cfg.schedule(order_seed), progress=progress)

    accuracies = {split: evaluate(net, getattr(dataset, split), cfg.batch_size) for split in TEST_SPLITS}
    val_accuracy = evaluate(net, dataset.val, cfg.batch_size)
    sim, structure = similarity_for(net, dataset.test_mixed, cfg.cka, cka_rng)

    save_checkpoint(net, target / CHECKPOINT_FILE)
    write_similarity(target, sim, structure)

    record = RunRecord(
        loss=loss,
        seed=seed,
        accuracies=accuracies,
        val_accuracy=val_accuracy,
        training=training,
        structure=structure,
        sim_matrix_path=f"{loss}/{seed}/{SIM_FILE}",
        wall_time=time.perf_counter() - started,
        layer_names=list(sim.layer_names),
        baseline=({"test_aligned": baseline[0], "test_conflicting": baseline[1]} if baseline else {}),
    )
    (target / REPORT_FILE).write_text(record.summary_text())
    record.save(target / RECORD_FILE)
    logger.info(f"Run {loss}/{seed}: aligned {accuracies['test_aligned']:.4f}, "
                f"conflicting {accuracies['test_conflicting']:.4f}, mixed {accuracies['test_mixed']:.4f} "
                f"({record.wall_time:.1f}s)")
    return record


def _baselines(datasets: Dict[int, BiasedDataset]) -> Dict[int, Tuple[float, float]]:
    return {seed: color_only_baseline(ds) for seed, ds in datasets.items()}


def run_experiment(cfg: ExperimentConfig, progress: bool = False) -> List[RunRecord]:
    """
    Sweep every configured loss over every seed.

    Raises:
        OSError: the output directory is not writable (checked before any training)
    """
    cfg.validate()
    out = Path(cfg.output_dir)
    check_writable(out)

    if cfg.dataset_path is not None:
        shared = load_binary(cfg.dataset_path)
        datasets = {seed: shared for seed in cfg.seeds}
    else:
        datasets = {seed: load_or_generate(cfg, seed) for seed in cfg.seeds}
    baselines = _baselines(datasets)

    tasks = [(spec, seed) for spec in cfg.losses for seed in cfg.seeds]
    workers = min(cfg.threads, len(tasks))
    logger.info(f"Running {len(tasks)} runs ({len(cfg.losses)} losses x {len(cfg.seeds)} seeds) "
                f"on {workers} thread(s), output in {out}")

    bar = tqdm(total=len(tasks), desc="runs", disable=not progress)
    if workers == 1:
        records = []
        for spec, seed in tasks:
            records.append(run_single(cfg, datasets[seed], spec, seed, baselines[seed]))
            bar.update(1)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run_single, cfg, datasets[seed], spec, seed, baselines[seed])
                       for spec, seed in tasks]
            records = []
            for future in futures:
                records.append(future.result())
                bar.update(1)
    bar.close()

    emit_table(records, out)
    emit_structure_summary(records, out)
    return records


def run_one(cfg: ExperimentConfig, loss: str, seed: int, progress: bool = False) -> RunRecord:
    """Single run for the `train` subcommand"""
    cfg.validate()
    check_writable(Path(cfg.output_dir))
    dataset = load_or_generate(cfg, seed)
    return run_single(cfg, dataset, cfg.loss(loss), seed, color_only_baseline(dataset), progress)


def similarity_from_checkpoint(checkpoint: Path, dataset: BiasedDataset, cka: CkaConfig,
                               out_dir: Path, seed: int = 0) -> Tuple[SimilarityMatrix, StructureReport]:
    """Post-hoc analysis of a saved network on a dataset's mixed test split"""
    net = load_checkpoint(checkpoint)
    check_writable(out_dir)
    sim, structure = similarity_for(net, dataset.test_mixed, cka, Rng(seed).fork("cka-batches"))
    write_similarity(out_dir, sim, structure)
    logger.info(f"Similarity over {sim.size} layers written to {out_dir}")
    return sim, structure


def regenerate_reports(output_dir: Path, records: Sequence[RunRecord]) -> str:
    """Rebuild tables and heatmaps from persisted runs"""
    for record in records:
        sim = SimilarityMatrix.load(Path(output_dir) / record.sim_matrix_path)
        emit_heatmap(sim, run_dir(output_dir, record.loss, record.seed) / HEATMAP_FILE)
    emit_structure_summary(records, output_dir)
    return emit_table(records, output_dir)
