"""
biaslens - Main Entry Point

Command-line surface of the lab:

    generate   build a biased dataset and write it as a binary file
    train      one (loss, seed) run
    sweep      every configured loss over every seed, then the results table
    cka        similarity matrix of a saved checkpoint on a dataset
    report     rebuild tables and heatmaps from persisted runs
    selftest   gradient, CKA and data oracle suites

Exit codes: 0 success, 1 validation or usage error, 2 IO error.
"""

import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

import click

from src.cka import SimilarityMatrix
from src.data import DIVERSITY_PRESETS, generate, load_binary, parse_diversity, save_binary
from src.data.biased import with_seed
from src.harness import (
    ExperimentConfig,
    emit_heatmap_png,
    load_records,
    regenerate_reports,
    run_experiment,
    run_one,
    run_selftest,
    similarity_from_checkpoint,
)
from src.harness.records import run_dir
from src.utils import BiasLensError, ConfigManager, configure_logging
from src.utils.errors import DataError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_IO = 2
DATASET_FILE = "dataset.bin"
PRESET_TEXT = ", ".join(f"{ratio:.1%}".replace(".0%", "%") for ratio in DIVERSITY_PRESETS)


def experiment_options(func):
    """Flags shared by the commands that read an experiment config"""
    options = [
        click.option("--config", "config_path", default=None, help="Config file (.cfg/.ini or .yaml)"),
        click.option("--out", "out", default=None, help="Output directory"),
        click.option("--loss", default=None, help="Objective: sce|bce|nll|l1|l2|sos"),
        click.option("--seed", type=int, default=None, help="Single seed"),
        click.option("--diversity", default=None,
                     help=f"Conflicting fraction, e.g. 0.05 or 5% (presets: {PRESET_TEXT})"),
        click.option("--tau", type=float, default=None, help="Block-structure threshold"),
        click.option("--cka-batches", type=int, default=None, help="Number of CKA mini-batches"),
        click.option("--cka-batch-size", type=int, default=None, help="Samples per CKA mini-batch"),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def build_config(ctx: click.Context, config_path: Optional[str], out: Optional[str], loss: Optional[str],
                 seed: Optional[int], diversity: Optional[str], tau: Optional[float],
                 cka_batches: Optional[int], cka_batch_size: Optional[int]) -> ExperimentConfig:
    """Config file and environment first, then command-line flags on top"""
    manager = ConfigManager(config_path)
    verbose = ctx.find_root().params.get("verbose", False)
    configure_logging("DEBUG" if verbose else manager.get("logging.level", "INFO"),
                      bool(manager.get("logging.json", False)))
    cfg = ExperimentConfig.from_manager(manager)

    bias = cfg.bias
    if diversity is not None:
        bias = replace(bias, diversity_ratio=parse_diversity(diversity))
    cka = replace(
        cfg.cka,
        tau=tau if tau is not None else cfg.cka.tau,
        batches=cka_batches if cka_batches is not None else cfg.cka.batches,
        batch_size=cka_batch_size if cka_batch_size is not None else cfg.cka.batch_size,
    )
    return cfg.with_overrides(
        bias=bias,
        cka=cka,
        output_dir=Path(out) if out else None,
        seeds=(seed,) if seed is not None else None,
        losses=(cfg.loss(loss),) if loss else None,
    )


@click.group()
@click.option("--verbose", "-v", is_flag=True, help="Debug logging")
@click.pass_context
def cli(ctx: click.Context, verbose: bool):
    """biaslens: objective-function and representation-structure lab"""
    configure_logging("DEBUG" if verbose else "INFO")


@cli.command("generate")
@experiment_options
@click.pass_context
def generate_command(ctx, **flags):
    """Generate a dataset and write <out>/dataset.bin"""
    cfg = build_config(ctx, **flags)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    dataset = generate(with_seed(cfg.bias, cfg.seeds[0]))
    save_binary(dataset, out / DATASET_FILE)
    click.echo(f"dataset written to {out / DATASET_FILE}")
    return EXIT_OK


@cli.command("train")
@experiment_options
@click.pass_context
def train_command(ctx, **flags):
    """Train and analyse one loss with one seed"""
    cfg = build_config(ctx, **flags)
    record = run_one(cfg, cfg.losses[0].kind.value, cfg.seeds[0], progress=True)
    click.echo(record.summary_text(), nl=False)
    return EXIT_OK


@cli.command("sweep")
@experiment_options
@click.pass_context
def sweep_command(ctx, **flags):
    """Run every loss over every seed and emit the results table"""
    cfg = build_config(ctx, **flags)
    records = run_experiment(cfg, progress=True)
    click.echo(f"{len(records)} runs written to {cfg.output_dir}")
    click.echo((Path(cfg.output_dir) / "results.txt").read_text(), nl=False)
    return EXIT_OK


@cli.command("cka")
@experiment_options
@click.option("--checkpoint", required=True, help="checkpoint.bin of a trained network")
@click.option("--dataset", "dataset_path", default=None, help="Binary dataset; generated from the config when omitted")
@click.pass_context
def cka_command(ctx, checkpoint, dataset_path, **flags):
    """Similarity matrix and structure scores of a checkpoint"""
    cfg = build_config(ctx, **flags)
    seed = cfg.seeds[0]
    if dataset_path:
        dataset = load_binary(dataset_path)
    elif cfg.dataset_path is not None:
        dataset = load_binary(cfg.dataset_path)
    else:
        dataset = generate(with_seed(cfg.bias, seed))
    sim, structure = similarity_from_checkpoint(Path(checkpoint), dataset, cfg.cka, Path(cfg.output_dir), seed)
    click.echo(structure.to_text(sim.layer_names), nl=False)
    return EXIT_OK


@cli.command("report")
@experiment_options
@click.option("--png", is_flag=True, help="Also render annotated PNG heatmaps")
@click.pass_context
def report_command(ctx, png, **flags):
    """Rebuild results tables and heatmaps from <out>/<loss>/<seed>/record.json"""
    cfg = build_config(ctx, **flags)
    out = Path(cfg.output_dir)
    records = load_records(out)
    if not records:
        raise DataError(f"no run records under {out}")
    text = regenerate_reports(out, records)
    if png:
        for record in records:
            sim = SimilarityMatrix.load(out / record.sim_matrix_path)
            emit_heatmap_png(sim, run_dir(out, record.loss, record.seed) / "heatmap.png",
                             title=f"{record.kind.label} seed {record.seed}")
    click.echo(text, nl=False)
    return EXIT_OK


@cli.command("selftest")
@click.option("--suite", "suites", multiple=True,
              type=click.Choice(["losses", "network", "cka", "data"]), help="Run only these suites")
def selftest_command(suites):
    """Run the oracle suites and print per-suite pass counts"""
    results = run_selftest(list(suites) or None)
    for result in results:
        click.echo(result.summary())
        for failure in result.failures:
            click.echo(f"  FAILED {failure}")
    return EXIT_OK if all(r.ok for r in results) else EXIT_INVALID


def main(argv: Optional[List[str]] = None) -> int:
    """Run the CLI and map failures onto exit codes"""
    try:
        rv = cli.main(args=argv, prog_name="biaslens", standalone_mode=False)
    except click.ClickException as e:
        # usage errors print the usage text first
        e.show()
        return EXIT_INVALID
    except click.Abort:
        return EXIT_INVALID
    except BiasLensError as e:
        logger.error(str(e))
        click.echo(f"error: {e}", err=True)
        return EXIT_INVALID
    except OSError as e:
        logger.error(str(e))
        click.echo(f"io error: {e}", err=True)
        return EXIT_IO
    return EXIT_OK if rv is None else int(rv)


if __name__ == "__main__":
    sys.exit(main())
