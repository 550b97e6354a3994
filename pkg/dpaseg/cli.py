"""
Command-line interface for dual prototype attention segmentation
"""

import logging
import sys
from typing import List, Optional, Sequence

import click
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from . import __version__
from .config.profiles import REFERENCE_COST, get_profile
from .config.settings import RunConfig, resolve_settings
from .core.ifa import sample_reference_indices
from .core.network import DpaModel, load_model
from .core.training import TrainConfig, infer_dataset, train
from .errors import ArgumentError, ContractError, DatasetIOError, DatasetValidationError, DimensionError
from .utils.dataset_io import load_dataset, load_mask_tree, save_dataset, save_mask_tree
from .utils.experiments import ablate, bench, bench_table
from .utils.metrics import evaluate
from .utils.synthetic import gen_synthetic

console = Console(stderr=True)
logger = logging.getLogger(__name__)

VALIDATION_ERRORS = (DimensionError, ArgumentError, ContractError, DatasetValidationError)


def setup_logging(verbose: bool) -> None:
    root = logging.getLogger("dpaseg")
    root.handlers.clear()
    handler = RichHandler(console=console, show_time=False, show_path=False)
    handler.setFormatter(logging.Formatter("%(message)s"))
    root.addHandler(handler)
    root.setLevel(logging.DEBUG if verbose else logging.INFO)
    root.propagate = False


def config_option(func):
    return click.option("--config", type=click.Path(dir_okay=False), help="key = value settings file")(func)


def _model_for(settings: RunConfig) -> DpaModel:
    profile = get_profile(settings.profile)
    config = profile.create_model_config(resolution=settings.resolution, widths=settings.widths, seed=settings.seed)
    return DpaModel(config)


@click.group()
@click.version_option(version=__version__)
@click.option("--verbose", is_flag=True, help="Log at debug level")
def cli(verbose: bool):
    """Dual prototype attention for two-stream video object segmentation"""
    setup_logging(verbose)


@cli.command("gen-data")
@click.option("--out", help="Dataset root to write")
@click.option("--seed", type=int, help="Dataset seed")
@click.option("--n-videos", type=int, help="Number of videos")
@click.option("--len", "length", type=int, help="Frames per video")
@click.option("--resolution", type=int, help="Frame height and width (multiple of 16)")
@click.option("--difficulty", type=float, help="Occlusion difficulty in [0, 1]")
@click.option("--jobs", type=int, help="Worker threads")
@config_option
@click.pass_context
def gen_data(ctx, **params):
    """Generate a synthetic video dataset"""
    settings = resolve_settings(ctx, "gen-data", params)
    if not settings.out:
        raise ArgumentError("gen-data needs --out")
    videos = gen_synthetic(
        settings.seed, settings.n_videos, settings.length, settings.resolution, settings.resolution,
        settings.difficulty, jobs=settings.jobs, show_progress=True,
    )
    root = save_dataset(videos, settings.out, jobs=settings.jobs)
    console.print(f"[green]✓[/green] Dataset written: {root} ({len(videos)} videos)")


@cli.command("train")
@click.option("--data", help="Training dataset root")
@click.option("--extra-data", multiple=True, help="Further dataset roots, sampled with equal probability")
@click.option("--checkpoint", help="Checkpoint file to write")
@click.option("--out", help="Directory for the loss curve")
@click.option("--profile", help="Ablation row, I..XI")
@click.option("--seed", type=int, help="Initialisation and sampling seed")
@click.option("--steps", type=int, help="Optimizer steps")
@click.option("--batch-size", type=int, help="Snippets per optimizer step")
@click.option("--log-every", type=int, help="Steps between progress log lines")
@click.option("--resolution", type=int, help="Frame size of the dataset")
@click.option("--widths", help="Encoder widths, comma separated")
@config_option
@click.pass_context
def train_cmd(ctx, **params):
    """Train a model on 4-frame snippets"""
    settings = resolve_settings(ctx, "train", params)
    if not settings.data or not settings.checkpoint:
        raise ArgumentError("train needs --data and --checkpoint")
    dataset = load_dataset(settings.data, jobs=settings.jobs)
    extra = [load_dataset(root, jobs=settings.jobs) for root in settings.extra_data]
    model = _model_for(settings)
    config = TrainConfig(
        batch_size=settings.batch_size, steps=settings.steps, seed=settings.seed,
        n_refs=model.config.n_refs, log_every=settings.log_every,
    )
    result = train(
        model, dataset, config, more_datasets=extra, checkpoint_path=settings.checkpoint,
        profile=get_profile(settings.profile).name, show_progress=True,
    )
    if settings.out:
        result.loss_table().write(settings.out, "loss_curve")
    console.print(f"[green]✓[/green] Checkpoint written: {result.checkpoint}")
    click.echo(f"final_loss={result.final_loss:.6f}")


@cli.command("infer")
@click.option("--data", help="Dataset root to segment")
@click.option("--checkpoint", help="Trained checkpoint")
@click.option("--out", help="Mask tree to write")
@click.option("--n-refs", type=int, help="Reference frames per video")
@click.option("--bank-cache", help="Directory for cached memory banks")
@click.option("--jobs", type=int, help="Videos processed concurrently")
@config_option
@click.pass_context
def infer_cmd(ctx, **params):
    """Predict masks for every frame of every video"""
    settings = resolve_settings(ctx, "infer", params)
    if not settings.data or not settings.checkpoint or not settings.out:
        raise ArgumentError("infer needs --data, --checkpoint and --out")
    model, _ = load_model(settings.checkpoint)
    dataset = load_dataset(settings.data, jobs=settings.jobs)
    n_refs = settings.n_refs or model.config.n_refs
    masks = infer_dataset(
        model, dataset, n_refs, jobs=settings.jobs, cache_dir=settings.bank_cache,
        checkpoint=settings.checkpoint, show_progress=True,
    )
    root = save_mask_tree(masks, settings.out)
    console.print(f"[green]✓[/green] Masks written: {root} ({len(masks)} videos)")


@cli.command("eval")
@click.option("--pred", help="Predicted mask tree")
@click.option("--gt", help="Ground-truth mask tree or dataset root")
@click.option("--out", help="Directory for the metric report")
@click.option("--jobs", type=int, help="Worker threads")
@config_option
@click.pass_context
def eval_cmd(ctx, **params):
    """Score predicted masks with J, F and G"""
    settings = resolve_settings(ctx, "eval", params)
    if not settings.pred or not settings.gt:
        raise ArgumentError("eval needs --pred and --gt")
    pred = load_mask_tree(settings.pred, jobs=settings.jobs)
    gt = load_mask_tree(settings.gt, jobs=settings.jobs)
    missing = sorted(set(gt) - set(pred))
    if missing:
        raise DatasetValidationError(f"predictions missing for {len(missing)} videos, e.g. {missing[0]}")
    extra = sorted(set(pred) - set(gt))
    if extra:
        logger.warning("Ignoring %d predicted videos without ground truth: %s", len(extra), ", ".join(extra))
    ids = sorted(gt)
    report = evaluate([pred[i] for i in ids], [gt[i] for i in ids], ids=ids, jobs=settings.jobs)
    if settings.out:
        report.to_table().write(settings.out, "metrics")
    click.echo(report.summary_line())


@cli.command("ablate")
@click.option("--data", help="Training dataset root")
@click.option("--test-data", help="Evaluation dataset root")
@click.option("--grid", help="Comma-separated ablation rows")
@click.option("--seeds", type=int, help="Seeds per row")
@click.option("--steps", type=int, help="Optimizer steps per cell")
@click.option("--batch-size", type=int, help="Snippets per optimizer step")
@click.option("--resolution", type=int, help="Frame size of the datasets")
@click.option("--widths", help="Encoder widths, comma separated")
@click.option("--out", help="Directory for the ablation table")
@click.option("--jobs", type=int, help="Cells trained concurrently")
@config_option
@click.pass_context
def ablate_cmd(ctx, **params):
    """Train and evaluate the component ablation grid"""
    settings = resolve_settings(ctx, "ablate", params)
    if not settings.data or not settings.test_data:
        raise ArgumentError("ablate needs --data and --test-data")
    train_set = load_dataset(settings.data, jobs=settings.jobs)
    test_set = load_dataset(settings.test_data, jobs=settings.jobs)
    result = ablate(
        train_set, test_set, rows=settings.grid, seeds=list(range(settings.seeds)),
        resolution=settings.resolution, widths=settings.widths,
        train_config=TrainConfig(batch_size=settings.batch_size, steps=settings.steps, log_every=settings.log_every),
        jobs=settings.jobs,
    )
    table = result.to_table()
    if settings.out:
        table.write(settings.out, "ablation")
    click.echo(table.to_text(), nl=False)


@cli.command("bench")
@click.option("--checkpoint", help="Benchmark this checkpoint instead of the grid rows")
@click.option("--grid", help="Comma-separated ablation rows")
@click.option("--resolution", type=int, help="Frame size")
@click.option("--widths", help="Encoder widths, comma separated")
@click.option("--repeats", type=int, help="Timed forward passes")
@click.option("--seed", type=int, help="Initialisation seed")
@click.option("--out", help="Directory for the cost table")
@config_option
@click.pass_context
def bench_cmd(ctx, **params):
    """Count parameters and time the per-frame forward pass"""
    settings = resolve_settings(ctx, "bench", params)
    if settings.checkpoint:
        model, meta = load_model(settings.checkpoint)
        results = [bench(model, repeats=settings.repeats, seed=settings.seed, name=meta.get("profile", "model"))]
    else:
        results = []
        for row in settings.grid:
            model = _model_for(RunConfig(**{**settings.to_dict(), "profile": row}))
            results.append(bench(model, repeats=settings.repeats, seed=settings.seed, name=get_profile(row).name))

    summary = Table(title="Cost analysis", show_header=True, header_style="bold cyan")
    summary.add_column("Model", style="cyan")
    summary.add_column("Params", style="green", justify="right")
    summary.add_column("s/frame", style="yellow", justify="right")
    summary.add_column("Published", style="dim")
    for r in results:
        ref = REFERENCE_COST.get(r.name)
        summary.add_row(r.name, f"{r.params:,}", f"{r.mean_frame:.4f}", f"{ref[0]}M, {ref[1]}s" if ref else "-")
    console.print(summary)

    table = bench_table(results)
    if settings.out:
        table.write(settings.out, "bench")
    click.echo(table.to_text(), nl=False)


@cli.command("sample-frames")
@click.option("--len", "length", type=int, required=True, help="Video length L")
@click.option("--n", "n_refs", type=int, required=True, help="Reference count N")
@click.pass_context
def sample_frames(ctx, **params):
    """Print the evenly spaced reference frame indices"""
    settings = resolve_settings(ctx, "sample-frames", params)
    click.echo(" ".join(str(i) for i in sample_reference_indices(settings.length, settings.n_refs)))


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run the CLI and map failures to exit codes: 1 validation, 2 I/O"""
    args: List[str] = list(sys.argv[1:] if argv is None else argv)
    try:
        cli.main(args=args, prog_name="dpaseg", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.exceptions.Abort:
        console.print("[red]Aborted[/red]")
        return 1
    except click.UsageError as exc:
        exc.show(file=sys.stderr)
        return 1
    except VALIDATION_ERRORS as exc:
        console.print(f"[red]Error:[/red] {exc}")
        return 1
    except (DatasetIOError, OSError) as exc:
        console.print(f"[red]Error:[/red] {exc}")
        return 2
    return 0


def run() -> None:
    sys.exit(main())
