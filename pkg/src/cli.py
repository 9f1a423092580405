"""churnlab command line: inspect, eda, tune, train, evaluate, experiment, report."""

import logging
import os
import sys
from collections.abc import Sequence
from enum import Enum
from pathlib import Path
from typing import Annotated

import click
import typer
from dotenv import load_dotenv

from classifiers import FittedModel, predict_scores
from config import STAGES, ExperimentConfig, load_config
from data_model import class_counts
from errors import ChurnError, ReportError
from experiments import (
    ModelOutcome,
    ReportTable,
    audit_manifest,
    check_partition,
    descriptive_table,
    load_labelled,
    prepare_tables,
    run_suite,
    train_family,
)
from metrics import EvaluationReport, evaluate, labels_from_scores
from reports import (
    emit_report,
    load_manifest,
    load_model,
    write_json,
    write_model_dumps,
    write_run,
)
from stats_eda import CHI_SQUARE_FACTORS, chi_square_independence, emit_all_figures, outlier_suite

load_dotenv(".env.local")

logger = logging.getLogger("cli")

app = typer.Typer(
    name="churnlab",
    help="Bank churn classification: data profile, model training and the experiment suite.",
    no_args_is_help=True,
    add_completion=False,
)


class Family(str, Enum):
    gnb = "gnb"
    knn = "knn"
    svm = "svm"
    cart = "cart"
    rf = "rf"
    ann = "ann"


class Stage(str, Enum):
    compare = "compare"
    select = "select"
    balance = "balance"
    outliers = "outliers"
    all = "all"


class ReportFormat(str, Enum):
    csv = "csv"
    json = "json"
    markdown = "markdown"


DataOpt = Annotated[
    Path | None, typer.Option("--data", help="Churn CSV file (default: $CHURN_DATA).")
]
ConfigOpt = Annotated[
    Path | None, typer.Option("--config", help="TOML config file; flags override its values.")
]
SeedOpt = Annotated[int | None, typer.Option("--seed", help="Master seed (default 42).")]
OutOpt = Annotated[
    Path | None, typer.Option("--out", help="Output directory (default runs/latest).")
]
ThreadsOpt = Annotated[
    int | None, typer.Option("--threads", help="Worker processes; 0 uses every core.")
]
VerboseOpt = Annotated[bool, typer.Option("--verbose", "-v", help="Log at DEBUG level.")]
FeaturesOpt = Annotated[
    str, typer.Option("--features", help="Predictor set: all | top5.")
]
ResampleOpt = Annotated[
    str, typer.Option("--resample", help="Training-set balancing: none | under | smote.")
]
DropOutliersOpt = Annotated[
    bool,
    typer.Option("--drop-outliers", help="Remove Age outliers among Stayed rows before splitting."),
]


def setup_logging(verbose: bool = False) -> None:
    level = "DEBUG" if verbose else os.getenv("CHURN_LOG_LEVEL", "INFO").upper()
    logging.basicConfig(
        level=level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )


def _config(
    config: Path | None,
    data: Path | None,
    seed: int | None,
    out: Path | None,
    threads: int | None,
    **modes: str,
) -> ExperimentConfig:
    cfg = load_config(
        config,
        {
            "data_path": None if data is None else str(data),
            "seed": seed,
            "out_dir": None if out is None else str(out),
            "threads": threads,
        },
    )
    return cfg.with_modes(**modes) if modes else cfg


def _modes(features: str, resample: str, drop_outliers: bool) -> dict[str, str]:
    return {
        "feature_mode": features,
        "resample_mode": resample,
        "outlier_mode": "drop" if drop_outliers else "keep",
    }


def _echo_table(table: ReportTable) -> None:
    typer.echo(f"\n{table.name}: {table.caption}")
    typer.echo(table.to_frame().to_string(index=False, na_rep="", float_format=lambda v: f"{v:.3f}"))


def _echo_metrics(title: str, report: EvaluationReport) -> None:
    typer.echo(title)
    for name, value in report.metrics.to_dict().items():
        typer.echo(f"  {name:<12} {'n/a' if value is None else f'{value:.3f}'}")


# --- Data commands ---


@app.command()
def inspect(
    data: DataOpt = None,
    config: ConfigOpt = None,
    verbose: VerboseOpt = False,
) -> None:
    """Print the descriptive statistics table and the class counts."""
    setup_logging(verbose)
    cfg = _config(config, data, None, None, None)
    ds = load_labelled(cfg)
    typer.echo(f"{ds.n} rows")
    for label, count in class_counts(ds).items():
        typer.echo(f"  {label}: {count} ({count / ds.n:.2%})")
    _echo_table(descriptive_table(ds))


@app.command()
def eda(
    data: DataOpt = None,
    config: ConfigOpt = None,
    out: OutOpt = None,
    chi2: Annotated[
        list[str] | None,
        typer.Option("--chi2", help="Factor to test against the outcome; repeatable."),
    ] = None,
    outliers: Annotated[
        bool, typer.Option("--outliers", help="Report IQR outliers per class.")
    ] = False,
    figures: Annotated[
        bool, typer.Option("--figures", help="Write figure data to <out>/figures.")
    ] = False,
    verbose: VerboseOpt = False,
) -> None:
    """Chi-square tests, IQR outliers and figure data.

    With no selection flag every chi-square test and the outlier report run.
    """
    setup_logging(verbose)
    cfg = _config(config, data, None, out, None)
    ds = load_labelled(cfg)
    run_all = not (chi2 or outliers or figures)

    for factor in chi2 or (CHI_SQUARE_FACTORS if run_all else ()):
        r = chi_square_independence(ds, factor)
        typer.echo(
            f"{factor}: X-squared = {r.statistic:.5g}, df = {r.df}, p-value = {r.p_value:.4g}"
        )
    if outliers or run_all:
        for r in outlier_suite(ds):
            typer.echo(
                f"{r.column} [{r.class_label}]: {r.count} outliers"
                f" outside ({r.fences[0]:.6g}, {r.fences[1]:.6g})"
            )
    if figures:
        paths = emit_all_figures(ds, Path(cfg.out_dir) / "figures")
        typer.echo(f"Wrote {len(paths)} figure data files to {Path(cfg.out_dir) / 'figures'}")


# --- Model commands ---


def _train(cfg: ExperimentConfig, family: str) -> ModelOutcome:
    data = prepare_tables(cfg, load_labelled(cfg))
    return train_family(cfg, family, data, family, "cli")


@app.command()
def tune(
    family: Annotated[Family, typer.Option("--family", help="Model family to tune.")],
    data: DataOpt = None,
    config: ConfigOpt = None,
    seed: SeedOpt = None,
    out: OutOpt = None,
    threads: ThreadsOpt = None,
    features: FeaturesOpt = "all",
    resample: ResampleOpt = "none",
    drop_outliers: DropOutliersOpt = False,
    verbose: VerboseOpt = False,
) -> None:
    """Grid-search one family by repeated cross-validation on the training split."""
    setup_logging(verbose)
    cfg = _config(config, data, seed, out, threads, **_modes(features, resample, drop_outliers))
    outcome = _train(cfg, family.value)
    for cell in outcome.grid["cells"]:
        marker = "*" if cell["params"] == outcome.grid["best"] else " "
        if cell["error"] is not None:
            typer.echo(f"{marker} {cell['params']}: failed ({cell['error']})")
            continue
        mean, sd = cell["summary"]["accuracy"]["mean"], cell["summary"]["accuracy"]["sd"]
        typer.echo(f"{marker} {cell['params'] or 'defaults'}: accuracy {mean:.4f} (sd {sd:.4f})")
    path = write_json(Path(cfg.out_dir) / f"tune-{family.value}.json", outcome.grid)
    typer.echo(f"Grid written to {path}")


@app.command()
def train(
    family: Annotated[Family, typer.Option("--family", help="Model family to train.")],
    data: DataOpt = None,
    config: ConfigOpt = None,
    seed: SeedOpt = None,
    out: OutOpt = None,
    threads: ThreadsOpt = None,
    features: FeaturesOpt = "all",
    resample: ResampleOpt = "none",
    drop_outliers: DropOutliersOpt = False,
    verbose: VerboseOpt = False,
) -> None:
    """Tune, refit and save one model as JSON under <out>/models."""
    setup_logging(verbose)
    cfg = _config(config, data, seed, out, threads, **_modes(features, resample, drop_outliers))
    outcome = _train(cfg, family.value)
    path = write_model_dumps({family.value: outcome.model}, cfg.out_dir, include_forest=True)[0]
    typer.echo(f"Best parameters: {outcome.params or 'defaults'}")
    _echo_metrics("Test set:", outcome.test)
    typer.echo(f"Model written to {path}")


def _evaluate_model(model: FittedModel, cfg: ExperimentConfig) -> EvaluationReport:
    data = prepare_tables(cfg, load_labelled(cfg))
    test = data.test.select(model.columns)
    scores = predict_scores(model, test)
    return evaluate(test.labels, labels_from_scores(scores), scores)


@app.command(name="evaluate")
def evaluate_command(
    model: Annotated[Path, typer.Option("--model", help="Model JSON written by `train`.")],
    data: DataOpt = None,
    config: ConfigOpt = None,
    seed: SeedOpt = None,
    features: FeaturesOpt = "all",
    drop_outliers: DropOutliersOpt = False,
    verbose: VerboseOpt = False,
) -> None:
    """Score a saved model on the held-out split of the configured partition."""
    setup_logging(verbose)
    cfg = _config(config, data, seed, None, None, **_modes(features, "none", drop_outliers))
    fitted = load_model(model)
    check_partition(fitted, cfg)
    _echo_metrics(f"{fitted.family} on the test split:", _evaluate_model(fitted, cfg))


# --- Suite commands ---


@app.command()
def experiment(
    stage: Annotated[Stage, typer.Option("--stage", help="Stage to run, or all four in order.")] = Stage.all,
    data: DataOpt = None,
    config: ConfigOpt = None,
    seed: SeedOpt = None,
    out: OutOpt = None,
    threads: ThreadsOpt = None,
    fmt: Annotated[
        list[ReportFormat] | None,
        typer.Option("--format", help="Table format; repeatable (default csv)."),
    ] = None,
    verbose: VerboseOpt = False,
) -> None:
    """Run experiment stages and write manifest, tables, figures and models."""
    setup_logging(verbose)
    cfg = _config(config, data, seed, out, threads)
    stages = STAGES if stage is Stage.all else (stage.value,)
    result = run_suite(cfg, stages)
    formats = list(dict.fromkeys(f.value for f in fmt)) if fmt else ["csv"]
    write_run(result, cfg.out_dir, formats)

    audit = audit_manifest(load_manifest(cfg.out_dir))
    if not audit.ok:
        raise ReportError(f"manifest audit failed: {', '.join(audit.mismatches[:5])}")
    for table in result.manifest.tables:
        if "test set" in table.caption:
            _echo_table(table)
    total = sum(result.timings.values())
    typer.echo(f"\n{audit.checked} cells audited; run written to {cfg.out_dir} in {total:.0f}s")


@app.command()
def report(
    fmt: Annotated[ReportFormat, typer.Option("--format", help="Output format.")] = ReportFormat.csv,
    out: OutOpt = None,
    config: ConfigOpt = None,
    verbose: VerboseOpt = False,
) -> None:
    """Re-emit the tables of an existing run directory in another format."""
    setup_logging(verbose)
    cfg = _config(config, None, None, out, None)
    manifest = load_manifest(cfg.out_dir)
    for path in emit_report(manifest, cfg.out_dir, fmt.value):
        typer.echo(str(path))


def run_cli(argv: Sequence[str] | None = None) -> int:
    """Run the app and map outcomes to exit codes: 0 ok, 1 pipeline error, 2 usage."""
    command = typer.main.get_command(app)
    try:
        rv = command.main(
            args=None if argv is None else list(argv),
            prog_name="churnlab",
            standalone_mode=False,
        )
    except click.exceptions.Exit as e:
        return e.exit_code
    except click.UsageError as e:
        e.show()
        return 2
    except click.Abort:
        typer.echo("Aborted.", err=True)
        return 1
    except ChurnError as e:
        logger.debug("Pipeline error", exc_info=True)
        typer.echo(f"error: {e}", err=True)
        return 1
    return rv if isinstance(rv, int) else 0


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
