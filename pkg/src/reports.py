"""File persistence for runs: manifest, timings, report tables and model dumps."""

import json
import logging
from collections.abc import Iterable
from pathlib import Path
from typing import Any

import numpy as np

from classifiers import FittedModel, describe_network, describe_tree, model_from_dict, model_to_dict
from errors import ReportError
from experiments import ReportTable, RunManifest, SuiteResult
from stats_eda import emit_all_figures

logger = logging.getLogger("reports")

MANIFEST_FILE = "manifest.json"
TIMINGS_FILE = "timings.json"
TABLES_FILE = "tables.json"
MARKDOWN_FILE = "report.md"
REPORT_FORMATS = ("csv", "json", "markdown")
DECIMALS = 3

# Forest dumps run to hundreds of megabytes; `train --family rf` still writes one.
SKIP_MODEL_DUMP = ("rf",)


def _jsonable(value: Any) -> Any:
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


def _write_text(path: Path, text: str) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as e:
        logger.error(f"Cannot write {path}: {e}")
        raise ReportError(f"cannot write {path}: {e}") from e
    return path


def write_json(path: Path, data: Any) -> Path:
    try:
        text = json.dumps(data, indent=2, sort_keys=True, default=_jsonable, allow_nan=False)
    except (TypeError, ValueError) as e:
        raise ReportError(f"cannot serialize {path.name}: {e}") from e
    return _write_text(path, text + "\n")


def _read_json(path: Path) -> Any:
    try:
        with open(path, encoding="utf-8") as f:
            return json.load(f)
    except FileNotFoundError:
        raise ReportError(f"file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ReportError(f"invalid JSON in {path}: {e}") from e


# --- Manifest ---


def write_manifest(manifest: RunManifest, out_dir: str | Path) -> Path:
    """Write ``manifest.json``; keys are sorted so equal manifests are equal bytes."""
    return write_json(Path(out_dir) / MANIFEST_FILE, manifest.to_dict())


def load_manifest(path: str | Path) -> RunManifest:
    """Read a manifest from a run directory or a manifest file."""
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_FILE
    return RunManifest.from_dict(_read_json(path))


def write_timings(timings: dict[str, float], out_dir: str | Path) -> Path:
    return write_json(Path(out_dir) / TIMINGS_FILE, {k: round(v, 3) for k, v in timings.items()})


# --- Report tables ---


def format_cell(value: Any) -> Any:
    """Round floats to the report precision; labels and counts pass through."""
    if value is None or isinstance(value, bool | str):
        return value
    if isinstance(value, int | np.integer):
        return int(value)
    return round(float(value), DECIMALS)


def _cell_text(value: Any) -> str:
    value = format_cell(value)
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.{DECIMALS}f}"
    return str(value)


def table_csv(table: ReportTable, path: str | Path) -> Path:
    frame = table.to_frame().map(_cell_text)
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False)
    except OSError as e:
        logger.error(f"Cannot write {path}: {e}")
        raise ReportError(f"cannot write {path}: {e}") from e
    return Path(path)


def table_markdown(table: ReportTable) -> str:
    lines = [
        f"## {table.name}: {table.caption}",
        "",
        "| " + " | ".join(table.header) + " |",
        "|" + "|".join("---" for _ in table.header) + "|",
    ]
    lines.extend("| " + " | ".join(_cell_text(v) for v in row) + " |" for row in table.rows)
    return "\n".join(lines)


def emit_report(manifest: RunManifest, out_dir: str | Path, fmt: str = "csv") -> list[Path]:
    """Write every table of ``manifest`` in one format.

    csv: ``tables/<name>.csv``; json: ``tables.json``; markdown: ``report.md``.
    Column order follows each table's header; numbers carry three decimals.
    """
    if fmt not in REPORT_FORMATS:
        raise ReportError(f"unknown report format {fmt!r}; expected one of {REPORT_FORMATS}")
    out = Path(out_dir)
    tables = manifest.tables
    if fmt == "csv":
        paths = [table_csv(t, out / "tables" / f"{t.name}.csv") for t in tables]
    elif fmt == "json":
        document = {
            "tables": [
                {**t.to_dict(), "rows": [[format_cell(v) for v in row] for row in t.rows]}
                for t in tables
            ]
        }
        paths = [write_json(out / TABLES_FILE, document)]
    else:
        text = "\n\n".join(["# Churn classification report", *map(table_markdown, tables)])
        paths = [_write_text(out / MARKDOWN_FILE, text + "\n")]
    logger.info(f"Wrote {len(tables)} tables as {fmt} under {out}")
    return paths


# --- Models ---


def save_model(model: FittedModel, path: str | Path) -> Path:
    return write_json(Path(path), model_to_dict(model))


def load_model(path: str | Path) -> FittedModel:
    return model_from_dict(_read_json(Path(path)))


def write_model_dumps(
    models: dict[str, FittedModel], out_dir: str | Path, include_forest: bool = False
) -> list[Path]:
    """``models/<key>.json`` per model, plus readable listings for CART and ANN."""
    out = Path(out_dir) / "models"
    paths = []
    for key, model in models.items():
        if model.family in SKIP_MODEL_DUMP and not include_forest:
            logger.debug(f"Skipping {key} model dump")
            continue
        paths.append(save_model(model, out / f"{key}.json"))
        if model.family == "cart":
            paths.append(_write_text(out / f"{key}.txt", describe_tree(model) + "\n"))
        elif model.family == "ann":
            paths.append(_write_text(out / f"{key}.txt", describe_network(model) + "\n"))
    return paths


def write_run(
    result: SuiteResult, out_dir: str | Path, formats: Iterable[str] = ("csv",)
) -> Path:
    """Everything a suite run produces, laid out under ``out_dir``."""
    out = Path(out_dir)
    manifest_path = write_manifest(result.manifest, out)
    write_timings(result.timings, out)
    for fmt in formats:
        emit_report(result.manifest, out, fmt)
    write_model_dumps(result.models, out)
    try:
        emit_all_figures(result.dataset, out / "figures")
    except OSError as e:
        raise ReportError(f"cannot write figure data under {out}: {e}") from e
    logger.info(f"Run written to {out}")
    return manifest_path
