"""CSV and manifest writers.

Layout under the output directory::

    manifest.txt                      resolved run configuration, flat dotted keys
    <scenario>/summary.csv            one row per sweep point
    <scenario>/trajectory_<i>.csv     sampled records of sweep point i
"""

from __future__ import annotations

import csv
import io
import math
from datetime import datetime, timezone
from pathlib import Path

from digesta import __version__
from digesta.config import RunConfig, config_to_tree, flat_lines
from digesta.core import STATE_FIELDS
from digesta.errors import OutputError
from digesta.integrator import IntegrationResult
from digesta.scenarios import ScenarioResult

TRAJECTORY_FIELDS = (
    ("t",)
    + STATE_FIELDS
    + ("M", "V", "r_sol", "W_ratio", "mass_residual", "volume_residual", "dry_residual")
)


def format_value(value) -> str:
    """Nine significant digits for floats, empty for missing values."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return f"{value:.9g}"
    return str(value)


def _csv_text(header, rows) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\r\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_value(v) for v in row])
    return buffer.getvalue()


def summary_csv(result: ScenarioResult) -> str:
    """Summary table: the sweep axis followed by the requested output columns."""
    header = (result.axis,) + tuple(result.outputs)
    rows = [[row.value] + [getattr(row, name) for name in result.outputs] for row in result.rows]
    return _csv_text(header, rows)


def trajectory_csv(run: IntegrationResult) -> str:
    audit = run.audit
    rows = []
    for i, rec in enumerate(run.trajectory):
        rows.append(
            [rec.t]
            + rec.state.as_list()
            + [rec.M, rec.V, rec.r_sol, rec.W_ratio, audit.mass[i], audit.volume[i], audit.dry[i]]
        )
    return _csv_text(TRAJECTORY_FIELDS, rows)


def _write(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror or exc}") from exc


def write_outputs(result: ScenarioResult, directory) -> list[Path]:
    """Write the summary and per-point trajectory CSVs of one scenario; returns the paths."""
    base = Path(directory) / result.name
    paths = [base / "summary.csv"]
    _write(paths[0], summary_csv(result))
    for i, run in enumerate(result.runs):
        if run is None:
            continue
        path = base / f"trajectory_{i}.csv"
        _write(path, trajectory_csv(run))
        paths.append(path)
    return paths


def manifest_text(config: RunConfig, config_path: str, output_dir: str, timestamp: str | None = None) -> str:
    """Flat ``key: value`` manifest that reads back as a configuration."""
    if timestamp is None:
        timestamp = datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    meta = {
        "manifest": {
            "tool_version": __version__,
            "timestamp": timestamp,
            "config_path": str(config_path),
            "output_dir": str(output_dir),
            "scenario_names": [s.name for s in config.scenarios],
        }
    }
    lines = flat_lines(meta) + flat_lines(config_to_tree(config))
    return "\n".join(lines) + "\n"


def write_manifest(config: RunConfig, config_path: str, directory) -> Path:
    path = Path(directory) / "manifest.txt"
    _write(path, manifest_text(config, config_path, str(directory)))
    return path
