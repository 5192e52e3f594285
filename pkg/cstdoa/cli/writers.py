"""CSV and manifest output for a finished run."""

import csv
import logging
import math
import platform
from pathlib import Path
from typing import Iterable, List, Optional, Sequence

import numpy as np
import pydantic
import scipy

from cstdoa import __version__
from cstdoa.config import settings
from cstdoa.models import RunConfig, RunManifest, RunResult

logger = logging.getLogger(__name__)

TDOA_COLUMNS = [
    "block_index",
    "time_s",
    "sensor_id",
    "method",
    "delta_t_seconds",
    "confidence",
    "accepted",
    "theta_rad",
]
SOLVER_COLUMNS = [
    "block_index",
    "sensor_id",
    "iterations",
    "objective",
    "residual",
    "peak_index",
    "peak_magnitude",
    "mu",
]
TRACK_COLUMNS = ["time_s", "x", "y", "residual", "n_pairs_used"]
FIGURE_COLUMNS = [
    "time_s",
    "delta_t_1",
    "delta_t_2",
    "analytic_delta_t_1",
    "analytic_delta_t_2",
]


def format_value(value) -> str:
    """CSV cell text: empty for None, inf for the infinite confidence, repr for floats."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(value)
    return str(value)


def write_table(path: Path, table: str, columns: Sequence[str], rows: Iterable[Sequence]) -> None:
    """Write one versioned CSV table."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write(f"# cstdoa-csv v{settings.CSV_SCHEMA_VERSION} {table}\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_value(v) for v in row])


def tdoa_rows(result: RunResult) -> List[list]:
    rows = []
    for r in result.results:
        for report in (r.compressive, r.xcorr):
            rows.append(
                [
                    report.block_index,
                    report.start_time,
                    report.sensor_id,
                    report.method,
                    report.delay,
                    report.confidence,
                    report.accepted,
                    report.theta,
                ]
            )
    return rows


def solver_rows(result: RunResult) -> List[list]:
    return [
        [
            r.block_index,
            r.sensor_id,
            r.iterations,
            r.objective,
            r.residual,
            r.peak_index,
            r.peak_magnitude,
            r.mu,
        ]
        for r in result.results
    ]


def track_rows(result: RunResult) -> List[list]:
    rows = []
    for p in result.track:
        x, y = p.position if p.position is not None else (None, None)
        rows.append([p.time, x, y, p.residual, p.n_pairs_used])
    return rows


def figure_rows(result: RunResult) -> List[list]:
    return [[p.time, *p.estimated, *p.analytic] for p in result.figure]


def versions() -> dict:
    return {
        "cstdoa": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pydantic": pydantic.VERSION,
        "python": platform.python_version(),
    }


def build_manifest(
    cfg: RunConfig,
    result: Optional[RunResult] = None,
    files: Optional[List[str]] = None,
) -> RunManifest:
    """Run echo; carries no timestamps so equal runs give equal manifests."""
    manifest = RunManifest(
        name=cfg.name,
        mode=cfg.mode,
        seed=cfg.seed,
        versions=versions(),
        config=cfg.model_dump(mode="json"),
        block_length=cfg.block_length,
        rows=cfg.sensing.rows,
        compression_ratio=cfg.compression_ratio,
        sample_rate=cfg.scenario.sample_rate if cfg.scenario is not None else None,
        dry_run=result is None,
        files=files or [],
    )
    if result is None:
        return manifest

    accepted = sum(r.compressive.accepted for r in result.results)
    return manifest.model_copy(
        update={
            "sample_rate": result.sample_rate,
            "n_blocks": result.n_blocks,
            "dropped_partial_blocks": result.dropped_partial_blocks,
            "accepted_reports": accepted,
            "rejected_reports": len(result.results) - accepted,
            "loop_period_estimated": result.loop_period_estimated,
            "loop_period_analytic": result.loop_period_analytic,
        }
    )


def write_manifest(out_dir: Path, manifest: RunManifest) -> Path:
    path = out_dir / "manifest.json"
    path.write_text(manifest.model_dump_json(indent=2) + "\n", encoding="utf-8")
    return path


def write_run(out_dir: Path, cfg: RunConfig, result: Optional[RunResult]) -> List[Path]:
    """
    Write every output of a run into out_dir.

    A dry run (result None) writes the manifest only.

    Returns:
        Paths written, manifest last
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    written: List[Path] = []

    if result is not None:
        tables = [
            ("tdoa.csv", "tdoa", TDOA_COLUMNS, tdoa_rows(result)),
            ("solver.csv", "solver", SOLVER_COLUMNS, solver_rows(result)),
        ]
        if result.track:
            tables.append(("track.csv", "track", TRACK_COLUMNS, track_rows(result)))
        if result.figure:
            tables.append(("figure.csv", "figure", FIGURE_COLUMNS, figure_rows(result)))

        for filename, table, columns, rows in tables:
            path = out_dir / filename
            write_table(path, table, columns, rows)
            written.append(path)
            logger.info(f"Wrote {len(rows)} rows to {path}")

    manifest = build_manifest(cfg, result, files=[p.name for p in written])
    written.append(write_manifest(out_dir, manifest))
    logger.info(f"Wrote manifest to {written[-1]}")
    return written
