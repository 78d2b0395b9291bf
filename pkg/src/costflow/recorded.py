"""Loader for the recorded production cost rows bundled with the package.

These rows are real per-step figures from production runs of the reference
web-graph pipeline under three platform routings (hybrid, all-DBR, all-EMR).
They anchor the cost engine's golden tests and feed the report/compare
tooling as ready-made fixtures.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

from .costs import CostRow, RunCostReport, compose_breakdown, usd_to_cents

PLATFORM_TO_BACKEND = {"EMR": "emr_sim", "DBR": "dbr_sim", "local": "local"}


@dataclass(frozen=True)
class RecordedRow:
    run_id: str
    step: str
    platform: str
    duration_hours: float
    total_usd: str
    surcharge_usd: str
    storage_usd: str
    compute_usd: str


@dataclass(frozen=True)
class RecordedRun:
    run_id: str
    rows: tuple[RecordedRow, ...]
    expected_aggregated_total_usd: str
    expected_aggregated_surcharge_usd: str


def load_recorded_runs() -> list[RecordedRun]:
    raw = json.loads(
        resources.files("costflow.data").joinpath("recorded_runs.json").read_text("utf-8")
    )
    runs: list[RecordedRun] = []
    for run in raw["runs"]:
        rows = tuple(
            RecordedRow(
                run_id=run["run_id"],
                step=r["step"],
                platform=r["platform"],
                duration_hours=float(r["duration_hours"]),
                total_usd=r["total_usd"],
                surcharge_usd=r["surcharge_usd"],
                storage_usd=r["storage_usd"],
                compute_usd=r["compute_usd"],
            )
            for r in run["rows"]
        )
        runs.append(
            RecordedRun(
                run_id=run["run_id"],
                rows=rows,
                expected_aggregated_total_usd=run["expected_aggregated_total_usd"],
                expected_aggregated_surcharge_usd=run["expected_aggregated_surcharge_usd"],
            )
        )
    return runs


def recorded_reports() -> list[RunCostReport]:
    """The recorded runs as RunCostReports (components re-composed to cents)."""
    reports = []
    for run in load_recorded_runs():
        rows = tuple(
            CostRow(
                step_key=f"{r.step}/recorded/0",
                backend_id=PLATFORM_TO_BACKEND.get(r.platform, r.platform.lower()),
                duration_hours=r.duration_hours,
                cost=compose_breakdown(r.surcharge_usd, r.storage_usd, r.compute_usd),
            )
            for r in run.rows
        )
        reports.append(RunCostReport(run_id=run.run_id, rows=rows))
    return reports


def recorded_total_cents(run: RecordedRun) -> tuple[int, int]:
    """(total, surcharge) cents the run is expected to aggregate to."""
    return (
        usd_to_cents(run.expected_aggregated_total_usd),
        usd_to_cents(run.expected_aggregated_surcharge_usd),
    )
