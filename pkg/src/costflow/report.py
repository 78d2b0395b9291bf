"""Cost reporting: fixed-width tables, grouped series, comparisons."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .costs import CostBreakdown, RunCostReport, cents_to_usd
from .errors import EmptyInput

GROUP_BY_ASSET = "asset"
GROUP_BY_PLATFORM = "platform"

_COLUMNS = (
    "Run",
    "Step",
    "Platform",
    "Duration",
    "Total Cost",
    "Surcharge",
    "Storage Cost",
    "Compute Cost",
    "Agg Total",
    "Agg Surcharge",
)


@dataclass(frozen=True)
class CostGroup:
    key: str
    compute_cents: int
    storage_cents: int
    surcharge_cents: int
    duration_hours: float

    @property
    def total_cents(self) -> int:
        return self.compute_cents + self.storage_cents + self.surcharge_cents

    def as_series_point(self) -> dict:
        return {
            "group": self.key,
            "compute_usd": cents_to_usd(self.compute_cents),
            "storage_usd": cents_to_usd(self.storage_cents),
            "surcharge_usd": cents_to_usd(self.surcharge_cents),
            "total_usd": cents_to_usd(self.total_cents),
            "duration_hours": round(self.duration_hours, 6),
        }


@dataclass(frozen=True)
class CostReport:
    group_by: str
    groups: tuple[CostGroup, ...]
    duration_samples: tuple[dict, ...]  # {"platform", "step_key", "duration_hours"}
    table: str

    def series_lines(self) -> list[str]:
        """Machine-readable series, one JSON object per line."""
        lines = [
            json.dumps({"type": "cost_group", **g.as_series_point()}, sort_keys=True)
            for g in self.groups
        ]
        lines += [
            json.dumps({"type": "duration_sample", **s}, sort_keys=True)
            for s in self.duration_samples
        ]
        return lines


def cost_report(runs: list[RunCostReport], group_by: str = GROUP_BY_ASSET) -> CostReport:
    """Group billed rows across runs and render both table and chart series."""
    if not runs or not any(r.rows for r in runs):
        raise EmptyInput("no cost rows to report")
    if group_by not in (GROUP_BY_ASSET, GROUP_BY_PLATFORM):
        raise ValueError(f"group_by must be 'asset' or 'platform', got {group_by!r}")

    sums: dict[str, list] = {}
    duration_samples: list[dict] = []
    for run in runs:
        for row in run.rows:
            key = row.asset if group_by == GROUP_BY_ASSET else row.backend_id
            acc = sums.setdefault(key, [0, 0, 0, 0.0])
            acc[0] += row.cost.compute_cents
            acc[1] += row.cost.storage_cents
            acc[2] += row.cost.surcharge_cents
            acc[3] += row.duration_hours
            duration_samples.append(
                {
                    "platform": row.backend_id,
                    "step_key": row.step_key,
                    "duration_hours": round(row.duration_hours, 6),
                }
            )
    groups = tuple(
        CostGroup(key, acc[0], acc[1], acc[2], acc[3]) for key, acc in sorted(sums.items())
    )
    return CostReport(
        group_by=group_by,
        groups=groups,
        duration_samples=tuple(duration_samples),
        table=render_cost_table(runs),
    )


def render_cost_table(runs: list[RunCostReport]) -> str:
    """Fixed-width per-step cost table with per-run aggregate columns."""
    rows: list[tuple[str, ...]] = []
    for run in runs:
        for i, row in enumerate(run.rows):
            agg_total = run.aggregated_total_usd if i == 0 else ""
            agg_sur = run.aggregated_surcharge_usd if i == 0 else ""
            rows.append(
                (
                    run.run_id,
                    row.step_key.split("/", 1)[0],
                    row.backend_id,
                    f"{row.duration_hours:.2f}",
                    f"${row.cost.total_usd}",
                    f"${row.cost.surcharge_usd}",
                    f"${row.cost.storage_usd}",
                    f"${row.cost.compute_usd}",
                    f"${agg_total}" if agg_total else "",
                    f"${agg_sur}" if agg_sur else "",
                )
            )
    widths = [len(c) for c in _COLUMNS]
    for row in rows:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))
    out = [_fmt_row(_COLUMNS, widths), _fmt_row(tuple("-" * w for w in widths), widths)]
    out += [_fmt_row(row, widths) for row in rows]
    return "\n".join(out)


def _fmt_row(cells: tuple[str, ...], widths: list[int]) -> str:
    return "  ".join(cell.ljust(w) for cell, w in zip(cells, widths)).rstrip()


@dataclass
class ReportBundle:
    """Everything the API/CLI expose for a cost report request."""

    report: CostReport
    totals: dict = field(default_factory=dict)

    def as_json(self) -> dict:
        return {
            "group_by": self.report.group_by,
            "groups": [g.as_series_point() for g in self.report.groups],
            "duration_samples": list(self.report.duration_samples),
            "table": self.report.table,
        }


def breakdown_total(rows: list[CostBreakdown]) -> str:
    return cents_to_usd(sum(r.total_cents for r in rows))
