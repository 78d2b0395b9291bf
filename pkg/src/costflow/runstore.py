"""Reading persisted runs back: records, logs, and report reconstruction."""

from __future__ import annotations

import json
from pathlib import Path

from .costs import CostRow, RunCostReport, compose_breakdown


def load_record(path: str | Path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def record_paths(runs_dir: str | Path) -> list[Path]:
    """All persisted run records, oldest first (by file mtime)."""
    root = Path(runs_dir)
    if not root.is_dir():
        return []
    paths = [p / "record.json" for p in root.iterdir() if (p / "record.json").is_file()]
    return sorted(paths, key=lambda p: (p.stat().st_mtime, p.parent.name))


def report_from_record(doc: dict) -> RunCostReport:
    rows = []
    for r in doc["cost_report"]["rows"]:
        rows.append(
            CostRow(
                step_key=r["step_key"],
                backend_id=r["backend_id"],
                duration_hours=float(r["duration_hours"]),
                cost=compose_breakdown(r["surcharge_usd"], r["storage_usd"], r["compute_usd"]),
                attempt=int(r.get("attempt", 1)),
            )
        )
    return RunCostReport(run_id=doc["run_id"], rows=tuple(rows))


def read_log_entries(log_path: str | Path, after: int = -1, limit: int = 1000) -> list[dict]:
    """Entries with cursor > after, at most limit, in cursor order.

    The log is append-only, so a reader holding the last seen cursor resumes
    with no duplicates and no gaps.
    """
    path = Path(log_path)
    if not path.is_file():
        return []
    out: list[dict] = []
    with path.open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            doc = json.loads(line)
            if doc.get("cursor", -1) > after:
                out.append(doc)
                if len(out) >= limit:
                    break
    return out


def summarize_record(doc: dict) -> dict:
    report = doc["cost_report"]
    mix: dict[str, int] = {}
    for s in doc["plan"]:
        mix[s["backend_id"]] = mix.get(s["backend_id"], 0) + 1
    return {
        "run_id": doc["run_id"],
        "pipeline": doc.get("pipeline", ""),
        "seed": doc.get("seed"),
        "run_state": doc["run_state"],
        "total_usd": report["aggregated_total_usd"],
        "surcharge_usd": report["aggregated_surcharge_usd"],
        "duration_hours": round(
            sum(float(r["duration_hours"]) for r in report["rows"]), 6
        ),
        "backend_mix": mix,
        "steps_total": len(doc["plan"]),
    }
