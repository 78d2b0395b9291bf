"""HTTP/JSON control plane.

A single process embeds the engine; run state persists as append-only files
in the runs directory, and every mutation goes through the coordinator's
lock.  Live runs can be paced (virtual seconds per wall second) so operators
can watch and cancel them; unpaced runs finish in one scheduling breath.
"""

from __future__ import annotations

import threading
import time
from pathlib import Path

from fastapi import FastAPI, HTTPException, Query
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .config import (
    PipelineConfig,
    build_registry,
    derive_run_id,
    load_pipeline_file,
    time_range_filter,
)
from .engine import (
    TERMINAL_STATES,
    PartitionFilter,
    RunExecution,
    plan_run,
)
from .errors import AlreadyTerminal, EmptySelection, UnknownRun
from .report import cost_report
from .runstore import (
    load_record,
    read_log_entries,
    record_paths,
    report_from_record,
    summarize_record,
)
from .workload import RunWorkspace


class LaunchRequest(BaseModel):
    seed: int | None = None
    partitions: str | None = None
    time_range: str | None = None  # backfill form: inclusive "START..END"
    pace: float | None = None


class _ManagedRun:
    def __init__(self, run_id: str, execution: RunExecution, pace: float | None):
        self.run_id = run_id
        self.execution = execution
        self.pace = pace
        self.thread: threading.Thread | None = None


class RunManager:
    """Owns every run the server knows about: live executions and the
    records replayed from the runs directory at boot."""

    def __init__(self, config: PipelineConfig, runs_dir: Path, default_pace: float | None):
        self._config = config
        self._runs_dir = runs_dir
        self._default_pace = default_pace
        self._lock = threading.Lock()
        self._live: dict[str, _ManagedRun] = {}
        self._order: list[str] = []
        self._counter = 0
        runs_dir.mkdir(parents=True, exist_ok=True)
        for path in record_paths(runs_dir):
            doc = load_record(path)
            self._order.append(doc["run_id"])

    # -- launching -----------------------------------------------------------

    def launch(
        self,
        seed: int | None = None,
        partitions: str | None = None,
        pace: float | None = None,
        config: PipelineConfig | None = None,
        block: bool = False,
    ) -> str:
        config = config or self._config
        run_seed = config.seed if seed is None else seed
        registry = build_registry(config)
        selection = PartitionFilter.parse(partitions)
        plan = plan_run(config.graph, selection, config.policy, registry, config.name)
        digest = derive_run_id(config, run_seed, plan.selected_keys)
        with self._lock:
            self._counter += 1
            run_id = f"{config.name}-{self._counter:04d}-{digest[-6:]}"
            workspace = RunWorkspace(self._runs_dir / run_id)
            execution = RunExecution(
                run_id=run_id,
                plan=plan,
                registry=registry,
                retry=config.retry,
                seed=run_seed,
                workspace=workspace,
                corpus_params=config.corpus_params(),
                max_concurrent=config.engine.max_concurrent,
                heartbeat_timeout=config.engine.heartbeat_timeout,
            )
            managed = _ManagedRun(run_id, execution, pace if pace is not None else self._default_pace)
            self._live[run_id] = managed
            self._order.append(run_id)
        if block:
            self._drive(managed)
        else:
            managed.thread = threading.Thread(
                target=self._drive, args=(managed,), daemon=True
            )
            managed.thread.start()
        return run_id

    def _drive(self, managed: _ManagedRun) -> None:
        execution = managed.execution
        if managed.pace is None:
            execution.run_to_completion()
            return
        start_wall = time.monotonic()
        while execution.run_state not in TERMINAL_STATES:
            next_ts = execution.peek_next_ts()
            target_virtual = (time.monotonic() - start_wall) * managed.pace
            if next_ts is None or next_ts <= target_virtual:
                if not execution.tick():
                    break
            else:
                time.sleep(min(0.05, max(0.005, (next_ts - target_virtual) / managed.pace)))

    # -- queries --------------------------------------------------------------

    def run_ids_newest_first(self) -> list[str]:
        with self._lock:
            return list(reversed(self._order))

    def _record_path(self, run_id: str) -> Path:
        return self._runs_dir / run_id / "record.json"

    def summary(self, run_id: str) -> dict:
        managed = self._live.get(run_id)
        if managed is not None and managed.execution.record is None:
            snap = managed.execution.snapshot()
            snap["live"] = True
            return snap
        path = self._record_path(run_id)
        if not path.is_file():
            raise UnknownRun(run_id)
        doc = load_record(path)
        out = summarize_record(doc)
        out["live"] = False
        return out

    def detail(self, run_id: str) -> dict:
        managed = self._live.get(run_id)
        if managed is not None and managed.execution.record is None:
            execution = managed.execution
            snap = execution.snapshot()
            snap["plan"] = [
                {"step_key": s, "backend_id": b}
                for s, b in (
                    (step.step_key, step.backend_id) for step in execution.plan.steps
                )
            ]
            snap["live"] = True
            return snap
        path = self._record_path(run_id)
        if not path.is_file():
            raise UnknownRun(run_id)
        doc = load_record(path)
        out = summarize_record(doc)
        out.update(
            {
                "live": False,
                "plan": doc["plan"],
                "attempts": doc["attempts"],
                "finished_at": doc.get("finished_at"),
            }
        )
        return out

    def cancel(self, run_id: str) -> None:
        managed = self._live.get(run_id)
        if managed is not None and managed.execution.record is None:
            managed.execution.request_cancel()
            return
        if self._record_path(run_id).is_file() or managed is not None:
            raise AlreadyTerminal(run_id)
        raise UnknownRun(run_id)

    def events(self, run_id: str, after_seq: int, limit: int) -> dict:
        log_path = self._runs_dir / run_id / "log.jsonl"
        if run_id not in self._live and not self._record_path(run_id).is_file():
            if not log_path.is_file():
                raise UnknownRun(run_id)
        entries = read_log_entries(log_path, after=after_seq, limit=limit)
        next_cursor = entries[-1]["cursor"] if entries else after_seq
        state = self.summary(run_id)["run_state"]
        return {"events": entries, "next_cursor": next_cursor, "run_state": state}

    def reports(self, group_by: str) -> dict:
        reports = []
        with self._lock:
            order = list(self._order)
        for run_id in order:
            managed = self._live.get(run_id)
            if managed is not None and managed.execution.record is None:
                report = managed.execution.current_report()
            else:
                path = self._record_path(run_id)
                if not path.is_file():
                    continue
                report = report_from_record(load_record(path))
            if report.rows:
                reports.append(report)
        if not reports:
            return {"group_by": group_by, "groups": [], "duration_samples": [], "table": ""}
        bundle = cost_report(reports, group_by=group_by)
        return {
            "group_by": bundle.group_by,
            "groups": [g.as_series_point() for g in bundle.groups],
            "duration_samples": list(bundle.duration_samples),
            "table": bundle.table,
        }

    def backends_doc(self) -> list[dict]:
        out = []
        for desc in self._config.backends:
            profile = None
            if desc.sim_profile is not None:
                p = desc.sim_profile
                profile = {
                    "speed_factor": p.speed_factor,
                    "bootstrap_delay_hours": p.bootstrap_delay_hours,
                    "base_failure_prob": p.base_failure_prob,
                    "knobs": {
                        "node_labels_enabled": p.knobs.node_labels_enabled,
                        "maximize_resource_allocation": p.knobs.maximize_resource_allocation,
                        "parallel_vacuum": p.knobs.parallel_vacuum,
                        "memory_multiplier": p.knobs.memory_multiplier,
                    },
                }
            out.append(
                {
                    "backend_id": desc.backend_id,
                    "display_name": desc.display_name,
                    "rate_card": {
                        "instance_rate_per_node_hour": str(desc.rate_card.instance_rate_per_node_hour),
                        "surcharge_rate_per_node_hour": str(desc.rate_card.surcharge_rate_per_node_hour),
                        "storage_rate_per_node_hour": str(desc.rate_card.storage_rate_per_node_hour),
                    },
                    "sim_profile": profile,
                }
            )
        return out


def create_app(
    config: PipelineConfig,
    runs_dir: Path,
    fixture_paths: list[Path] | None = None,
    default_pace: float | None = None,
    ui_dir: Path | None = None,
) -> FastAPI:
    app = FastAPI(title="costflow control plane")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    manager = RunManager(config, runs_dir, default_pace)
    app.state.manager = manager

    for fixture in fixture_paths or []:
        fixture_config = load_pipeline_file(fixture)
        manager.launch(config=fixture_config, block=True)

    @app.get("/runs")
    def list_runs():
        runs = []
        for run_id in manager.run_ids_newest_first():
            try:
                runs.append(manager.summary(run_id))
            except UnknownRun:
                continue
        return {"runs": runs}

    @app.post("/runs", status_code=201)
    def launch_run(req: LaunchRequest):
        partitions = req.partitions
        if req.time_range:
            start, sep, end = req.time_range.partition("..")
            ids = time_range_filter(config, start.strip(), end.strip()) if sep else []
            if not ids:
                raise HTTPException(
                    status_code=400, detail=f"EmptyRange: no partitions in {req.time_range!r}"
                )
            partitions = ",".join(ids)
        try:
            run_id = manager.launch(seed=req.seed, partitions=partitions, pace=req.pace)
        except EmptySelection as exc:
            raise HTTPException(status_code=400, detail=f"EmptySelection: {exc}") from exc
        return {"run_id": run_id}

    @app.get("/runs/{run_id}")
    def run_detail(run_id: str):
        try:
            return manager.detail(run_id)
        except UnknownRun as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc

    @app.post("/runs/{run_id}/cancel")
    def cancel_run(run_id: str):
        try:
            manager.cancel(run_id)
        except AlreadyTerminal:
            return JSONResponse(status_code=409, content={"error": "AlreadyTerminal"})
        except UnknownRun as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        return JSONResponse(status_code=202, content={"run_id": run_id, "status": "CANCELED"})

    @app.get("/runs/{run_id}/events")
    def run_events(
        run_id: str,
        after_seq: int = Query(default=-1),
        limit: int = Query(default=1000, ge=1, le=10000),
    ):
        try:
            return manager.events(run_id, after_seq, limit)
        except UnknownRun as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc

    @app.get("/reports/cost")
    def reports_cost(group_by: str = Query(default="asset")):
        if group_by not in ("asset", "platform"):
            raise HTTPException(status_code=400, detail="group_by must be asset or platform")
        return manager.reports(group_by)

    @app.get("/backends")
    def backends():
        return {"backends": manager.backends_doc()}

    if ui_dir is not None and ui_dir.is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
