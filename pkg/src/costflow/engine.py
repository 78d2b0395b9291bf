"""Run orchestration: planning, the step state machine, and the event loop.

The engine is a single logical coordinator over a virtual clock: it submits
ready steps to their backends, consumes step telemetry in timestamp order,
applies the per-attempt state machine, retries retryable failures, honors
cancellation, and prices every attempt from its backend's rate card.  Given
the same plan, seed, and profiles, a run is fully deterministic, down to the
bytes of its serialized record and event logs.
"""

from __future__ import annotations

import json
import math
import threading
from dataclasses import dataclass, field, replace

from .backends import (
    BackendRegistry,
    HEARTBEAT_TIMEOUT as HEARTBEAT_TIMEOUT_CODE,
    BOOTSTRAP_FAILED,
    OOM,
    SPOT_RECLAIM,
    StepSpec,
    SimulatedBackend,
    StepHandle,
)
from .clock import VirtualClock, seconds_to_hours
from .costs import CostBreakdown, CostRow, RunCostReport, compute_step_cost
from .errors import AlreadyTerminal, EmptySelection, IllegalTransition
from .factory import SelectionPolicy, select_backend
from .graph import AssetGraph, PartitionKey, expand_partitions, topo_order
from .protocol import (
    ALIVE,
    CONTEXT_ENV_VAR,
    HEARTBEAT_TIMEOUT,
    EventKind,
    StepContext,
    StepEvent,
    check_liveness,
    encode_context,
    encode_event,
    event_doc,
    step_key,
)
from .workload import ENV_SEGMENTS, ENV_WORKSPACE, RunWorkspace, prepare_workspace

# Attempt states.
QUEUED = "QUEUED"
LAUNCHING = "LAUNCHING"
RUNNING = "RUNNING"
SUCCESS = "SUCCESS"
FAILURE = "FAILURE"
CANCELED = "CANCELED"
TERMINAL_STATES = frozenset({SUCCESS, FAILURE, CANCELED})

# Lifecycle event kinds driving the state machine.
EV_SUBMIT = "submit"
EV_BOOTSTRAPPED = "bootstrapped"
EV_SUCCEEDED = "succeeded"
EV_FAILED = "failed"
EV_CANCEL = "cancel"
EV_HEARTBEAT_TIMEOUT = "heartbeat_timeout"

DEFAULT_RETRY_ON = frozenset({OOM, SPOT_RECLAIM, BOOTSTRAP_FAILED, HEARTBEAT_TIMEOUT_CODE})
DEFAULT_MAX_CONCURRENT = 4


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 1
    retry_on: frozenset[str] = DEFAULT_RETRY_ON

    def __post_init__(self) -> None:
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        object.__setattr__(self, "retry_on", frozenset(self.retry_on))


@dataclass(frozen=True)
class LifecycleEvent:
    kind: str
    at: float = 0.0
    error_code: str | None = None


@dataclass(frozen=True)
class StepAttempt:
    step_key: str
    attempt: int
    backend_id: str
    state: str = QUEUED
    started_at: float | None = None
    ended_at: float | None = None
    duration_hours: float | None = None
    cost: CostBreakdown | None = None
    error_code: str | None = None

    def as_dict(self) -> dict:
        return {
            "step_key": self.step_key,
            "attempt": self.attempt,
            "backend_id": self.backend_id,
            "state": self.state,
            "started_at": self.started_at,
            "ended_at": self.ended_at,
            "duration_hours": self.duration_hours,
            "cost": self.cost.as_dict() if self.cost else None,
            "error_code": self.error_code,
        }


def transition(attempt: StepAttempt, event: LifecycleEvent) -> StepAttempt:
    """Apply one lifecycle event; terminal states are absorbing.

    Legal moves: QUEUED -submit-> LAUNCHING -bootstrapped-> RUNNING
    -succeeded/failed/heartbeat_timeout-> SUCCESS/FAILURE, and cancel from
    any non-terminal state.  Everything else raises IllegalTransition.
    """
    state = attempt.state
    kind = event.kind
    if state in TERMINAL_STATES:
        raise IllegalTransition(state, kind)
    if kind == EV_CANCEL:
        return replace(attempt, state=CANCELED, ended_at=event.at)
    if state == QUEUED and kind == EV_SUBMIT:
        return replace(attempt, state=LAUNCHING, started_at=event.at)
    if state == LAUNCHING and kind == EV_BOOTSTRAPPED:
        return replace(attempt, state=RUNNING)
    if state == RUNNING and kind == EV_SUCCEEDED:
        return replace(attempt, state=SUCCESS, ended_at=event.at)
    if state == RUNNING and kind == EV_FAILED:
        return replace(attempt, state=FAILURE, ended_at=event.at, error_code=event.error_code)
    if state == RUNNING and kind == EV_HEARTBEAT_TIMEOUT:
        return replace(
            attempt, state=FAILURE, ended_at=event.at, error_code=HEARTBEAT_TIMEOUT_CODE
        )
    raise IllegalTransition(state, kind)


# --- planning ---------------------------------------------------------------


@dataclass(frozen=True)
class PartitionFilter:
    """Comma-separated patterns 'TIME' or 'TIME/SEG'; TIME may end with '*'."""

    patterns: tuple[str, ...] = ()

    @classmethod
    def parse(cls, text: str | None) -> "PartitionFilter":
        if not text or not text.strip():
            return cls(())
        return cls(tuple(p.strip() for p in text.split(",") if p.strip()))

    def matches(self, key: PartitionKey) -> bool:
        if not self.patterns:
            return True
        for pat in self.patterns:
            time_pat, _, seg_pat = pat.partition("/")
            if time_pat.endswith("*"):
                if not key.time_id.startswith(time_pat[:-1]):
                    continue
            elif key.time_id != time_pat:
                continue
            if seg_pat and str(key.domain_segment) != seg_pat:
                continue
            return True
        return False


@dataclass(frozen=True)
class PlannedStep:
    step_key: str
    asset: str
    partition: PartitionKey
    backend_id: str
    base_duration_hours: float
    node_count: int
    tags: dict[str, str] = field(default_factory=dict)

    def spec(self) -> StepSpec:
        return StepSpec(
            asset=self.asset,
            partition=self.partition,
            base_duration_hours=self.base_duration_hours,
            node_count=self.node_count,
            tags=dict(self.tags),
        )


@dataclass(frozen=True)
class RunPlan:
    pipeline: str
    graph: AssetGraph
    steps: tuple[PlannedStep, ...]
    selected_keys: tuple[PartitionKey, ...]


def plan_run(
    graph: AssetGraph,
    selection: PartitionFilter,
    policy: SelectionPolicy,
    registry: BackendRegistry,
    pipeline: str = "pipeline",
) -> RunPlan:
    """One planned step per (asset, selected partition), in topological order
    with the backend chosen by hint, rule, or score."""
    steps: list[PlannedStep] = []
    selected: set[PartitionKey] = set()
    for name in topo_order(graph):
        asset = graph.asset(name)
        for key in expand_partitions(asset):
            if not selection.matches(key):
                continue
            selected.add(key)
            backend_id = select_backend(asset, key, policy, registry)
            steps.append(
                PlannedStep(
                    step_key=step_key(name, key),
                    asset=name,
                    partition=key,
                    backend_id=backend_id,
                    base_duration_hours=asset.resource_hints.est_base_duration_hours,
                    node_count=asset.resource_hints.node_count,
                    tags=dict(asset.tags),
                )
            )
    if not steps:
        raise EmptySelection("partition filter selected nothing")
    return RunPlan(
        pipeline=pipeline,
        graph=graph,
        steps=tuple(steps),
        selected_keys=tuple(sorted(selected)),
    )


# --- the run log -------------------------------------------------------------


class RunLogWriter:
    """Append-only engine event log with a per-line cursor."""

    def __init__(self, path):
        self._path = path
        self._cursor = -1
        path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(path, "w", encoding="utf-8")

    def append(self, ts: float, entry_type: str, **fields) -> int:
        self._cursor += 1
        doc = {"cursor": self._cursor, "ts": ts, "type": entry_type, **fields}
        self._fh.write(json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n")
        self._fh.flush()
        return self._cursor

    def close(self) -> None:
        self._fh.close()


# --- execution ---------------------------------------------------------------


@dataclass
class _ActiveAttempt:
    planned: PlannedStep
    attempt_no: int
    attempt_idx: int  # index into RunExecution.attempts
    backend: SimulatedBackend
    handle: StepHandle
    last_signal_ts: float


@dataclass(frozen=True)
class RunRecord:
    run_id: str
    pipeline: str
    seed: int
    run_state: str
    plan: tuple[tuple[str, str], ...]  # (step_key, backend_id)
    attempts: tuple[StepAttempt, ...]
    cost_report: RunCostReport
    finished_at: float

    def as_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "pipeline": self.pipeline,
            "seed": self.seed,
            "run_state": self.run_state,
            "plan": [{"step_key": s, "backend_id": b} for s, b in self.plan],
            "attempts": [a.as_dict() for a in self.attempts],
            "cost_report": {
                "run_id": self.cost_report.run_id,
                "rows": [
                    {
                        "step_key": r.step_key,
                        "backend_id": r.backend_id,
                        "attempt": r.attempt,
                        "duration_hours": r.duration_hours,
                        **r.cost.as_dict(),
                    }
                    for r in self.cost_report.rows
                ],
                "aggregated_total_usd": self.cost_report.aggregated_total_usd,
                "aggregated_surcharge_usd": self.cost_report.aggregated_surcharge_usd,
            },
            "finished_at": self.finished_at,
        }

    def serialize(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True, indent=2) + "\n"


class RunExecution:
    """Coordinator for one run.  Drive it with tick() (or run_to_completion);
    all mutations happen under one lock so API reads see consistent snapshots."""

    def __init__(
        self,
        run_id: str,
        plan: RunPlan,
        registry: BackendRegistry,
        retry: RetryPolicy,
        seed: int,
        workspace: RunWorkspace,
        corpus_params: dict | None = None,
        max_concurrent: int = DEFAULT_MAX_CONCURRENT,
        heartbeat_timeout: float = HEARTBEAT_TIMEOUT,
    ):
        self.run_id = run_id
        self.plan = plan
        self.registry = registry
        self.retry = retry
        self.seed = seed
        self.workspace = workspace
        self.clock = VirtualClock()
        self.max_concurrent = max_concurrent
        self.heartbeat_timeout = heartbeat_timeout
        self.run_state = RUNNING
        self.attempts: list[StepAttempt] = []
        self.record: RunRecord | None = None
        self._lock = threading.RLock()
        self._active: dict[str, _ActiveAttempt] = {}
        self._resolution: dict[str, str] = {}  # step_key -> terminal state
        self._attempt_counts: dict[str, int] = {}
        self._cancel_requested = False
        self._scripted_cancel_at: float | None = None
        self._cost_rows: list[CostRow] = []
        self._telemetry_fhs: dict[tuple[str, int], object] = {}

        workspace.reset()
        if corpus_params:
            prepare_workspace(
                workspace,
                corpus_seed=corpus_params["seed"],
                n_hosts=corpus_params["n_hosts"],
                pages_per_host=corpus_params["pages_per_host"],
                time_ids=corpus_params["time_ids"],
            )
        self._log = RunLogWriter(workspace.log_path)
        self._log.append(0.0, "run_state", run_id=run_id, state=RUNNING)
        self._schedule_ready()

    # -- public control ------------------------------------------------------

    def schedule_cancel_at(self, at: float) -> None:
        """Script a cancellation at a fixed virtual time (tests, replays)."""
        self._scripted_cancel_at = at

    def request_cancel(self) -> None:
        """Cancel from another thread; applied at the current virtual time."""
        with self._lock:
            if self.run_state in TERMINAL_STATES:
                raise AlreadyTerminal(f"run {self.run_id} is {self.run_state}")
            self._apply_cancel(self.clock.now())

    def run_to_completion(self) -> RunRecord:
        while self.tick():
            pass
        assert self.record is not None
        return self.record

    def tick(self) -> bool:
        """Advance to the next scheduled moment; False once the run is terminal."""
        with self._lock:
            if self.run_state in TERMINAL_STATES:
                return False
            next_ts = self._next_event_ts()
            if next_ts is None:
                self._finalize()
                return False
            self.clock.advance_to(next_ts)
            now = self.clock.now()
            self._consume_events(now)
            self._check_liveness(now)
            if (
                self._scripted_cancel_at is not None
                and now >= self._scripted_cancel_at
                and self.run_state not in TERMINAL_STATES
            ):
                self._scripted_cancel_at = None
                self._apply_cancel(now)
            if self.run_state in TERMINAL_STATES:
                return False
            self._schedule_ready()
            if not self._active:
                self._finalize()
                return False
            return True

    def peek_next_ts(self) -> float | None:
        """Virtual time of the next scheduled moment, for pacing drivers."""
        with self._lock:
            if self.run_state in TERMINAL_STATES:
                return None
            return self._next_event_ts()

    def current_report(self) -> RunCostReport:
        """Cost report over everything billed so far (live view)."""
        with self._lock:
            return RunCostReport(run_id=self.run_id, rows=tuple(self._cost_rows))

    # -- snapshots -----------------------------------------------------------

    def snapshot(self) -> dict:
        with self._lock:
            billed = list(self._cost_rows)
            total = sum(r.cost.total_cents for r in billed)
            surcharge = sum(r.cost.surcharge_cents for r in billed)
            mix: dict[str, int] = {}
            for s, b in self._plan_pairs():
                mix[b] = mix.get(b, 0) + 1
            return {
                "run_id": self.run_id,
                "pipeline": self.plan.pipeline,
                "seed": self.seed,
                "run_state": self.run_state,
                "virtual_now": self.clock.now(),
                "steps_total": len(self.plan.steps),
                "steps_succeeded": sum(1 for v in self._resolution.values() if v == SUCCESS),
                "total_usd": _cents_str(total),
                "surcharge_usd": _cents_str(surcharge),
                "duration_hours": round(sum(r.duration_hours for r in billed), 6),
                "backend_mix": mix,
                "attempts": [a.as_dict() for a in self.attempts],
            }

    # -- internals -----------------------------------------------------------

    def _plan_pairs(self) -> list[tuple[str, str]]:
        return [(s.step_key, s.backend_id) for s in self.plan.steps]

    def _next_event_ts(self) -> float | None:
        candidates: list[float] = []
        for key in sorted(self._active):
            act = self._active[key]
            ts = act.backend.next_event_ts(act.handle)
            if ts is not None:
                candidates.append(ts)
            else:
                attempt = self.attempts[act.attempt_idx]
                if attempt.state == RUNNING:
                    # liveness is boundary-inclusive ALIVE, so the check must
                    # land strictly past the deadline
                    deadline = act.last_signal_ts + self.heartbeat_timeout
                    candidates.append(math.nextafter(deadline, math.inf))
        if self._scripted_cancel_at is not None and self._active:
            candidates.append(self._scripted_cancel_at)
        if not candidates:
            return None
        floor = self.clock.now()
        return max(min(candidates), floor)

    def _consume_events(self, now: float) -> None:
        for key in sorted(self._active):
            act = self._active.get(key)
            if act is None:
                continue
            for ev in act.backend.consume_events(act.handle, now):
                self._handle_step_event(act, ev)
                if key not in self._active:
                    break

    def _handle_step_event(self, act: _ActiveAttempt, ev: StepEvent) -> None:
        self._append_telemetry(act, ev)
        act.last_signal_ts = ev.ts
        self._log.append(ev.ts, "step_event", event=event_doc(ev))
        attempt = self.attempts[act.attempt_idx]
        if ev.kind is EventKind.CONTEXT_LOADED:
            self._set_attempt(act, transition(attempt, LifecycleEvent(EV_BOOTSTRAPPED, ev.ts)))
        elif ev.kind is EventKind.MATERIALIZATION:
            artifact = act.backend.output_artifact(act.handle)
            if artifact is not None:
                relpath, payload = artifact
                out = self.workspace.root / relpath
                out.parent.mkdir(parents=True, exist_ok=True)
                out.write_bytes(payload)
        elif ev.kind is EventKind.STEP_SUCCEEDED:
            self._resolve_attempt(act, LifecycleEvent(EV_SUCCEEDED, ev.ts))
        elif ev.kind is EventKind.STEP_FAILED:
            code = ev.payload.get("error_code")
            self._resolve_attempt(act, LifecycleEvent(EV_FAILED, ev.ts, error_code=code))

    def _check_liveness(self, now: float) -> None:
        for key in sorted(self._active):
            act = self._active.get(key)
            if act is None:
                continue
            attempt = self.attempts[act.attempt_idx]
            if attempt.state != RUNNING:
                continue
            if act.backend.next_event_ts(act.handle) is not None:
                continue
            if check_liveness(act.last_signal_ts, now, self.heartbeat_timeout) != ALIVE:
                act.backend.cancel_step(act.handle, now)
                self._resolve_attempt(act, LifecycleEvent(EV_HEARTBEAT_TIMEOUT, now))

    def _set_attempt(self, act: _ActiveAttempt, updated: StepAttempt) -> None:
        self.attempts[act.attempt_idx] = updated
        entry = {"step_key": updated.step_key, "attempt": updated.attempt,
                 "state": updated.state}
        if updated.error_code:
            entry["error_code"] = updated.error_code
        self._log.append(self.clock.now(), "step_state", **entry)

    def _resolve_attempt(self, act: _ActiveAttempt, event: LifecycleEvent) -> None:
        attempt = transition(self.attempts[act.attempt_idx], event)
        attempt = self._bill(act, attempt, event.at)
        self._set_attempt(act, attempt)
        del self._active[attempt.step_key]
        if attempt.state == SUCCESS:
            self._resolution[attempt.step_key] = SUCCESS
            return
        if attempt.state == FAILURE:
            can_retry = (
                attempt.error_code in self.retry.retry_on
                and act.attempt_no < self.retry.max_attempts
                and not self._cancel_requested
            )
            if can_retry:
                self._submit(act.planned, event.at)
            else:
                self._resolution[attempt.step_key] = FAILURE
            return
        self._resolution[attempt.step_key] = attempt.state

    def _bill(self, act: _ActiveAttempt, attempt: StepAttempt, ended_at: float) -> StepAttempt:
        elapsed_hours = seconds_to_hours(ended_at - act.handle.submitted_at)
        card = act.backend.descriptor.rate_card
        cost = compute_step_cost(elapsed_hours, act.planned.node_count, card)
        attempt = replace(attempt, duration_hours=elapsed_hours, cost=cost)
        self._cost_rows.append(
            CostRow(
                step_key=attempt.step_key,
                backend_id=attempt.backend_id,
                duration_hours=elapsed_hours,
                cost=cost,
                attempt=attempt.attempt,
            )
        )
        return attempt

    def _ready_planned(self) -> list[PlannedStep]:
        out = []
        for planned in self.plan.steps:
            if planned.step_key in self._resolution or planned.step_key in self._active:
                continue
            asset = self.plan.graph.asset(planned.asset)
            deps_ok = all(
                self._resolution.get(step_key(dep, planned.partition)) == SUCCESS
                for dep in asset.deps
            )
            if deps_ok:
                out.append(planned)
        return out

    def _schedule_ready(self) -> None:
        if self._cancel_requested:
            return
        for planned in self._ready_planned():
            if len(self._active) >= self.max_concurrent:
                break
            self._submit(planned, self.clock.now())

    def _submit(self, planned: PlannedStep, now: float) -> None:
        attempt_no = self._attempt_counts.get(planned.step_key, 0) + 1
        self._attempt_counts[planned.step_key] = attempt_no
        ctx = StepContext(
            run_id=self.run_id,
            step_key=planned.step_key,
            partition=planned.partition,
            backend_id=planned.backend_id,
            attempt=attempt_no,
            tags=dict(planned.tags),
            env={
                ENV_WORKSPACE: str(self.workspace.root),
                ENV_SEGMENTS: str(self._segments_for(planned.asset)),
            },
        )
        ctx_path = self.workspace.context_path(planned.step_key, attempt_no)
        ctx_path.parent.mkdir(parents=True, exist_ok=True)
        ctx_path.write_bytes(encode_context(ctx))
        env = {CONTEXT_ENV_VAR: str(ctx_path)}

        backend = self.registry.get(planned.backend_id)
        attempt = StepAttempt(
            step_key=planned.step_key, attempt=attempt_no, backend_id=planned.backend_id
        )
        attempt = transition(attempt, LifecycleEvent(EV_SUBMIT, now))
        self.attempts.append(attempt)
        idx = len(self.attempts) - 1
        handle = backend.submit_step(planned.spec(), ctx, self.seed, now, env)
        act = _ActiveAttempt(
            planned=planned,
            attempt_no=attempt_no,
            attempt_idx=idx,
            backend=backend,
            handle=handle,
            last_signal_ts=now,
        )
        self._active[planned.step_key] = act
        self._log.append(
            now, "step_state", step_key=planned.step_key, attempt=attempt_no, state=LAUNCHING
        )

    def _segments_for(self, asset_name: str) -> int:
        spec = self.plan.graph.asset(asset_name).partitioning
        return spec.domain_segments if spec else 1

    def _apply_cancel(self, now: float) -> None:
        self._cancel_requested = True
        self._consume_events(now)  # events that already happened still count
        for key in list(sorted(self._active)):
            act = self._active.get(key)
            if act is None:
                continue
            act.backend.cancel_step(act.handle, now)
            attempt = transition(self.attempts[act.attempt_idx], LifecycleEvent(EV_CANCEL, now))
            attempt = self._bill(act, attempt, now)
            self._set_attempt(act, attempt)
            self._resolution[attempt.step_key] = CANCELED
        self._active.clear()
        self._finalize()

    def _finalize(self) -> None:
        if self.run_state in TERMINAL_STATES:
            return
        planned_keys = [s.step_key for s in self.plan.steps]
        if self._cancel_requested:
            self.run_state = CANCELED
        elif all(self._resolution.get(k) == SUCCESS for k in planned_keys):
            self.run_state = SUCCESS
        else:
            self.run_state = FAILURE
        now = self.clock.now()
        self._log.append(now, "run_state", run_id=self.run_id, state=self.run_state)
        report = RunCostReport(run_id=self.run_id, rows=tuple(self._cost_rows))
        self.record = RunRecord(
            run_id=self.run_id,
            pipeline=self.plan.pipeline,
            seed=self.seed,
            run_state=self.run_state,
            plan=tuple(self._plan_pairs()),
            attempts=tuple(self.attempts),
            cost_report=report,
            finished_at=now,
        )
        self.workspace.record_path.write_text(self.record.serialize(), encoding="utf-8")
        self._log.close()
        for fh in self._telemetry_fhs.values():
            fh.close()
        self._telemetry_fhs.clear()

    def _append_telemetry(self, act: _ActiveAttempt, ev: StepEvent) -> None:
        key = (act.planned.step_key, act.attempt_no)
        fh = self._telemetry_fhs.get(key)
        if fh is None:
            path = self.workspace.telemetry_path(*key)
            path.parent.mkdir(parents=True, exist_ok=True)
            fh = open(path, "w", encoding="utf-8")
            self._telemetry_fhs[key] = fh
        fh.write(encode_event(ev) + "\n")
        fh.flush()


def _cents_str(cents: int) -> str:
    from .costs import cents_to_usd

    return cents_to_usd(cents)


def execute_run(
    plan: RunPlan,
    registry: BackendRegistry,
    retry: RetryPolicy,
    seed: int,
    workspace: RunWorkspace,
    run_id: str = "run",
    corpus_params: dict | None = None,
    cancel_at: float | None = None,
    max_concurrent: int = DEFAULT_MAX_CONCURRENT,
) -> RunRecord:
    """Plan-to-record convenience wrapper used by the CLI and tests."""
    execution = RunExecution(
        run_id=run_id,
        plan=plan,
        registry=registry,
        retry=retry,
        seed=seed,
        workspace=workspace,
        corpus_params=corpus_params,
        max_concurrent=max_concurrent,
    )
    if cancel_at is not None:
        execution.schedule_cancel_at(cancel_at)
    return execution.run_to_completion()
