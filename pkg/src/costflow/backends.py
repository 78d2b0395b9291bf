"""Pluggable execution backends.

One generic simulated backend implements the whole contract; "local" is the
same machinery with a neutral profile (speed 1, no bootstrap, no failure
injection) and a zero rate card.  Every backend runs the step's real
computation; the profiles only scale reported wall time, inject failures,
and price the attempt, so materialized outputs are backend-independent.

Outcome fate is drawn once at submit from a PRNG stream keyed by
(seed, run_id, step_key, attempt); fixed inputs reproduce identical
schedules and event logs byte for byte.
"""

from __future__ import annotations

import hashlib
import threading
from dataclasses import dataclass, field, replace
from random import Random
from typing import Mapping

from .clock import hours_to_seconds
from .costs import RateCard
from .errors import BackendUnavailable, InvalidSpec, UnknownHandle
from .graph import TAG_MAINTENANCE_HEAVY, TAG_MEMORY_HEAVY, PartitionKey
from .protocol import HEARTBEAT_INTERVAL, EventKind, StepContext, StepEvent
from .workload import StepWorker, WorkerResult

# Stable error-code strings.
OOM = "OOM"
SPOT_RECLAIM = "SPOT_RECLAIM"
BOOTSTRAP_FAILED = "BOOTSTRAP_FAILED"
USER_CODE_ERROR = "USER_CODE_ERROR"
HEARTBEAT_TIMEOUT = "HEARTBEAT_TIMEOUT"  # assigned by the engine, not drawn here

# Duration penalties for unfavorable knobs; calibration constants, chosen so
# a misconfigured profile reproduces the qualitative platform ordering.
VACUUM_PENALTY = 1.25
RESOURCE_ALLOCATION_PENALTY = 1.15

LAUNCHING = "LAUNCHING"
RUNNING = "RUNNING"
SUCCESS = "SUCCESS"
FAILURE = "FAILURE"
CANCELED = "CANCELED"


@dataclass(frozen=True)
class SimKnobs:
    """Platform tuning switches mirrored from real cluster configuration."""

    node_labels_enabled: bool = True
    maximize_resource_allocation: bool = True
    parallel_vacuum: bool = True
    memory_multiplier: float = 2.0

    def __post_init__(self) -> None:
        if self.memory_multiplier <= 0:
            raise ValueError("memory_multiplier must be > 0")


@dataclass(frozen=True)
class SimProfile:
    speed_factor: float = 1.0
    bootstrap_delay_hours: float = 0.0
    base_failure_prob: float = 0.0
    knobs: SimKnobs = field(default_factory=SimKnobs)

    def __post_init__(self) -> None:
        if self.speed_factor <= 0:
            raise ValueError("speed_factor must be > 0")
        if self.bootstrap_delay_hours < 0:
            raise ValueError("bootstrap_delay_hours must be >= 0")
        if not 0.0 <= self.base_failure_prob <= 1.0:
            raise ValueError("base_failure_prob must be within [0, 1]")


NEUTRAL_PROFILE = SimProfile()


@dataclass(frozen=True)
class BackendDescriptor:
    backend_id: str
    display_name: str
    rate_card: RateCard
    sim_profile: SimProfile | None = None  # absent for local

    @property
    def profile(self) -> SimProfile:
        return self.sim_profile or NEUTRAL_PROFILE


@dataclass(frozen=True)
class StepSpec:
    asset: str
    partition: PartitionKey
    base_duration_hours: float
    node_count: int = 1
    tags: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.base_duration_hours < 0:
            raise InvalidSpec("base_duration_hours must be >= 0")
        if self.node_count < 1:
            raise InvalidSpec("node_count must be >= 1")

    def tag_true(self, key: str) -> bool:
        return self.tags.get(key, "").lower() == "true"


@dataclass(frozen=True)
class StepHandle:
    backend_id: str
    external_id: str
    submitted_at: float


@dataclass(frozen=True)
class PollStatus:
    state: str
    error_code: str | None = None


@dataclass(frozen=True)
class CancelAck:
    already_terminal: bool
    state: str


def effective_duration(
    base_duration_hours: float, profile: SimProfile, maintenance_heavy: bool = False
) -> float:
    """Simulated run time in hours for a step's compute phase.

    base / speed_factor, stretched by the vacuum penalty on maintenance-heavy
    work without parallel deletes, and by the allocation penalty when the
    cluster is not told to maximize resource allocation.
    """
    if base_duration_hours < 0:
        raise InvalidSpec("base duration must be >= 0")
    d = base_duration_hours / profile.speed_factor
    if maintenance_heavy and not profile.knobs.parallel_vacuum:
        d *= VACUUM_PENALTY
    if not profile.knobs.maximize_resource_allocation:
        d *= RESOURCE_ALLOCATION_PENALTY
    return d


def effective_failure_prob(profile: SimProfile, memory_heavy: bool = False) -> float:
    """Per-attempt failure probability, doubled (capped at 1.0) when node
    labels are off, and again when memory-heavy work runs without at least a
    doubled memory allocation."""
    p = profile.base_failure_prob
    if not profile.knobs.node_labels_enabled:
        p = min(1.0, p * 2.0)
    if memory_heavy and profile.knobs.memory_multiplier < 2.0:
        p = min(1.0, p * 2.0)
    return p


@dataclass(frozen=True)
class Fate:
    """Outcome drawn at submit time."""

    failed: bool
    error_code: str | None
    failure_frac: float  # fraction of the run window at which the failure lands
    hang: bool


def draw_fate(seed: int, ctx: StepContext, profile: SimProfile, memory_heavy: bool) -> Fate:
    """Deterministic fate from the per-attempt PRNG stream."""
    digest = hashlib.sha256(
        f"{seed}|{ctx.run_id}|{ctx.step_key}|{ctx.attempt}".encode()
    ).digest()
    rng = Random(int.from_bytes(digest[:8], "big"))
    p_fail = effective_failure_prob(profile, memory_heavy)
    failed = rng.random() < p_fail
    code_roll = rng.random()
    frac = rng.uniform(0.25, 0.95)
    if not failed:
        return Fate(failed=False, error_code=None, failure_frac=frac, hang=False)
    # error-code mix: mostly resource failures, some infra, some hangs
    if code_roll < 0.35:
        return Fate(True, OOM, frac, False)
    if code_roll < 0.60:
        return Fate(True, SPOT_RECLAIM, frac, False)
    if code_roll < 0.75:
        return Fate(True, USER_CODE_ERROR, frac, False)
    if code_roll < 0.85:
        return Fate(True, BOOTSTRAP_FAILED, frac, False)
    return Fate(True, None, frac, True)  # hang: heartbeats stop, no terminal event


@dataclass
class _Scheduled:
    """Internal schedule of one submitted attempt."""

    handle: StepHandle
    ctx: StepContext
    spec: StepSpec
    fate: Fate
    bootstrap_end: float
    terminal_time: float | None  # None while hanging
    terminal_state: str  # SUCCESS or FAILURE when terminal_time is set
    events: list[StepEvent]
    cursor: int = 0
    canceled_at: float | None = None
    artifact: tuple[str, bytes] | None = None  # (relpath, bytes) for success fates


class SimulatedBackend:
    """Actor-like backend: concurrent submits/polls are serialized on a lock;
    handles are value objects that may cross threads freely."""

    def __init__(
        self,
        descriptor: BackendDescriptor,
        worker: StepWorker | None = None,
        heartbeat_interval: float = HEARTBEAT_INTERVAL,
    ):
        self.descriptor = descriptor
        self._worker = worker
        self._heartbeat_interval = heartbeat_interval
        self._lock = threading.RLock()
        self._scheduled: dict[str, _Scheduled] = {}
        self._counter = 0

    @property
    def backend_id(self) -> str:
        return self.descriptor.backend_id

    # -- submission ---------------------------------------------------------

    def submit_step(
        self,
        spec: StepSpec,
        ctx: StepContext,
        seed: int,
        now: float,
        env: Mapping[str, str] | None = None,
    ) -> StepHandle:
        profile = self.descriptor.profile
        fate = draw_fate(seed, ctx, profile, spec.tag_true(TAG_MEMORY_HEAVY))
        bootstrap_end = now + hours_to_seconds(profile.bootstrap_delay_hours)
        run_seconds = hours_to_seconds(
            effective_duration(
                spec.base_duration_hours, profile, spec.tag_true(TAG_MAINTENANCE_HEAVY)
            )
        )

        result: WorkerResult | None = None
        if not fate.failed and self._worker is not None:
            try:
                result = self._worker(dict(env or {}))
            except Exception as exc:  # surfaces as a platform-visible step failure
                fate = Fate(failed=True, error_code=USER_CODE_ERROR,
                            failure_frac=fate.failure_frac, hang=False)
                result = None
                user_error = str(exc)
            else:
                user_error = ""
        else:
            user_error = ""

        with self._lock:
            self._counter += 1
            handle = StepHandle(
                backend_id=self.backend_id,
                external_id=f"{self.backend_id}-{self._counter:06d}",
                submitted_at=now,
            )
            sched = self._build_schedule(
                handle, ctx, spec, fate, bootstrap_end, run_seconds, result, user_error
            )
            self._scheduled[handle.external_id] = sched
        return handle

    def _build_schedule(
        self,
        handle: StepHandle,
        ctx: StepContext,
        spec: StepSpec,
        fate: Fate,
        bootstrap_end: float,
        run_seconds: float,
        result: WorkerResult | None,
        user_error: str,
    ) -> _Scheduled:
        events: list[StepEvent] = []
        seq = 0

        def emit(kind: EventKind, ts: float, payload: dict | None = None) -> None:
            nonlocal seq
            events.append(
                StepEvent(
                    seq=seq,
                    run_id=ctx.run_id,
                    step_key=ctx.step_key,
                    kind=kind,
                    ts=ts,
                    payload=payload or {},
                )
            )
            seq += 1

        emit(
            EventKind.CONTEXT_LOADED,
            bootstrap_end,
            {"attempt": ctx.attempt, "backend_id": self.backend_id},
        )

        if fate.failed and fate.error_code == BOOTSTRAP_FAILED:
            emit(
                EventKind.STEP_FAILED,
                bootstrap_end,
                {"error_code": BOOTSTRAP_FAILED, "message": "environment bootstrap failed"},
            )
            return _Scheduled(
                handle, ctx, spec, fate, bootstrap_end, bootstrap_end, FAILURE, events
            )

        if fate.failed and fate.hang:
            hang_at = bootstrap_end + fate.failure_frac * run_seconds
            emit(EventKind.LOG, bootstrap_end, {"level": "INFO", "message": "step started"})
            t = bootstrap_end + self._heartbeat_interval
            while t < hang_at:
                emit(EventKind.HEARTBEAT, t, {})
                t += self._heartbeat_interval
            # no terminal event: the process has gone silent
            return _Scheduled(handle, ctx, spec, fate, bootstrap_end, None, FAILURE, events)

        if fate.failed:
            fail_at = bootstrap_end + fate.failure_frac * run_seconds
            emit(EventKind.LOG, bootstrap_end, {"level": "INFO", "message": "step started"})
            t = bootstrap_end + self._heartbeat_interval
            while t < fail_at:
                emit(EventKind.HEARTBEAT, t, {})
                t += self._heartbeat_interval
            message = user_error or f"step failed with {fate.error_code}"
            emit(
                EventKind.STEP_FAILED,
                fail_at,
                {"error_code": fate.error_code, "message": message},
            )
            return _Scheduled(handle, ctx, spec, fate, bootstrap_end, fail_at, FAILURE, events)

        done_at = bootstrap_end + run_seconds
        first_log = result.log_lines[0] if result and result.log_lines else "step started"
        emit(EventKind.LOG, bootstrap_end, {"level": "INFO", "message": first_log})
        t = bootstrap_end + self._heartbeat_interval
        while t < done_at:
            emit(EventKind.HEARTBEAT, t, {})
            t += self._heartbeat_interval
        artifact = None
        if result is not None:
            for line in result.log_lines[1:]:
                emit(EventKind.LOG, done_at, {"level": "INFO", "message": line})
            emit(
                EventKind.MATERIALIZATION,
                done_at,
                {"asset": result.asset, "row_count": result.row_count,
                 "path": result.output_relpath},
            )
            artifact = (result.output_relpath, result.output_bytes)
        emit(EventKind.STEP_SUCCEEDED, done_at, {})
        sched = _Scheduled(handle, ctx, spec, fate, bootstrap_end, done_at, SUCCESS, events)
        sched.artifact = artifact
        return sched

    # -- observation --------------------------------------------------------

    def _get(self, handle: StepHandle) -> _Scheduled:
        sched = self._scheduled.get(handle.external_id)
        if sched is None:
            raise UnknownHandle(f"{self.backend_id} has no step {handle.external_id!r}")
        return sched

    def poll_step(self, handle: StepHandle, now: float) -> PollStatus:
        with self._lock:
            sched = self._get(handle)
            if sched.canceled_at is not None and now >= sched.canceled_at:
                return PollStatus(CANCELED)
            if now < sched.bootstrap_end:
                return PollStatus(LAUNCHING)
            if sched.terminal_time is None or now < sched.terminal_time:
                return PollStatus(RUNNING)
            if sched.terminal_state == SUCCESS:
                return PollStatus(SUCCESS)
            return PollStatus(FAILURE, error_code=sched.fate.error_code)

    def cancel_step(self, handle: StepHandle, now: float) -> CancelAck:
        """Cancel a non-terminal step; its event log simply stops (no terminal
        event is ever emitted).  Terminal steps are left untouched."""
        with self._lock:
            sched = self._get(handle)
            current = self.poll_step(handle, now)
            if current.state in (SUCCESS, FAILURE, CANCELED):
                return CancelAck(already_terminal=True, state=current.state)
            sched.canceled_at = now
            sched.events = [ev for ev in sched.events if ev.ts <= now]
            sched.terminal_time = None
            sched.artifact = None
            return CancelAck(already_terminal=False, state=CANCELED)

    # -- event consumption (one reader per attempt) --------------------------

    def next_event_ts(self, handle: StepHandle) -> float | None:
        with self._lock:
            sched = self._get(handle)
            if sched.cursor >= len(sched.events):
                return None
            return sched.events[sched.cursor].ts

    def consume_events(self, handle: StepHandle, upto_ts: float) -> list[StepEvent]:
        with self._lock:
            sched = self._get(handle)
            out: list[StepEvent] = []
            while sched.cursor < len(sched.events) and sched.events[sched.cursor].ts <= upto_ts:
                out.append(sched.events[sched.cursor])
                sched.cursor += 1
            return out

    def event_log(self, handle: StepHandle) -> list[StepEvent]:
        with self._lock:
            return list(self._get(handle).events)

    def output_artifact(self, handle: StepHandle) -> tuple[str, bytes] | None:
        with self._lock:
            return self._get(handle).artifact

    def terminal_time(self, handle: StepHandle) -> float | None:
        with self._lock:
            return self._get(handle).terminal_time


class BackendRegistry:
    """Registry of live backend instances keyed by backend id."""

    def __init__(self) -> None:
        self._backends: dict[str, SimulatedBackend] = {}

    def register(self, backend: SimulatedBackend) -> None:
        if backend.backend_id in self._backends:
            raise ValueError(f"backend id already registered: {backend.backend_id!r}")
        self._backends[backend.backend_id] = backend

    def get(self, backend_id: str) -> SimulatedBackend:
        try:
            return self._backends[backend_id]
        except KeyError:
            raise BackendUnavailable(backend_id) from None

    def descriptor(self, backend_id: str) -> BackendDescriptor:
        return self.get(backend_id).descriptor

    def ids(self) -> list[str]:
        return sorted(self._backends)

    def descriptors(self) -> list[BackendDescriptor]:
        return [self._backends[b].descriptor for b in self.ids()]

    def __len__(self) -> int:
        return len(self._backends)


# Default platform calibration.  Speed 1.75 for the DBR-like platform derives
# from the recorded edges durations (9.99h/10.49h vs 5.71h); failure rates
# 0.20/0.10 reflect roughly twice the trial runs needed on the EMR-like
# platform; bootstrap delays and rate cards are calibration, sized so per-hour
# costs land near the recorded per-hour magnitudes.
DEFAULT_PROFILES: dict[str, SimProfile] = {
    "emr_sim": SimProfile(speed_factor=1.0, bootstrap_delay_hours=0.15, base_failure_prob=0.20),
    "dbr_sim": SimProfile(speed_factor=1.75, bootstrap_delay_hours=0.08, base_failure_prob=0.10),
}

DEFAULT_RATE_CARDS: dict[str, RateCard] = {
    "local": RateCard.zero(),
    "emr_sim": RateCard("31.00", "8.00", "1.30"),
    "dbr_sim": RateCard("88.00", "42.00", "4.20"),
}


def default_descriptors() -> list[BackendDescriptor]:
    return [
        BackendDescriptor("local", "Local in-process", DEFAULT_RATE_CARDS["local"], None),
        BackendDescriptor(
            "emr_sim", "EMR-like simulator", DEFAULT_RATE_CARDS["emr_sim"],
            DEFAULT_PROFILES["emr_sim"],
        ),
        BackendDescriptor(
            "dbr_sim", "DBR-like simulator", DEFAULT_RATE_CARDS["dbr_sim"],
            DEFAULT_PROFILES["dbr_sim"],
        ),
    ]


def default_registry(worker: StepWorker | None = None) -> BackendRegistry:
    registry = BackendRegistry()
    for desc in default_descriptors():
        registry.register(SimulatedBackend(desc, worker=worker))
    return registry


def with_knobs(profile: SimProfile, **kwargs) -> SimProfile:
    """Convenience for deriving a profile with some knobs flipped."""
    return replace(profile, knobs=replace(profile.knobs, **kwargs))
