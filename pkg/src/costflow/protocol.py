"""Step context injection and the telemetry line protocol.

Two wire formats live here and both are bit-exact contracts:

* Context payload: UTF-8 JSON with sorted keys, delivered to a step worker
  through a file whose path is named by the ``COSTFLOW_CONTEXT`` environment
  variable.  Unknown fields are ignored on decode so old workers survive
  newer engines.

* Event lines: one UTF-8 JSON object per line with fields ``seq``,
  ``run_id``, ``step_key``, ``kind``, ``ts``, ``payload``.  Per attempt,
  ``seq`` starts at 0 and increments by 1; the first event is
  CONTEXT_LOADED and a terminal event, when present, is last.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

from .errors import MalformedPayload
from .graph import PartitionKey

CONTEXT_ENV_VAR = "COSTFLOW_CONTEXT"

# Defaults for the heartbeat mechanism (simulated seconds).
HEARTBEAT_INTERVAL = 5.0
HEARTBEAT_TIMEOUT = 30.0


class EventKind(str, Enum):
    CONTEXT_LOADED = "CONTEXT_LOADED"
    LOG = "LOG"
    HEARTBEAT = "HEARTBEAT"
    MATERIALIZATION = "MATERIALIZATION"
    STEP_SUCCEEDED = "STEP_SUCCEEDED"
    STEP_FAILED = "STEP_FAILED"


TERMINAL_KINDS = frozenset({EventKind.STEP_SUCCEEDED, EventKind.STEP_FAILED})


@dataclass(frozen=True)
class StepContext:
    """Everything a step worker needs to know, injected before user code runs."""

    run_id: str
    step_key: str  # "asset/time_id/segment"
    partition: PartitionKey
    backend_id: str
    attempt: int = 1
    tags: dict[str, str] = field(default_factory=dict)
    env: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.attempt < 1:
            raise ValueError("attempt must be >= 1")
        parts = self.step_key.split("/")
        if len(parts) != 3 or parts[1] != self.partition.time_id or parts[2] != str(
            self.partition.domain_segment
        ):
            raise ValueError(
                f"step_key {self.step_key!r} does not match partition {self.partition}"
            )

    @property
    def asset(self) -> str:
        return self.step_key.split("/", 1)[0]


def step_key(asset: str, partition: PartitionKey) -> str:
    return f"{asset}/{partition.time_id}/{partition.domain_segment}"


@dataclass(frozen=True)
class StepEvent:
    seq: int
    run_id: str
    step_key: str
    kind: EventKind
    ts: float
    payload: dict = field(default_factory=dict)


def _canonical_json(obj: object) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def encode_context(ctx: StepContext) -> bytes:
    """Canonical byte encoding; semantically equal contexts encode identically."""
    doc = {
        "run_id": ctx.run_id,
        "step_key": ctx.step_key,
        "partition": {
            "time_id": ctx.partition.time_id,
            "domain_segment": ctx.partition.domain_segment,
        },
        "backend_id": ctx.backend_id,
        "attempt": ctx.attempt,
        "tags": dict(sorted(ctx.tags.items())),
        "env": dict(sorted(ctx.env.items())),
    }
    return _canonical_json(doc).encode("utf-8")


def decode_context(payload: bytes) -> StepContext:
    """Exact inverse of :func:`encode_context`; unknown fields are ignored."""
    try:
        doc = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedPayload(f"context payload is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise MalformedPayload("context payload must be a JSON object")
    try:
        part = doc["partition"]
        ctx = StepContext(
            run_id=doc["run_id"],
            step_key=doc["step_key"],
            partition=PartitionKey(
                time_id=part["time_id"], domain_segment=int(part["domain_segment"])
            ),
            backend_id=doc["backend_id"],
            attempt=int(doc["attempt"]),
            tags={str(k): str(v) for k, v in doc.get("tags", {}).items()},
            env={str(k): str(v) for k, v in doc.get("env", {}).items()},
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedPayload(f"context payload is structurally invalid: {exc}") from exc
    return ctx


def event_doc(ev: StepEvent) -> dict:
    return {
        "seq": ev.seq,
        "run_id": ev.run_id,
        "step_key": ev.step_key,
        "kind": ev.kind.value,
        "ts": ev.ts,
        "payload": ev.payload,
    }


def encode_event(ev: StepEvent) -> str:
    """One physical line; embedded newlines in payloads are JSON-escaped."""
    line = _canonical_json(event_doc(ev))
    assert "\n" not in line
    return line


def parse_event(line: str) -> StepEvent:
    try:
        doc = json.loads(line)
        return StepEvent(
            seq=int(doc["seq"]),
            run_id=doc["run_id"],
            step_key=doc["step_key"],
            kind=EventKind(doc["kind"]),
            ts=float(doc["ts"]),
            payload=doc.get("payload", {}),
        )
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise MalformedPayload(f"bad event line: {exc}") from exc


@dataclass
class ReadResult:
    """Outcome of draining a telemetry stream.

    ``events`` holds per-step event lists in seq order; ``gaps`` the missing
    seq numbers per step; ``malformed`` (line number, description) pairs for
    lines that could not be parsed.  Malformed lines are never fatal.
    """

    events: dict[str, list[StepEvent]] = field(default_factory=dict)
    gaps: dict[str, set[int]] = field(default_factory=dict)
    malformed: list[tuple[int, str]] = field(default_factory=list)

    def all_events(self) -> list[StepEvent]:
        out: list[StepEvent] = []
        for key in sorted(self.events):
            out.extend(self.events[key])
        return out


def read_events(lines) -> ReadResult:
    """Group a (possibly interleaved) stream of event lines per step.

    Lines from different steps may interleave arbitrarily; per step they are
    expected in seq order, possibly with gaps.  Duplicated seq numbers are
    reported as malformed and the first occurrence wins.
    """
    result = ReadResult()
    by_step: dict[str, dict[int, StepEvent]] = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\n")
        if not line.strip():
            continue
        try:
            ev = parse_event(line)
        except MalformedPayload as exc:
            result.malformed.append((lineno, str(exc)))
            continue
        bucket = by_step.setdefault(ev.step_key, {})
        if ev.seq in bucket:
            result.malformed.append((lineno, f"duplicate seq {ev.seq} for {ev.step_key}"))
            continue
        bucket[ev.seq] = ev
    for key, bucket in by_step.items():
        seqs = sorted(bucket)
        result.events[key] = [bucket[s] for s in seqs]
        expected = set(range(0, seqs[-1] + 1))
        missing = expected - set(seqs)
        if missing:
            result.gaps[key] = missing
    return result


def validate_stream(events: list[StepEvent]) -> list[str]:
    """Violations of the per-attempt stream shape; empty list means valid.

    A valid stream starts with CONTEXT_LOADED, contains exactly one terminal
    event, and that terminal event is last.  (Canceled attempts intentionally
    end without a terminal event and will not validate.)
    """
    problems: list[str] = []
    if not events:
        return ["stream is empty"]
    if events[0].kind is not EventKind.CONTEXT_LOADED:
        problems.append(f"first event must be CONTEXT_LOADED, got {events[0].kind.value}")
    terminals = [i for i, ev in enumerate(events) if ev.kind in TERMINAL_KINDS]
    if len(terminals) != 1:
        problems.append(f"expected exactly one terminal event, found {len(terminals)}")
    if terminals and terminals[-1] != len(events) - 1:
        problems.append("terminal event must be last")
    for i, ev in enumerate(events):
        if ev.seq != i:
            problems.append(f"seq must increment from 0; position {i} has seq {ev.seq}")
            break
    return problems


ALIVE = "ALIVE"
TIMED_OUT = "TIMED_OUT"


def check_liveness(last_heartbeat_ts: float, now: float, timeout: float) -> str:
    """TIMED_OUT iff strictly more than ``timeout`` elapsed since the last beat."""
    if timeout <= 0:
        raise ValueError("timeout must be > 0")
    return TIMED_OUT if (now - last_heartbeat_ts) > timeout else ALIVE
