from __future__ import annotations

import itertools
import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from costflow.errors import MalformedPayload
from costflow.graph import PartitionKey
from costflow.protocol import (
    ALIVE,
    TIMED_OUT,
    EventKind,
    StepContext,
    StepEvent,
    check_liveness,
    decode_context,
    encode_context,
    encode_event,
    parse_event,
    read_events,
    validate_stream,
)


def make_ctx(**overrides) -> StepContext:
    base = dict(
        run_id="run-abc123",
        step_key="edges/CC-MAIN-2023-40/2",
        partition=PartitionKey("CC-MAIN-2023-40", 2),
        backend_id="emr_sim",
        attempt=1,
        tags={"kind": "extract"},
        env={"COSTFLOW_WORKSPACE": "/tmp/ws"},
    )
    base.update(overrides)
    return StepContext(**base)


class TestContextCodec:
    def test_empty_maps_roundtrip(self):
        ctx = make_ctx(tags={}, env={})
        assert decode_context(encode_context(ctx)) == ctx

    def test_canonical_despite_insertion_order(self):
        a = make_ctx(tags={"x": "1", "y": "2"})
        b = make_ctx(tags={"y": "2", "x": "1"})
        assert encode_context(a) == encode_context(b)

    def test_named_step_roundtrip(self):
        ctx = make_ctx()
        decoded = decode_context(encode_context(ctx))
        assert decoded == ctx
        assert decoded.asset == "edges"

    def test_truncated_payload(self):
        payload = encode_context(make_ctx())[:-7]
        with pytest.raises(MalformedPayload):
            decode_context(payload)

    def test_unknown_extra_field_ignored(self):
        doc = json.loads(encode_context(make_ctx()).decode())
        doc["future_feature"] = {"anything": 1}
        decoded = decode_context(json.dumps(doc).encode())
        assert decoded == make_ctx()

    def test_mismatched_step_key_rejected(self):
        doc = json.loads(encode_context(make_ctx()).decode())
        doc["step_key"] = "edges/other-batch/2"
        with pytest.raises(MalformedPayload):
            decode_context(json.dumps(doc).encode())


@settings(max_examples=300, deadline=None)
@given(
    run_id=st.uuids().map(str),
    asset=st.sampled_from(["nodes", "edges", "graph", "graph_aggr"]),
    time_id=st.text(
        alphabet=st.characters(blacklist_characters="/", blacklist_categories=("Cs",)),
        min_size=1,
        max_size=20,
    ),
    segment=st.integers(min_value=0, max_value=99),
    attempt=st.integers(min_value=1, max_value=9),
    tags=st.dictionaries(st.text(max_size=8), st.text(max_size=16), max_size=4),
)
def test_context_roundtrip_property(run_id, asset, time_id, segment, attempt, tags):
    ctx = StepContext(
        run_id=run_id,
        step_key=f"{asset}/{time_id}/{segment}",
        partition=PartitionKey(time_id, segment),
        backend_id="local",
        attempt=attempt,
        tags=tags,
    )
    assert decode_context(encode_context(ctx)) == ctx


def make_event(seq=0, kind=EventKind.HEARTBEAT, ts=1.5, payload=None, step="edges/t/0"):
    return StepEvent(
        seq=seq,
        run_id="r1",
        step_key=step,
        kind=kind,
        ts=ts,
        payload=payload or {},
    )


class TestEventCodec:
    def test_heartbeat_line_shape(self):
        line = encode_event(make_event(seq=3))
        assert "\n" not in line
        doc = json.loads(line)
        assert doc["kind"] == "HEARTBEAT"
        assert doc["seq"] == 3

    def test_multiline_log_message_stays_one_line(self):
        ev = make_event(kind=EventKind.LOG, payload={"level": "INFO", "message": "a\nb\nc"})
        line = encode_event(ev)
        assert "\n" not in line
        assert parse_event(line) == ev

    def test_random_roundtrips(self):
        rng = random.Random(7)
        kinds = list(EventKind)
        for i in range(200):
            ev = make_event(
                seq=rng.randrange(100),
                kind=rng.choice(kinds),
                ts=rng.random() * 1e5,
                payload={"k": rng.randrange(10), "msg": "x" * rng.randrange(5)},
            )
            assert parse_event(encode_event(ev)) == ev


class TestGoldenWireFormats:
    """The exact bytes are a contract; changing them breaks mixed-version
    engine/worker fleets."""

    def test_context_payload_golden(self):
        ctx = make_ctx(tags={"kind": "extract"}, env={"COSTFLOW_WORKSPACE": "/tmp/ws"})
        assert encode_context(ctx) == (
            b'{"attempt":1,"backend_id":"emr_sim","env":{"COSTFLOW_WORKSPACE":"/tmp/ws"},'
            b'"partition":{"domain_segment":2,"time_id":"CC-MAIN-2023-40"},'
            b'"run_id":"run-abc123","step_key":"edges/CC-MAIN-2023-40/2",'
            b'"tags":{"kind":"extract"}}'
        )

    def test_event_line_golden(self):
        ev = StepEvent(
            seq=4,
            run_id="run-abc123",
            step_key="edges/CC-MAIN-2023-40/2",
            kind=EventKind.LOG,
            ts=540.0,
            payload={"level": "INFO", "message": "two\nlines"},
        )
        assert encode_event(ev) == (
            '{"kind":"LOG","payload":{"level":"INFO","message":"two\\nlines"},'
            '"run_id":"run-abc123","seq":4,"step_key":"edges/CC-MAIN-2023-40/2","ts":540.0}'
        )


class TestReadEvents:
    def _stream(self, step: str, seqs: list[int]) -> list[str]:
        return [encode_event(make_event(seq=s, step=step, ts=float(s))) for s in seqs]

    def test_gap_detection(self):
        result = read_events(self._stream("s/t/0", [0, 1, 2, 4]))
        assert [e.seq for e in result.events["s/t/0"]] == [0, 1, 2, 4]
        assert result.gaps == {"s/t/0": {3}}

    def test_two_streams_interleaved(self):
        a = self._stream("a/t/0", list(range(6)))
        b = self._stream("b/t/0", list(range(4)))
        merged = []
        rng = random.Random(13)
        ia = ib = 0
        while ia < len(a) or ib < len(b):
            take_a = ib >= len(b) or (ia < len(a) and rng.random() < 0.5)
            if take_a:
                merged.append(a[ia])
                ia += 1
            else:
                merged.append(b[ib])
                ib += 1
        result = read_events(merged)
        assert [e.seq for e in result.events["a/t/0"]] == list(range(6))
        assert [e.seq for e in result.events["b/t/0"]] == list(range(4))
        assert result.gaps == {}

    def test_empty_stream(self):
        result = read_events([])
        assert result.events == {}
        assert result.gaps == {}
        assert result.malformed == []

    def test_malformed_lines_are_collected_not_fatal(self):
        lines = self._stream("s/t/0", [0, 1])
        lines.insert(1, "{not json")
        result = read_events(lines)
        assert [e.seq for e in result.events["s/t/0"]] == [0, 1]
        assert len(result.malformed) == 1
        assert result.malformed[0][0] == 2  # line number

    def test_duplicate_seq_reported_first_wins(self):
        first = encode_event(make_event(seq=0, ts=1.0))
        dup = encode_event(make_event(seq=0, ts=9.0))
        result = read_events([first, dup])
        assert len(result.malformed) == 1
        assert result.events["edges/t/0"][0].ts == 1.0


class TestStreamValidator:
    KINDS = [
        EventKind.CONTEXT_LOADED,
        EventKind.LOG,
        EventKind.STEP_SUCCEEDED,
        EventKind.STEP_FAILED,
    ]

    def _expected_valid(self, kinds: tuple[EventKind, ...]) -> bool:
        first_ok = kinds[0] is EventKind.CONTEXT_LOADED
        terminals = [k for k in kinds if k in (EventKind.STEP_SUCCEEDED, EventKind.STEP_FAILED)]
        exactly_one = len(terminals) == 1
        last_ok = kinds[-1] in (EventKind.STEP_SUCCEEDED, EventKind.STEP_FAILED)
        return first_ok and exactly_one and last_ok

    def test_enumerate_short_streams(self):
        checked = 0
        for n in range(1, 5):
            for kinds in itertools.product(self.KINDS, repeat=n):
                events = [make_event(seq=i, kind=k, ts=float(i)) for i, k in enumerate(kinds)]
                problems = validate_stream(events)
                assert (problems == []) == self._expected_valid(kinds), (kinds, problems)
                checked += 1
        assert checked == 4 + 16 + 64 + 256

    def test_bad_seq_rejected(self):
        events = [
            make_event(seq=0, kind=EventKind.CONTEXT_LOADED),
            make_event(seq=2, kind=EventKind.STEP_SUCCEEDED),
        ]
        assert validate_stream(events)

    def test_empty_is_invalid(self):
        assert validate_stream([]) == ["stream is empty"]


class TestLiveness:
    def test_timed_out(self):
        assert check_liveness(0, 45, 30) == TIMED_OUT

    def test_boundary_is_alive(self):
        assert check_liveness(0, 30, 30) == ALIVE

    def test_zero_elapsed(self):
        assert check_liveness(10, 10, 5) == ALIVE

    def test_timeout_must_be_positive(self):
        with pytest.raises(ValueError):
            check_liveness(0, 1, 0)
