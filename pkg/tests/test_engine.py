from __future__ import annotations

import itertools
import json
import random
from pathlib import Path

import pytest

from costflow.backends import (
    BackendDescriptor,
    BackendRegistry,
    OOM,
    SimProfile,
    SimulatedBackend,
    draw_fate,
)
from costflow.costs import RateCard
from costflow.engine import (
    CANCELED,
    EV_BOOTSTRAPPED,
    EV_CANCEL,
    EV_FAILED,
    EV_HEARTBEAT_TIMEOUT,
    EV_SUBMIT,
    EV_SUCCEEDED,
    FAILURE,
    LAUNCHING,
    QUEUED,
    RUNNING,
    SUCCESS,
    TERMINAL_STATES,
    LifecycleEvent,
    PartitionFilter,
    RetryPolicy,
    StepAttempt,
    execute_run,
    plan_run,
    transition,
)
from costflow.errors import EmptySelection, IllegalTransition
from costflow.factory import SelectionPolicy
from costflow.graph import AssetDef, PartitionKey, PartitionSpec, ResourceHints, validate_graph
from costflow.protocol import StepContext
from costflow.workload import RunWorkspace

SPEC_1 = PartitionSpec(time_ids=("t1",), domain_segments=1)


def sim_registry(
    failure_prob=0.0, speed=1.0, bootstrap=0.0, backend_id="sim", rates=("10", "2", "1")
) -> BackendRegistry:
    registry = BackendRegistry()
    registry.register(
        SimulatedBackend(
            BackendDescriptor(
                backend_id,
                backend_id,
                RateCard(*rates),
                SimProfile(
                    speed_factor=speed,
                    bootstrap_delay_hours=bootstrap,
                    base_failure_prob=failure_prob,
                ),
            )
        )
    )
    return registry


def linear_graph(durations: dict[str, float], spec=SPEC_1, deps_of=None):
    names = list(durations)
    defs = []
    for i, name in enumerate(names):
        deps = deps_of.get(name, ()) if deps_of else ((names[i - 1],) if i else ())
        defs.append(
            AssetDef(
                name=name,
                deps=tuple(deps),
                partitioning=spec,
                resource_hints=ResourceHints(est_base_duration_hours=durations[name]),
            )
        )
    return validate_graph(defs)


def make_plan(graph, registry, policy=None, selection=PartitionFilter(())):
    policy = policy or SelectionPolicy(default_backend=registry.ids()[0])
    return plan_run(graph, selection, policy, registry, "test")


class TestTransition:
    def _fresh(self):
        return StepAttempt(step_key="a/t1/0", attempt=1, backend_id="sim")

    def test_happy_path(self):
        a = self._fresh()
        a = transition(a, LifecycleEvent(EV_SUBMIT, 1.0))
        assert a.state == LAUNCHING and a.started_at == 1.0
        a = transition(a, LifecycleEvent(EV_BOOTSTRAPPED, 2.0))
        assert a.state == RUNNING
        a = transition(a, LifecycleEvent(EV_SUCCEEDED, 3.0))
        assert a.state == SUCCESS and a.ended_at == 3.0

    def test_cancel_from_each_non_terminal(self):
        for prefix in ([], [EV_SUBMIT], [EV_SUBMIT, EV_BOOTSTRAPPED]):
            a = self._fresh()
            for kind in prefix:
                a = transition(a, LifecycleEvent(kind, 1.0))
            a = transition(a, LifecycleEvent(EV_CANCEL, 9.0))
            assert a.state == CANCELED

    def test_terminals_absorb(self):
        a = transition(
            transition(
                transition(self._fresh(), LifecycleEvent(EV_SUBMIT, 1)),
                LifecycleEvent(EV_BOOTSTRAPPED, 2),
            ),
            LifecycleEvent(EV_SUCCEEDED, 3),
        )
        with pytest.raises(IllegalTransition):
            transition(a, LifecycleEvent(EV_CANCEL, 4))

    def test_heartbeat_timeout_marks_failure(self):
        a = transition(self._fresh(), LifecycleEvent(EV_SUBMIT, 1))
        a = transition(a, LifecycleEvent(EV_BOOTSTRAPPED, 2))
        a = transition(a, LifecycleEvent(EV_HEARTBEAT_TIMEOUT, 40))
        assert a.state == FAILURE
        assert a.error_code == "HEARTBEAT_TIMEOUT"

    def test_exhaustive_sequences_up_to_six(self):
        alphabet = [
            EV_SUBMIT,
            EV_BOOTSTRAPPED,
            EV_SUCCEEDED,
            EV_FAILED,
            EV_CANCEL,
            EV_HEARTBEAT_TIMEOUT,
        ]
        legal = {
            (QUEUED, EV_SUBMIT): LAUNCHING,
            (LAUNCHING, EV_BOOTSTRAPPED): RUNNING,
            (RUNNING, EV_SUCCEEDED): SUCCESS,
            (RUNNING, EV_FAILED): FAILURE,
            (RUNNING, EV_HEARTBEAT_TIMEOUT): FAILURE,
            (QUEUED, EV_CANCEL): CANCELED,
            (LAUNCHING, EV_CANCEL): CANCELED,
            (RUNNING, EV_CANCEL): CANCELED,
        }
        checked = 0
        for length in range(1, 7):
            for seq in itertools.product(alphabet, repeat=length):
                attempt = self._fresh()
                expected_state = QUEUED
                for kind in seq:
                    expected = legal.get((expected_state, kind))
                    if expected is None:
                        with pytest.raises(IllegalTransition):
                            transition(attempt, LifecycleEvent(kind, 1.0))
                        break
                    attempt = transition(attempt, LifecycleEvent(kind, 1.0))
                    expected_state = expected
                    assert attempt.state == expected_state
                    # cancel from any non-terminal always lands in CANCELED
                    if kind == EV_CANCEL:
                        assert attempt.state == CANCELED
                checked += 1
        assert checked == sum(6**n for n in range(1, 7))


class TestPlanRun:
    def test_recorded_routing_order(self):
        spec = PartitionSpec(time_ids=("recorded",), domain_segments=1)
        hints = {"nodes": "emr_sim", "edges": "emr_sim", "graph": "dbr_sim", "graph_aggr": "emr_sim"}
        defs = [
            AssetDef(
                name=name,
                deps=deps,
                partitioning=spec,
                backend_hint=hints[name],
            )
            for name, deps in [
                ("nodes", ()),
                ("edges", ("nodes",)),
                ("graph", ("nodes", "edges")),
                ("graph_aggr", ("graph",)),
            ]
        ]
        graph = validate_graph(defs)
        registry = BackendRegistry()
        for b in ("emr_sim", "dbr_sim"):
            registry.register(
                SimulatedBackend(BackendDescriptor(b, b, RateCard.zero(), SimProfile()))
            )
        plan = make_plan(graph, registry, SelectionPolicy(default_backend="emr_sim"))
        assert [s.backend_id for s in plan.steps] == ["emr_sim", "emr_sim", "dbr_sim", "emr_sim"]
        assert [s.asset for s in plan.steps] == ["nodes", "edges", "graph", "graph_aggr"]

    def test_empty_selection(self):
        graph = linear_graph({"a": 0.0})
        registry = sim_registry()
        with pytest.raises(EmptySelection):
            make_plan(graph, registry, selection=PartitionFilter(("no-such-time",)))

    def test_two_partitions_times_four_assets(self):
        spec = PartitionSpec(time_ids=("t1", "t2"), domain_segments=1)
        graph = linear_graph({"a": 0.0, "b": 0.0, "c": 0.0, "d": 0.0}, spec=spec)
        plan = make_plan(graph, sim_registry())
        assert len(plan.steps) == 8


class TestExecuteRun:
    def test_all_success(self, tmp_path):
        graph = linear_graph({"a": 0.01, "b": 0.02})
        registry = sim_registry()
        plan = make_plan(graph, registry)
        record = execute_run(
            plan, registry, RetryPolicy(), seed=1, workspace=RunWorkspace(tmp_path / "r"),
            run_id="r",
        )
        assert record.run_state == SUCCESS
        assert len(record.attempts) == 2
        assert all(a.state == SUCCESS for a in record.attempts)
        assert all(a.cost is not None for a in record.attempts)

    def test_failed_then_retried_to_success(self, tmp_path):
        profile = SimProfile(base_failure_prob=0.5)
        ctx1 = StepContext(
            run_id="r", step_key="a/t1/0", partition=PartitionKey("t1", 0),
            backend_id="sim", attempt=1,
        )
        ctx2 = StepContext(
            run_id="r", step_key="a/t1/0", partition=PartitionKey("t1", 0),
            backend_id="sim", attempt=2,
        )
        seed = next(
            s
            for s in range(2000)
            if draw_fate(s, ctx1, profile, False).failed
            and draw_fate(s, ctx1, profile, False).error_code == OOM
            and not draw_fate(s, ctx2, profile, False).failed
        )
        graph = linear_graph({"a": 0.01})
        registry = sim_registry(failure_prob=0.5)
        plan = make_plan(graph, registry)
        record = execute_run(
            plan, registry, RetryPolicy(max_attempts=2), seed=seed,
            workspace=RunWorkspace(tmp_path / "r"), run_id="r",
        )
        assert record.run_state == SUCCESS
        assert [a.state for a in record.attempts] == [FAILURE, SUCCESS]
        assert record.attempts[0].error_code == OOM
        assert record.attempts[0].attempt == 1
        assert record.attempts[1].attempt == 2

    def test_non_retryable_failure_fails_run(self, tmp_path):
        profile = SimProfile(base_failure_prob=0.5)
        ctx1 = StepContext(
            run_id="r", step_key="a/t1/0", partition=PartitionKey("t1", 0),
            backend_id="sim", attempt=1,
        )
        seed = next(s for s in range(2000) if draw_fate(s, ctx1, profile, False).failed)
        graph = linear_graph({"a": 0.01, "b": 0.01})
        registry = sim_registry(failure_prob=0.5)
        plan = make_plan(graph, registry)
        record = execute_run(
            plan, registry, RetryPolicy(max_attempts=1), seed=seed,
            workspace=RunWorkspace(tmp_path / "r"), run_id="r",
        )
        assert record.run_state == FAILURE
        # downstream of the failed root is never attempted
        assert {a.step_key for a in record.attempts} == {"a/t1/0"}

    def test_scripted_cancel_while_running(self, tmp_path):
        graph = linear_graph({"nodes": 0.005, "edges": 1.0, "graph": 0.01, "graph_aggr": 0.01})
        registry = sim_registry()
        plan = make_plan(graph, registry)
        ws = RunWorkspace(tmp_path / "r")
        # nodes ends at 18s; edges runs 18..3618; cancel mid-edges
        record = execute_run(
            plan, registry, RetryPolicy(), seed=1, workspace=ws, run_id="r", cancel_at=600.0
        )
        assert record.run_state == CANCELED
        states = {a.step_key: a.state for a in record.attempts}
        assert states["nodes/t1/0"] == SUCCESS
        assert states["edges/t1/0"] == CANCELED
        assert "graph/t1/0" not in states  # never scheduled
        edges_attempt = next(a for a in record.attempts if a.step_key == "edges/t1/0")
        assert edges_attempt.cost is not None  # canceled time is still billed
        assert edges_attempt.duration_hours == pytest.approx(600.0 / 3600 - 0.005)
        telemetry = ws.telemetry_path("edges/t1/0", 1).read_text().splitlines()
        kinds = [json.loads(line)["kind"] for line in telemetry]
        assert "STEP_SUCCEEDED" not in kinds and "STEP_FAILED" not in kinds

    def test_heartbeat_timeout_failure(self, tmp_path):
        profile = SimProfile(base_failure_prob=1.0)
        ctx1 = StepContext(
            run_id="r", step_key="a/t1/0", partition=PartitionKey("t1", 0),
            backend_id="sim", attempt=1,
        )
        seed = next(s for s in range(2000) if draw_fate(s, ctx1, profile, False).hang)
        graph = linear_graph({"a": 0.5})
        registry = sim_registry(failure_prob=1.0)
        plan = make_plan(graph, registry)
        ws = RunWorkspace(tmp_path / "r")
        record = execute_run(
            plan, registry, RetryPolicy(max_attempts=1), seed=seed, workspace=ws, run_id="r"
        )
        attempt = record.attempts[0]
        assert attempt.state == FAILURE
        assert attempt.error_code == "HEARTBEAT_TIMEOUT"
        lines = ws.telemetry_path("a/t1/0", 1).read_text().splitlines()
        last_ts = json.loads(lines[-1])["ts"]
        assert attempt.ended_at == pytest.approx(last_ts + 30.0)

    def test_determinism_byte_identical(self, tmp_path):
        graph = linear_graph({"a": 0.02, "b": 0.05, "c": 0.01})
        registry1 = sim_registry(failure_prob=0.3, bootstrap=0.01)
        registry2 = sim_registry(failure_prob=0.3, bootstrap=0.01)
        plan1 = make_plan(graph, registry1)
        plan2 = make_plan(graph, registry2)
        ws1, ws2 = RunWorkspace(tmp_path / "one"), RunWorkspace(tmp_path / "two")
        execute_run(plan1, registry1, RetryPolicy(max_attempts=3), 7, ws1, run_id="same")
        execute_run(plan2, registry2, RetryPolicy(max_attempts=3), 7, ws2, run_id="same")
        assert ws1.record_path.read_bytes() == ws2.record_path.read_bytes()
        assert ws1.log_path.read_bytes() == ws2.log_path.read_bytes()
        t1 = sorted(p.name for p in (ws1.root / "telemetry").iterdir())
        t2 = sorted(p.name for p in (ws2.root / "telemetry").iterdir())
        assert t1 == t2
        for name in t1:
            assert (ws1.root / "telemetry" / name).read_bytes() == (
                ws2.root / "telemetry" / name
            ).read_bytes()

    def test_max_concurrent_respected(self, tmp_path):
        spec = PartitionSpec(time_ids=("t1",), domain_segments=6)
        graph = linear_graph({"a": 0.1}, spec=spec, deps_of={"a": ()})
        registry = sim_registry()
        plan = make_plan(graph, registry)
        ws = RunWorkspace(tmp_path / "r")
        record = execute_run(
            plan, registry, RetryPolicy(), 1, ws, run_id="r", max_concurrent=2
        )
        assert record.run_state == SUCCESS
        running: set[str] = set()
        peak = 0
        for line in ws.log_path.read_text().splitlines():
            doc = json.loads(line)
            if doc["type"] != "step_state":
                continue
            if doc["state"] == LAUNCHING:
                running.add(doc["step_key"])
            elif doc["state"] in TERMINAL_STATES:
                running.discard(doc["step_key"])
            peak = max(peak, len(running))
        assert peak <= 2


def _upstream_gating_holds(ws: RunWorkspace, graph) -> bool:
    succeeded: set[str] = set()
    for line in ws.log_path.read_text().splitlines():
        doc = json.loads(line)
        if doc["type"] != "step_state":
            continue
        key = doc["step_key"]
        if doc["state"] == LAUNCHING:
            asset, time_id, seg = key.split("/")
            for dep in graph.asset(asset).deps:
                if f"{dep}/{time_id}/{seg}" not in succeeded:
                    return False
        elif doc["state"] == SUCCESS:
            succeeded.add(key)
    return True


def test_no_step_launches_before_upstream_success(tmp_path):
    rng = random.Random(4242)
    for trial in range(12):
        n = rng.randint(2, 6)
        names = [f"a{i}" for i in range(n)]
        deps_of = {
            name: tuple(d for d in names[:i] if rng.random() < 0.5)
            for i, name in enumerate(names)
        }
        durations = {name: round(rng.uniform(0.001, 0.05), 4) for name in names}
        spec = PartitionSpec(time_ids=("t1",), domain_segments=rng.choice((1, 2)))
        graph = linear_graph(durations, spec=spec, deps_of=deps_of)
        registry = sim_registry(bootstrap=rng.choice((0.0, 0.002)))
        plan = make_plan(graph, registry)
        ws = RunWorkspace(tmp_path / f"r{trial}")
        record = execute_run(
            plan, registry, RetryPolicy(), seed=trial, workspace=ws, run_id=f"r{trial}",
            max_concurrent=rng.choice((1, 2, 4)),
        )
        assert record.run_state == SUCCESS
        assert _upstream_gating_holds(ws, graph)


def test_outputs_are_backend_independent(tmp_path):
    """The same workload materializes byte-identical outputs on every
    backend; profiles only change reported time and money."""
    from costflow.graph import PartitionSpec
    from costflow.workload import run_step, webgraph_asset_defs

    time_ids = ["CC-MAIN-2023-40"]
    spec = PartitionSpec(time_ids=tuple(time_ids), domain_segments=2)
    corpus_params = {"seed": 99, "n_hosts": 7, "pages_per_host": 4, "time_ids": time_ids}
    profiles = {
        "local": None,
        "emr_sim": SimProfile(speed_factor=1.0, bootstrap_delay_hours=0.15),
        "dbr_sim": SimProfile(speed_factor=1.75, bootstrap_delay_hours=0.08),
    }
    outputs: dict[str, dict[str, bytes]] = {}
    for backend_id, profile in profiles.items():
        graph = validate_graph(
            webgraph_asset_defs(spec, backend_hints={
                a: backend_id for a in ("nodes", "edges", "graph", "graph_aggr")
            })
        )
        registry = BackendRegistry()
        registry.register(
            SimulatedBackend(
                BackendDescriptor(backend_id, backend_id, RateCard("3", "1", "0.5"), profile),
                worker=run_step,
            )
        )
        plan = make_plan(graph, registry, SelectionPolicy(default_backend=backend_id))
        ws = RunWorkspace(tmp_path / backend_id)
        record = execute_run(
            plan, registry, RetryPolicy(), seed=1, workspace=ws, run_id=f"bi-{backend_id}",
            corpus_params=corpus_params,
        )
        assert record.run_state == SUCCESS
        outputs[backend_id] = {
            str(p.relative_to(ws.root / "assets")): p.read_bytes()
            for p in sorted((ws.root / "assets").rglob("*.jsonl"))
        }
    assert outputs["local"] == outputs["emr_sim"] == outputs["dbr_sim"]
    assert len(outputs["local"]) == 8  # 4 assets x 2 segments


def test_failure_proportion_ordering_emr_vs_dbr(tmp_path):
    """With default profiles the EMR-like platform fails more often."""
    from costflow.backends import DEFAULT_PROFILES

    counts = {}
    for backend_id in ("emr_sim", "dbr_sim"):
        registry = BackendRegistry()
        registry.register(
            SimulatedBackend(
                BackendDescriptor(
                    backend_id, backend_id, RateCard.zero(), DEFAULT_PROFILES[backend_id]
                )
            )
        )
        graph = linear_graph({"probe": 0.01})
        plan = make_plan(graph, registry)
        failures = 0
        for seed in range(60):
            ws = RunWorkspace(tmp_path / f"{backend_id}-{seed}")
            record = execute_run(
                plan, registry, RetryPolicy(max_attempts=1), seed, ws, run_id=f"x{seed}"
            )
            failures += sum(1 for a in record.attempts if a.state == FAILURE)
        counts[backend_id] = failures
    assert counts["emr_sim"] > counts["dbr_sim"]
