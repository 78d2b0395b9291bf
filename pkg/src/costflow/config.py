"""Pipeline definition files: one YAML document describing assets,
partitions, backends, routing policy, retry, and the corpus generator.

Loading is two-phase: structural validation against the bundled JSON schema,
then semantic checks (references resolve, graph is a DAG).  All problems are
collected and reported together rather than failing on the first.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import yaml

from .backends import (
    BackendDescriptor,
    BackendRegistry,
    SimKnobs,
    SimProfile,
    SimulatedBackend,
)
from .costs import RateCard
from .engine import RetryPolicy, DEFAULT_MAX_CONCURRENT
from .errors import ConfigError, CostflowError, CycleDetected, DuplicateAsset, UnknownDependency
from .factory import PolicyRule, SelectionPolicy
from .graph import AssetDef, AssetGraph, PartitionKey, PartitionSpec, ResourceHints, validate_graph
from .protocol import HEARTBEAT_TIMEOUT
from .workload import StepWorker, run_step


class ParseError(CostflowError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(message)
        self.line = line


@dataclass
class EngineSettings:
    max_concurrent: int = DEFAULT_MAX_CONCURRENT
    heartbeat_timeout: float = HEARTBEAT_TIMEOUT


@dataclass
class PipelineConfig:
    name: str
    seed: int
    partitions: PartitionSpec
    assets: list[AssetDef]
    graph: AssetGraph
    backends: list[BackendDescriptor]
    policy: SelectionPolicy
    retry: RetryPolicy
    corpus: dict | None
    engine: EngineSettings
    raw: dict = field(repr=False, default_factory=dict)

    def corpus_params(self) -> dict | None:
        if self.corpus is None:
            return None
        return {**self.corpus, "time_ids": list(self.partitions.time_ids)}

    def config_digest(self) -> str:
        canon = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def _schema() -> dict:
    text = resources.files("costflow.data").joinpath("pipeline.schema.json").read_text("utf-8")
    return json.loads(text)


def parse_pipeline_text(text: str) -> dict:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        line = None
        mark = getattr(exc, "problem_mark", None)
        if mark is not None:
            line = mark.line + 1
        raise ParseError(f"could not parse pipeline file: {exc}", line=line) from exc
    if not isinstance(doc, dict):
        raise ParseError("pipeline file must contain a mapping at the top level")
    return doc


def validate_pipeline_doc(doc: dict) -> list[str]:
    """All structural and semantic violations, each with a location."""
    problems: list[str] = []
    validator = jsonschema.Draft202012Validator(_schema())
    for err in sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path)):
        loc = "/".join(str(p) for p in err.absolute_path) or "<root>"
        problems.append(f"{loc}: {err.message}")
    if problems:
        return problems

    backend_ids = [b["backend_id"] for b in doc["backends"]]
    seen_backends = set()
    for i, bid in enumerate(backend_ids):
        if bid in seen_backends:
            problems.append(f"backends[{i}]: duplicate backend_id {bid!r}")
        seen_backends.add(bid)

    policy = doc["policy"]
    if policy["default_backend"] not in seen_backends:
        problems.append(
            f"policy/default_backend: unknown backend {policy['default_backend']!r}"
        )
    for i, rule in enumerate(policy.get("rules", [])):
        if rule["backend"] not in seen_backends:
            problems.append(f"policy/rules[{i}]: unknown backend {rule['backend']!r}")

    for i, a in enumerate(doc["assets"]):
        hint = a.get("backend_hint")
        if hint is not None and hint not in seen_backends:
            problems.append(f"assets[{i}]/backend_hint: unknown backend {hint!r}")

    try:
        _build_graph(doc)
    except DuplicateAsset as exc:
        problems.append(f"assets: {exc}")
    except UnknownDependency as exc:
        problems.append(f"assets: {exc}")
    except CycleDetected as exc:
        problems.append(f"assets: {exc}")
    except (ValueError, CostflowError) as exc:
        problems.append(f"assets: {exc}")
    return problems


def _build_partitions(doc: dict) -> PartitionSpec:
    p = doc["partitions"]
    return PartitionSpec(time_ids=tuple(p["time_ids"]), domain_segments=p["domain_segments"])


def _build_graph(doc: dict) -> tuple[list[AssetDef], AssetGraph]:
    partitions = _build_partitions(doc)
    defs = []
    for a in doc["assets"]:
        hints = a.get("resource_hints", {})
        defs.append(
            AssetDef(
                name=a["name"],
                deps=tuple(a.get("deps", [])),
                partitioning=partitions,
                backend_hint=a.get("backend_hint"),
                tags=dict(a.get("tags", {})),
                resource_hints=ResourceHints(
                    est_base_duration_hours=hints.get("est_base_duration_hours", 0.0),
                    node_count=hints.get("node_count", 1),
                    memory_gb_per_node=hints.get("memory_gb_per_node", 4.0),
                ),
            )
        )
    return defs, validate_graph(defs)


def _build_backends(doc: dict) -> list[BackendDescriptor]:
    out = []
    for b in doc["backends"]:
        card = RateCard(
            instance_rate_per_node_hour=str(b["rate_card"]["instance_rate_per_node_hour"]),
            surcharge_rate_per_node_hour=str(b["rate_card"]["surcharge_rate_per_node_hour"]),
            storage_rate_per_node_hour=str(b["rate_card"]["storage_rate_per_node_hour"]),
        )
        profile = None
        if b.get("sim_profile") is not None:
            p = b["sim_profile"]
            knobs = p.get("knobs", {})
            profile = SimProfile(
                speed_factor=p.get("speed_factor", 1.0),
                bootstrap_delay_hours=p.get("bootstrap_delay_hours", 0.0),
                base_failure_prob=p.get("base_failure_prob", 0.0),
                knobs=SimKnobs(
                    node_labels_enabled=knobs.get("node_labels_enabled", True),
                    maximize_resource_allocation=knobs.get("maximize_resource_allocation", True),
                    parallel_vacuum=knobs.get("parallel_vacuum", True),
                    memory_multiplier=knobs.get("memory_multiplier", 2.0),
                ),
            )
        out.append(
            BackendDescriptor(
                backend_id=b["backend_id"],
                display_name=b.get("display_name", b["backend_id"]),
                rate_card=card,
                sim_profile=profile,
            )
        )
    return out


def _build_policy(doc: dict) -> SelectionPolicy:
    p = doc["policy"]
    rules = []
    for r in p.get("rules", []):
        when = r.get("when", {})
        rules.append(
            PolicyRule(
                backend_id=r["backend"],
                tag_equals=dict(when.get("tag_equals", {})),
                time_id_prefix=when.get("time_id_prefix"),
            )
        )
    return SelectionPolicy(
        default_backend=p["default_backend"],
        cost_weight=p.get("cost_weight", 0.5),
        rules=tuple(rules),
    )


def load_pipeline_doc(doc: dict) -> PipelineConfig:
    problems = validate_pipeline_doc(doc)
    if problems:
        raise ConfigError(problems)
    defs, graph = _build_graph(doc)
    retry_doc = doc.get("retry", {})
    engine_doc = doc.get("engine", {})
    retry = RetryPolicy(
        max_attempts=retry_doc.get("max_attempts", 1),
        retry_on=frozenset(retry_doc.get("retry_on", RetryPolicy().retry_on)),
    )
    return PipelineConfig(
        name=doc["pipeline"],
        seed=doc.get("seed", 0),
        partitions=_build_partitions(doc),
        assets=defs,
        graph=graph,
        backends=_build_backends(doc),
        policy=_build_policy(doc),
        retry=retry,
        corpus=doc.get("corpus"),
        engine=EngineSettings(
            max_concurrent=engine_doc.get("max_concurrent", DEFAULT_MAX_CONCURRENT),
            heartbeat_timeout=engine_doc.get("heartbeat_timeout", HEARTBEAT_TIMEOUT),
        ),
        raw=doc,
    )


def load_pipeline_file(path: str | Path) -> PipelineConfig:
    text = Path(path).read_text(encoding="utf-8")
    return load_pipeline_doc(parse_pipeline_text(text))


def build_registry(config: PipelineConfig, worker: StepWorker | None = None) -> BackendRegistry:
    """Instantiate the configured backends.  Pipelines with a corpus get the
    real step worker; corpus-less pipelines (replays) run pure simulation."""
    if worker is None and config.corpus is not None:
        worker = run_step
    registry = BackendRegistry()
    for desc in config.backends:
        registry.register(SimulatedBackend(desc, worker=worker))
    return registry


def derive_run_id(config: PipelineConfig, seed: int, selected_keys) -> str:
    """Deterministic run id: same file, seed, and resolved partition set give
    the same id, so reruns serialize byte-identically."""
    labels = ",".join(k.label() for k in sorted(selected_keys))
    digest = hashlib.sha256(
        f"{config.config_digest()}|{seed}|{labels}".encode("utf-8")
    ).hexdigest()
    return f"run-{digest[:12]}"


def time_range_filter(config: PipelineConfig, start: str, end: str) -> list[str]:
    """Expand an inclusive time-id range into explicit patterns."""
    ids = list(config.partitions.time_ids)
    if start not in ids or end not in ids:
        return []
    i, j = ids.index(start), ids.index(end)
    if i > j:
        return []
    return ids[i : j + 1]
