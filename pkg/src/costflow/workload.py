"""Executable step bodies for the reference web-graph pipeline.

A step worker receives only an environment mapping; it locates its injected
context file through ``COSTFLOW_CONTEXT``, decodes it, reads upstream
outputs from the run workspace, and returns the rows it would materialize.
Materialized outputs are line-delimited JSON, sorted, so identical inputs
produce byte-identical files on every backend.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

from .crawl import (
    Corpus,
    CrawlRecord,
    GraphEdge,
    PageGraph,
    SeedNode,
    aggregate_domains,
    assign_domain_segment,
    build_graph,
    extract_edges,
    generate_corpus,
    nodes_only,
)
from .graph import AssetDef, PartitionKey, PartitionSpec, ResourceHints
from .protocol import CONTEXT_ENV_VAR, StepContext, decode_context

ENV_WORKSPACE = "COSTFLOW_WORKSPACE"
ENV_SEGMENTS = "COSTFLOW_SEGMENTS"

ASSET_NODES = "nodes"
ASSET_EDGES = "edges"
ASSET_GRAPH = "graph"
ASSET_GRAPH_AGGR = "graph_aggr"
REFERENCE_ASSETS = (ASSET_NODES, ASSET_EDGES, ASSET_GRAPH, ASSET_GRAPH_AGGR)


class RunWorkspace:
    """Filesystem layout of one run directory."""

    def __init__(self, root: Path | str):
        self.root = Path(root)

    @property
    def corpus_path(self) -> Path:
        return self.root / "corpus.jsonl"

    @property
    def seeds_path(self) -> Path:
        return self.root / "seeds.txt"

    def asset_output(self, asset: str, key: PartitionKey) -> Path:
        return self.root / "assets" / asset / f"{key.time_id}__s{key.domain_segment}.jsonl"

    def context_path(self, step_key: str, attempt: int) -> Path:
        return self.root / "contexts" / f"{_safe(step_key)}__a{attempt}.ctx"

    def telemetry_path(self, step_key: str, attempt: int) -> Path:
        return self.root / "telemetry" / f"{_safe(step_key)}__a{attempt}.jsonl"

    @property
    def record_path(self) -> Path:
        return self.root / "record.json"

    @property
    def log_path(self) -> Path:
        return self.root / "log.jsonl"

    def ensure_dirs(self) -> None:
        for sub in ("contexts", "telemetry", "assets"):
            (self.root / sub).mkdir(parents=True, exist_ok=True)

    def reset(self) -> None:
        """Wipe any previous execution so a rerun starts from a clean slate."""
        import shutil

        for sub in ("contexts", "telemetry", "assets"):
            shutil.rmtree(self.root / sub, ignore_errors=True)
        for name in ("record.json", "log.jsonl"):
            path = self.root / name
            if path.exists():
                path.unlink()
        self.ensure_dirs()

    def write_corpus(self, corpus: Corpus) -> None:
        self.ensure_dirs()
        self.corpus_path.write_text(corpus.records_jsonl(), encoding="utf-8")
        self.seeds_path.write_text("\n".join(corpus.raw_seeds) + "\n", encoding="utf-8")

    def read_records(self) -> list[CrawlRecord]:
        records = []
        with self.corpus_path.open(encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    doc = json.loads(line)
                    records.append(
                        CrawlRecord(url=doc["url"], fetched_at=doc["fetched_at"], body=doc["body"])
                    )
        return records

    def read_raw_seeds(self) -> list[str]:
        return [ln for ln in self.seeds_path.read_text(encoding="utf-8").splitlines() if ln]


def _safe(step_key: str) -> str:
    return step_key.replace("/", "__")


@dataclass
class WorkerResult:
    """What a finished step hands back to its backend."""

    asset: str
    row_count: int
    output_relpath: str
    output_bytes: bytes
    log_lines: list[str] = field(default_factory=list)


StepWorker = Callable[[Mapping[str, str]], WorkerResult]


def run_step(env: Mapping[str, str]) -> WorkerResult:
    """Entry point of the reference workload; dispatches on the context's asset."""
    ctx = decode_context(Path(env[CONTEXT_ENV_VAR]).read_bytes())
    ws = RunWorkspace(ctx.env[ENV_WORKSPACE])
    n_segments = int(ctx.env[ENV_SEGMENTS])
    key = ctx.partition
    asset = ctx.asset
    logs = [f"step {ctx.step_key} attempt {ctx.attempt} starting on {ctx.backend_id}"]

    if asset == ASSET_NODES:
        rows, count = _compute_nodes(ws, key, n_segments, logs)
    elif asset == ASSET_EDGES:
        rows, count = _compute_edges(ws, ctx, key, logs)
    elif asset == ASSET_GRAPH:
        rows, count = _compute_graph(ws, key, logs)
    elif asset == ASSET_GRAPH_AGGR:
        rows, count = _compute_graph_aggr(ws, key, logs)
    else:
        raise ValueError(f"unknown asset {asset!r}")

    relpath = str(ws.asset_output(asset, key).relative_to(ws.root))
    logs.append(f"{asset} produced {count} rows")
    return WorkerResult(
        asset=asset,
        row_count=count,
        output_relpath=relpath,
        output_bytes=rows,
        log_lines=logs,
    )


def _jsonl(dicts) -> bytes:
    lines = [json.dumps(d, sort_keys=True) for d in dicts]
    return ("\n".join(lines) + "\n").encode("utf-8") if lines else b""


def _compute_nodes(
    ws: RunWorkspace, key: PartitionKey, n_segments: int, logs: list[str]
) -> tuple[bytes, int]:
    from .crawl import StageDiagnostics

    diag = StageDiagnostics()
    seeds = nodes_only(ws.read_raw_seeds(), diag)
    mine = [s for s in seeds if assign_domain_segment(s.host, n_segments) == key.domain_segment]
    if diag.dropped:
        logs.append(f"dropped {diag.dropped} unusable seed urls")
    return _jsonl(s.as_dict() for s in mine), len(mine)


def _read_seed_nodes(ws: RunWorkspace, key: PartitionKey) -> list[SeedNode]:
    path = ws.asset_output(ASSET_NODES, key)
    seeds = []
    for line in path.read_text(encoding="utf-8").splitlines():
        if line:
            doc = json.loads(line)
            seeds.append(SeedNode(normalized_url=doc["normalized_url"], host=doc["host"]))
    return seeds


def _compute_edges(
    ws: RunWorkspace, ctx: StepContext, key: PartitionKey, logs: list[str]
) -> tuple[bytes, int]:
    from .crawl import StageDiagnostics

    seeds = _read_seed_nodes(ws, key)
    records = [r for r in ws.read_records() if r.fetched_at == key.time_id]
    diag = StageDiagnostics()
    edges = sorted(extract_edges(records, seeds, diag))
    if diag.dropped:
        logs.append(f"skipped {diag.dropped} malformed or offsite references")
    return _jsonl(e.as_dict() for e in edges), len(edges)


def _read_page_edges(ws: RunWorkspace, key: PartitionKey):
    from .crawl import PageEdge

    path = ws.asset_output(ASSET_EDGES, key)
    edges = []
    for line in path.read_text(encoding="utf-8").splitlines():
        if line:
            doc = json.loads(line)
            edges.append(
                PageEdge(
                    src_url=doc["src_url"],
                    dst_url=doc["dst_url"],
                    anchor_text=doc.get("anchor_text", ""),
                )
            )
    return edges


def _compute_graph(ws: RunWorkspace, key: PartitionKey, logs: list[str]) -> tuple[bytes, int]:
    nodes = _read_seed_nodes(ws, key)
    edges = _read_page_edges(ws, key)
    graph = build_graph(nodes, edges)
    return _jsonl(e.as_dict() for e in graph.edges), len(graph.edges)


def _compute_graph_aggr(ws: RunWorkspace, key: PartitionKey, logs: list[str]) -> tuple[bytes, int]:
    path = ws.asset_output(ASSET_GRAPH, key)
    graph_edges = []
    for line in path.read_text(encoding="utf-8").splitlines():
        if line:
            doc = json.loads(line)
            graph_edges.append(
                GraphEdge(
                    src_url=doc["src_url"],
                    dst_url=doc["dst_url"],
                    multiplicity=int(doc["multiplicity"]),
                )
            )
    graph = PageGraph(nodes=(), edges=tuple(graph_edges))
    domain_edges = aggregate_domains(graph)
    return _jsonl(e.as_dict() for e in domain_edges), len(domain_edges)


def webgraph_asset_defs(
    partitioning: PartitionSpec,
    hints: dict[str, ResourceHints] | None = None,
    backend_hints: dict[str, str] | None = None,
    tags: dict[str, dict[str, str]] | None = None,
) -> list[AssetDef]:
    """The four reference assets wired in dependency order."""
    hints = hints or {}
    backend_hints = backend_hints or {}
    tags = tags or {}
    deps = {
        ASSET_NODES: (),
        ASSET_EDGES: (ASSET_NODES,),
        ASSET_GRAPH: (ASSET_NODES, ASSET_EDGES),
        ASSET_GRAPH_AGGR: (ASSET_GRAPH,),
    }
    return [
        AssetDef(
            name=name,
            deps=deps[name],
            partitioning=partitioning,
            backend_hint=backend_hints.get(name),
            tags=tags.get(name, {}),
            resource_hints=hints.get(name, ResourceHints()),
        )
        for name in REFERENCE_ASSETS
    ]


def prepare_workspace(ws: RunWorkspace, corpus_seed: int, n_hosts: int,
                      pages_per_host: int, time_ids: list[str]) -> Corpus:
    corpus = generate_corpus(corpus_seed, n_hosts, pages_per_host, list(time_ids))
    ws.write_corpus(corpus)
    return corpus
