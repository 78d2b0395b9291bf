"""Partitioned asset DAGs: definition, validation, and step enumeration.

An asset is a named, materializable pipeline output. Assets are partitioned
along two dimensions (an ordered list of time-window ids and a fixed count
of domain segments) and depend on other assets *at the same partition key*.
Everything here is immutable after validation and safe to share across
concurrent readers.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

from .errors import CycleDetected, DuplicateAsset, UnknownDependency


@dataclass(frozen=True)
class PartitionSpec:
    """Cross product of ordered time-window ids and domain segment buckets."""

    time_ids: tuple[str, ...]
    domain_segments: int

    def __post_init__(self) -> None:
        if not self.time_ids:
            raise ValueError("at least one time partition id is required")
        if any(not t for t in self.time_ids):
            raise ValueError("time partition ids must be nonempty")
        if len(set(self.time_ids)) != len(self.time_ids):
            raise ValueError("time partition ids must be unique")
        if self.domain_segments < 1:
            raise ValueError("domain_segments must be >= 1")


@dataclass(frozen=True, order=True)
class PartitionKey:
    time_id: str
    domain_segment: int

    def label(self) -> str:
        return f"{self.time_id}/{self.domain_segment}"


@dataclass(frozen=True)
class ResourceHints:
    """Sizing hints used for backend estimates; not hard limits."""

    est_base_duration_hours: float = 0.0
    node_count: int = 1
    memory_gb_per_node: float = 4.0

    def __post_init__(self) -> None:
        if self.est_base_duration_hours < 0:
            raise ValueError("est_base_duration_hours must be >= 0")
        if self.node_count < 1:
            raise ValueError("node_count must be >= 1")
        if self.memory_gb_per_node <= 0:
            raise ValueError("memory_gb_per_node must be > 0")


@dataclass(frozen=True)
class AssetDef:
    name: str
    deps: tuple[str, ...] = ()
    partitioning: PartitionSpec | None = None
    backend_hint: str | None = None
    tags: dict[str, str] = field(default_factory=dict)
    resource_hints: ResourceHints = field(default_factory=ResourceHints)

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("asset name must be nonempty")

    def tag_true(self, key: str) -> bool:
        return self.tags.get(key, "").lower() == "true"


# Tags with engine-visible semantics (affect the simulated platforms).
TAG_MAINTENANCE_HEAVY = "maintenance_heavy"
TAG_MEMORY_HEAVY = "memory_heavy"


@dataclass(frozen=True)
class AssetGraph:
    """Validated DAG of assets. Construct via :func:`validate_graph`."""

    assets: dict[str, AssetDef]
    edges: tuple[tuple[str, str], ...]  # (upstream, downstream)

    def downstream_of(self, name: str) -> list[str]:
        return sorted(d for u, d in self.edges if u == name)

    def asset(self, name: str) -> AssetDef:
        return self.assets[name]


def validate_graph(defs: list[AssetDef]) -> AssetGraph:
    """Check uniqueness, dependency resolution, and acyclicity.

    Raises DuplicateAsset, UnknownDependency, or CycleDetected; the cycle
    error carries one concrete cycle path (first node repeated at the end).
    """
    if not defs:
        raise ValueError("asset list must be nonempty")
    assets: dict[str, AssetDef] = {}
    for d in defs:
        if d.name in assets:
            raise DuplicateAsset(d.name)
        assets[d.name] = d
    edges: list[tuple[str, str]] = []
    for d in defs:
        for dep in d.deps:
            if dep not in assets:
                raise UnknownDependency(d.name, dep)
            edges.append((dep, d.name))

    cycle = _find_cycle(assets, edges)
    if cycle is not None:
        raise CycleDetected(cycle)
    return AssetGraph(assets=assets, edges=tuple(edges))


def _find_cycle(assets: dict[str, AssetDef], edges: list[tuple[str, str]]) -> list[str] | None:
    """Iterative DFS; returns one cycle as [a, b, ..., a] or None."""
    out: dict[str, list[str]] = {name: [] for name in assets}
    for u, d in edges:
        out[u].append(d)
    WHITE, GREY, BLACK = 0, 1, 2
    color = {name: WHITE for name in assets}
    parent: dict[str, str] = {}
    for root in sorted(assets):
        if color[root] != WHITE:
            continue
        stack: list[tuple[str, int]] = [(root, 0)]
        color[root] = GREY
        while stack:
            node, idx = stack[-1]
            if idx < len(out[node]):
                stack[-1] = (node, idx + 1)
                nxt = out[node][idx]
                if color[nxt] == GREY:
                    # unwind the grey chain to report the path
                    path = [nxt]
                    cur = node
                    while cur != nxt:
                        path.append(cur)
                        cur = parent[cur]
                    path.append(nxt)
                    path = path[::-1]
                    return path
                if color[nxt] == WHITE:
                    color[nxt] = GREY
                    parent[nxt] = node
                    stack.append((nxt, 0))
            else:
                color[node] = BLACK
                stack.pop()
    return None


def topo_order(graph: AssetGraph) -> list[str]:
    """Dependency-respecting order, ties broken by ascending asset name."""
    indegree = {name: 0 for name in graph.assets}
    out: dict[str, list[str]] = {name: [] for name in graph.assets}
    for u, d in graph.edges:
        indegree[d] += 1
        out[u].append(d)
    ready = [name for name, deg in indegree.items() if deg == 0]
    heapq.heapify(ready)
    order: list[str] = []
    while ready:
        node = heapq.heappop(ready)
        order.append(node)
        for nxt in out[node]:
            indegree[nxt] -= 1
            if indegree[nxt] == 0:
                heapq.heappush(ready, nxt)
    return order


def expand_partitions(asset: AssetDef) -> list[PartitionKey]:
    """Full time x segment cross product, ordered by (time index, segment)."""
    spec = asset.partitioning
    if spec is None:
        raise ValueError(f"asset {asset.name!r} has no partition spec")
    return [
        PartitionKey(time_id=t, domain_segment=s)
        for t in spec.time_ids
        for s in range(spec.domain_segments)
    ]


StepId = tuple[str, PartitionKey]


def ready_steps(graph: AssetGraph, completed: set[StepId]) -> set[StepId]:
    """Steps whose same-key upstream steps are all complete and which are not
    themselves complete."""
    ready: set[StepId] = set()
    for name in graph.assets:
        asset = graph.asset(name)
        for key in expand_partitions(asset):
            step = (name, key)
            if step in completed:
                continue
            if all((dep, key) in completed for dep in asset.deps):
                ready.add(step)
    return ready
