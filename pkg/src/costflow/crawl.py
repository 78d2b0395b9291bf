"""The reference web-graph workload over a deterministic synthetic corpus.

Four stages: seed preprocessing, hyperlink extraction, page-graph join, and
domain-level aggregation.  All stages are pure batch functions; partitions
can run concurrently with no shared state.

URL normalization is frozen: lowercase host, strip scheme/port/query/
fragment, collapse duplicate slashes, strip the trailing slash.  A "domain"
is the host string as-is; there is no public-suffix logic.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from random import Random
from urllib.parse import urljoin, urlsplit


@dataclass(frozen=True)
class CrawlRecord:
    url: str
    fetched_at: str  # time partition id
    body: str

    def as_dict(self) -> dict:
        return {"url": self.url, "fetched_at": self.fetched_at, "body": self.body}


@dataclass(frozen=True, order=True)
class SeedNode:
    normalized_url: str
    host: str

    def as_dict(self) -> dict:
        return {"normalized_url": self.normalized_url, "host": self.host}


@dataclass(frozen=True, order=True)
class PageEdge:
    src_url: str
    dst_url: str
    anchor_text: str = ""

    def as_dict(self) -> dict:
        return {"src_url": self.src_url, "dst_url": self.dst_url, "anchor_text": self.anchor_text}


@dataclass(frozen=True, order=True)
class GraphEdge:
    """Deduplicated page-level edge with its multiplicity."""

    src_url: str
    dst_url: str
    multiplicity: int

    def as_dict(self) -> dict:
        return {"src_url": self.src_url, "dst_url": self.dst_url, "multiplicity": self.multiplicity}


@dataclass(frozen=True)
class PageGraph:
    nodes: tuple[SeedNode, ...]
    edges: tuple[GraphEdge, ...]


@dataclass(frozen=True, order=True)
class DomainEdge:
    src_domain: str
    dst_domain: str
    weight: int

    def as_dict(self) -> dict:
        return {"src_domain": self.src_domain, "dst_domain": self.dst_domain, "weight": self.weight}


_HOST_RE = re.compile(r"^[a-z0-9]([a-z0-9.-]*[a-z0-9])?$")


def normalize_url(raw: str) -> str | None:
    """Canonical "host/path" form, or None when the URL is unusable."""
    s = raw.strip()
    if not s:
        return None
    if "://" not in s:
        if s.startswith(("mailto:", "javascript:", "tel:", "data:")):
            return None
        s = "http://" + s
    try:
        parts = urlsplit(s)
    except ValueError:
        return None
    if parts.scheme.lower() not in ("http", "https"):
        return None
    host = (parts.hostname or "").lower()
    if not host or "." not in host or not _HOST_RE.match(host):
        return None
    path = re.sub(r"/{2,}", "/", parts.path)
    path = path.rstrip("/")
    return host + path


def host_of(normalized_url: str) -> str:
    return normalized_url.split("/", 1)[0]


@dataclass
class StageDiagnostics:
    """Non-fatal drop counters collected by a stage."""

    dropped: int = 0
    reasons: list[str] = field(default_factory=list)

    def drop(self, reason: str) -> None:
        self.dropped += 1
        self.reasons.append(reason)


def nodes_only(
    raw_seeds: list[str], diagnostics: StageDiagnostics | None = None
) -> list[SeedNode]:
    """Normalize, deduplicate, and sort the raw seed list.

    Invalid URLs are dropped with a diagnostic count, never fatally.
    """
    diag = diagnostics if diagnostics is not None else StageDiagnostics()
    seen: set[str] = set()
    seeds: list[SeedNode] = []
    for raw in raw_seeds:
        norm = normalize_url(raw)
        if norm is None:
            diag.drop(f"unparseable seed: {raw!r}")
            continue
        if norm in seen:
            continue
        seen.add(norm)
        seeds.append(SeedNode(normalized_url=norm, host=host_of(norm)))
    seeds.sort(key=lambda s: s.normalized_url)
    return seeds


# Minimal anchor scanner; the corpus generator only emits this subset, a
# full markup parser buys nothing here.
_ANCHOR_RE = re.compile(
    r"<a\s[^>]*?href\s*=\s*(\"(?P<dq>[^\"]*)\"|'(?P<sq>[^']*)'|(?P<bare>[^\s>]+))[^>]*>"
    r"(?P<text>.*?)</a>",
    re.IGNORECASE | re.DOTALL,
)


def extract_anchors(body: str) -> list[tuple[str, str]]:
    """(href, anchor text) pairs in document order."""
    out = []
    for m in _ANCHOR_RE.finditer(body):
        href = m.group("dq") or m.group("sq") or m.group("bare") or ""
        text = re.sub(r"\s+", " ", m.group("text")).strip()
        out.append((href, text))
    return out


def extract_edges(
    records: list[CrawlRecord],
    seeds: list[SeedNode],
    diagnostics: StageDiagnostics | None = None,
) -> list[PageEdge]:
    """Resolve every anchor on seed-hosted pages into a page edge.

    Relative hrefs resolve against the record url; records hosted outside
    the seed set are ignored; malformed hrefs are skipped with diagnostics.
    """
    diag = diagnostics if diagnostics is not None else StageDiagnostics()
    seed_hosts = {s.host for s in seeds}
    edges: list[PageEdge] = []
    for rec in records:
        src_norm = normalize_url(rec.url)
        if src_norm is None:
            diag.drop(f"record url unparseable: {rec.url!r}")
            continue
        if host_of(src_norm) not in seed_hosts:
            continue
        for href, text in extract_anchors(rec.body):
            href = href.strip()
            if not href:
                diag.drop("empty href")
                continue
            try:
                absolute = urljoin(rec.url, href)
            except ValueError:
                diag.drop(f"unresolvable href: {href!r}")
                continue
            dst_norm = normalize_url(absolute)
            if dst_norm is None:
                diag.drop(f"malformed href: {href!r}")
                continue
            edges.append(PageEdge(src_url=src_norm, dst_url=dst_norm, anchor_text=text))
    return edges


def build_graph(nodes: list[SeedNode], edges: list[PageEdge]) -> PageGraph:
    """Join: keep seed-hosted edges, drop exact self-loops, dedup with
    multiplicity."""
    seed_hosts = {s.host for s in nodes}
    counts: dict[tuple[str, str], int] = {}
    for e in edges:
        if host_of(e.src_url) not in seed_hosts:
            continue
        if e.src_url == e.dst_url:
            continue
        pair = (e.src_url, e.dst_url)
        counts[pair] = counts.get(pair, 0) + 1
    graph_edges = tuple(
        GraphEdge(src, dst, mult) for (src, dst), mult in sorted(counts.items())
    )
    return PageGraph(nodes=tuple(sorted(nodes)), edges=graph_edges)


def aggregate_domains(graph: PageGraph) -> list[DomainEdge]:
    """Host-to-host rollup; intra-domain edges dropped; weights preserve the
    underlying page-edge counts."""
    weights: dict[tuple[str, str], int] = {}
    for e in graph.edges:
        src_d, dst_d = host_of(e.src_url), host_of(e.dst_url)
        if src_d == dst_d:
            continue
        weights[(src_d, dst_d)] = weights.get((src_d, dst_d), 0) + e.multiplicity
    return [DomainEdge(s, d, w) for (s, d), w in sorted(weights.items())]


def assign_domain_segment(host: str, n_segments: int) -> int:
    """Stable bucket: 64-bit FNV-1a of the host, mod segment count.

    Fixed algorithm so partitions are portable across processes and runs.
    """
    if n_segments < 1:
        raise ValueError("n_segments must be >= 1")
    h = 0xCBF29CE484222325
    for byte in host.encode("utf-8"):
        h ^= byte
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h % n_segments


_WORDS = (
    "alder", "basalt", "cedar", "delta", "ember", "fjord", "garnet", "harbor",
    "iris", "juniper", "krill", "lumen", "maple", "nickel", "onyx", "pike",
    "quartz", "rowan", "slate", "tarn", "umber", "vesper", "willow", "yarrow",
)
_TLDS = ("com", "net", "org", "io")


@dataclass(frozen=True)
class Corpus:
    records: tuple[CrawlRecord, ...]
    raw_seeds: tuple[str, ...]

    def records_jsonl(self) -> str:
        return "\n".join(json.dumps(r.as_dict(), sort_keys=True) for r in self.records) + "\n"


def generate_corpus(
    seed: int, n_hosts: int, pages_per_host: int, time_ids: list[str]
) -> Corpus:
    """Deterministic synthetic crawl: same seed, byte-identical corpus.

    Besides the seed hosts, a few "offsite" hosts emit records too; they are
    never in the seed list, so downstream filtering has something real to
    filter.  The raw seed list carries deliberate noise (scheme case,
    trailing slashes, duplicates, junk entries).
    """
    if n_hosts < 1 or pages_per_host < 1 or not time_ids:
        raise ValueError("corpus sizes must be >= 1 and time_ids nonempty")
    rng = Random(seed)
    hosts = [
        f"{_WORDS[i % len(_WORDS)]}{i:02d}.{_TLDS[i % len(_TLDS)]}" for i in range(n_hosts)
    ]
    n_offsite = n_hosts // 5  # degenerate corpora stay seed-only
    offsite = [f"offsite{i:02d}.example" for i in range(n_offsite)]
    all_hosts = hosts + offsite

    def page_url(host: str, j: int) -> str:
        return f"http://{host}/p{j}"

    records: list[CrawlRecord] = []
    for host in all_hosts:
        for j in range(pages_per_host):
            n_links = rng.randint(0, 6)
            parts: list[str] = [f"<html><body><h1>{host} page {j}</h1>"]
            for _ in range(n_links):
                roll = rng.random()
                text = rng.choice(_WORDS)
                if roll < 0.05:
                    href = rng.choice(("htp:/broken", "mailto:x@y.z", "javascript:void(0)", ""))
                elif roll < 0.30:
                    href = f"/p{rng.randrange(pages_per_host)}"
                else:
                    target = rng.choice(all_hosts)
                    href = page_url(target, rng.randrange(pages_per_host))
                parts.append(f'<p><a href="{href}">{text}</a></p>')
            parts.append("</body></html>")
            records.append(
                CrawlRecord(
                    url=page_url(host, j),
                    fetched_at=rng.choice(time_ids),
                    body="".join(parts),
                )
            )

    raw_seeds: list[str] = []
    for host in hosts:
        url = f"http://{host}/"
        roll = rng.random()
        if roll < 0.15:
            url = f"HTTP://{host.upper()}/"
        elif roll < 0.30:
            url = f"https://{host}"
        raw_seeds.append(url)
        if rng.random() < 0.2:
            raw_seeds.append(f"http://{host}")  # duplicate after normalization
    junk_count = max(1, n_hosts // 6)
    for i in range(junk_count):
        raw_seeds.append(rng.choice(("not a url", "///", "mailto:team@site", "::::")))
    rng.shuffle(raw_seeds)
    return Corpus(records=tuple(records), raw_seeds=tuple(raw_seeds))
