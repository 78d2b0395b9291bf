"""Dynamic backend selection: hints, policy rules, then cost/duration scores.

Precedence is strict: an asset's explicit backend hint always wins, then the
first matching policy rule, and only then the weighted score over every
registered backend.  Scores are computed in exact rational arithmetic so
that uniformly rescaling costs can never flip a selection.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from .backends import BackendDescriptor, BackendRegistry, effective_duration
from .clock import hours_to_seconds
from .costs import CostBreakdown, compute_step_cost, raw_step_cost
from .errors import EmptyRegistry, UnknownBackend
from .graph import TAG_MAINTENANCE_HEAVY, AssetDef, PartitionKey
from .backends import StepSpec


@dataclass(frozen=True)
class PolicyRule:
    """Route matching steps to a fixed backend.

    ``tag_equals`` are exact-match requirements on asset tags;
    ``time_id_prefix`` matches the partition's time id by prefix.  All
    present conditions must hold.
    """

    backend_id: str
    tag_equals: dict[str, str] = field(default_factory=dict)
    time_id_prefix: str | None = None

    def matches(self, asset: AssetDef, partition: PartitionKey) -> bool:
        for key, value in self.tag_equals.items():
            if asset.tags.get(key) != value:
                return False
        if self.time_id_prefix is not None and not partition.time_id.startswith(
            self.time_id_prefix
        ):
            return False
        return True


@dataclass(frozen=True)
class SelectionPolicy:
    default_backend: str
    cost_weight: float = 0.5  # 1 = pure cost minimization, 0 = pure duration
    rules: tuple[PolicyRule, ...] = ()

    def __post_init__(self) -> None:
        if not 0.0 <= self.cost_weight <= 1.0:
            raise ValueError("cost_weight must be within [0, 1]")


@dataclass(frozen=True)
class StepEstimate:
    backend_id: str
    est_duration_hours: float
    est_cost: CostBreakdown


def estimate_step(backend: BackendDescriptor, spec: StepSpec) -> StepEstimate:
    """Projected wall time (bootstrap included) and rate-card cost."""
    profile = backend.profile
    duration = (
        effective_duration(
            spec.base_duration_hours, profile, spec.tag_true(TAG_MAINTENANCE_HEAVY)
        )
        + profile.bootstrap_delay_hours
    )
    return StepEstimate(
        backend_id=backend.backend_id,
        est_duration_hours=duration,
        est_cost=compute_step_cost(duration, spec.node_count, backend.rate_card),
    )


def _exact_cost(backend: BackendDescriptor, spec: StepSpec, duration_hours: float) -> Fraction:
    raw = raw_step_cost(duration_hours, spec.node_count, backend.rate_card)
    return Fraction(raw)


def select_backend(
    asset: AssetDef,
    partition: PartitionKey,
    policy: SelectionPolicy,
    registry: BackendRegistry,
) -> str:
    """Pick the backend id for one step.

    Returns the asset hint if set, else the first matching rule's backend,
    else the score-minimal backend where score = cost_weight * cost/max_cost
    + (1 - cost_weight) * duration/max_duration over all candidates; ties
    break by ascending backend id.
    """
    if len(registry) == 0:
        raise EmptyRegistry("no backends registered")
    if asset.backend_hint is not None:
        if asset.backend_hint not in registry.ids():
            raise UnknownBackend(asset.backend_hint)
        return asset.backend_hint
    for rule in policy.rules:
        if rule.matches(asset, partition):
            if rule.backend_id not in registry.ids():
                raise UnknownBackend(rule.backend_id)
            return rule.backend_id

    spec = StepSpec(
        asset=asset.name,
        partition=partition,
        base_duration_hours=asset.resource_hints.est_base_duration_hours,
        node_count=asset.resource_hints.node_count,
        tags=dict(asset.tags),
    )
    candidates: list[tuple[str, Fraction, Fraction]] = []
    for backend_id in registry.ids():
        desc = registry.descriptor(backend_id)
        duration_hours = (
            effective_duration(
                spec.base_duration_hours, desc.profile, spec.tag_true(TAG_MAINTENANCE_HEAVY)
            )
            + desc.profile.bootstrap_delay_hours
        )
        cost = _exact_cost(desc, spec, duration_hours)
        candidates.append((backend_id, cost, Fraction(duration_hours)))

    max_cost = max(c for _, c, _ in candidates)
    max_dur = max(d for _, _, d in candidates)
    weight = Fraction(str(policy.cost_weight))
    best_id: str | None = None
    best_score: Fraction | None = None
    for backend_id, cost, dur in candidates:
        norm_cost = cost / max_cost if max_cost > 0 else Fraction(0)
        norm_dur = dur / max_dur if max_dur > 0 else Fraction(0)
        score = weight * norm_cost + (1 - weight) * norm_dur
        if best_score is None or score < best_score:
            best_id, best_score = backend_id, score
    assert best_id is not None
    return best_id


def hours_estimate_seconds(est: StepEstimate) -> float:
    return hours_to_seconds(est.est_duration_hours)
