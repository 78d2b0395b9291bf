from __future__ import annotations

import random
from decimal import Decimal

import pytest

from costflow.backends import (
    BackendDescriptor,
    BackendRegistry,
    DEFAULT_PROFILES,
    SimProfile,
    SimulatedBackend,
    StepSpec,
    default_registry,
)
from costflow.costs import RateCard
from costflow.errors import EmptyRegistry, UnknownBackend
from costflow.factory import PolicyRule, SelectionPolicy, estimate_step, select_backend
from costflow.graph import AssetDef, PartitionKey, ResourceHints

KEY = PartitionKey("CC-MAIN-2023-40", 0)


def make_registry(cards: dict[str, tuple], profiles: dict[str, SimProfile | None]):
    registry = BackendRegistry()
    for backend_id, rates in cards.items():
        desc = BackendDescriptor(
            backend_id, backend_id, RateCard(*[str(r) for r in rates]), profiles.get(backend_id)
        )
        registry.register(SimulatedBackend(desc))
    return registry


def make_asset(hint=None, base=10.0, nodes=1, tags=None):
    return AssetDef(
        name="edges",
        backend_hint=hint,
        tags=tags or {},
        resource_hints=ResourceHints(est_base_duration_hours=base, node_count=nodes),
    )


class TestEstimateStep:
    def test_zero_base_zero_bootstrap_zero_cost(self):
        desc = BackendDescriptor("b", "b", RateCard("1.0", "1.0", "1.0"), SimProfile())
        est = estimate_step(desc, StepSpec("a", KEY, 0.0))
        assert est.est_duration_hours == 0.0
        assert est.est_cost.total_cents == 0

    def test_emr_default_profile_hand_computed(self):
        desc = BackendDescriptor(
            "emr_sim", "emr", RateCard("1.0", "0.2", "0.05"), DEFAULT_PROFILES["emr_sim"]
        )
        est = estimate_step(desc, StepSpec("edges", KEY, 10.0, node_count=1))
        assert est.est_duration_hours == pytest.approx(10.15)
        # component-level cent rounding: 10.15 + 2.03 + round(0.5075)=0.51
        assert est.est_cost.compute_usd == "10.15"
        assert est.est_cost.surcharge_usd == "2.03"
        assert est.est_cost.storage_usd == "0.51"
        assert est.est_cost.total_usd == "12.69"

    def test_platform_shape_dbr_faster_but_costlier(self):
        registry = default_registry()
        spec = StepSpec("edges", KEY, 10.0, node_count=1)
        emr = estimate_step(registry.descriptor("emr_sim"), spec)
        dbr = estimate_step(registry.descriptor("dbr_sim"), spec)
        assert dbr.est_duration_hours < emr.est_duration_hours
        assert dbr.est_cost.total_cents > emr.est_cost.total_cents


class TestSelectBackend:
    def test_hint_overrides_everything(self):
        registry = default_registry()
        policy = SelectionPolicy(
            default_backend="local",
            cost_weight=1.0,
            rules=(PolicyRule(backend_id="emr_sim"),),  # matches everything
        )
        asset = make_asset(hint="dbr_sim")
        assert select_backend(asset, KEY, policy, registry) == "dbr_sim"

    def test_first_matching_rule_wins(self):
        registry = default_registry()
        policy = SelectionPolicy(
            default_backend="local",
            rules=(
                PolicyRule(backend_id="dbr_sim", tag_equals={"kind": "join"}),
                PolicyRule(backend_id="emr_sim", time_id_prefix="CC-MAIN"),
            ),
        )
        joins = make_asset(tags={"kind": "join"})
        other = make_asset(tags={"kind": "extract"})
        assert select_backend(joins, KEY, policy, registry) == "dbr_sim"
        assert select_backend(other, KEY, policy, registry) == "emr_sim"

    def test_cost_weight_one_minimizes_cost(self):
        registry = make_registry(
            {"cheap": (1, 0, 0), "fast": (50, 0, 0)},
            {"cheap": SimProfile(speed_factor=1.0), "fast": SimProfile(speed_factor=4.0)},
        )
        policy = SelectionPolicy(default_backend="cheap", cost_weight=1.0)
        assert select_backend(make_asset(), KEY, policy, registry) == "cheap"

    def test_cost_weight_zero_minimizes_duration(self):
        registry = make_registry(
            {"cheap": (1, 0, 0), "fast": (50, 0, 0)},
            {"cheap": SimProfile(speed_factor=1.0), "fast": SimProfile(speed_factor=4.0)},
        )
        policy = SelectionPolicy(default_backend="cheap", cost_weight=0.0)
        assert select_backend(make_asset(), KEY, policy, registry) == "fast"

    def test_tie_breaks_by_ascending_backend_id(self):
        registry = make_registry(
            {"bbb": (1, 0, 0), "aaa": (1, 0, 0)},
            {"bbb": SimProfile(), "aaa": SimProfile()},
        )
        policy = SelectionPolicy(default_backend="aaa", cost_weight=0.7)
        assert select_backend(make_asset(), KEY, policy, registry) == "aaa"

    def test_empty_registry(self):
        with pytest.raises(EmptyRegistry):
            select_backend(
                make_asset(), KEY, SelectionPolicy(default_backend="x"), BackendRegistry()
            )

    def test_hint_must_exist(self):
        registry = default_registry()
        with pytest.raises(UnknownBackend):
            select_backend(
                make_asset(hint="ghost"), KEY, SelectionPolicy(default_backend="local"), registry
            )


def _random_registry(rng: random.Random):
    ids = rng.sample(["alpha", "beta", "gamma", "delta", "epsilon"], k=rng.randint(2, 5))
    cards = {}
    profiles = {}
    for backend_id in ids:
        cards[backend_id] = (
            round(rng.uniform(0.1, 90), 2),
            round(rng.uniform(0, 40), 2),
            round(rng.uniform(0, 5), 2),
        )
        profiles[backend_id] = SimProfile(
            speed_factor=round(rng.uniform(0.5, 3.0), 3),
            bootstrap_delay_hours=round(rng.uniform(0, 0.3), 3),
        )
    return make_registry(cards, profiles), cards, profiles


def _brute_force_pick(registry, asset, minimize: str) -> str:
    from costflow.backends import effective_duration
    from costflow.costs import raw_step_cost

    best = None
    for backend_id in registry.ids():
        desc = registry.descriptor(backend_id)
        dur = (
            effective_duration(asset.resource_hints.est_base_duration_hours, desc.profile)
            + desc.profile.bootstrap_delay_hours
        )
        cost = raw_step_cost(dur, asset.resource_hints.node_count, desc.rate_card)
        key = cost if minimize == "cost" else Decimal(str(dur))
        if best is None or key < best[0] or (key == best[0] and backend_id < best[1]):
            best = (key, backend_id)
    return best[1]


class TestSelectionProperties:
    def test_hint_override_on_100_random_policies(self):
        rng = random.Random(2024)
        for _ in range(100):
            registry, _, _ = _random_registry(rng)
            hint = rng.choice(registry.ids())
            policy = SelectionPolicy(
                default_backend=rng.choice(registry.ids()),
                cost_weight=rng.random(),
                rules=tuple(
                    PolicyRule(backend_id=rng.choice(registry.ids()))
                    for _ in range(rng.randint(0, 3))
                ),
            )
            asset = make_asset(hint=hint, base=rng.uniform(0, 20), nodes=rng.randint(1, 8))
            assert select_backend(asset, KEY, policy, registry) == hint

    def test_extreme_weights_match_bruteforce(self):
        rng = random.Random(99)
        for _ in range(100):
            registry, _, _ = _random_registry(rng)
            asset = make_asset(base=rng.uniform(0.1, 20), nodes=rng.randint(1, 8))
            min_cost = select_backend(
                asset, KEY, SelectionPolicy(default_backend=registry.ids()[0], cost_weight=1.0),
                registry,
            )
            min_dur = select_backend(
                asset, KEY, SelectionPolicy(default_backend=registry.ids()[0], cost_weight=0.0),
                registry,
            )
            assert min_cost == _brute_force_pick(registry, asset, "cost")
            assert min_dur == _brute_force_pick(registry, asset, "duration")

    def test_uniform_cost_scaling_never_changes_selection(self):
        rng = random.Random(7)
        for _ in range(100):
            registry, cards, profiles = _random_registry(rng)
            factor = rng.choice([Decimal("0.001"), Decimal("3"), Decimal("1000"), Decimal("7.77")])
            scaled = make_registry(
                {
                    backend_id: tuple(Decimal(str(r)) * factor for r in rates)
                    for backend_id, rates in cards.items()
                },
                profiles,
            )
            asset = make_asset(base=rng.uniform(0, 15), nodes=rng.randint(1, 4))
            policy = SelectionPolicy(
                default_backend=registry.ids()[0], cost_weight=rng.random()
            )
            assert select_backend(asset, KEY, policy, registry) == select_backend(
                asset, KEY, policy, scaled
            )
