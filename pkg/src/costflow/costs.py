"""Per-step cost breakdowns and run-level aggregation.

Money is integer cents internally; each component is rounded half-up to
cents before summation so that recorded production figures reproduce
exactly.  "Storage" generalizes block-storage line items (EBS-style) and
"compute" the instance line items (EC2-style), keeping rate cards
platform-agnostic.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal

from .errors import EmptyRun, NegativeComponent, NegativeDuration, ZeroDenominator

_CENT = Decimal("0.01")


def usd_to_cents(value) -> int:
    """Parse a dollar amount (str/int/float/Decimal) to cents, half-up."""
    d = value if isinstance(value, Decimal) else Decimal(str(value))
    return int(d.quantize(_CENT, rounding=ROUND_HALF_UP) * 100)


def cents_to_usd(cents: int) -> str:
    sign = "-" if cents < 0 else ""
    cents = abs(cents)
    return f"{sign}{cents // 100}.{cents % 100:02d}"


@dataclass(frozen=True)
class RateCard:
    """Per-node-hour prices. All rates are nonnegative USD decimals."""

    instance_rate_per_node_hour: Decimal
    surcharge_rate_per_node_hour: Decimal
    storage_rate_per_node_hour: Decimal

    def __post_init__(self) -> None:
        for name in (
            "instance_rate_per_node_hour",
            "surcharge_rate_per_node_hour",
            "storage_rate_per_node_hour",
        ):
            rate = getattr(self, name)
            if not isinstance(rate, Decimal):
                object.__setattr__(self, name, Decimal(str(rate)))
                rate = getattr(self, name)
            if not rate.is_finite() or rate < 0:
                raise ValueError(f"{name} must be finite and >= 0")

    @classmethod
    def zero(cls) -> "RateCard":
        return cls(Decimal(0), Decimal(0), Decimal(0))


@dataclass(frozen=True)
class CostBreakdown:
    compute_cents: int
    storage_cents: int
    surcharge_cents: int

    def __post_init__(self) -> None:
        if min(self.compute_cents, self.storage_cents, self.surcharge_cents) < 0:
            raise NegativeComponent("cost components must be >= 0")

    @property
    def total_cents(self) -> int:
        return self.compute_cents + self.storage_cents + self.surcharge_cents

    @property
    def compute_usd(self) -> str:
        return cents_to_usd(self.compute_cents)

    @property
    def storage_usd(self) -> str:
        return cents_to_usd(self.storage_cents)

    @property
    def surcharge_usd(self) -> str:
        return cents_to_usd(self.surcharge_cents)

    @property
    def total_usd(self) -> str:
        return cents_to_usd(self.total_cents)

    def as_dict(self) -> dict[str, str]:
        return {
            "compute_usd": self.compute_usd,
            "storage_usd": self.storage_usd,
            "surcharge_usd": self.surcharge_usd,
            "total_usd": self.total_usd,
        }

    @classmethod
    def zero(cls) -> "CostBreakdown":
        return cls(0, 0, 0)

    def __add__(self, other: "CostBreakdown") -> "CostBreakdown":
        return CostBreakdown(
            self.compute_cents + other.compute_cents,
            self.storage_cents + other.storage_cents,
            self.surcharge_cents + other.surcharge_cents,
        )


def raw_step_cost(duration_hours: float, node_count: int, card: RateCard) -> Decimal:
    """Unrounded total in USD. Used where exactness matters more than cents
    (backend selection scores); user-facing costs go through
    :func:`compute_step_cost`."""
    node_hours = Decimal(str(duration_hours)) * node_count
    return node_hours * (
        card.instance_rate_per_node_hour
        + card.surcharge_rate_per_node_hour
        + card.storage_rate_per_node_hour
    )


def compute_step_cost(duration_hours: float, node_count: int, card: RateCard) -> CostBreakdown:
    """compute/storage/surcharge = duration x nodes x rate, each rounded
    half-up to cents before the total is formed."""
    if duration_hours < 0:
        raise NegativeDuration(f"duration must be >= 0, got {duration_hours}")
    if node_count < 1:
        raise ValueError("node_count must be >= 1")
    node_hours = Decimal(str(duration_hours)) * node_count
    return CostBreakdown(
        compute_cents=usd_to_cents(node_hours * card.instance_rate_per_node_hour),
        storage_cents=usd_to_cents(node_hours * card.storage_rate_per_node_hour),
        surcharge_cents=usd_to_cents(node_hours * card.surcharge_rate_per_node_hour),
    )


def compose_breakdown(surcharge, storage, compute) -> CostBreakdown:
    """Build a breakdown from already-priced USD components."""
    parts = [usd_to_cents(surcharge), usd_to_cents(storage), usd_to_cents(compute)]
    if min(parts) < 0:
        raise NegativeComponent("cost components must be >= 0")
    return CostBreakdown(compute_cents=parts[2], storage_cents=parts[1], surcharge_cents=parts[0])


@dataclass(frozen=True)
class CostRow:
    """One billed step attempt inside a run report."""

    step_key: str
    backend_id: str
    duration_hours: float
    cost: CostBreakdown
    attempt: int = 1

    @property
    def asset(self) -> str:
        return self.step_key.split("/", 1)[0]


@dataclass(frozen=True)
class RunCostReport:
    run_id: str
    rows: tuple[CostRow, ...]

    @property
    def aggregated_total_cents(self) -> int:
        return sum(r.cost.total_cents for r in self.rows)

    @property
    def aggregated_surcharge_cents(self) -> int:
        return sum(r.cost.surcharge_cents for r in self.rows)

    @property
    def aggregated_total_usd(self) -> str:
        return cents_to_usd(self.aggregated_total_cents)

    @property
    def aggregated_surcharge_usd(self) -> str:
        return cents_to_usd(self.aggregated_surcharge_cents)

    @property
    def total_duration_hours(self) -> float:
        return sum(r.duration_hours for r in self.rows)


@dataclass(frozen=True)
class RunAggregate:
    aggregated_total_cents: int
    aggregated_surcharge_cents: int

    @property
    def aggregated_total_usd(self) -> str:
        return cents_to_usd(self.aggregated_total_cents)

    @property
    def aggregated_surcharge_usd(self) -> str:
        return cents_to_usd(self.aggregated_surcharge_cents)


def aggregate_run(rows: list[CostBreakdown]) -> RunAggregate:
    """Exact cent-precision column sums."""
    if not rows:
        raise EmptyRun("cannot aggregate an empty run")
    return RunAggregate(
        aggregated_total_cents=sum(r.total_cents for r in rows),
        aggregated_surcharge_cents=sum(r.surcharge_cents for r in rows),
    )


@dataclass(frozen=True)
class ComparisonMetrics:
    cost_reduction_pct: float
    duration_delta_pct: float


def comparison_metrics(run_a: RunCostReport, run_b: RunCostReport) -> ComparisonMetrics:
    """How much cheaper/faster run_a is relative to run_b, in percent."""
    if not run_a.rows or not run_b.rows:
        raise EmptyRun("comparison requires nonempty reports")
    total_a = run_a.aggregated_total_cents
    total_b = run_b.aggregated_total_cents
    dur_a = run_a.total_duration_hours
    dur_b = run_b.total_duration_hours
    if total_b == 0 or dur_b == 0:
        raise ZeroDenominator("reference run has zero total cost or duration")
    return ComparisonMetrics(
        cost_reduction_pct=(total_b - total_a) / total_b * 100.0,
        duration_delta_pct=(dur_b - dur_a) / dur_b * 100.0,
    )
