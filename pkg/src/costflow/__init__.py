"""costflow: cost-aware orchestration of partitioned asset pipelines across
pluggable execution backends, with per-step telemetry and cost accounting."""

__version__ = "0.1.0"

from .backends import (
    BackendDescriptor,
    BackendRegistry,
    SimKnobs,
    SimProfile,
    StepSpec,
    effective_duration,
    effective_failure_prob,
)
from .costs import (
    CostBreakdown,
    RateCard,
    RunCostReport,
    aggregate_run,
    comparison_metrics,
    compose_breakdown,
    compute_step_cost,
)
from .engine import RetryPolicy, RunRecord, execute_run, plan_run, transition
from .factory import PolicyRule, SelectionPolicy, estimate_step, select_backend
from .graph import (
    AssetDef,
    AssetGraph,
    PartitionKey,
    PartitionSpec,
    expand_partitions,
    ready_steps,
    topo_order,
    validate_graph,
)
from .protocol import (
    StepContext,
    StepEvent,
    check_liveness,
    decode_context,
    encode_context,
    encode_event,
    parse_event,
    read_events,
)

__all__ = [
    "AssetDef",
    "AssetGraph",
    "BackendDescriptor",
    "BackendRegistry",
    "CostBreakdown",
    "PartitionKey",
    "PartitionSpec",
    "PolicyRule",
    "RateCard",
    "RetryPolicy",
    "RunCostReport",
    "RunRecord",
    "SelectionPolicy",
    "SimKnobs",
    "SimProfile",
    "StepContext",
    "StepEvent",
    "StepSpec",
    "aggregate_run",
    "check_liveness",
    "comparison_metrics",
    "compose_breakdown",
    "compute_step_cost",
    "decode_context",
    "effective_duration",
    "effective_failure_prob",
    "encode_context",
    "encode_event",
    "estimate_step",
    "execute_run",
    "expand_partitions",
    "parse_event",
    "plan_run",
    "read_events",
    "ready_steps",
    "select_backend",
    "topo_order",
    "transition",
    "validate_graph",
]
