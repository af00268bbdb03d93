"""posbench: a benchmarking harness for cloud-hosted retail POS APIs.

Generates seeded synthetic POS workloads, drives progressive closed-loop load
scenarios against live or emulated endpoints, computes latency/throughput/
reliability metrics, estimates operational cost from measured usage, and
renders tables and figures directly from the measured data.
"""

__version__ = "0.1.0"

from .costs import (
    CostEstimate,
    PricingCatalog,
    UsageRecord,
    compare_costs,
    default_pricing,
    estimate_cost,
    load_pricing,
)
from .engine import (
    CampaignRecord,
    EmulatedTarget,
    HttpTarget,
    LoadScenario,
    Outcome,
    RequestResult,
    RunRecord,
    TargetUnreachable,
    canonical_scenarios,
    classify_outcome,
    desk_scale,
    execute_campaign,
    ramp_schedule,
    run_scenario,
)
from .metrics import (
    AggregateSummary,
    MetricsSummary,
    aggregate,
    error_rate,
    percentile,
    relative_difference,
    summarize,
    throughput,
)
from .target import EmulationProfile, PROFILES, PosService, inject_error, inject_latency, load_profile
from .workload import (
    DEFAULT_MIX,
    IDENTITY_SHAPE,
    OperationCategory,
    OperationSpec,
    TrafficShape,
    WorkloadMix,
    build_request,
    default_catalog,
    load_catalog,
    make_rng,
    sample_operation,
    session_for_user,
    shape_multiplier,
    validate_mix,
)

__all__ = [name for name in dir() if not name.startswith("_")]
