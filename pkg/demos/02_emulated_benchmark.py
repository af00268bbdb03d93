"""Hermetic benchmark: the four canonical load levels against both calibrated
emulation profiles, executed on the simulated clock (seconds of wall time for
minutes of simulated load), then summarized.

Run:  python demos/02_emulated_benchmark.py
"""

import time

from posbench import (
    DEFAULT_MIX,
    IDENTITY_SHAPE,
    EmulatedTarget,
    aggregate,
    canonical_scenarios,
    desk_scale,
    execute_campaign,
    summarize,
)
from posbench.target import PROFILES
from posbench.workload import default_catalog

SEED = 7

catalog = default_catalog()
scenarios = [desk_scale(s) for s in canonical_scenarios()]  # 30 s steady, 1 rep

print("desk-scale campaign: 4 levels x 2 profiles, simulated clock")
print(f"levels: {[(s.name, s.concurrent_users) for s in scenarios]}\n")

rows = {}
for label in ("paper-gcp", "paper-azure"):
    target = EmulatedTarget(label, PROFILES[label])
    started = time.perf_counter()
    campaign = execute_campaign(scenarios, catalog, DEFAULT_MIX, IDENTITY_SHAPE, target, seed=SEED)
    wall = time.perf_counter() - started
    simulated = sum(run.scenario.ramp_up_s + run.scenario.steady_s for run in campaign.runs)
    print(f"{label}: {len(campaign.runs)} runs, {simulated:.0f} s simulated in {wall:.1f} s wall")
    for run in campaign.runs:
        rows[(label, run.scenario.name)] = aggregate([summarize(run)])

print(f"\n{'level':<10} {'profile':<12} {'p50 ms':>9} {'p95 ms':>9} {'p99 ms':>9} {'TPS':>8} {'err %':>6}")
for scenario in scenarios:
    for label in ("paper-gcp", "paper-azure"):
        agg = rows[(label, scenario.name)]
        m = agg.means
        print(
            f"{scenario.name:<10} {label:<12} {m['p50_ms']:>9.2f} {m['p95_ms']:>9.2f} "
            f"{m['p99_ms']:>9.2f} {m['tps']:>8.2f} {m['error_rate_pct']:>6.2f}"
        )

gcp_p95 = rows[("paper-gcp", "baseline")].means["p95_ms"]
azure_p95 = rows[("paper-azure", "baseline")].means["p95_ms"]
delta = 100 * (azure_p95 - gcp_p95) / azure_p95
print(f"\nbaseline p95 delta: the faster profile undercuts the slower by {delta:.1f}%")
print("note the azure-like profile's p95 blow-up from baseline to stress — the")
print("low-capacity saturation knee at work, versus the near-flat serverless-like profile.")
