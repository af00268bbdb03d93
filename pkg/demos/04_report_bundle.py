"""Report generation: run a compact two-profile campaign, aggregate it, and
emit the full bundle — five CSV tables, four SVG bar charts, and a manifest —
then prove the figure labels round-trip to the table cells exactly.

Run:  python demos/04_report_bundle.py [out_dir]
"""

import sys
from pathlib import Path

from posbench import (
    DEFAULT_MIX,
    IDENTITY_SHAPE,
    EmulatedTarget,
    LoadScenario,
    UsageRecord,
    aggregate,
    estimate_cost,
    execute_campaign,
    default_pricing,
    summarize,
)
from posbench.report import CostRow, figure_values, table_values, write_bundle
from posbench.target import PROFILES
from posbench.workload import default_catalog

out_dir = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("demo-report")
catalog = default_catalog()
pricing = default_pricing()

# Two repetitions of two compact levels, against both profiles.
scenarios = [
    LoadScenario("baseline", 10, ramp_up_s=10, steady_s=15, repetitions=2, rest_between_runs_s=5),
    LoadScenario("stress", 100, ramp_up_s=10, steady_s=15, repetitions=2, rest_between_runs_s=5),
]

aggregates, cost_rows = [], []
for label in ("gcp", "azure"):
    target = EmulatedTarget(label, PROFILES[f"paper-{label}"])
    campaign = execute_campaign(scenarios, catalog, DEFAULT_MIX, IDENTITY_SHAPE, target, seed=99)
    by_scenario = {}
    for run in campaign.runs:
        by_scenario.setdefault(run.scenario.name, []).append(summarize(run))
    for name, summaries in by_scenario.items():
        agg = aggregate(summaries)
        aggregates.append(agg)
        usage = UsageRecord(label, int(agg.means["total_calls"]), int(agg.means["egress_bytes"]))
        cost_rows.append(CostRow(name, label, usage, estimate_cost(usage, pricing)))

bundle = write_bundle(aggregates, cost_rows, out_dir)
print(f"bundle written under {out_dir}/")
for name, path in {**bundle.tables, **{f"figure:{k}": v for k, v in bundle.figures.items()}}.items():
    print(f"  {name:<16} {path}")
print(f"  manifest         {bundle.manifest}")

print("\np95 table:")
print(bundle.tables["p95_scaling"].read_text())

# The consistency property the bundle guarantees: every number a figure shows
# is the exact string its table holds.
for kind, table in (("p95", "p95_scaling"), ("tps", "throughput"), ("cost", "costs"), ("error", "error_rates")):
    svg = figure_values(bundle.figures[kind])
    csv_cells = table_values(bundle.tables[table])
    assert svg == csv_cells, kind
print("figure labels round-trip to table cells exactly: OK")
