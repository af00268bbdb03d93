"""Cost estimation: measured usage times public per-call / per-GB rates, in
exact decimal arithmetic, plus the cheapest-platform comparison.

Run:  python demos/03_cost_estimation.py
"""

import sys

from posbench import UsageRecord, compare_costs, default_pricing, estimate_cost
from posbench.costs import fmt_usd, write_cost_csv

pricing = default_pricing()
print("embedded pricing catalog:")
for platform, rates in pricing.entries.items():
    print(f"  {platform:<7} per call ${rates.per_call_usd}  per GB egress ${rates.per_gb_egress_usd}")

# A month of a small shop: ~1M API calls pushing ~1 GB of responses.
usages = [
    UsageRecord("gcp", api_calls=1_000_000, egress_bytes=10**9),
    UsageRecord("azure", api_calls=1_000_000, egress_bytes=10**9),
]

print("\nestimates for 1,000,000 calls + 1.0 GB egress:")
estimates = []
for usage in usages:
    estimate = estimate_cost(usage, pricing)
    estimates.append(estimate)
    print(
        f"  {usage.platform_label:<7} calls {fmt_usd(estimate.call_cost_usd)}"
        f" + egress {fmt_usd(estimate.egress_cost_usd)} = {fmt_usd(estimate.total_usd)} USD"
    )

comparison = compare_costs(estimates)
print(f"\ncomparison ({comparison.convention}):")
for row in comparison.rows:
    print(f"  {row.platform_label:<7} {fmt_usd(row.total_usd)} USD  (+{row.pct_above_cheapest:.1f}%)")

# Estimates are linear in usage — a 12-month projection is exactly 12x.
month = estimate_cost(usages[0], pricing)
year = estimate_cost(usages[0].scaled(12), pricing)
assert year.total_usd == 12 * month.total_usd
print(f"\n12-month projection for gcp: {fmt_usd(year.total_usd)} USD (exactly 12x one month)")

print("\ncost CSV (same rows the `posbench estimate` subcommand prints):")
write_cost_csv([(e.platform_label, "monthly", e, u) for e, u in zip(estimates, usages)], sys.stdout)
