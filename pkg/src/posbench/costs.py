"""Operational cost estimation: measured usage (API calls, egress bytes) times
a public per-call / per-GB pricing catalog, in exact decimal arithmetic."""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass
from decimal import Decimal
from pathlib import Path
from typing import Sequence

from .metrics import relative_difference

log = logging.getLogger(__name__)

# Decimal gigabyte: egress pricing convention.
GB = Decimal(10) ** 9

# Reporting resolution: micro-cents, so per-call rates at the 1e-7 USD scale
# survive rounding.
USD_QUANTUM = Decimal("0.000000001")

COST_COLUMNS = ["platform", "scenario", "api_calls", "egress_gb", "call_cost_usd", "egress_cost_usd", "total_usd"]

_REQUIRED_RATE_KEYS = {"per_call_usd", "per_gb_egress_usd"}
# Reserved for compute/storage rate extensions; accepted but unused.
_OPTIONAL_RATE_KEYS = {"currency", "per_compute_second_usd", "per_gb_storage_month_usd"}


class UnknownPlatform(KeyError):
    """Usage names a platform the pricing catalog does not contain."""


class MalformedPricing(ValueError):
    """Pricing file is structurally invalid or contains negative rates."""


class InsufficientEstimates(ValueError):
    """Cost comparison needs at least two estimates."""


@dataclass(frozen=True)
class PricingEntry:
    per_call_usd: Decimal
    per_gb_egress_usd: Decimal
    currency: str = "USD"


@dataclass(frozen=True)
class PricingCatalog:
    entries: dict[str, PricingEntry]

    def rates_for(self, platform_label: str) -> PricingEntry:
        try:
            return self.entries[platform_label]
        except KeyError:
            raise UnknownPlatform(f"no pricing entry for platform {platform_label!r}") from None


def default_pricing() -> PricingCatalog:
    """Embedded public rates for the two reference platforms."""
    return PricingCatalog(
        entries={
            "gcp": PricingEntry(Decimal("0.0000004"), Decimal("0.12")),
            "azure": PricingEntry(Decimal("0.0000002"), Decimal("0.19")),
        }
    )


@dataclass(frozen=True)
class UsageRecord:
    platform_label: str
    api_calls: int
    egress_bytes: int

    def __post_init__(self) -> None:
        if self.api_calls < 0 or self.egress_bytes < 0:
            raise ValueError("usage counts must be non-negative")

    def scaled(self, k: int) -> "UsageRecord":
        return UsageRecord(self.platform_label, self.api_calls * k, self.egress_bytes * k)


@dataclass(frozen=True)
class CostEstimate:
    platform_label: str
    call_cost_usd: Decimal
    egress_cost_usd: Decimal
    total_usd: Decimal


def estimate_cost(usage: UsageRecord, pricing: PricingCatalog) -> CostEstimate:
    """calls x per-call rate plus decimal-GB egress x per-GB rate.

    Kept unquantized so scaling usage by k scales the estimate by exactly k;
    rounding to the reporting quantum happens at emission.
    """
    rates = pricing.rates_for(usage.platform_label)
    call_cost = Decimal(usage.api_calls) * rates.per_call_usd
    egress_cost = (Decimal(usage.egress_bytes) / GB) * rates.per_gb_egress_usd
    return CostEstimate(
        platform_label=usage.platform_label,
        call_cost_usd=call_cost,
        egress_cost_usd=egress_cost,
        total_usd=call_cost + egress_cost,
    )


def load_pricing(path: str | Path | None) -> PricingCatalog:
    """Read a pricing catalog file; a missing file falls back to the embedded defaults."""
    if path is None:
        return default_pricing()
    path = Path(path)
    if not path.exists():
        log.info("pricing file %s not found; using embedded default rates", path)
        return default_pricing()
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh, parse_float=Decimal, parse_int=Decimal)
    except ValueError as exc:
        raise MalformedPricing(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise MalformedPricing(f"{path}: expected a JSON object keyed by platform")
    entries: dict[str, PricingEntry] = {}
    for platform, rates in raw.items():
        if not isinstance(rates, dict):
            raise MalformedPricing(f"{path}: entry {platform!r} must be an object")
        missing = _REQUIRED_RATE_KEYS - set(rates)
        if missing:
            raise MalformedPricing(f"{path}: entry {platform!r} missing {sorted(missing)}")
        unknown = set(rates) - _REQUIRED_RATE_KEYS - _OPTIONAL_RATE_KEYS
        if unknown:
            raise MalformedPricing(f"{path}: entry {platform!r} has unknown keys {sorted(unknown)}")
        per_call = Decimal(rates["per_call_usd"])
        per_gb = Decimal(rates["per_gb_egress_usd"])
        if per_call < 0 or per_gb < 0:
            raise MalformedPricing(f"{path}: entry {platform!r} has a negative rate")
        entries[platform] = PricingEntry(per_call, per_gb, currency=str(rates.get("currency", "USD")))
    if not entries:
        raise MalformedPricing(f"{path}: pricing catalog is empty")
    return PricingCatalog(entries=entries)


@dataclass(frozen=True)
class CostComparisonRow:
    platform_label: str
    total_usd: Decimal
    pct_above_cheapest: float


@dataclass(frozen=True)
class CostComparison:
    convention: str
    rows: tuple[CostComparisonRow, ...]


def compare_costs(estimates: Sequence[CostEstimate]) -> CostComparison:
    """Rank estimates by total and express each as a percentage above the cheapest."""
    if len(estimates) < 2:
        raise InsufficientEstimates("cost comparison needs at least two estimates")
    ordered = sorted(estimates, key=lambda e: (e.total_usd, e.platform_label))
    cheapest = ordered[0].total_usd
    rows = []
    for est in ordered:
        if est.total_usd == cheapest:
            pct = 0.0
        else:
            # relative_difference(cheapest, total) is the (negative) change from
            # the cheapest; negate to report "how much more expensive".
            pct = -relative_difference(float(cheapest), float(est.total_usd)) if cheapest != 0 else float("inf")
        rows.append(CostComparisonRow(est.platform_label, est.total_usd, pct))
    return CostComparison(
        convention="percentages are relative to the cheapest platform's total",
        rows=tuple(rows),
    )


def fmt_usd(value: Decimal) -> str:
    return f"{value.quantize(USD_QUANTUM):.9f}"


def write_cost_csv(rows: Sequence[tuple[str, str, CostEstimate, UsageRecord]], out: io.TextIOBase | str | Path) -> None:
    """Emit the cost table: (platform, scenario) rows with usage and estimate columns."""

    def _write(fh) -> None:
        writer = csv.writer(fh)
        writer.writerow(COST_COLUMNS)
        for platform, scenario, estimate, usage in rows:
            writer.writerow(
                [
                    platform,
                    scenario,
                    usage.api_calls,
                    f"{Decimal(usage.egress_bytes) / GB:.9f}",
                    fmt_usd(estimate.call_cost_usd),
                    fmt_usd(estimate.egress_cost_usd),
                    fmt_usd(estimate.total_usd),
                ]
            )

    if isinstance(out, (str, Path)):
        with open(out, "w", newline="", encoding="utf-8") as fh:
            _write(fh)
    else:
        _write(out)
