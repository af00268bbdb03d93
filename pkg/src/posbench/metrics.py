"""Post-processing of raw load-test results: nearest-rank latency percentiles,
throughput, error rates, and cross-repetition aggregation."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Sequence

import numpy as np

from .engine import Outcome

if TYPE_CHECKING:
    from .engine import RequestResult, RunRecord

PERCENTILE_LEVELS = (50, 95, 99)

# Fields aggregated across repetitions of the same (scenario, target) pair.
METRIC_FIELDS = ("p50_ms", "p95_ms", "p99_ms", "tps", "error_rate_pct", "total_calls", "egress_bytes")

SUMMARY_COLUMNS = [
    "scenario",
    "target_label",
    "run_id",
    "p50_ms",
    "p95_ms",
    "p99_ms",
    "tps",
    "error_rate_pct",
    "total_calls",
    "egress_bytes",
]


class EmptySample(ValueError):
    """A statistic was requested over zero samples."""


class NoSteadyStateData(ValueError):
    """The run has no results inside the steady-state window."""


class MixedConfigurations(ValueError):
    """Aggregation input mixes scenarios or targets, or is empty."""


class ZeroBaseline(ValueError):
    """Relative difference against a zero baseline is undefined."""


@dataclass(frozen=True)
class MetricsSummary:
    """One run reduced to its headline numbers over the steady-state window.

    Percentiles are None when the window held no successful request (e.g. an
    all-timeout run); they are reported as gaps, never as zeros.
    """

    scenario: str
    target_label: str
    run_id: str
    p50_ms: float | None
    p95_ms: float | None
    p99_ms: float | None
    tps: float
    error_rate_pct: float
    total_calls: int
    egress_bytes: int
    included_window_s: float


@dataclass(frozen=True)
class AggregateSummary:
    """Mean and sample standard deviation of each metric across repetitions."""

    scenario: str
    target_label: str
    runs: int
    means: dict[str, float | None]
    stdevs: dict[str, float | None]
    summaries: tuple[MetricsSummary, ...]


def percentile(latencies: Sequence[float], p: float) -> float:
    """Nearest-rank percentile: the sorted sample's element at rank ceil(p/100 * n).

    Exact by construction — the result is always a member of the sample. The
    rank is computed in integer arithmetic so float rounding can never shift
    it across a boundary.
    """
    n = len(latencies)
    if n == 0:
        raise EmptySample("percentile of an empty sample")
    if not 0.0 < p <= 100.0:
        raise ValueError(f"percentile level must be in (0, 100], got {p}")
    frac = Fraction(str(p))
    rank = -((-frac.numerator * n) // (frac.denominator * 100))
    ordered = np.sort(np.asarray(latencies, dtype=float))
    return float(ordered[rank - 1])


def throughput(results: Iterable["RequestResult"], window_s: float, window_start_ms: float = 0.0) -> float:
    """Successful requests per second over [window_start, window_start + window)."""
    if window_s <= 0:
        raise ValueError("window_s must be positive")
    window_end_ms = window_start_ms + window_s * 1000.0
    successes = sum(
        1
        for r in results
        if r.outcome is Outcome.SUCCESS and window_start_ms <= r.start_offset_ms < window_end_ms
    )
    return successes / window_s


def error_rate(results: Sequence["RequestResult"]) -> float:
    """Percentage of requests that did not succeed (HTTP error, timeout, or transport failure)."""
    if not results:
        raise EmptySample("error rate of an empty sample")
    failures = sum(1 for r in results if r.outcome is not Outcome.SUCCESS)
    return 100.0 * failures / len(results)


def steady_results(run: "RunRecord") -> list["RequestResult"]:
    """Results issued at or after the end of the ramp (ramp traffic mixes concurrency levels)."""
    cutoff_ms = run.scenario.ramp_up_s * 1000.0
    return [r for r in run.results if r.start_offset_ms >= cutoff_ms]


def summarize(run: "RunRecord") -> MetricsSummary:
    """Reduce one run to percentiles over successful steady-window latencies,
    plus throughput, error rate, and usage totals over the same window."""
    window = steady_results(run)
    if not window:
        raise NoSteadyStateData(f"run {run.run_id!r} has no steady-state results")
    steady_s = float(run.scenario.steady_s)
    success_latencies = [r.latency_ms for r in window if r.outcome is Outcome.SUCCESS]
    if success_latencies:
        p50, p95, p99 = (percentile(success_latencies, p) for p in PERCENTILE_LEVELS)
    else:
        p50 = p95 = p99 = None
    return MetricsSummary(
        scenario=run.scenario.name,
        target_label=run.target_label,
        run_id=run.run_id,
        p50_ms=p50,
        p95_ms=p95,
        p99_ms=p99,
        tps=throughput(window, steady_s, window_start_ms=run.scenario.ramp_up_s * 1000.0),
        error_rate_pct=error_rate(window),
        total_calls=len(window),
        egress_bytes=sum(r.bytes_in for r in window),
        included_window_s=steady_s,
    )


def aggregate(summaries: Sequence[MetricsSummary]) -> AggregateSummary:
    """Per-metric mean and sample standard deviation (n-1 denominator, 0 when n=1)."""
    if not summaries:
        raise MixedConfigurations("no summaries to aggregate")
    keys = {(s.scenario, s.target_label) for s in summaries}
    if len(keys) > 1:
        raise MixedConfigurations(f"cannot aggregate across configurations: {sorted(keys)}")
    means: dict[str, float | None] = {}
    stdevs: dict[str, float | None] = {}
    for name in METRIC_FIELDS:
        values = [getattr(s, name) for s in summaries if getattr(s, name) is not None]
        if not values:
            means[name] = None
            stdevs[name] = None
            continue
        means[name] = float(np.mean(values))
        stdevs[name] = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
    scenario, target_label = next(iter(keys))
    return AggregateSummary(
        scenario=scenario,
        target_label=target_label,
        runs=len(summaries),
        means=means,
        stdevs=stdevs,
        summaries=tuple(summaries),
    )


def relative_difference(baseline: float, comparison: float) -> float:
    """Percentage by which ``comparison`` undercuts ``baseline`` (positive = smaller).

    Reports round this to one decimal.
    """
    if baseline == 0:
        raise ZeroBaseline("relative difference against a zero baseline")
    return 100.0 * (baseline - comparison) / baseline


# --- Reporting precision (matches the published table precision) -------------


def fmt_latency(value: float | None) -> str:
    return "" if value is None else f"{value:.2f}"


def fmt_rate(value: float | None) -> str:
    return "" if value is None else f"{value:.2f}"


def fmt_tps(value: float | None) -> str:
    return "" if value is None else f"{value:.2f}"


def fmt_relative(value: float) -> str:
    return f"{value:.1f}"


# --- CSV emission -------------------------------------------------------------


def write_summary_csv(summaries: Sequence[MetricsSummary], path: str | Path) -> None:
    """One row per run: scenario, target, run id, then the headline metrics."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_COLUMNS)
        for s in summaries:
            writer.writerow(
                [
                    s.scenario,
                    s.target_label,
                    s.run_id,
                    fmt_latency(s.p50_ms),
                    fmt_latency(s.p95_ms),
                    fmt_latency(s.p99_ms),
                    fmt_tps(s.tps),
                    fmt_rate(s.error_rate_pct),
                    s.total_calls,
                    s.egress_bytes,
                ]
            )


def write_aggregate_csv(aggregates: Sequence[AggregateSummary], path: str | Path) -> None:
    """One row per (scenario, target): mean and stdev columns for each metric."""
    header = ["scenario", "target_label", "runs"]
    for name in METRIC_FIELDS:
        header += [f"{name}_mean", f"{name}_stdev"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for agg in aggregates:
            row: list[object] = [agg.scenario, agg.target_label, agg.runs]
            for name in METRIC_FIELDS:
                mean, stdev = agg.means[name], agg.stdevs[name]
                row += ["" if mean is None else f"{mean:.4f}", "" if stdev is None else f"{stdev:.4f}"]
            writer.writerow(row)
