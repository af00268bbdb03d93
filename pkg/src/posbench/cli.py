"""Command-line orchestration: run campaigns, render reports, serve the
reference target, and estimate costs.

Exit codes are disjoint by failure class: 0 success, 2 target unreachable,
3 invalid configuration, 4 empty raw-results directory, 5 serve failure
(unknown profile or port unavailable), 6 malformed usage/pricing input.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

from . import __version__, costs, metrics, report
from .engine import (
    EmulatedTarget,
    HttpTarget,
    LoadScenario,
    Target,
    TargetUnreachable,
    canonical_scenarios,
    desk_scale,
    execute_campaign,
    load_campaigns,
)
from .metrics import NoSteadyStateData
from .target.emulation import UnknownProfile, load_profile
from .target.httpd import make_server
from .workload import (
    DEFAULT_MIX,
    IDENTITY_SHAPE,
    PRNG_ALGORITHM,
    TrafficShape,
    WorkloadMix,
    default_catalog,
    load_catalog,
    validate_mix,
)

EXIT_OK = 0
EXIT_UNREACHABLE = 2
EXIT_CONFIG = 3
EXIT_EMPTY_RAW = 4
EXIT_SERVE = 5
EXIT_USAGE = 6


class ConfigInvalid(ValueError):
    """Configuration rejected; the message names the offending field path."""

    def __init__(self, field_path: str, reason: str):
        super().__init__(f"{field_path}: {reason}")
        self.field_path = field_path
        self.reason = reason


@dataclass
class CampaignConfig:
    targets: list[Target]
    scenarios: list[LoadScenario]
    mix: WorkloadMix
    shape: TrafficShape
    catalog_path: str | None
    pricing_path: str | None
    seed: int
    out_dir: str
    raw: dict = field(default_factory=dict)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.raw, sort_keys=True).encode("utf-8")).hexdigest()


_TOP_KEYS = {"targets", "scenarios", "mix", "shape", "catalog", "pricing", "seed", "out_dir"}
_TARGET_KEYS = {"label", "base_url", "profile"}
_SCENARIO_KEYS = {
    "name",
    "concurrent_users",
    "ramp_up_s",
    "steady_s",
    "repetitions",
    "rest_between_runs_s",
    "request_timeout_ms",
    "think_time_ms",
}
_MIX_KEYS = {"transaction", "inventory", "analytics"}
_SHAPE_KEYS = {"hourly_multipliers", "weekday_multipliers", "seasonal_multiplier"}


def _reject_unknown(raw: dict, allowed: set[str], path: str) -> None:
    unknown = sorted(set(raw) - allowed)
    if unknown:
        raise ConfigInvalid(path, f"unknown keys {unknown}")


def _parse_targets(raw: object) -> list[Target]:
    if not isinstance(raw, list) or not raw:
        raise ConfigInvalid("targets", "must be a non-empty list")
    targets: list[Target] = []
    labels: set[str] = set()
    for i, entry in enumerate(raw):
        path = f"targets[{i}]"
        if not isinstance(entry, dict):
            raise ConfigInvalid(path, "must be an object")
        _reject_unknown(entry, _TARGET_KEYS, path)
        label = entry.get("label")
        if not isinstance(label, str) or not label:
            raise ConfigInvalid(f"{path}.label", "must be a non-empty string")
        if label in labels:
            raise ConfigInvalid(f"{path}.label", f"duplicate label {label!r}")
        labels.add(label)
        has_url = "base_url" in entry
        has_profile = "profile" in entry
        if has_url == has_profile:
            raise ConfigInvalid(path, "must set exactly one of base_url or profile")
        if has_url:
            targets.append(HttpTarget(label=label, base_url=str(entry["base_url"])))
        else:
            try:
                profile = load_profile(str(entry["profile"]))
            except (UnknownProfile, ValueError) as exc:
                raise ConfigInvalid(f"{path}.profile", str(exc)) from exc
            targets.append(EmulatedTarget(label=label, profile=profile))
    return targets


def _parse_scenarios(raw: object) -> list[LoadScenario]:
    if raw is None:
        return canonical_scenarios()
    if not isinstance(raw, list) or not raw:
        raise ConfigInvalid("scenarios", "must be a non-empty list")
    scenarios = []
    names: set[str] = set()
    for i, entry in enumerate(raw):
        path = f"scenarios[{i}]"
        if not isinstance(entry, dict):
            raise ConfigInvalid(path, "must be an object")
        _reject_unknown(entry, _SCENARIO_KEYS, path)
        if "name" not in entry or "concurrent_users" not in entry:
            raise ConfigInvalid(path, "requires name and concurrent_users")
        try:
            scenario = LoadScenario(**entry)
        except (TypeError, ValueError) as exc:
            raise ConfigInvalid(path, str(exc)) from exc
        if scenario.name in names:
            raise ConfigInvalid(f"{path}.name", f"duplicate scenario name {scenario.name!r}")
        names.add(scenario.name)
        scenarios.append(scenario)
    return scenarios


def _parse_mix(raw: object) -> WorkloadMix:
    if raw is None:
        return DEFAULT_MIX
    if not isinstance(raw, dict):
        raise ConfigInvalid("mix", "must be an object")
    _reject_unknown(raw, _MIX_KEYS, "mix")
    try:
        mix = WorkloadMix(
            transaction_weight=float(raw.get("transaction", 0.0)),
            inventory_weight=float(raw.get("inventory", 0.0)),
            analytics_weight=float(raw.get("analytics", 0.0)),
        )
        validate_mix(mix)
    except (TypeError, ValueError) as exc:
        raise ConfigInvalid("mix", str(exc)) from exc
    return mix


def _parse_shape(raw: object) -> TrafficShape:
    if raw is None:
        return IDENTITY_SHAPE
    if not isinstance(raw, dict):
        raise ConfigInvalid("shape", "must be an object")
    _reject_unknown(raw, _SHAPE_KEYS, "shape")
    try:
        return TrafficShape(
            hourly_multipliers=tuple(raw.get("hourly_multipliers", (1.0,) * 24)),
            weekday_multipliers=tuple(raw.get("weekday_multipliers", (1.0,) * 7)),
            seasonal_multiplier=float(raw.get("seasonal_multiplier", 1.0)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigInvalid("shape", str(exc)) from exc


def parse_config(path: str | Path) -> CampaignConfig:
    """Load and strictly validate a campaign config, filling documented defaults."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigInvalid(str(path), f"cannot read config: {exc}") from exc
    except ValueError as exc:
        raise ConfigInvalid(str(path), f"not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigInvalid(str(path), "config must be a JSON object")
    _reject_unknown(raw, _TOP_KEYS, "config")

    catalog_path = raw.get("catalog")
    if catalog_path is not None:
        try:
            load_catalog(catalog_path)
        except (OSError, ValueError) as exc:
            raise ConfigInvalid("catalog", str(exc)) from exc

    seed = raw.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigInvalid("seed", "must be an integer")

    return CampaignConfig(
        targets=_parse_targets(raw.get("targets")),
        scenarios=_parse_scenarios(raw.get("scenarios")),
        mix=_parse_mix(raw.get("mix")),
        shape=_parse_shape(raw.get("shape")),
        catalog_path=catalog_path,
        pricing_path=raw.get("pricing"),
        seed=seed,
        out_dir=str(raw.get("out_dir", "posbench-out")),
        raw=raw,
    )


# --- subcommands -----------------------------------------------------------------


def cmd_run(
    config: CampaignConfig,
    desk_scale_flag: bool = False,
    seed_override: int | None = None,
    out_override: str | None = None,
) -> int:
    """Execute every target x scenario campaign and persist raw results."""
    out_dir = Path(out_override or config.out_dir)
    raw_dir = out_dir / "raw"
    raw_dir.mkdir(parents=True, exist_ok=True)
    for stale in list(raw_dir.glob("raw_*.csv")) + list(raw_dir.glob("*-campaign.json")):
        stale.unlink()

    catalog = load_catalog(config.catalog_path) if config.catalog_path else default_catalog()
    scenarios = [desk_scale(s) for s in config.scenarios] if desk_scale_flag else config.scenarios
    seed = config.seed if seed_override is None else seed_override
    started = datetime.now(timezone.utc)

    meta = {
        "tool": "posbench",
        "version": __version__,
        "seed": seed,
        "prng": PRNG_ALGORITHM,
        "config_digest": config.digest(),
        "desk_scale": desk_scale_flag,
        "started_at": started.isoformat(),
        "targets": [t.label for t in config.targets],
        "scenarios": [s.name for s in scenarios],
    }
    try:
        for target in config.targets:
            campaign = execute_campaign(
                scenarios,
                catalog,
                config.mix,
                config.shape,
                target,
                seed,
                persist_dir=raw_dir,
            )
            print(f"[posbench] target {target.label}: {len(campaign.runs)} runs complete")
    except TargetUnreachable as exc:
        print(f"[posbench] target unreachable: {exc}", file=sys.stderr)
        return EXIT_UNREACHABLE
    finally:
        meta["finished_at"] = datetime.now(timezone.utc).isoformat()
        with open(out_dir / "run_meta.json", "w", encoding="utf-8") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")

    print(f"[posbench] raw results in {raw_dir}")
    return EXIT_OK


def _aggregate_runs(runs) -> tuple[list[metrics.MetricsSummary], list[metrics.AggregateSummary], int]:
    summaries: list[metrics.MetricsSummary] = []
    warnings = 0
    for run in runs:
        try:
            summaries.append(metrics.summarize(run))
        except NoSteadyStateData:
            warnings += 1
    grouped: dict[tuple[str, str], list[metrics.MetricsSummary]] = {}
    order: list[tuple[str, str]] = []
    for summary in summaries:
        key = (summary.scenario, summary.target_label)
        if key not in grouped:
            grouped[key] = []
            order.append(key)
        grouped[key].append(summary)
    levels = report.level_order([key[0] for key in order])
    ordered_keys = sorted(order, key=lambda k: (levels.index(k[0]), order.index(k)))
    aggregates = [metrics.aggregate(grouped[key]) for key in ordered_keys]
    return summaries, aggregates, warnings


def _mean_usage_rows(aggregates: Sequence[metrics.AggregateSummary], pricing: costs.PricingCatalog) -> tuple[list[report.CostRow], int]:
    rows: list[report.CostRow] = []
    skipped = 0
    for agg in aggregates:
        if agg.target_label not in pricing.entries:
            skipped += 1
            continue
        usage = costs.UsageRecord(
            platform_label=agg.target_label,
            api_calls=int(round(agg.means["total_calls"] or 0)),
            egress_bytes=int(round(agg.means["egress_bytes"] or 0)),
        )
        rows.append(
            report.CostRow(
                scenario=agg.scenario,
                target_label=agg.target_label,
                usage=usage,
                estimate=costs.estimate_cost(usage, pricing),
            )
        )
    return rows, skipped


def _write_summary_text(
    path: Path,
    aggregates: Sequence[metrics.AggregateSummary],
    cost_rows: Sequence[report.CostRow],
) -> None:
    levels = report.level_order([a.scenario for a in aggregates])
    targets: list[str] = []
    for agg in aggregates:
        if agg.target_label not in targets:
            targets.append(agg.target_label)
    p95 = {(a.scenario, a.target_label): a.means["p95_ms"] for a in aggregates}
    total = {(c.scenario, c.target_label): c.estimate.total_usd for c in cost_rows}

    lines = ["posbench campaign summary", "=" * 26, ""]
    lines.append(f"targets: {', '.join(targets)}")
    lines.append(f"levels:  {', '.join(levels)}")
    lines.append("")

    lines.append("response time (mean p95, ms) — lower is faster:")
    for level in levels:
        known = [(t, p95.get((level, t))) for t in targets]
        known = [(t, v) for t, v in known if v is not None]
        if not known:
            lines.append(f"  {level}: no successful samples")
            continue
        fastest = min(known, key=lambda kv: kv[1])
        slowest = max(known, key=lambda kv: kv[1])
        line = f"  {level}: fastest = {fastest[0]} ({metrics.fmt_latency(fastest[1])} ms)"
        if len(known) > 1 and slowest[1] > 0:
            delta = metrics.relative_difference(slowest[1], fastest[1])
            line += f"; {fastest[0]} is {metrics.fmt_relative(delta)}% faster than {slowest[0]}"
            if level == levels[0]:
                line += "  <- baseline latency delta"
        lines.append(line)
    lines.append("")

    if cost_rows:
        lines.append("estimated cost per run (USD) — lower is cheaper:")
        deltas = []
        for level in levels:
            known = [(t, total.get((level, t))) for t in targets]
            known = [(t, v) for t, v in known if v is not None]
            if not known:
                continue
            cheapest = min(known, key=lambda kv: kv[1])
            priciest = max(known, key=lambda kv: kv[1])
            line = f"  {level}: cheapest = {cheapest[0]} ({costs.fmt_usd(cheapest[1])})"
            if len(known) > 1 and priciest[1] > 0:
                delta = metrics.relative_difference(float(priciest[1]), float(cheapest[1]))
                deltas.append(delta)
                line += (
                    f"; {cheapest[0]} is {metrics.fmt_relative(delta)}% cheaper than {priciest[0]}"
                )
            lines.append(line)
        if deltas:
            mean_delta = sum(deltas) / len(deltas)
            lines.append(f"  mean per-level cost delta: {metrics.fmt_relative(mean_delta)}%")
        lines.append("")
        lines.append(
            "note: published headline cost-efficiency figures computed over a"
        )
        lines.append(
            "  whole campaign do not match any single level's delta; this report"
        )
        lines.append(
            "  exposes per-level deltas and their mean rather than guessing the"
        )
        lines.append("  aggregation behind such headlines.")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def cmd_report(raw_dir: str | Path, out_dir: str | Path, pricing_path: str | None = None) -> int:
    """Summarize persisted raw results into tables, figures, and a text summary."""
    raw_dir = Path(raw_dir)
    runs, warnings = load_campaigns(raw_dir) if raw_dir.is_dir() else ([], 0)
    if not runs:
        print(f"[posbench] no raw results found in {raw_dir}", file=sys.stderr)
        return EXIT_EMPTY_RAW
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    summaries, aggregates, agg_warnings = _aggregate_runs(runs)
    warnings += agg_warnings
    pricing = costs.load_pricing(pricing_path)
    cost_rows, skipped = _mean_usage_rows(aggregates, pricing)
    warnings += skipped

    metrics.write_summary_csv(summaries, out_dir / "summaries.csv")
    metrics.write_aggregate_csv(aggregates, out_dir / "aggregates.csv")
    summary_txt = out_dir / "summary.txt"
    _write_summary_text(summary_txt, aggregates, cost_rows)
    bundle = report.write_bundle(
        aggregates,
        cost_rows,
        out_dir,
        warnings=warnings,
        extra_files=[out_dir / "summaries.csv", out_dir / "aggregates.csv", summary_txt],
    )
    print(f"[posbench] report written to {out_dir} ({len(bundle.tables)} tables, "
          f"{len(bundle.figures)} figures, {warnings} warnings)")
    return EXIT_OK


def cmd_serve(profile_name: str, port: int, host: str = "127.0.0.1") -> int:
    """Serve the reference target with the named emulation profile until interrupted."""
    try:
        profile = load_profile(profile_name)
    except (UnknownProfile, ValueError) as exc:
        print(f"[posbench] {exc}", file=sys.stderr)
        return EXIT_SERVE
    try:
        server = make_server(profile, host, port, require_token=os.environ.get("POSBENCH_TOKEN") or None)
    except OSError as exc:
        print(f"[posbench] cannot bind {host}:{port}: {exc}", file=sys.stderr)
        return EXIT_SERVE
    print(f"[posbench] serving profile {profile.name!r} at {server.base_url}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown()
        server.server_close()
        print("[posbench] target stopped")
    return EXIT_OK


def cmd_estimate(
    raw_dir: str | Path | None = None,
    usage_path: str | Path | None = None,
    pricing_path: str | None = None,
    out=None,
) -> int:
    """Estimate costs from an explicit usage file or from persisted raw results."""
    out = out or sys.stdout
    try:
        pricing = costs.load_pricing(pricing_path)
    except costs.MalformedPricing as exc:
        print(f"[posbench] {exc}", file=sys.stderr)
        return EXIT_USAGE

    rows: list[tuple[str, str, costs.CostEstimate, costs.UsageRecord]] = []
    if usage_path is not None:
        if raw_dir is not None:
            print("[posbench] warning: both usage file and raw dir supplied; explicit usage wins", file=sys.stderr)
        try:
            with open(usage_path, encoding="utf-8") as fh:
                raw = json.load(fh)
            if not isinstance(raw, dict):
                raise ValueError("usage file must be a JSON object keyed by platform")
            for platform, entry in raw.items():
                usage = costs.UsageRecord(
                    platform_label=platform,
                    api_calls=int(entry["api_calls"]),
                    egress_bytes=int(entry["egress_bytes"]),
                )
                rows.append((platform, "all", costs.estimate_cost(usage, pricing), usage))
        except (OSError, ValueError, KeyError, TypeError, costs.UnknownPlatform) as exc:
            print(f"[posbench] malformed usage input: {exc}", file=sys.stderr)
            return EXIT_USAGE
    elif raw_dir is not None:
        runs, _ = load_campaigns(raw_dir)
        if not runs:
            print(f"[posbench] no raw results found in {raw_dir}", file=sys.stderr)
            return EXIT_USAGE
        totals: dict[tuple[str, str], list[int]] = {}
        for run in runs:
            try:
                summary = metrics.summarize(run)
            except NoSteadyStateData:
                continue
            key = (run.target_label, run.scenario.name)
            bucket = totals.setdefault(key, [0, 0])
            bucket[0] += summary.total_calls
            bucket[1] += summary.egress_bytes
        try:
            for (platform, scenario), (calls, egress) in totals.items():
                usage = costs.UsageRecord(platform_label=platform, api_calls=calls, egress_bytes=egress)
                rows.append((platform, scenario, costs.estimate_cost(usage, pricing), usage))
        except costs.UnknownPlatform as exc:
            print(f"[posbench] {exc}", file=sys.stderr)
            return EXIT_USAGE
    else:
        print("[posbench] estimate needs --usage FILE or a raw results directory", file=sys.stderr)
        return EXIT_USAGE

    costs.write_cost_csv(rows, out)
    return EXIT_OK


# --- argument parsing ----------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="posbench", description=__doc__)
    parser.add_argument("--version", action="version", version=f"posbench {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute a load campaign and persist raw results")
    run_p.add_argument("--config", required=True, help="campaign config JSON")
    run_p.add_argument("--out", default=None, help="output directory (overrides config out_dir)")
    run_p.add_argument("--desk-scale", action="store_true", help="30 s steady, 2 s rest, 1 repetition")
    run_p.add_argument("--seed", type=int, default=None, help="override the config seed")

    report_p = sub.add_parser("report", help="render tables and figures from raw results")
    report_p.add_argument("raw_dir", help="directory holding raw_*.csv and *-campaign.json")
    report_p.add_argument("--out", required=True, help="report output directory")
    report_p.add_argument("--pricing", default=None, help="pricing catalog JSON (default: embedded rates)")

    serve_p = sub.add_parser("serve", help="serve the reference POS target")
    serve_p.add_argument("--profile", default="paper-gcp", help="built-in profile name or profile JSON path")
    serve_p.add_argument("--port", type=int, default=8080)
    serve_p.add_argument("--host", default="127.0.0.1")

    est_p = sub.add_parser("estimate", help="estimate cost from usage or raw results")
    est_p.add_argument("raw_dir", nargs="?", default=None, help="raw results directory")
    est_p.add_argument("--usage", default=None, help="explicit usage JSON file (wins over raw_dir)")
    est_p.add_argument("--pricing", default=None, help="pricing catalog JSON (default: embedded rates)")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "run":
        try:
            config = parse_config(args.config)
        except ConfigInvalid as exc:
            print(f"[posbench] invalid config: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        return cmd_run(config, desk_scale_flag=args.desk_scale, seed_override=args.seed, out_override=args.out)
    if args.command == "report":
        return cmd_report(args.raw_dir, args.out, pricing_path=args.pricing)
    if args.command == "serve":
        return cmd_serve(args.profile, args.port, host=args.host)
    if args.command == "estimate":
        return cmd_estimate(raw_dir=args.raw_dir, usage_path=args.usage, pricing_path=args.pricing)
    raise AssertionError(f"unhandled command {args.command!r}")


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_main()
