"""Tables and figures from aggregated results: five CSV tables, four grouped-bar
SVG charts, and a manifest. Every number a figure shows is embedded as a text
element carrying the exact string written to the corresponding table, so the
two can be diffed mechanically."""

from __future__ import annotations

import csv
import hashlib
import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

from . import __version__
from .costs import CostEstimate, UsageRecord, fmt_usd
from .engine import CANONICAL_LEVEL_ORDER
from .metrics import AggregateSummary, fmt_latency, fmt_rate, fmt_tps

FIGURE_KINDS = ("p95", "tps", "cost", "error")

TABLE_NAMES = ("response_times", "p95_scaling", "throughput", "costs", "error_rates")

_GAP_FOOTNOTE = "# blank cells: metric undefined (no successful samples in the window)"

_PALETTE = ("#4c78a8", "#f58518", "#54a24b", "#e45756", "#72b7b2", "#eeca3b")

_FIGURE_TITLES = {
    "p95": "p95 response time by load level",
    "tps": "Throughput by load level",
    "cost": "Estimated cost by load level",
    "error": "Error rate by load level",
}

_FIGURE_UNITS = {"p95": "ms", "tps": "TPS", "cost": "USD", "error": "%"}

_VALUE_TEXT_RE = re.compile(r'<text class="value"[^>]*>([^<]*)</text>')


class UnknownKind(ValueError):
    """Figure kind is not one of p95, tps, cost, error."""


@dataclass(frozen=True)
class CostRow:
    scenario: str
    target_label: str
    usage: UsageRecord
    estimate: CostEstimate


@dataclass(frozen=True)
class ReportBundle:
    tables: dict[str, Path]
    figures: dict[str, Path]
    manifest: Path


def level_order(names: Sequence[str]) -> list[str]:
    """Canonical levels first, in canonical order; anything else in first-seen order."""
    seen: list[str] = []
    for name in names:
        if name not in seen:
            seen.append(name)
    canonical = [name for name in CANONICAL_LEVEL_ORDER if name in seen]
    return canonical + [name for name in seen if name not in CANONICAL_LEVEL_ORDER]


def _organize(
    aggregates: Sequence[AggregateSummary],
    costs: Sequence[CostRow] = (),
) -> tuple[list[str], list[str], dict[tuple[str, str], AggregateSummary], dict[tuple[str, str], CostRow]]:
    levels = level_order([a.scenario for a in aggregates])
    targets: list[str] = []
    for agg in aggregates:
        if agg.target_label not in targets:
            targets.append(agg.target_label)
    by_key = {(a.scenario, a.target_label): a for a in aggregates}
    cost_by_key = {(c.scenario, c.target_label): c for c in costs}
    return levels, targets, by_key, cost_by_key


def _cell(kind: str, agg: AggregateSummary | None, cost: CostRow | None) -> str:
    """The one formatted string both the table cell and the figure label show."""
    if kind == "cost":
        return fmt_usd(cost.estimate.total_usd) if cost is not None else ""
    if agg is None:
        return ""
    if kind in ("p50", "p95", "p99"):
        return fmt_latency(agg.means[f"{kind}_ms"])
    if kind == "tps":
        return fmt_tps(agg.means["tps"])
    if kind == "error":
        return fmt_rate(agg.means["error_rate_pct"])
    raise UnknownKind(f"unknown figure kind {kind!r}")


def emit_tables(
    aggregates: Sequence[AggregateSummary],
    costs: Sequence[CostRow],
    out_dir: str | Path,
) -> dict[str, Path]:
    """Write the five report tables; returns {table name: path}."""
    if not aggregates:
        raise ValueError("no aggregates to report")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    levels, targets, by_key, cost_by_key = _organize(aggregates, costs)
    paths: dict[str, Path] = {}

    def write(name: str, header: list[str], rows: list[list[str]]) -> None:
        path = out_dir / f"{name}.csv"
        gaps = any(cell == "" for row in rows for cell in row[1:])
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)
            if gaps:
                writer.writerow([_GAP_FOOTNOTE])
        paths[name] = path

    rows = []
    for level in levels:
        for metric in ("p50", "p95", "p99"):
            rows.append([level, metric] + [_cell(metric, by_key.get((level, t)), None) for t in targets])
    write("response_times", ["load_level", "metric", *targets], rows)

    for name, kind in (("p95_scaling", "p95"), ("throughput", "tps"), ("error_rates", "error")):
        rows = [[level] + [_cell(kind, by_key.get((level, t)), None) for t in targets] for level in levels]
        write(name, ["load_level", *targets], rows)

    rows = [[level] + [_cell("cost", None, cost_by_key.get((level, t))) for t in targets] for level in levels]
    write("costs", ["load_level", *targets], rows)
    return paths


def emit_figure(
    kind: str,
    aggregates: Sequence[AggregateSummary],
    out_path: str | Path,
    costs: Sequence[CostRow] = (),
) -> Path:
    """Render one grouped bar chart; data labels carry the table-exact strings."""
    if kind not in FIGURE_KINDS:
        raise UnknownKind(f"unknown figure kind {kind!r} (expected one of {FIGURE_KINDS})")
    if not aggregates:
        raise ValueError("no aggregates to plot")
    levels, targets, by_key, cost_by_key = _organize(aggregates, costs)

    cells: dict[tuple[str, str], str] = {}
    for level in levels:
        for target in targets:
            cells[(level, target)] = _cell(kind, by_key.get((level, target)), cost_by_key.get((level, target)))

    numeric = {key: float(text) for key, text in cells.items() if text != ""}
    ymax = max(numeric.values(), default=0.0)
    ymax = ymax * 1.1 if ymax > 0 else 1.0

    width, height = 720, 420
    left, right, top, bottom = 80, 700, 48, 340
    plot_w, plot_h = right - left, bottom - top

    def y_of(value: float) -> float:
        return bottom - (value / ymax) * plot_h

    parts: list[str] = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text class="title" x="{(left + right) / 2:.1f}" y="24" text-anchor="middle" '
        f'font-size="15">{escape(_FIGURE_TITLES[kind])}</text>',
    ]

    # y axis: 5 linear ticks; cost ticks in scientific notation (values span decades).
    for i in range(6):
        value = ymax * i / 5
        y = y_of(value)
        label = f"{value:.1e}" if kind == "cost" else f"{value:.4g}"
        parts.append(f'<line x1="{left}" y1="{y:.1f}" x2="{right}" y2="{y:.1f}" stroke="#dddddd"/>')
        parts.append(
            f'<text class="tick" x="{left - 6}" y="{y + 4:.1f}" text-anchor="end" font-size="10">{label}</text>'
        )
    parts.append(
        f'<text class="unit" x="18" y="{(top + bottom) / 2:.1f}" font-size="11" '
        f'transform="rotate(-90 18 {(top + bottom) / 2:.1f})" text-anchor="middle">'
        f"{escape(_FIGURE_UNITS[kind])}</text>"
    )

    group_w = plot_w / len(levels)
    bar_w = group_w * 0.7 / len(targets)
    for li, level in enumerate(levels):
        group_x = left + li * group_w
        parts.append(
            f'<text class="xlabel" x="{group_x + group_w / 2:.1f}" y="{bottom + 18}" '
            f'text-anchor="middle" font-size="11">{escape(level)}</text>'
        )
        for ti, target in enumerate(targets):
            text = cells[(level, target)]
            x = group_x + group_w * 0.15 + ti * bar_w
            if text == "":
                continue  # gap: missing metric renders no bar and no label
            value = float(text)
            y = y_of(value)
            color = _PALETTE[ti % len(_PALETTE)]
            parts.append(
                f'<rect class="bar" x="{x:.2f}" y="{y:.2f}" width="{bar_w:.2f}" '
                f'height="{bottom - y:.2f}" fill="{color}"/>'
            )
            parts.append(
                f'<text class="value" x="{x + bar_w / 2:.2f}" y="{y - 4:.2f}" '
                f'text-anchor="middle" font-size="9">{escape(text)}</text>'
            )

    for ti, target in enumerate(targets):
        color = _PALETTE[ti % len(_PALETTE)]
        x = left + 10 + ti * 140
        parts.append(f'<rect x="{x}" y="{height - 26}" width="10" height="10" fill="{color}"/>')
        parts.append(
            f'<text class="legend" x="{x + 15}" y="{height - 17}" font-size="11">{escape(target)}</text>'
        )

    parts.append(f'<line x1="{left}" y1="{top}" x2="{left}" y2="{bottom}" stroke="#333333"/>')
    parts.append(f'<line x1="{left}" y1="{bottom}" x2="{right}" y2="{bottom}" stroke="#333333"/>')
    parts.append("</svg>")

    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text("\n".join(parts) + "\n", encoding="utf-8")
    return out_path


def figure_values(svg: str | Path) -> list[str]:
    """Extract the data-label strings from one of our SVG figures (test oracle hook)."""
    text = Path(svg).read_text(encoding="utf-8") if isinstance(svg, Path) else svg
    return _VALUE_TEXT_RE.findall(text)


def table_values(path: str | Path) -> list[str]:
    """Non-empty data cells of a report table, row-major, skipping the footnote."""
    values: list[str] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        skip = 2 if header[:2] == ["load_level", "metric"] else 1
        for row in reader:
            if row and row[0].startswith("#"):
                continue
            values.extend(cell for cell in row[skip:] if cell != "")
    return values


_FIGURE_FILES = {
    "p95": "p95_by_load.svg",
    "tps": "tps_by_load.svg",
    "cost": "cost_by_load.svg",
    "error": "error_by_load.svg",
}


def write_bundle(
    aggregates: Sequence[AggregateSummary],
    costs: Sequence[CostRow],
    out_dir: str | Path,
    warnings: int = 0,
    extra_files: Sequence[Path] = (),
) -> ReportBundle:
    """Emit tables/, figures/, and a manifest listing every file plus an input digest."""
    out_dir = Path(out_dir)
    tables = emit_tables(aggregates, costs, out_dir / "tables")
    figures = {
        kind: emit_figure(kind, aggregates, out_dir / "figures" / filename, costs)
        for kind, filename in _FIGURE_FILES.items()
    }

    digest_input = json.dumps(
        {
            "aggregates": [
                {
                    "scenario": a.scenario,
                    "target": a.target_label,
                    "runs": a.runs,
                    "means": {k: None if v is None else round(v, 9) for k, v in sorted(a.means.items())},
                }
                for a in aggregates
            ],
            "costs": [[c.scenario, c.target_label, fmt_usd(c.estimate.total_usd)] for c in costs],
        },
        sort_keys=True,
    ).encode("utf-8")

    files = {name: str(path.relative_to(out_dir)) for name, path in tables.items()}
    files.update({f"figure_{kind}": str(path.relative_to(out_dir)) for kind, path in figures.items()})
    files.update({path.name: str(path.relative_to(out_dir)) for path in extra_files})
    manifest_path = out_dir / "manifest.json"
    manifest = {
        "tool": "posbench",
        "version": __version__,
        "files": files,
        "input_digest": hashlib.sha256(digest_input).hexdigest(),
        "warnings": warnings,
    }
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return ReportBundle(tables=tables, figures=figures, manifest=manifest_path)
