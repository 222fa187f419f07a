"""Markdown summaries and SVG line charts for finished runs.

Plots are drawn straight from metrics.csv and summary.json. Each polyline
carries its raw values in a ``data-points`` attribute so the plotted data can
be checked against the source files.
"""

from __future__ import annotations

import json
import re
from html import escape
from pathlib import Path

import numpy as np

from .artifacts import read_metrics, write_atomic

W, H = 640, 400
MARGIN = 60


class ReportError(Exception):
    pass


def _scale(lo: float, hi: float, a: float, b: float):
    span = hi - lo or 1.0
    return lambda v: a + (v - lo) / span * (b - a)


def line_chart(title: str, xlabel: str, ylabel: str, series: list[tuple[str, list, list]]) -> str:
    xs_all = [x for _, xs, _ in series for x in xs]
    ys_all = [y for _, _, ys in series for y in ys]
    x0, x1 = (min(xs_all), max(xs_all)) if xs_all else (0.0, 1.0)
    y0, y1 = (min(ys_all), max(ys_all)) if ys_all else (0.0, 1.0)
    if y0 == y1:
        y0, y1 = y0 - 1, y1 + 1
    sx = _scale(x0, x1, MARGIN, W - MARGIN / 2)
    sy = _scale(y0, y1, H - MARGIN, MARGIN / 2)
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"]
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f"<title>{escape(title)}</title>",
        '<rect width="100%" height="100%" fill="white"/>',
        f'<line x1="{MARGIN}" y1="{H - MARGIN}" x2="{W - MARGIN / 2}" y2="{H - MARGIN}" stroke="black"/>',
        f'<line x1="{MARGIN}" y1="{MARGIN / 2}" x2="{MARGIN}" y2="{H - MARGIN}" stroke="black"/>',
        f'<text x="{W / 2}" y="{H - 15}" text-anchor="middle" font-size="13">{escape(xlabel)}</text>',
        f'<text x="15" y="{H / 2}" text-anchor="middle" font-size="13" '
        f'transform="rotate(-90 15 {H / 2})">{escape(ylabel)}</text>',
        f'<text x="{MARGIN}" y="{H - MARGIN + 15}" font-size="11">{x0:g}</text>',
        f'<text x="{W - MARGIN / 2}" y="{H - MARGIN + 15}" text-anchor="end" font-size="11">{x1:g}</text>',
        f'<text x="{MARGIN - 5}" y="{H - MARGIN}" text-anchor="end" font-size="11">{y0:g}</text>',
        f'<text x="{MARGIN - 5}" y="{MARGIN / 2 + 5}" text-anchor="end" font-size="11">{y1:g}</text>',
    ]
    for n, (label, xs, ys) in enumerate(series):
        color = colors[n % len(colors)]
        pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys))
        raw = " ".join(f"{x!r},{y!r}" for x, y in zip(xs, ys))
        out.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="2" '
            f'data-label="{escape(label)}" data-points="{raw}" points="{pts}"/>'
        )
        out.append(f'<text x="{W - MARGIN}" y="{MARGIN / 2 + 15 * (n + 1)}" text-anchor="end" '
                   f'font-size="12" fill="{color}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def plot_points(svg: str) -> dict[str, list[tuple[float, float]]]:
    """Recover the raw series from a chart written by ``line_chart``."""
    found = {}
    for m in re.finditer(r'data-label="([^"]*)" data-points="([^"]*)"', svg):
        pairs = [p.split(",") for p in m.group(2).split()]
        found[m.group(1)] = [(float(a), float(b)) for a, b in pairs]
    return found


def battery_slope(rows: list[dict]) -> float | None:
    """Least-squares slope of mean battery level, in %/h."""
    if len(rows) < 2:
        return None
    t = np.array([r["time_s"] for r in rows]) / 3600.0
    b = np.array([r["battery_mean"] for r in rows])
    return float(np.polyfit(t, b, 1)[0])


def _load(run_dir: Path) -> tuple[list[dict], dict]:
    metrics_path = run_dir / "metrics.csv"
    summary_path = run_dir / "summary.json"
    for p in (metrics_path, summary_path):
        if not p.exists():
            raise ReportError(f"missing artifact {p}")
    try:
        rows = read_metrics(metrics_path)
        summary = json.loads(summary_path.read_text(encoding="utf-8"))
    except (ValueError, json.JSONDecodeError) as exc:
        raise ReportError(f"corrupt artifact in {run_dir}: {exc}") from None
    return rows, summary


def write_plots(run_dir: Path, rows: list[dict], summary: dict) -> list[Path]:
    run_dir = Path(run_dir)
    written = []
    if rows:
        t = [r["time_s"] for r in rows]
        series = [("mean", t, [r["mean_coverage"] or 0.0 for r in rows])]
        if any(r["within_coverage"] is not None for r in rows):
            series.append(("within community", t, [r["within_coverage"] or 0.0 for r in rows]))
        if any(r["cross_coverage"] is not None for r in rows):
            series.append(("cross community", t, [r["cross_coverage"] or 0.0 for r in rows]))
        svg = line_chart("Item coverage", "time (s)", "fraction of peers holding item", series)
        write_atomic(run_dir / "coverage.svg", svg.encode("utf-8"))
        written.append(run_dir / "coverage.svg")

        series = [
            ("mean", t, [r["battery_mean"] for r in rows]),
            ("min", t, [r["battery_min"] for r in rows]),
        ]
        svg = line_chart("Battery level", "time (s)", "battery (%)", series)
        write_atomic(run_dir / "battery.svg", svg.encode("utf-8"))
        written.append(run_dir / "battery.svg")

    curve = summary.get("success_curve") or []
    if curve:
        d = [c["distance"] for c in curve]
        series = [
            ("without obstacles", d, [c["p_no_obstacles"] for c in curve]),
            ("with obstacles", d, [c["p_obstacles"] for c in curve]),
        ]
        emp = [b for b in summary.get("success_by_distance", []) if b["sessions"]]
        if emp:
            series.append((
                "observed",
                [(b["distance_from"] + b["distance_to"]) / 2 for b in emp],
                [b["successes"] / b["sessions"] for b in emp],
            ))
        svg = line_chart("Connection success vs distance", "distance (m)", "success rate", series)
        write_atomic(run_dir / "success_vs_distance.svg", svg.encode("utf-8"))
        written.append(run_dir / "success_vs_distance.svg")
    return written


def summarize_run(run_dir: Path, rows: list[dict], summary: dict) -> str:
    lines = [f"## {summary.get('scenario', '?')} (seed {summary.get('seed', '?')})", ""]
    lines.append(f"Directory: `{run_dir}`")
    lines.append("")
    if not rows:
        lines.append("no data")
        return "\n".join(lines) + "\n"
    last = rows[-1]
    lines.append(f"- simulated time: {last['time_s']:g} s over {int(last['tick'])} ticks")
    outcomes = summary.get("outcomes", {})
    lines.append("- sessions: " + ", ".join(f"{k}={v}" for k, v in sorted(outcomes.items())))
    lines.append(f"- bytes exchanged: {summary.get('bytes_exchanged', 0)}")
    flow = summary.get("flow_ratio")
    lines.append(f"- flow ratio: {'n/a' if flow is None else flow}")
    lines.append(f"- relay reachability: {summary.get('relay_reachability', 0)}")
    slope = battery_slope(rows)
    lines.append(f"- battery: final mean {last['battery_mean']:.3f} %, slope "
                 f"{'n/a' if slope is None else f'{slope:.3f} %/h'}")
    return "\n".join(lines) + "\n"


def report(run_dirs: list[Path]) -> str:
    """Write plots and report.md into every run directory; return the
    combined markdown."""
    parts = ["# Run report", ""]
    for run_dir in map(Path, run_dirs):
        rows, summary = _load(run_dir)
        write_plots(run_dir, rows, summary)
        text = summarize_run(run_dir, rows, summary)
        write_atomic(run_dir / "report.md", text.encode("utf-8"))
        parts.append(text)
    return "\n".join(parts)
