"""Run artifacts: metrics.csv, events.jsonl and summary.json.

Column and key layouts are versioned by ``SCHEMA_VERSION``. Files are written
to a temporary sibling first and moved into place, so a reader never sees a
half-written artifact.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .engine import OUTCOMES, MetricsRecord, World, flow_ratio, relay_reachability
from .radio import success_probability

SCHEMA_VERSION = 1

METRICS_COLUMNS = (
    "tick",
    "time_s",
    "battery_mean",
    "battery_min",
    "battery_max",
    "sessions_open",
    *OUTCOMES,
    "bytes_exchanged",
    "mean_coverage",
    "within_coverage",
    "cross_coverage",
    "flow_ratio",
)

# model curve sampling for the success-vs-distance plot
CURVE_STEP_M = 0.5
CURVE_MAX_M = 14.0


def fmt(x) -> str:
    """Deterministic text form of a metric value."""
    if x is None:
        return ""
    if isinstance(x, float):
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return repr(x)
    return str(x)


def json_value(x):
    if isinstance(x, float) and not math.isfinite(x):
        return "inf" if x > 0 else None
    return x


def parse_value(text: str) -> float | None:
    if text == "":
        return None
    return float(text)


def write_atomic(path: Path, data: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def metrics_row(r: MetricsRecord) -> list[str]:
    bat = r.battery
    mean_cov = sum(r.coverage.values()) / len(r.coverage) if r.coverage else None
    return [
        fmt(r.tick),
        fmt(float(r.time)),
        fmt(sum(bat) / len(bat) if bat else None),
        fmt(min(bat) if bat else None),
        fmt(max(bat) if bat else None),
        fmt(r.sessions_open),
        *(fmt(r.outcomes[o]) for o in OUTCOMES),
        fmt(r.bytes_exchanged),
        fmt(mean_cov),
        fmt(r.within_coverage),
        fmt(r.cross_coverage),
        fmt(r.flow_ratio),
    ]


def metrics_csv(records: list[MetricsRecord]) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRICS_COLUMNS)
    for r in records:
        w.writerow(metrics_row(r))
    return buf.getvalue().encode("utf-8")


def events_jsonl(events: list[dict]) -> bytes:
    lines = [json.dumps({k: json_value(v) for k, v in ev.items()}, sort_keys=True) for ev in events]
    return ("\n".join(lines) + "\n" if lines else "").encode("utf-8")


def read_metrics(path: Path) -> list[dict[str, float | None]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return []
        missing = set(METRICS_COLUMNS) - set(reader.fieldnames)
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        return [{k: parse_value(v) for k, v in row.items()} for row in reader]


def read_events(path: Path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def success_curve(world: World) -> list[dict]:
    ds = set(np.round(np.arange(0.0, CURVE_MAX_M + 1e-9, CURVE_STEP_M), 6).tolist())
    ds.update(a[0] for a in world.radio.anchors)
    return [
        {
            "distance": d,
            "p_no_obstacles": success_probability(d, False, world.radio),
            "p_obstacles": success_probability(d, True, world.radio),
        }
        for d in sorted(ds)
    ]


def success_by_distance(events: list[dict], bin_m: float = 1.0) -> list[dict]:
    """Empirical outcome of sessions grouped by first-contact distance."""
    opened = {}
    bins: dict[int, list[int]] = {}
    for ev in events:
        key = (ev["a"], ev["b"]) if "a" in ev else None
        if ev["type"] == "session_open":
            opened[key] = ev["distance"]
        elif ev["type"] == "session_close" and key in opened:
            b = int(opened.pop(key) // bin_m)
            tally = bins.setdefault(b, [0, 0])
            tally[0] += 1
            tally[1] += ev["outcome"] == "success"
    return [
        {"distance_from": b * bin_m, "distance_to": (b + 1) * bin_m, "sessions": n, "successes": s}
        for b, (n, s) in sorted(bins.items())
    ]


def summarize(world: World, records: list[MetricsRecord], seed: int) -> dict:
    last = records[-1]
    bat = [p.energy.battery_pct for p in world.peers]
    ratio = flow_ratio(world) if len(world.communities()) >= 2 else None
    curve = []
    for r in records:
        mean_cov = sum(r.coverage.values()) / len(r.coverage) if r.coverage else None
        curve.append({
            "time_s": r.time,
            "mean": mean_cov,
            "within": r.within_coverage,
            "cross": json_value(r.cross_coverage),
        })
    return {
        "schema": SCHEMA_VERSION,
        "scenario": world.config.name,
        "seed": seed,
        "ticks": world.tick,
        "duration_s": world.time,
        "peers": len(world.peers),
        "sharing_enabled": sum(p.sharing_enabled for p in world.peers),
        "outcomes": dict(last.outcomes),
        "sessions_total": sum(last.outcomes.values()),
        "bytes_exchanged": world.bytes_exchanged,
        "flow_ratio": json_value(ratio),
        "relay_reachability": relay_reachability(world),
        "coverage_curve": curve,
        "battery": {
            "final_mean": sum(bat) / len(bat),
            "final_min": min(bat),
            "final_max": max(bat),
        },
        "success_curve": success_curve(world),
        "success_by_distance": success_by_distance(world.events),
        "external_endpoints": [],
        "config": world.config.model_dump(mode="json"),
    }


def write_run(out: Path, world: World, records: list[MetricsRecord], seed: int) -> dict:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    summary = summarize(world, records, seed)
    write_atomic(out / "metrics.csv", metrics_csv(records))
    write_atomic(out / "events.jsonl", events_jsonl(world.events))
    write_atomic(out / "summary.json", (json.dumps(summary, indent=2, sort_keys=True) + "\n").encode("utf-8"))
    return summary
