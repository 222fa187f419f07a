"""Simulate peer-to-peer preference filtering among mobile devices.

    propfilter simulate --scenario two-communities --seed 7 --out runs/a [--ticks N] [--plots]
    propfilter sweep --scenario cafe --grid grid.json --seeds 0..9 --out runs/sweep [--workers 4]
    propfilter report runs/a runs/b

Set PROPFILTER_LOG=DEBUG (or INFO, WARNING) for log output on stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import artifacts, engine, report
from .scenario import ScenarioConfig, ScenarioError, apply_overrides, load_scenario, validate_dict

log = logging.getLogger("propfilter")

SWEEP_METRICS = (
    *engine.OUTCOMES,
    "bytes_exchanged",
    "flow_ratio",
    "relay_reachability",
    "mean_coverage",
    "battery_mean",
)


def parse_seeds(text: str) -> list[int]:
    """``7`` -> [7]; ``0..9`` -> [0, ..., 9] (inclusive); ``1,4,5`` -> [1, 4, 5]."""
    if ".." in text:
        lo, hi = text.split("..", 1)
        a, b = int(lo), int(hi)
        if b < a:
            raise ValueError(f"empty seed range {text!r}")
        return list(range(a, b + 1))
    return [int(s) for s in text.split(",") if s.strip()]


def load_grid(path: Path | None) -> dict[str, list]:
    if path is None:
        return {}
    try:
        grid = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ScenarioError([("<grid>", f"cannot read {path}: {exc.strerror}")]) from None
    except json.JSONDecodeError as exc:
        raise ScenarioError([("<grid>", f"{path}: {exc}")]) from None
    if not isinstance(grid, dict) or not all(isinstance(v, list) and v for v in grid.values()):
        raise ScenarioError([("<grid>", "expected an object mapping config paths to non-empty lists")])
    return grid


def grid_points(grid: dict[str, list]) -> list[dict]:
    keys = sorted(grid)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]


def simulate(config: ScenarioConfig, seed: int, out: Path, ticks: int | None = None,
             plots: bool = False) -> dict:
    world, records = engine.run(config, seed, ticks=ticks)
    summary = artifacts.write_run(out, world, records, seed)
    if plots or config.output.plots:
        rows = artifacts.read_metrics(Path(out) / "metrics.csv")
        report.write_plots(Path(out), rows, summary)
    return summary


def _sweep_one(job: tuple[int, dict, int, dict]) -> tuple[int, int, dict]:
    index, point, seed, config_data = job
    config = apply_overrides(validate_dict(config_data), point)
    world, records = engine.run(config, seed)
    last = records[-1]
    bat = [p.energy.battery_pct for p in world.peers]
    flow = engine.flow_ratio(world) if len(world.communities()) >= 2 else None
    row = {
        **{o: last.outcomes[o] for o in engine.OUTCOMES},
        "bytes_exchanged": world.bytes_exchanged,
        "flow_ratio": flow,
        "relay_reachability": engine.relay_reachability(world),
        "mean_coverage": sum(last.coverage.values()) / len(last.coverage) if last.coverage else None,
        "battery_mean": sum(bat) / len(bat),
    }
    return index, seed, row


def sweep(config: ScenarioConfig, grid: dict[str, list], seeds: list[int], out: Path,
          workers: int = 1) -> Path:
    """Run every (grid point, seed) pair and write sweep.csv; one row each."""
    points = grid_points(grid)
    for p in points:
        apply_overrides(config, p)  # reject bad paths before any run starts
    data = config.model_dump(mode="json")
    jobs = [(i, p, s, data) for i, p in enumerate(points) for s in seeds]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_one, jobs))
    else:
        results = [_sweep_one(j) for j in jobs]
    results.sort(key=lambda r: (r[0], r[1]))
    keys = sorted(grid)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([*keys, "seed", *SWEEP_METRICS])
    for index, seed, row in results:
        point = points[index]
        w.writerow([*(json.dumps(point[k]) for k in keys), seed,
                    *(artifacts.fmt(row[m]) for m in SWEEP_METRICS)])
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "sweep.csv"
    artifacts.write_atomic(path, buf.getvalue().encode("utf-8"))
    return path


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="propfilter", description=__doc__.split("\n\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run one scenario")
    sim.add_argument("--scenario", required=True, help="preset name or path to a scenario JSON file")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out", type=Path, required=True)
    sim.add_argument("--ticks", type=int, default=None, help="override the number of ticks")
    sim.add_argument("--plots", action="store_true", help="also write SVG plots")

    sw = sub.add_parser("sweep", help="run a parameter grid over several seeds")
    sw.add_argument("--scenario", required=True)
    sw.add_argument("--grid", type=Path, default=None, help="JSON object of config path -> list of values")
    sw.add_argument("--seeds", default="0")
    sw.add_argument("--out", type=Path, required=True)
    sw.add_argument("--workers", type=int, default=1)

    rp = sub.add_parser("report", help="summarize finished runs and draw plots")
    rp.add_argument("dirs", nargs="+", type=Path)
    return ap


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("PROPFILTER_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            config = load_scenario(args.scenario)
            if args.ticks is not None and args.ticks < 1:
                raise ScenarioError([("--ticks", "must be >= 1")])
            summary = simulate(config, args.seed, args.out, args.ticks, args.plots)
            print(f"wrote {args.out} ({summary['ticks']} ticks, "
                  f"{summary['outcomes'].get('success', 0)} successful sessions)")
        elif args.command == "sweep":
            config = load_scenario(args.scenario)
            path = sweep(config, load_grid(args.grid), parse_seeds(args.seeds), args.out, args.workers)
            print(f"wrote {path}")
        else:
            print(report.report(args.dirs))
    except ScenarioError as exc:
        for key, msg in exc.errors:
            print(f"error: {key}: {msg}", file=sys.stderr)
        return 2
    except report.ReportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc.filename or ''}: {exc.strerror}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
