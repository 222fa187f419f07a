import csv
import json
import math
import socket
from pathlib import Path

import pytest

from propfilter import artifacts, cli
from propfilter.cli import main, parse_seeds
from propfilter.report import plot_points

GOLDEN = Path(__file__).parent / "golden"


def simulate(tmp_path, scenario, seed, name="run", *extra):
    out = tmp_path / name
    assert main(["simulate", "--scenario", scenario, "--seed", str(seed), "--out", str(out), *extra]) == 0
    return out


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_parse_seeds():
    assert parse_seeds("7") == [7]
    assert parse_seeds("0..3") == [0, 1, 2, 3]
    assert parse_seeds("1,4") == [1, 4]
    with pytest.raises(ValueError):
        parse_seeds("5..2")


def test_simulate_writes_identical_bytes(tmp_path):
    a = simulate(tmp_path, "cafe", 7, "a")
    b = simulate(tmp_path, "cafe", 7, "b")
    for name in ("metrics.csv", "events.jsonl", "summary.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


@pytest.mark.parametrize("scenario, seed", [("four-device", 0), ("cafe", 7)])
def test_golden_metrics(tmp_path, scenario, seed):
    out = simulate(tmp_path, scenario, seed)
    golden = GOLDEN / f"{scenario}-seed{seed}-metrics.csv"
    assert (out / "metrics.csv").read_text() == golden.read_text()


def test_metrics_header_is_stable(tmp_path):
    out = simulate(tmp_path, "four-device", 0)
    header = (out / "metrics.csv").read_text().splitlines()[0]
    assert header == (
        "tick,time_s,battery_mean,battery_min,battery_max,sessions_open,success,failed_range,"
        "failed_dwell,failed_probabilistic,bytes_exchanged,mean_coverage,within_coverage,"
        "cross_coverage,flow_ratio"
    )


def test_summary_has_no_external_endpoints(tmp_path):
    out = simulate(tmp_path, "four-device", 0)
    summary = json.loads((out / "summary.json").read_text())
    assert summary["external_endpoints"] == []
    assert summary["outcomes"]["success"] == 6


def test_transit_runs_without_network(tmp_path, monkeypatch):
    def refuse(*args, **kwargs):
        raise AssertionError("network access attempted")

    monkeypatch.setattr(socket, "socket", refuse)
    monkeypatch.setattr(socket, "create_connection", refuse)
    out = simulate(tmp_path, "transit", 0)
    summary = json.loads((out / "summary.json").read_text())
    assert summary["outcomes"]["success"] >= 1


def test_pedestrian_pass_never_connects(tmp_path):
    for seed in range(10):
        out = simulate(tmp_path, "pedestrian-pass", seed, f"s{seed}")
        summary = json.loads((out / "summary.json").read_text())
        assert summary["outcomes"]["success"] == 0
        assert summary["sessions_total"] >= 1


def test_sweep_row_count(tmp_path):
    grid = tmp_path / "grid.json"
    grid.write_text(json.dumps({"filter.k": [1, 5, 10]}))
    out = tmp_path / "sweep"
    assert main(["sweep", "--scenario", "cafe", "--grid", str(grid), "--seeds", "0..2", "--out", str(out)]) == 0
    rows = read_csv(out / "sweep.csv")
    assert len(rows) == 9
    assert sorted({(r["filter.k"], r["seed"]) for r in rows}) == sorted(
        (str(k), str(s)) for k in (1, 5, 10) for s in range(3)
    )


def test_sweep_without_grid_is_a_single_run(tmp_path):
    out = tmp_path / "sweep"
    assert main(["sweep", "--scenario", "four-device", "--seeds", "3", "--out", str(out)]) == 0
    rows = read_csv(out / "sweep.csv")
    assert len(rows) == 1 and rows[0]["seed"] == "3"
    assert rows[0]["success"] == "6"


def test_sweep_share_fraction_extremes(tmp_path):
    grid = tmp_path / "grid.json"
    grid.write_text(json.dumps({"filter.share_fraction": [0.0, 1.0], "duration": [1800.0]}))
    out = tmp_path / "sweep"
    assert main(["sweep", "--scenario", "two-communities", "--grid", str(grid), "--seeds", "0",
                 "--out", str(out)]) == 0
    by_share = {r["filter.share_fraction"]: r for r in read_csv(out / "sweep.csv")}
    assert by_share["0.0"]["flow_ratio"] == "inf"
    assert math.isfinite(float(by_share["1.0"]["flow_ratio"]))


def test_sweep_rejects_bad_path(tmp_path, capsys):
    grid = tmp_path / "grid.json"
    grid.write_text(json.dumps({"filter.kk": [1]}))
    assert main(["sweep", "--scenario", "cafe", "--grid", str(grid), "--out", str(tmp_path / "s")]) == 2
    assert "filter.kk" in capsys.readouterr().err


def test_sweep_parallel_matches_serial(tmp_path):
    grid = tmp_path / "grid.json"
    grid.write_text(json.dumps({"filter.k": [1, 2]}))
    serial = cli.sweep(cli.load_scenario("cafe"), cli.load_grid(grid), [0, 1], tmp_path / "a", workers=1)
    parallel = cli.sweep(cli.load_scenario("cafe"), cli.load_grid(grid), [0, 1], tmp_path / "b", workers=2)
    assert serial.read_bytes() == parallel.read_bytes()


def test_invalid_scenario_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"filter": {"k": 0}}')
    assert main(["simulate", "--scenario", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert "filter.k" in capsys.readouterr().err


def test_report_success_plot_contains_anchors(tmp_path):
    out = simulate(tmp_path, "cafe", 1)
    assert main(["report", str(out)]) == 0
    series = plot_points((out / "success_vs_distance.svg").read_text())
    clear = dict(series["without obstacles"])
    for d, p, _ in ((3.0, 1.0, 1.0), (6.0, 0.8, 0.7), (10.0, 0.2, 0.0), (12.0, 0.0, 0.0)):
        assert clear[d] == pytest.approx(p)
    blocked = dict(series["with obstacles"])
    assert blocked[6.0] == pytest.approx(0.7)


def test_report_plot_data_equals_csv(tmp_path):
    out = simulate(tmp_path, "four-device", 0, "run", "--plots")
    rows = artifacts.read_metrics(out / "metrics.csv")
    coverage = plot_points((out / "coverage.svg").read_text())["mean"]
    assert coverage == [(r["time_s"], r["mean_coverage"]) for r in rows]
    battery = plot_points((out / "battery.svg").read_text())["mean"]
    assert battery == [(r["time_s"], r["battery_mean"]) for r in rows]


def test_report_battery_slope(tmp_path, capsys):
    out = simulate(tmp_path, "four-device", 0)
    assert main(["report", str(out)]) == 0
    text = capsys.readouterr().out
    assert "slope -5.770 %/h" in text
    assert (out / "report.md").exists()


def test_report_empty_metrics_says_no_data(tmp_path, capsys):
    out = simulate(tmp_path, "four-device", 0)
    header = (out / "metrics.csv").read_text().splitlines()[0]
    (out / "metrics.csv").write_text(header + "\n")
    assert main(["report", str(out)]) == 0
    assert "no data" in capsys.readouterr().out


def test_report_missing_artifacts(tmp_path, capsys):
    (tmp_path / "empty").mkdir()
    assert main(["report", str(tmp_path / "empty")]) == 1
    assert "missing artifact" in capsys.readouterr().err


def test_report_corrupt_metrics(tmp_path, capsys):
    out = simulate(tmp_path, "four-device", 0)
    (out / "metrics.csv").write_text("tick,time_s\n1,2\n")
    assert main(["report", str(out)]) == 1
    assert "corrupt" in capsys.readouterr().err
