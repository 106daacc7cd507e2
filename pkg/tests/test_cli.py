import csv
import json
from importlib import resources

import numpy as np
import pytest

from dsse.cli import main

SHORT = ["--window", "4380:4384"]


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_powerflow_table(tmp_path):
    out = tmp_path / "pf"
    assert main(["powerflow", "--feeder", "ieee13_simplified", "--out", str(out)]) == 0
    rows = read_csv(out / "magnitudes.csv")
    assert len(rows) == 1 + 168
    assert len(rows[0]) == 1 + 35
    assert (out / "voltages.svg").read_text().startswith("<?xml")
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["seed"] == 0
    assert manifest["diverged"] == []


def test_no_load_flat(tmp_path):
    out = tmp_path / "pf"
    assert main(["powerflow", "--no-load", *SHORT, "--out", str(out)]) == 0
    mags = np.array([[float(v) for v in r[1:]] for r in read_csv(out / "magnitudes.csv")[1:]])
    np.testing.assert_allclose(mags, 1.0, atol=1e-12)


def test_diverged_scenarios(tmp_path, capsys):
    doc = json.loads((resources.files("dsse.data.feeders") / "case33.json").read_text())
    for load in doc["loads"]:
        load["p_kw"] *= 30
        load["q_kvar"] *= 30
    feeder = tmp_path / "heavy.json"
    feeder.write_text(json.dumps(doc))
    args = ["powerflow", "--feeder", str(feeder), "--window", "4392:4394"]
    assert main([*args, "--out", str(tmp_path / "a")]) == 1
    assert "diverged" in capsys.readouterr().err
    assert main([*args, "--skip-diverged", "--out", str(tmp_path / "b")]) == 0
    manifest = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert manifest["diverged"]


@pytest.mark.parametrize(
    "argv",
    [
        ["powerflow", "--load-profile", "/no/such/file.txt"],
        ["powerflow", "--feeder", "/no/such/feeder.json"],
        ["estimate", "--sensors", "/no/such/sensors.json"],
        ["estimate", "--window", "10:5"],
        ["estimate", "--window", "0:9000"],
        ["sweep-variance", "--grid", "-100,0"],
        ["sweep-variance", "--grid", "50,0"],
        ["report", "--out", "/no/such/dir"],
        ["frobnicate"],
    ],
)
def test_usage_errors(argv, tmp_path):
    if "--out" not in argv:
        argv = [*argv, "--out", str(tmp_path)] if argv[0] != "frobnicate" else argv
    assert main(argv) == 2


def test_invalid_feeder_document(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"buses": [')
    assert main(["powerflow", "--feeder", str(bad), "--out", str(tmp_path / "o")]) == 2


def test_estimate_report_deterministic(tmp_path):
    args = ["estimate", "--sensors", "case33_sparse", *SHORT]
    assert main([*args, "--out", str(tmp_path / "a")]) == 0
    assert main([*args, "--out", str(tmp_path / "b")]) == 0
    for name in ("node_errors.csv", "summary.csv", "errors.svg", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    summary = dict(read_csv(tmp_path / "a" / "summary.csv")[1:])
    assert float(summary["p95_error_pct"]) < 2
    assert int(summary["sensors"]) == 8


def test_pseudo_only_estimate(tmp_path):
    assert main(["estimate", "--sensors", "none", *SHORT, "--out", str(tmp_path)]) == 0
    summary = dict(read_csv(tmp_path / "summary.csv")[1:])
    assert int(summary["sensors"]) == 0


def test_noise_override_recorded(tmp_path):
    assert main(["estimate", "--sensors", "case33_sparse", "--noise", "0.001", *SHORT, "--out", str(tmp_path)]) == 0
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert all(rec["sigma"] == [0.001] for rec in manifest["sensors"])


def test_variance_grid_zero_matches_estimate(tmp_path):
    sw = tmp_path / "sw"
    est = tmp_path / "est"
    assert main(["sweep-variance", "--sensors", "case33_sparse", "--grid", "0", "--noise", "0.005",
                 *SHORT, "--out", str(sw)]) == 0
    assert main(["estimate", "--sensors", "case33_sparse", "--noise", "0.005", "--stats-window", "4380:4384",
                 *SHORT, "--out", str(est)]) == 0
    table = read_csv(sw / "sweep.csv")
    assert len(table) == 2
    summary = dict(read_csv(est / "summary.csv")[1:])
    assert table[1][2] == summary["p95_error_pct"]


def test_coverage_grid_zero_matches_pseudo_only(tmp_path):
    cov = tmp_path / "cov"
    est = tmp_path / "est"
    assert main(["sweep-coverage", "--grid", "0", "--noise", "0.005", *SHORT, "--out", str(cov)]) == 0
    assert main(["estimate", "--sensors", "none", *SHORT, "--out", str(est)]) == 0
    table = read_csv(cov / "sweep.csv")
    assert table[1][2] == dict(read_csv(est / "summary.csv")[1:])["p95_error_pct"]


def test_coverage_grid_too_large(tmp_path):
    assert main(["sweep-coverage", "--grid", "99", *SHORT, "--out", str(tmp_path)]) == 2


def test_sweep_table_shape_and_report(tmp_path):
    out = tmp_path / "sv"
    assert main(["sweep-variance", "--sensors", "case33_sparse", "--window", "4380:4382", "--out", str(out)]) == 0
    rows = read_csv(out / "sweep.csv")
    assert len(rows) == 1 + 7 * 3
    assert rows[0] == ["variance_deviation_pct", "noise", "p95_error_pct", "p95_std"]
    svg = (out / "sweep.svg").read_bytes()
    assert main(["report", "--out", str(out), "--rerun"]) == 0
    assert (out / "sweep.svg").read_bytes() == svg
    assert (out / "report.txt").is_file()


def test_report_detects_tampering(tmp_path):
    out = tmp_path / "est"
    assert main(["estimate", *SHORT, "--out", str(out)]) == 0
    path = out / "summary.csv"
    path.write_text(path.read_text().replace("scenarios,4", "scenarios,5"))
    assert main(["report", "--out", str(out), "--rerun"]) == 1


def test_sensor_file_with_groups(tmp_path):
    sensors = tmp_path / "order.json"
    sensors.write_text(json.dumps({"groups": [["632"], ["671", "680"]], "kinds": ["vmag"]}))
    out = tmp_path / "cov"
    argv = ["sweep-coverage", "--feeder", "ieee13_simplified", "--sensors", str(sensors),
            "--noise", "0.005", "--window", "4380:4382", "--out", str(out)]
    assert main(argv) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["sweep"]["group_labels"] == [["632"], ["671", "680"]]
    assert len(read_csv(out / "sweep.csv")) == 1 + 3
