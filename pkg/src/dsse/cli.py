"""Command-line entry point.

Every command writes delimited tables, SVG figures and a ``manifest.json``
holding the resolved configuration, so ``dsse report --rerun`` can rebuild
the tables from the manifest alone.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import filecmp
import json
import sys
import tempfile
from importlib import resources
from pathlib import Path

import numpy as np

from . import plotting
from .estimator import EstimatorOptions
from .experiments import (
    DEFAULT_DELTAS,
    DEFAULT_NOISE,
    WORKERS_ENV,
    Study,
    coverage_groups,
    run_batch,
    spec_records,
    sweep_coverage,
    sweep_variance,
)
from .feeder import FeederError
from .measurement import load_sensor_file, with_sigma
from .powerflow import PowerFlowError, solve_power_flow
from .profiles import SUMMER_WEEK, ProfileError

COMMANDS = ("powerflow", "estimate", "sweep-variance", "sweep-coverage", "report")
TABLES = {
    "powerflow": ("magnitudes.csv", "angles.csv"),
    "estimate": ("node_errors.csv", "summary.csv"),
    "sweep-variance": ("sweep.csv", "runs.csv"),
    "sweep-coverage": ("sweep.csv", "runs.csv"),
}


class UsageError(Exception):
    pass


# argument handling ------------------------------------------------------


def _window(text: str) -> list[int]:
    try:
        start, stop = (int(t) for t in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"window must look like start:stop, got {text!r}") from None
    if not 0 <= start < stop:
        raise argparse.ArgumentTypeError(f"window {text!r} is empty or negative")
    return [start, stop]


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--feeder", default="case33", help="feeder JSON path or bundled name")
    common.add_argument("--load-profile", default="load_multiplier", help="load multiplier file or bundled name")
    common.add_argument("--pv-profile", default="pv_hinesburg_synthetic", help="PV profile file or bundled name")
    common.add_argument("--c", type=float, default=0.05, help="load perturbation half-width as a fraction of the multiplier")
    common.add_argument("--pv-peak", type=float, default=None, help="PV peak after normalization (default: load peak)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--window", type=_window, default=[SUMMER_WEEK.start, SUMMER_WEEK.stop],
                        help="scenario hours start:stop (default: summer week)")
    common.add_argument("--out", type=Path, default=Path("dsse-out"), help="output directory")

    est = argparse.ArgumentParser(add_help=False)
    est.add_argument("--sensors", default="none", help="sensor placement file, bundled name, or 'none'")
    est.add_argument("--v-min", type=float, default=0.8)
    est.add_argument("--v-max", type=float, default=1.1)
    est.add_argument("--max-iter", type=int, default=100)

    p = argparse.ArgumentParser(
        prog="dsse",
        description="State estimation experiments on radial distribution feeders.",
        epilog=f"Set {WORKERS_ENV}=N to estimate scenarios in N worker processes.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    pf = sub.add_parser("powerflow", parents=[common], help="true voltages for every scenario in the window")
    pf.add_argument("--no-load", action="store_true", help="solve with all injections set to zero")
    pf.add_argument("--skip-diverged", action="store_true", help="drop diverged scenarios instead of failing")

    e = sub.add_parser("estimate", parents=[common, est], help="state estimates and node errors over the window")
    e.add_argument("--noise", type=float, default=None, help="override every sensor sigma")
    e.add_argument("--stats-window", type=_window, default=None,
                   help="hours for pseudo-measurement statistics (default: whole year)")

    sv = sub.add_parser("sweep-variance", parents=[common, est], help="p95 error against pseudo-covariance scaling")
    sv.add_argument("--noise", type=_floats, default=list(DEFAULT_NOISE))
    sv.add_argument("--grid", type=_floats, default=list(DEFAULT_DELTAS), help="variance deviations in percent")
    sv.add_argument("--runs", type=int, default=1, help="reseeded repetitions (seeds seed..seed+runs-1)")

    sc = sub.add_parser("sweep-coverage", parents=[common, est], help="p95 error as sensors are added from the feeder head")
    sc.add_argument("--noise", type=_floats, default=list(DEFAULT_NOISE))
    sc.add_argument("--grid", type=int, default=None, help="number of sensor groups to add (default: all)")
    sc.add_argument("--per-group", type=int, default=None,
                    help="nodes per group when --sensors has no groups (default 3 on multi-phase feeders, else 2)")
    sc.add_argument("--runs", type=int, default=1)

    r = sub.add_parser("report", help="re-render figures for an output directory")
    r.add_argument("--out", type=Path, required=True, help="directory holding manifest.json")
    r.add_argument("--rerun", action="store_true", help="recompute the tables from the manifest and compare")
    return p


def _exists_or_bundled(value: str, package: str, suffix: str, what: str) -> None:
    if Path(value).exists():
        return
    if (resources.files(package) / f"{value}{suffix}").is_file():
        return
    raise UsageError(f"{what} not found: {value}")


def config_from_args(args) -> dict:
    """Validate paths and resolve the namespace into a JSON-serializable config."""
    _exists_or_bundled(args.feeder, "dsse.data.feeders", ".json", "feeder")
    _exists_or_bundled(args.load_profile, "dsse.data.profiles", ".txt", "load profile")
    _exists_or_bundled(args.pv_profile, "dsse.data.profiles", ".txt", "PV profile")
    if args.c < 0:
        raise UsageError("--c must be non-negative")
    if args.window[1] > 8760:
        raise UsageError("--window must lie within the 8760 hours of the year")
    cfg = {k: v for k, v in vars(args).items() if k != "out"}
    sensors = getattr(args, "sensors", "none")
    if sensors != "none":
        _exists_or_bundled(sensors, "dsse.data.sensors", ".json", "sensor file")
    if getattr(args, "runs", 1) < 1:
        raise UsageError("--runs must be at least 1")
    if args.command == "sweep-variance" and any(d <= -100 for d in args.grid):
        raise UsageError("--grid values must exceed -100")
    if args.command == "sweep-variance" and sorted(set(args.grid)) != list(args.grid):
        raise UsageError("--grid values must be strictly increasing")
    if args.command == "sweep-coverage" and args.grid is not None and args.grid < 0:
        raise UsageError("--grid must be non-negative")
    if getattr(args, "stats_window", None) and args.stats_window[1] > 8760:
        raise UsageError("--stats-window must lie within the year")
    return cfg


# execution ----------------------------------------------------------------


def _study(cfg) -> Study:
    return Study.from_files(cfg["feeder"], cfg["load_profile"], cfg["pv_profile"], cfg["c"], cfg["pv_peak"])


def _options(cfg) -> EstimatorOptions:
    return EstimatorOptions(v_min=cfg["v_min"], v_max=cfg["v_max"], max_iter=cfg["max_iter"])


def _num(x) -> str:
    return repr(float(x))


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _write_manifest(out: Path, manifest: dict) -> None:
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _sensor_doc(cfg, study):
    if cfg.get("sensors", "none") == "none":
        return {"sensors": [], "groups": []}
    try:
        return load_sensor_file(cfg["sensors"], study.model)
    except (ValueError, KeyError) as exc:
        raise UsageError(f"invalid sensor file {cfg['sensors']}: {exc}") from None


def run_powerflow(cfg, out: Path) -> int:
    study = _study(cfg)
    m = study.model
    hours = range(*cfg["window"])
    labels = [n.label for n in m.nodes]
    mags, angs, kept, diverged = [], [], [], []
    for k in hours:
        try:
            if cfg["no_load"]:
                st = solve_power_flow(m, study.Y, np.zeros(m.n_nodes, dtype=complex))
            else:
                st = study.truth(k, cfg["seed"])
        except PowerFlowError as exc:
            print(f"hour {k}: power flow diverged ({exc})", file=sys.stderr)
            diverged.append(k)
            continue
        kept.append(k)
        mags.append(st.magnitudes)
        angs.append(st.angles)
    if diverged and not cfg["skip_diverged"]:
        print(f"{len(diverged)} scenario(s) diverged; rerun with --skip-diverged to drop them", file=sys.stderr)
        return 1
    _write_csv(out / "magnitudes.csv", ["hour", *labels], [[k, *map(_num, v)] for k, v in zip(kept, mags)])
    _write_csv(out / "angles.csv", ["hour", *labels], [[k, *map(_num, v)] for k, v in zip(kept, angs)])
    if kept:
        plotting.voltage_series(kept, np.array(mags), labels, out / "voltages.svg",
                                title=f"{study.describe()['feeder']} node voltages")
    _write_manifest(out, {"command": "powerflow", "config": cfg, "model": study.describe(),
                          "scenarios": len(kept), "diverged": diverged})
    print(f"wrote {len(kept)} scenarios x {m.n_nodes} nodes to {out}")
    return 0


def run_estimate(cfg, out: Path) -> int:
    study = _study(cfg)
    m = study.model
    sensors = _sensor_doc(cfg, study)["sensors"]
    if cfg["noise"] is not None:
        sensors = with_sigma(sensors, cfg["noise"])
    sw = cfg["stats_window"]
    stats = study.stats(cfg["seed"], None if sw is None else range(*sw))
    res = run_batch(study, range(*cfg["window"]), sensors, stats, _options(cfg), cfg["seed"])
    rows = []
    for k, err, est in zip(res.indices, res.errors, res.estimates):
        truth = study.truth(k, cfg["seed"])
        for nd in m.nodes:
            i = nd.index
            rows.append([k, nd.label, _num(truth.magnitudes[i]), _num(est.magnitudes[i]),
                         _num(est.angles[i]), _num(err[i])])
    _write_csv(out / "node_errors.csv", ["hour", "node", "v_true", "v_hat", "angle_hat", "error_pct"], rows)
    summary = [
        ["p95_error_pct", _num(res.p95)],
        ["scenarios", len(res.indices)],
        ["flagged", len(res.flagged)],
        ["sensors", len(sensors)],
        ["mean_iterations", _num(np.mean(res.iterations))],
    ]
    _write_csv(out / "summary.csv", ["metric", "value"], summary)
    plotting.error_histogram(res.errors, res.p95, out / "errors.svg",
                             title=f"{study.describe()['feeder']}, {len(sensors)} sensor readings")
    _write_manifest(out, {"command": "estimate", "config": cfg, "model": study.describe(),
                          "sensors": spec_records(sensors), "options": _options(cfg).__dict__,
                          "flagged": res.flagged})
    print(f"p95 node error {res.p95:.4f}% over {len(res.indices)} scenarios ({len(res.flagged)} flagged)")
    return 0


def _write_sweep(out: Path, cfg, result, xlabel: str) -> None:
    _write_csv(out / "sweep.csv", [result.axis_name, "noise", "p95_error_pct", "p95_std"],
               [[g, s, _num(p), _num(sd)] for g, s, p, sd in result.rows()])
    seeds = result.manifest["seeds"]
    runs = []
    for a, seed in enumerate(seeds):
        for i, g in enumerate(result.axis):
            for j, s in enumerate(result.noise_levels):
                runs.append([seed, g, s, _num(result.runs[a, i, j])])
    _write_csv(out / "runs.csv", ["seed", result.axis_name, "noise", "p95_error_pct"], runs)
    plotting.sweep_lines(result.axis, result.noise_levels, result.p95, result.p95_std,
                         out / "sweep.svg", xlabel, title=result.manifest["feeder"])
    _write_manifest(out, {"command": cfg["command"], "config": cfg, "sweep": result.manifest})


def run_sweep_variance(cfg, out: Path) -> int:
    study = _study(cfg)
    sensors = _sensor_doc(cfg, study)["sensors"]
    seeds = tuple(range(cfg["seed"], cfg["seed"] + cfg["runs"]))
    result = sweep_variance(study, range(*cfg["window"]), sensors, cfg["grid"], cfg["noise"], seeds, _options(cfg))
    _write_sweep(out, cfg, result, "pseudo-measurement variance deviation (%)")
    print(f"variance sweep: {len(result.axis)} x {len(result.noise_levels)} table written to {out}")
    return 0


def run_sweep_coverage(cfg, out: Path) -> int:
    study = _study(cfg)
    groups = _sensor_doc(cfg, study)["groups"]
    if not groups:
        per = cfg["per_group"]
        if per is None:
            per = 3 if any(len(b.phases) > 1 for b in study.model.buses) else 2
        groups = coverage_groups(study.model, per)
    if cfg["grid"] is not None:
        if cfg["grid"] > len(groups):
            raise UsageError(f"--grid {cfg['grid']} exceeds the {len(groups)} available sensor groups")
        groups = groups[: cfg["grid"]]
    seeds = tuple(range(cfg["seed"], cfg["seed"] + cfg["runs"]))
    result = sweep_coverage(study, range(*cfg["window"]), groups, cfg["noise"], seeds, _options(cfg))
    _write_sweep(out, cfg, result, "sensor groups added from the feeder head")
    print(f"coverage sweep: {len(result.axis)} x {len(result.noise_levels)} table written to {out}")
    return 0


RUNNERS = {
    "powerflow": run_powerflow,
    "estimate": run_estimate,
    "sweep-variance": run_sweep_variance,
    "sweep-coverage": run_sweep_coverage,
}


def _read_csv(path: Path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def run_report(out: Path, rerun: bool) -> int:
    mpath = out / "manifest.json"
    if not mpath.is_file():
        raise UsageError(f"no manifest.json in {out}")
    manifest = json.loads(mpath.read_text())
    cmd = manifest.get("command")
    if cmd not in RUNNERS:
        raise UsageError(f"manifest names unknown command {cmd!r}")
    cfg = manifest["config"]

    if cmd == "powerflow":
        header, rows = _read_csv(out / "magnitudes.csv")
        if rows:
            mags = np.array([[float(v) for v in r[1:]] for r in rows])
            plotting.voltage_series([int(r[0]) for r in rows], mags, header[1:], out / "voltages.svg",
                                    title=f"{manifest['model']['feeder']} node voltages")
        lines = [f"power flow, {len(rows)} scenarios, {len(header) - 1} nodes"]
        if rows:
            lines.append(f"min |V| {mags.min():.4f} p.u., max |V| {mags.max():.4f} p.u.")
    elif cmd == "estimate":
        _, rows = _read_csv(out / "node_errors.csv")
        errors = np.array([float(r[5]) for r in rows])
        summary = dict(_read_csv(out / "summary.csv")[1])
        p95 = float(summary["p95_error_pct"])
        plotting.error_histogram(errors, p95, out / "errors.svg", title=manifest["model"]["feeder"])
        lines = [f"{k}: {v}" for k, v in summary.items()]
    else:
        header, rows = _read_csv(out / "sweep.csv")
        axis = list(dict.fromkeys(float(r[0]) for r in rows))
        noise = list(dict.fromkeys(float(r[1]) for r in rows))
        p95 = np.array([float(r[2]) for r in rows]).reshape(len(axis), len(noise))
        std = np.array([float(r[3]) for r in rows]).reshape(len(axis), len(noise))
        xlabel = "pseudo-measurement variance deviation (%)" if cmd == "sweep-variance" else "sensor groups added"
        plotting.sweep_lines(axis, noise, p95, std, out / "sweep.svg", xlabel, title=manifest["sweep"]["feeder"])
        lines = [",".join(header)] + [",".join(r) for r in rows]
    (out / "report.txt").write_text("\n".join([f"command: {cmd}", *lines]) + "\n")
    print("\n".join(lines))

    if rerun:
        with tempfile.TemporaryDirectory() as tmp:
            code = RUNNERS[cmd](cfg, Path(tmp))
            if code:
                return code
            differ = [t for t in TABLES[cmd] if not filecmp.cmp(out / t, Path(tmp) / t, shallow=False)]
        if differ:
            print(f"rerun differs from stored tables: {', '.join(differ)}", file=sys.stderr)
            return 1
        print("rerun reproduces the stored tables")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "report":
            return run_report(args.out, args.rerun)
        cfg = config_from_args(args)
        args.out.mkdir(parents=True, exist_ok=True)
        return RUNNERS[args.command](cfg, args.out)
    except UsageError as exc:
        print(f"dsse: error: {exc}", file=sys.stderr)
        return 2
    except (FeederError, ProfileError, json.JSONDecodeError) as exc:
        print(f"dsse: error: invalid input: {exc}", file=sys.stderr)
        return 2
    except (PowerFlowError, RuntimeError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"dsse: failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
