"""Error metric, batch estimation over scenario windows, and the two sensitivity sweeps."""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .estimator import EstimatorOptions, estimate
from .feeder import NetworkModel, bfs_bus_order, build_admittance, load_feeder
from .measurement import (
    MeasurementKind,
    MeasurementSet,
    MeasurementSpec,
    attach_pseudo,
    attach_zero_injections,
    empty_set,
    simulate_sensors,
    with_sigma,
)
from .powerflow import PowerFlowError, VoltageState, solve_power_flow
from .profiles import (
    PseudoStats,
    TimeSeries,
    build_scenario,
    load_profile,
    normalize_pv,
    pseudo_stats,
)

WORKERS_ENV = "DSSE_WORKERS"
ZERO_INJECTION_SIGMA = 1e-4
# weight used for sensors declared noiseless, which keeps Sigma positive definite
NOISELESS_SIGMA = 1e-6
DEFAULT_DELTAS = (-75.0, -50.0, -25.0, 0.0, 50.0, 100.0, 200.0)
DEFAULT_NOISE = (0.001, 0.005, 0.01)


def node_error(v_true, v_hat) -> np.ndarray:
    """Per-node percentage voltage-magnitude error |v - v_hat| / |v| * 100."""
    v_true = np.abs(np.asarray(v_true, dtype=float))
    v_hat = np.asarray(v_hat, dtype=float)
    if v_true.shape != v_hat.shape:
        raise ValueError("v_true and v_hat differ in length")
    if np.any(v_true == 0):
        raise ValueError("true voltage magnitude is zero")
    return np.abs(v_true - v_hat) / v_true * 100.0


def percentile(values, p: float) -> float:
    """Nearest-rank percentile: the ceil(p/100 * n)-th smallest value."""
    v = np.sort(np.asarray(values, dtype=float).ravel())
    if v.size == 0:
        raise ValueError("percentile of an empty sample")
    if not 0 <= p <= 100:
        raise ValueError("p must lie in [0, 100]")
    rank = max(1, math.ceil(p / 100.0 * v.size))
    return float(v[rank - 1])


@dataclass
class Study:
    """Feeder plus yearlong profiles: the fixed inputs of every experiment."""

    model: NetworkModel
    load: TimeSeries
    pv: TimeSeries
    c: float = 0.05
    feeder_name: str = ""
    load_name: str = ""
    pv_name: str = ""
    pv_peak: float | None = None
    Y: np.ndarray = field(init=False, repr=False)
    _truth: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        self.Y = build_admittance(self.model).Y

    @classmethod
    def from_files(cls, feeder="case33", load="load_multiplier", pv="pv_hinesburg_synthetic",
                   c: float = 0.05, pv_peak: float | None = None) -> "Study":
        L = load_profile(load, yearlong=True)
        S_raw = load_profile(pv, yearlong=True)
        peak = float(L.values.max()) if pv_peak is None else pv_peak
        return cls(load_feeder(feeder), L, normalize_pv(S_raw, peak), c,
                   str(feeder), str(load), str(pv), pv_peak)

    def scenario(self, k: int, seed: int):
        return build_scenario(k, self.load, self.pv, self.c, seed, self.model)

    def scenarios(self, indices, seed: int):
        return [self.scenario(k, seed) for k in indices]

    def stats(self, seed: int, window=None) -> PseudoStats:
        """Pseudo-measurement statistics over ``window`` (full year when None)."""
        idx = range(len(self.load)) if window is None else window
        return pseudo_stats(self.scenarios(idx, seed))

    def truth(self, k: int, seed: int) -> VoltageState:
        key = (k, seed)
        if key not in self._truth:
            sc = self.scenario(k, seed)
            self._truth[key] = solve_power_flow(self.model, self.Y, sc.injections)
        return self._truth[key]

    def describe(self) -> dict:
        return {
            "feeder": self.feeder_name or self.model.name,
            "load_profile": self.load_name,
            "pv_profile": self.pv_name,
            "pv_peak": self.pv_peak,
            "c": self.c,
        }


@dataclass
class BatchResult:
    indices: list[int]
    errors: np.ndarray
    estimates: list[VoltageState]
    p95: float
    flagged: list[int]
    iterations: list[int]


def measurement_set(study: Study, k: int, seed: int, sensors, pstats: PseudoStats):
    """Sensor readings at truth plus pseudo and zero-injection measurements for scenario k."""
    model = study.model
    truth = study.truth(k, seed)
    if sensors:
        mset = simulate_sensors(truth, sensors, [seed, k], model, study.Y)
        mset = MeasurementSet(mset.specs, mset.z, np.maximum(mset.sigma, NOISELESS_SIGMA))
    else:
        mset = empty_set()
    mset = attach_pseudo(mset, pstats, model.free_nodes, model)
    return attach_zero_injections(mset, model, ZERO_INJECTION_SIGMA)


def _solve_one(study: Study, k: int, seed: int, sensors, pstats, options):
    try:
        truth = study.truth(k, seed)
    except PowerFlowError:
        return k, None, None, 0
    mset = measurement_set(study, k, seed, sensors, pstats)
    res = estimate(study.model, study.Y, mset, options)
    if not res.converged:
        return k, None, None, res.iterations
    return k, node_error(truth.magnitudes, res.V_hat.magnitudes), res.V_hat, res.iterations


def _solve_chunk(args):
    study, ks, seed, sensors, pstats, options = args
    return [_solve_one(study, k, seed, sensors, pstats, options) for k in ks]


def _workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def run_batch(
    study: Study,
    window,
    sensors,
    pstats: PseudoStats,
    options: EstimatorOptions | None = None,
    seed: int = 0,
) -> BatchResult:
    """Estimate every scenario in ``window`` and pool the node errors.

    Per scenario: power-flow truth, noisy sensor readings, pseudo and
    zero-injection measurements, WLS estimate, %NodeError. Scenarios whose
    truth or estimate fails to converge are flagged and left out of the pool.
    """
    window = list(window)
    if not window:
        raise ValueError("empty scenario window")
    options = options or EstimatorOptions()
    sensors = tuple(sensors or ())
    workers = _workers()
    if workers > 1 and len(window) > 1:
        chunks = [window[i::workers] for i in range(workers)]
        with ProcessPoolExecutor(workers) as pool:
            parts = pool.map(_solve_chunk, [(study, ch, seed, sensors, pstats, options) for ch in chunks])
            out = {r[0]: r for part in parts for r in part}
        results = [out[k] for k in window]
    else:
        results = [_solve_one(study, k, seed, sensors, pstats, options) for k in window]

    kept = [r for r in results if r[1] is not None]
    flagged = [r[0] for r in results if r[1] is None]
    if not kept:
        raise RuntimeError("no scenario in the window converged")
    errors = np.array([r[1] for r in kept])
    return BatchResult(
        indices=[r[0] for r in kept],
        errors=errors,
        estimates=[r[2] for r in kept],
        p95=percentile(errors, 95),
        flagged=flagged,
        iterations=[r[3] for r in results],
    )


@dataclass
class SweepResult:
    axis_name: str
    axis: list
    noise_levels: list[float]
    p95: np.ndarray
    p95_std: np.ndarray
    runs: np.ndarray
    manifest: dict

    def rows(self):
        """(grid value, noise level, mean p95, std p95) in grid order."""
        for i, g in enumerate(self.axis):
            for j, s in enumerate(self.noise_levels):
                yield g, s, float(self.p95[i, j]), float(self.p95_std[i, j])


def _window_manifest(window) -> list[int]:
    w = list(window)
    if w == list(range(w[0], w[-1] + 1)):
        return [w[0], w[-1] + 1]
    return w


def _window_from_manifest(w):
    return range(w[0], w[1]) if len(w) == 2 else list(w)


def spec_records(specs) -> list[dict]:
    out = []
    for s in specs:
        rec = {"kind": s.kind.value, "bus": s.bus, "phase": s.phase.value, "sigma": list(s.sigma)}
        if s.to_bus is not None:
            rec["to_bus"] = s.to_bus
        out.append(rec)
    return out


def _specs_from_records(records) -> list[MeasurementSpec]:
    return [
        MeasurementSpec(r["kind"], r["bus"], r["phase"], tuple(r["sigma"]), to_bus=r.get("to_bus"))
        for r in records
    ]


def sweep_variance(
    study: Study,
    window,
    sensors,
    deltas=DEFAULT_DELTAS,
    noise_levels=DEFAULT_NOISE,
    seeds=(0,),
    options: EstimatorOptions | None = None,
) -> SweepResult:
    """p95 error when the pseudo covariances are (1 + delta/100) times the window sample covariances."""
    deltas = [float(d) for d in deltas]
    if any(d <= -100 for d in deltas):
        raise ValueError("variance deviations must exceed -100%")
    if sorted(set(deltas)) != deltas:
        raise ValueError("deltas must be strictly increasing")
    options = options or EstimatorOptions()
    window = list(window)
    runs = np.zeros((len(seeds), len(deltas), len(noise_levels)))
    for a, seed in enumerate(seeds):
        sample = study.stats(seed, window)
        for j, noise in enumerate(noise_levels):
            specs = with_sigma(sensors, noise)
            for i, d in enumerate(deltas):
                pst = sample.scaled(1 + d / 100.0)
                runs[a, i, j] = run_batch(study, window, specs, pst, options, seed).p95
    manifest = {
        "kind": "variance",
        **study.describe(),
        "window": _window_manifest(window),
        "seeds": list(seeds),
        "deltas": deltas,
        "noise_levels": list(noise_levels),
        "sensors": spec_records(sensors),
        "options": asdict(options),
        "pseudo_stats": "window sample",
    }
    return _sweep_result("variance_deviation_pct", deltas, noise_levels, runs, manifest)


def coverage_groups(model: NetworkModel, per_group: int, kinds=("vmag", "vangle"), sigma: float = 0.005):
    """Voltage sensors on non-reference nodes taken ``per_group`` nodes at a time.

    Nodes are visited bus by bus in breadth-first order from the reference
    bus, phases in A, B, C order, so the first group sits at the feeder head.
    """
    if per_group < 1:
        raise ValueError("per_group must be at least 1")
    nodes = [(bus, ph) for bus in bfs_bus_order(model) for ph in model.bus(bus).phases]
    groups = []
    for i in range(0, len(nodes), per_group):
        groups.append([
            MeasurementSpec(MeasurementKind(kind), bus, ph, sigma)
            for bus, ph in nodes[i:i + per_group]
            for kind in kinds
        ])
    return groups


def sweep_coverage(
    study: Study,
    window,
    groups,
    noise_levels=DEFAULT_NOISE,
    seeds=(0,),
    options: EstimatorOptions | None = None,
    stats_window=None,
) -> SweepResult:
    """p95 error as sensor groups are added cumulatively; grid point 0 is pseudo-only."""
    seen = set()
    for g in groups:
        for s in g:
            key = (s.kind, s.bus, s.phase, s.to_bus)
            if key in seen:
                raise ValueError(f"duplicate sensor location {s.label}")
            seen.add(key)
    options = options or EstimatorOptions()
    window = list(window)
    axis = list(range(len(groups) + 1))
    runs = np.zeros((len(seeds), len(axis), len(noise_levels)))
    for a, seed in enumerate(seeds):
        pst = study.stats(seed, stats_window)
        for j, noise in enumerate(noise_levels):
            active: list[MeasurementSpec] = []
            for i in axis:
                if i > 0:
                    active = active + with_sigma(groups[i - 1], noise)
                runs[a, i, j] = run_batch(study, window, active, pst, options, seed).p95
    manifest = {
        "kind": "coverage",
        **study.describe(),
        "window": _window_manifest(window),
        "stats_window": None if stats_window is None else _window_manifest(stats_window),
        "seeds": list(seeds),
        "noise_levels": list(noise_levels),
        "groups": [spec_records(g) for g in groups],
        "group_labels": [sorted({s.bus for s in g}) for g in groups],
        "options": asdict(options),
    }
    return _sweep_result("sensor_groups", axis, noise_levels, runs, manifest)


def _sweep_result(name, axis, noise_levels, runs, manifest) -> SweepResult:
    std = runs.std(axis=0, ddof=1) if runs.shape[0] > 1 else np.zeros(runs.shape[1:])
    return SweepResult(name, list(axis), [float(s) for s in noise_levels], runs.mean(axis=0), std, runs, manifest)


def study_from_manifest(manifest: dict) -> Study:
    return Study.from_files(
        manifest["feeder"], manifest["load_profile"], manifest["pv_profile"],
        manifest["c"], manifest["pv_peak"],
    )


def rerun(manifest: dict) -> SweepResult:
    """Recompute a sweep from its manifest."""
    study = study_from_manifest(manifest)
    options = EstimatorOptions(**manifest["options"])
    window = _window_from_manifest(manifest["window"])
    if manifest["kind"] == "variance":
        return sweep_variance(
            study, window, _specs_from_records(manifest["sensors"]), manifest["deltas"],
            manifest["noise_levels"], manifest["seeds"], options,
        )
    sw = manifest.get("stats_window")
    return sweep_coverage(
        study, window, [_specs_from_records(g) for g in manifest["groups"]],
        manifest["noise_levels"], manifest["seeds"], options,
        None if sw is None else _window_from_manifest(sw),
    )


def largest_drop(p95_column) -> tuple[int, list[float]]:
    """Index of the increment with the largest p95 reduction, and all reductions.

    Reduction i is p95[i] - p95[i + 1], i.e. the effect of adding group i.
    """
    col = np.asarray(p95_column, dtype=float)
    drops = list(col[:-1] - col[1:])
    return int(np.argmax(drops)), drops
