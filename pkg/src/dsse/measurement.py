"""Measurement functions, their polar-coordinate Jacobians and measurement sets.

Complex-valued measurements are split into two real components (real/imag
for current phasors, P/Q for power injections) so that every set maps to a
real observation vector ``z`` with a diagonal (hence block-diagonal)
covariance.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .feeder import FeederError, NetworkModel, PhaseId, find_branch, node_lookup
from .powerflow import VoltageState

MAG_FLOOR = 1e-12


class MeasurementKind(enum.Enum):
    BRANCH_CURRENT = "branch_current"
    BRANCH_CURRENT_MAG = "branch_current_mag"
    CURRENT_INJECTION = "current_injection"
    VOLTAGE_MAG = "vmag"
    VOLTAGE_ANGLE = "vangle"
    POWER_INJECTION = "power_injection"

    @property
    def n_components(self) -> int:
        return 2 if self in _TWO_COMPONENT else 1

    @property
    def is_branch(self) -> bool:
        return self in (MeasurementKind.BRANCH_CURRENT, MeasurementKind.BRANCH_CURRENT_MAG)


_TWO_COMPONENT = {
    MeasurementKind.BRANCH_CURRENT,
    MeasurementKind.CURRENT_INJECTION,
    MeasurementKind.POWER_INJECTION,
}


@dataclass(frozen=True)
class MeasurementSpec:
    """One sensor or pseudo-measurement.

    Branch kinds measure the phase-``phase`` current flowing from ``bus`` to
    ``to_bus``. ``sigma`` holds one standard deviation per real component.
    """

    kind: MeasurementKind
    bus: str
    phase: PhaseId
    sigma: tuple[float, ...]
    to_bus: str | None = None
    is_pseudo: bool = False

    def __post_init__(self):
        if isinstance(self.kind, str):
            object.__setattr__(self, "kind", MeasurementKind(self.kind))
        if isinstance(self.phase, str):
            object.__setattr__(self, "phase", PhaseId(self.phase))
        sig = self.sigma
        if np.isscalar(sig):
            sig = (float(sig),) * self.kind.n_components
        sig = tuple(float(s) for s in sig)
        if len(sig) != self.kind.n_components:
            raise ValueError(f"{self.kind.value} needs {self.kind.n_components} sigma value(s)")
        if any(s < 0 or not np.isfinite(s) for s in sig):
            raise ValueError("sigma must be finite and non-negative")
        object.__setattr__(self, "sigma", sig)
        if self.kind.is_branch and self.to_bus is None:
            raise ValueError(f"{self.kind.value} needs to_bus")

    @property
    def label(self) -> str:
        where = f"{self.bus}->{self.to_bus}" if self.kind.is_branch else self.bus
        return f"{self.kind.value}@{where}.{self.phase.value}"


@dataclass(frozen=True, eq=False)
class MeasurementSet:
    specs: tuple[MeasurementSpec, ...]
    z: np.ndarray
    sigma: np.ndarray = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "specs", tuple(self.specs))
        if self.sigma is None:
            object.__setattr__(self, "sigma", _sigma_vector(self.specs))
        if self.z.shape != (self.n_components,) or self.sigma.shape != self.z.shape:
            raise ValueError(f"z has {self.z.size} entries but specs need {self.n_components}")

    @property
    def n_components(self) -> int:
        return sum(s.kind.n_components for s in self.specs)

    @property
    def Sigma(self) -> np.ndarray:
        """Composite covariance: one diagonal block per spec."""
        return np.diag(self.sigma**2)

    def __add__(self, other: "MeasurementSet") -> "MeasurementSet":
        return MeasurementSet(
            self.specs + other.specs,
            np.concatenate([self.z, other.z]),
            np.concatenate([self.sigma, other.sigma]),
        )

    def with_sigma_scale(self, factor: float, pseudo_only: bool = True) -> "MeasurementSet":
        sig = self.sigma.copy()
        for sl, spec in zip(_slices(self.specs), self.specs):
            if spec.is_pseudo or not pseudo_only:
                sig[sl] *= factor
        return MeasurementSet(self.specs, self.z, sig)


def empty_set() -> MeasurementSet:
    return MeasurementSet((), np.zeros(0), np.zeros(0))


def _sigma_vector(specs) -> np.ndarray:
    return np.array([s for spec in specs for s in spec.sigma], dtype=float)


def _slices(specs):
    pos = 0
    for spec in specs:
        n = spec.kind.n_components
        yield slice(pos, pos + n)
        pos += n


class CompiledMeasurements:
    """Vectorized evaluator of H(V) and dH/dx for a fixed list of specs.

    The state x is ``[|V_free|, angle(V_free)]`` over the model's
    non-reference nodes.
    """

    def __init__(self, specs, model: NetworkModel, Y: np.ndarray):
        specs = tuple(specs)
        self.specs = specs
        self.model = model
        self.Y = Y
        self.n = sum(s.kind.n_components for s in specs)
        self.free = model.free_nodes
        M = model.n_nodes

        lin_rows, lin_pos, lin_mag = [], [], []
        vm_node, vm_pos, va_node, va_pos, pq_node, pq_pos = [], [], [], [], [], []
        pos = 0
        for spec in specs:
            k = spec.kind
            if k.is_branch:
                row = _branch_row(model, spec)
            elif k is MeasurementKind.CURRENT_INJECTION:
                row = Y[node_lookup(model, spec.bus, spec.phase).index]
            else:
                node = node_lookup(model, spec.bus, spec.phase).index
            if k in (MeasurementKind.BRANCH_CURRENT, MeasurementKind.CURRENT_INJECTION):
                lin_rows.append(row)
                lin_pos.append((pos, pos + 1))
                lin_mag.append(False)
            elif k is MeasurementKind.BRANCH_CURRENT_MAG:
                lin_rows.append(row)
                lin_pos.append((pos, -1))
                lin_mag.append(True)
            elif k is MeasurementKind.VOLTAGE_MAG:
                vm_node.append(node)
                vm_pos.append(pos)
            elif k is MeasurementKind.VOLTAGE_ANGLE:
                va_node.append(node)
                va_pos.append(pos)
            else:
                pq_node.append(node)
                pq_pos.append(pos)
            pos += k.n_components

        self.A = np.array(lin_rows, dtype=complex).reshape(len(lin_rows), M)
        lp = np.array(lin_pos, dtype=int).reshape(-1, 2)
        mag = np.array(lin_mag, dtype=bool)
        self.lin_mag = mag
        self.lin_re = lp[:, 0]
        self.lin_im = lp[~mag, 1]
        self.vm_node = np.array(vm_node, dtype=int)
        self.vm_pos = np.array(vm_pos, dtype=int)
        self.va_node = np.array(va_node, dtype=int)
        self.va_pos = np.array(va_pos, dtype=int)
        self.pq_node = np.array(pq_node, dtype=int)
        self.pq_pos = np.array(pq_pos, dtype=int)
        self.Ypq = Y[self.pq_node]
        self.angle_mask = np.zeros(self.n, dtype=bool)
        self.angle_mask[self.va_pos] = True

    def H(self, V: np.ndarray) -> np.ndarray:
        out = np.empty(self.n)
        if self.A.shape[0]:
            c = self.A @ V
            mag = self.lin_mag
            out[self.lin_re[mag]] = np.abs(c[mag])
            out[self.lin_re[~mag]] = c[~mag].real
            out[self.lin_im] = c[~mag].imag
        out[self.vm_pos] = np.abs(V[self.vm_node])
        out[self.va_pos] = np.angle(V[self.va_node])
        if self.pq_node.size:
            S = V[self.pq_node] * np.conj(self.Ypq @ V)
            out[self.pq_pos] = S.real
            out[self.pq_pos + 1] = S.imag
        return out

    def jacobian(self, V: np.ndarray) -> np.ndarray:
        free = self.free
        nf = free.size
        J = np.zeros((self.n, 2 * nf))
        col = np.full(self.model.n_nodes, -1)
        col[free] = np.arange(nf)
        Vnorm = V / np.abs(V)

        if self.A.shape[0]:
            dm = self.A[:, free] * Vnorm[free]
            da = self.A[:, free] * (1j * V[free])
            mag = self.lin_mag
            if mag.any():
                c = self.A[mag] @ V
                w = np.conj(c) / np.maximum(np.abs(c), MAG_FLOOR)
                J[self.lin_re[mag], :nf] = (w[:, None] * dm[mag]).real
                J[self.lin_re[mag], nf:] = (w[:, None] * da[mag]).real
            J[self.lin_re[~mag], :nf] = dm[~mag].real
            J[self.lin_re[~mag], nf:] = da[~mag].real
            J[self.lin_im, :nf] = dm[~mag].imag
            J[self.lin_im, nf:] = da[~mag].imag

        c = col[self.vm_node]
        ok = c >= 0
        J[self.vm_pos[ok], c[ok]] = 1.0
        c = col[self.va_node]
        ok = c >= 0
        J[self.va_pos[ok], nf + c[ok]] = 1.0

        if self.pq_node.size:
            rows = self.pq_node
            Vr = V[rows]
            I = self.Ypq @ V
            Yf = self.Ypq[:, free]
            dSm = Vr[:, None] * np.conj(Yf * Vnorm[free])
            dSa = -1j * Vr[:, None] * np.conj(Yf * V[free])
            # diagonal terms where the measured node is itself a state
            c = col[rows]
            ok = c >= 0
            r = np.flatnonzero(ok)
            dSm[r, c[ok]] += np.conj(I[ok]) * Vnorm[rows[ok]]
            dSa[r, c[ok]] += 1j * Vr[ok] * np.conj(I[ok])
            J[self.pq_pos, :nf] = dSm.real
            J[self.pq_pos, nf:] = dSa.real
            J[self.pq_pos + 1, :nf] = dSm.imag
            J[self.pq_pos + 1, nf:] = dSa.imag
        return J


def _branch_row(model: NetworkModel, spec: MeasurementSpec) -> np.ndarray:
    br = find_branch(model, spec.bus, spec.to_bus)
    if spec.phase not in br.phases:
        raise FeederError(f"branch {br.name} has no phase {spec.phase.value}")
    y = br.series_admittance()
    p = br.phases.index(spec.phase)
    row = np.zeros(model.n_nodes, dtype=complex)
    for q, ph in enumerate(br.phases):
        # series current leaving spec.bus toward spec.to_bus
        row[node_lookup(model, spec.bus, ph).index] += y[p, q]
        row[node_lookup(model, spec.to_bus, ph).index] -= y[p, q]
    return row


def _as_complex(V) -> np.ndarray:
    return V.V if isinstance(V, VoltageState) else np.asarray(V, dtype=complex)


def eval_measurement(V, spec: MeasurementSpec, model: NetworkModel, Y: np.ndarray) -> np.ndarray:
    return CompiledMeasurements([spec], model, Y).H(_as_complex(V))


def composite_H(V, mset: MeasurementSet, model: NetworkModel, Y: np.ndarray) -> np.ndarray:
    out = CompiledMeasurements(mset.specs, model, Y).H(_as_complex(V))
    if out.shape != mset.z.shape:
        raise ValueError(f"H has {out.size} components, z has {mset.z.size}")
    return out


def jacobian_H(V, mset: MeasurementSet, model: NetworkModel, Y: np.ndarray) -> np.ndarray:
    return CompiledMeasurements(mset.specs, model, Y).jacobian(_as_complex(V))


def simulate_sensors(
    V_true, specs, rng_seed: int, model: NetworkModel, Y: np.ndarray
) -> MeasurementSet:
    """Noisy observations z = H(V_true) + eta with independent Gaussian eta."""
    specs = tuple(specs)
    clean = CompiledMeasurements(specs, model, Y).H(_as_complex(V_true))
    sigma = _sigma_vector(specs)
    rng = np.random.default_rng(rng_seed)
    return MeasurementSet(specs, clean + rng.standard_normal(clean.size) * sigma, sigma)


def attach_pseudo(mset: MeasurementSet, pstats, nodes, model: NetworkModel) -> MeasurementSet:
    """Append power-injection pseudo-measurements at the loaded ``nodes``.

    Means and variances come from load-positive statistics, so ``z`` is
    negated into the generation-positive injection convention. Unloaded
    nodes are skipped.
    """
    specs, z, sig = [], [], []
    for node in nodes:
        idx = node.index if hasattr(node, "index") else int(node)
        if model.nominal_load[idx] == 0:
            continue
        nd = model.nodes[idx]
        var_p = pstats.Sigma_P[idx, idx]
        var_q = pstats.Sigma_Q[idx, idx]
        if var_p <= 0 or var_q <= 0:
            raise ValueError(f"zero pseudo-measurement variance at loaded node {nd.label}")
        s = (float(np.sqrt(var_p)), float(np.sqrt(var_q)))
        specs.append(MeasurementSpec(MeasurementKind.POWER_INJECTION, nd.bus, nd.phase, s, is_pseudo=True))
        z += [-pstats.P_hat[idx], -pstats.Q_hat[idx]]
        sig += s
    if not specs:
        return mset
    return mset + MeasurementSet(tuple(specs), np.array(z), np.array(sig))


def attach_zero_injections(mset: MeasurementSet, model: NetworkModel, sigma: float = 1e-5) -> MeasurementSet:
    """Virtual zero power-injection measurements at unloaded non-reference nodes."""
    specs = []
    for idx in model.free_nodes:
        if model.nominal_load[idx] == 0:
            nd = model.nodes[idx]
            specs.append(MeasurementSpec(MeasurementKind.POWER_INJECTION, nd.bus, nd.phase, sigma))
    if not specs:
        return mset
    return mset + MeasurementSet(tuple(specs), np.zeros(2 * len(specs)))


# sensor placement files --------------------------------------------------

DEFAULT_SIGMA = {
    MeasurementKind.VOLTAGE_MAG: 0.005,
    MeasurementKind.VOLTAGE_ANGLE: 0.005,
}


def voltage_sensors(model: NetworkModel, buses, kinds=("vmag", "vangle"), sigma: float | None = None):
    """Voltage sensors on every phase of each bus in ``buses``."""
    specs = []
    for bus in buses:
        for ph in model.bus(bus).phases:
            for kind in kinds:
                kind = MeasurementKind(kind)
                s = sigma if sigma is not None else DEFAULT_SIGMA.get(kind, 0.005)
                specs.append(MeasurementSpec(kind, bus, ph, s))
    return specs


def parse_sensor_records(records, model: NetworkModel) -> list[MeasurementSpec]:
    specs = []
    for i, rec in enumerate(records):
        try:
            kind = MeasurementKind(rec["kind"])
            bus = str(rec["bus"])
        except (KeyError, ValueError):
            raise ValueError(f"sensors[{i}]: needs a valid 'kind' and 'bus'") from None
        phases = [rec["phase"]] if rec.get("phase") else [p.value for p in model.bus(bus).phases]
        sigma = rec.get("sigma", DEFAULT_SIGMA.get(kind, 0.005))
        for ph in phases:
            spec = MeasurementSpec(kind, bus, ph, sigma, to_bus=rec.get("to_bus"))
            node_lookup(model, bus, spec.phase)
            specs.append(spec)
    return specs


def load_sensor_file(path: str | Path, model: NetworkModel) -> dict:
    """Read a sensor placement document.

    ``path`` may also name a bundled placement (``case33_sparse``,
    ``ieee13_sparse``). Returns ``{"sensors": [MeasurementSpec...], "groups":
    [[MeasurementSpec...], ...]}``; ``groups`` is only non-empty for
    coverage-order files.
    """
    p = Path(path)
    if p.exists():
        text = p.read_text()
    else:
        bundled = resources.files("dsse.data.sensors") / f"{path}.json"
        if not bundled.is_file():
            raise ValueError(f"no such sensor file or bundled placement: {path}")
        text = bundled.read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    out = {"sensors": parse_sensor_records(doc.get("sensors", []), model), "groups": []}
    kinds = doc.get("kinds", ["vmag", "vangle"])
    sigma = doc.get("sigma")
    for group in doc.get("groups", []):
        out["groups"].append(voltage_sensors(model, [str(b) for b in group], kinds, sigma))
    return out


def with_sigma(specs, sigma: float) -> list[MeasurementSpec]:
    return [replace(s, sigma=sigma) for s in specs]
