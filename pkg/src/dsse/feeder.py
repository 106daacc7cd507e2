"""Multi-phase feeder description and node admittance matrix.

A feeder document is JSON with per-unit bases, buses with their phase sets,
branches carrying per-phase series impedance blocks (ohms) and optional total
line-charging admittance (siemens), and nominal spot loads in kW/kvar.
Everything is converted to per-unit on load.
"""

from __future__ import annotations

import enum
import json
from collections import deque
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np


class FeederError(ValueError):
    """Raised for malformed feeder documents or invalid network models."""


class PhaseId(enum.Enum):
    A = "A"
    B = "B"
    C = "C"

    @property
    def angle(self) -> float:
        """Reference phasing in radians: A at 0, B at -120 deg, C at +120 deg."""
        return {"A": 0.0, "B": -2 * np.pi / 3, "C": 2 * np.pi / 3}[self.value]


@dataclass(frozen=True)
class Bus:
    name: str
    phases: tuple[PhaseId, ...]
    is_reference: bool = False


@dataclass(frozen=True, eq=False)
class Branch:
    """Series branch; impedance and shunt blocks are stored in per-unit."""

    from_bus: str
    to_bus: str
    phases: tuple[PhaseId, ...]
    series_impedance: np.ndarray
    shunt_admittance: np.ndarray | None = None

    @property
    def name(self) -> str:
        return f"{self.from_bus}-{self.to_bus}"

    def series_admittance(self) -> np.ndarray:
        try:
            y = np.linalg.inv(self.series_impedance)
        except np.linalg.LinAlgError:
            raise FeederError(f"branch {self.name}: series impedance is singular") from None
        if not np.all(np.isfinite(y)) or np.linalg.cond(self.series_impedance) > 1e12:
            raise FeederError(f"branch {self.name}: series impedance is singular")
        return y


@dataclass(frozen=True)
class NodeId:
    index: int
    bus: str
    phase: PhaseId

    @property
    def label(self) -> str:
        return f"{self.bus}.{self.phase.value}"


@dataclass(frozen=True, eq=False)
class NetworkModel:
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    nominal_load: np.ndarray
    base_kv: float
    base_mva: float
    reference_magnitude: float = 1.0
    name: str = ""
    node_shunts: np.ndarray | None = None
    nodes: tuple[NodeId, ...] = field(init=False)
    _index: dict = field(init=False, repr=False)

    def __post_init__(self):
        ref = [b for b in self.buses if b.is_reference]
        others = [b for b in self.buses if not b.is_reference]
        nodes = []
        for bus in ref + others:
            for ph in bus.phases:
                nodes.append(NodeId(len(nodes), bus.name, ph))
        object.__setattr__(self, "nodes", tuple(nodes))
        object.__setattr__(self, "_index", {(n.bus, n.phase): n.index for n in nodes})
        _validate(self)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def reference_bus(self) -> Bus:
        return next(b for b in self.buses if b.is_reference)

    @property
    def reference_nodes(self) -> np.ndarray:
        return np.arange(len(self.reference_bus.phases))

    @property
    def free_nodes(self) -> np.ndarray:
        return np.arange(len(self.reference_bus.phases), self.n_nodes)

    @property
    def z_base(self) -> float:
        return self.base_kv**2 / self.base_mva

    def bus(self, name: str) -> Bus:
        for b in self.buses:
            if b.name == name:
                return b
        raise FeederError(f"unknown bus {name!r}")

    def bus_nodes(self, name: str) -> list[int]:
        return [self._index[(name, ph)] for ph in self.bus(name).phases]

    def reference_voltage(self) -> np.ndarray:
        """Complex reference-bus voltages, magnitude ``reference_magnitude``."""
        ang = np.array([ph.angle for ph in self.reference_bus.phases])
        return self.reference_magnitude * np.exp(1j * ang)

    def phase_angles(self) -> np.ndarray:
        return np.array([n.phase.angle for n in self.nodes])

    def loaded_nodes(self) -> np.ndarray:
        return np.flatnonzero(np.abs(self.nominal_load) > 0)


def node_lookup(model: NetworkModel, bus: str, phase: PhaseId | str) -> NodeId:
    phase = PhaseId(phase) if isinstance(phase, str) else phase
    model.bus(bus)
    try:
        return model.nodes[model._index[(bus, phase)]]
    except KeyError:
        raise FeederError(f"bus {bus!r} has no phase {phase.value}") from None


def _validate(model: NetworkModel) -> None:
    names = [b.name for b in model.buses]
    if len(set(names)) != len(names):
        raise FeederError("duplicate bus names")
    refs = [b for b in model.buses if b.is_reference]
    if len(refs) != 1:
        raise FeederError(f"expected exactly one reference bus, found {len(refs)}")
    for b in model.buses:
        if not b.phases:
            raise FeederError(f"bus {b.name}: empty phase set")
        if len(set(b.phases)) != len(b.phases):
            raise FeederError(f"bus {b.name}: repeated phase")
    used = {ph for b in model.buses for ph in b.phases}
    if not used <= set(refs[0].phases):
        raise FeederError(f"reference bus {refs[0].name} must carry every phase in the network")

    by_name = {b.name: b for b in model.buses}
    adj: dict[str, set[str]] = {n: set() for n in names}
    for br in model.branches:
        for end in (br.from_bus, br.to_bus):
            if end not in by_name:
                raise FeederError(f"branch {br.name}: unknown bus {end!r}")
            if not set(br.phases) <= set(by_name[end].phases):
                raise FeederError(f"branch {br.name}: phases not present on bus {end}")
        k = len(br.phases)
        if br.series_impedance.shape != (k, k):
            raise FeederError(f"branch {br.name}: impedance must be {k}x{k}")
        if br.shunt_admittance is not None and br.shunt_admittance.shape != (k, k):
            raise FeederError(f"branch {br.name}: shunt must be {k}x{k}")
        adj[br.from_bus].add(br.to_bus)
        adj[br.to_bus].add(br.from_bus)

    seen = {refs[0].name}
    queue = deque(seen)
    while queue:
        for nb in adj[queue.popleft()]:
            if nb not in seen:
                seen.add(nb)
                queue.append(nb)
    if len(seen) != len(names):
        missing = sorted(set(names) - seen)
        raise FeederError(f"network is not connected; isolated buses: {', '.join(missing)}")

    if model.nominal_load.shape != (model.n_nodes,):
        raise FeederError("nominal_load length does not match node count")
    if model.node_shunts is not None and model.node_shunts.shape != (model.n_nodes,):
        raise FeederError("node_shunts length does not match node count")
    if np.any(model.nominal_load[model.reference_nodes] != 0):
        raise FeederError(f"reference bus {refs[0].name} cannot carry load")


def _complex_matrix(entries, k: int, where: str) -> np.ndarray:
    try:
        arr = np.array([complex(float(re), float(im)) for re, im in entries])
    except (TypeError, ValueError):
        raise FeederError(f"{where}: expected a list of [re, im] pairs") from None
    if arr.size != k * k:
        raise FeederError(f"{where}: expected {k * k} entries for {k} phase(s), got {arr.size}")
    return arr.reshape(k, k)


def _phases(raw, where: str) -> tuple[PhaseId, ...]:
    try:
        return tuple(PhaseId(p) for p in raw)
    except ValueError:
        raise FeederError(f"{where}: phases must be drawn from A, B, C, got {raw!r}") from None


def feeder_from_dict(doc: dict) -> NetworkModel:
    for key in ("base_kv", "base_mva", "reference_bus", "buses", "branches"):
        if key not in doc:
            raise FeederError(f"missing top-level key {key!r}")
    base_kv = float(doc["base_kv"])
    base_mva = float(doc["base_mva"])
    if base_kv <= 0 or base_mva <= 0:
        raise FeederError("base_kv and base_mva must be positive")
    z_base = base_kv**2 / base_mva
    ref = str(doc["reference_bus"])

    buses = []
    for i, b in enumerate(doc["buses"]):
        where = f"buses[{i}]"
        if "name" not in b or "phases" not in b:
            raise FeederError(f"{where}: needs 'name' and 'phases'")
        buses.append(Bus(str(b["name"]), _phases(b["phases"], where), str(b["name"]) == ref))
    if ref not in {b.name for b in buses}:
        raise FeederError(f"reference_bus {ref!r} is not among the buses")

    branches = []
    for i, br in enumerate(doc["branches"]):
        where = f"branches[{i}] ({br.get('from')}-{br.get('to')})"
        for key in ("from", "to", "phases", "impedance"):
            if key not in br:
                raise FeederError(f"{where}: missing {key!r}")
        phases = _phases(br["phases"], where)
        z = _complex_matrix(br["impedance"], len(phases), where) / z_base
        shunt = None
        if br.get("shunt") is not None:
            shunt = _complex_matrix(br["shunt"], len(phases), where) * z_base
        branches.append(Branch(str(br["from"]), str(br["to"]), phases, z, shunt))

    # node order mirrors NetworkModel.__post_init__
    order = [b for b in buses if b.is_reference] + [b for b in buses if not b.is_reference]
    index = {}
    for bus in order:
        for ph in bus.phases:
            index[(bus.name, ph)] = len(index)
    load = np.zeros(len(index), dtype=complex)
    for i, ld in enumerate(doc.get("loads", [])):
        where = f"loads[{i}]"
        try:
            key = (str(ld["bus"]), PhaseId(ld["phase"]))
            s = complex(float(ld["p_kw"]), float(ld["q_kvar"])) / (1000.0 * base_mva)
        except (KeyError, ValueError, TypeError):
            raise FeederError(f"{where}: needs bus, phase (A/B/C), p_kw, q_kvar") from None
        if key not in index:
            raise FeederError(f"{where}: bus {key[0]!r} has no phase {key[1].value}")
        load[index[key]] += s

    shunts = None
    if doc.get("shunts"):
        shunts = np.zeros(len(index), dtype=complex)
        for i, sh in enumerate(doc["shunts"]):
            where = f"shunts[{i}]"
            try:
                key = (str(sh["bus"]), PhaseId(sh["phase"]))
                # capacitive kvar at 1 p.u. voltage
                y = 1j * float(sh["q_kvar"]) / (1000.0 * base_mva)
            except (KeyError, ValueError, TypeError):
                raise FeederError(f"{where}: needs bus, phase (A/B/C), q_kvar") from None
            if key not in index:
                raise FeederError(f"{where}: bus {key[0]!r} has no phase {key[1].value}")
            shunts[index[key]] += y

    return NetworkModel(
        buses=tuple(buses),
        branches=tuple(branches),
        nominal_load=load,
        base_kv=base_kv,
        base_mva=base_mva,
        reference_magnitude=float(doc.get("reference_magnitude", 1.0)),
        name=str(doc.get("name", "")),
        node_shunts=shunts,
    )


def parse_feeder(text: str) -> NetworkModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FeederError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise FeederError("feeder document must be a JSON object")
    return feeder_from_dict(doc)


def load_feeder(source: str | Path) -> NetworkModel:
    """Load a feeder from a path, or from a bundled feeder name such as ``case33``."""
    path = Path(source)
    if not path.exists():
        bundled = resources.files("dsse.data.feeders") / f"{source}.json"
        if not bundled.is_file():
            raise FeederError(f"no such feeder file or bundled feeder: {source}")
        return parse_feeder(bundled.read_text())
    return parse_feeder(path.read_text())


BUNDLED_FEEDERS = ("case33", "ieee13_simplified", "four_bus")


@dataclass(frozen=True, eq=False)
class AdmittanceMatrix:
    Y: np.ndarray
    node_map: tuple[NodeId, ...]


def build_admittance(model: NetworkModel) -> AdmittanceMatrix:
    n = model.n_nodes
    Y = np.zeros((n, n), dtype=complex)
    for br in model.branches:
        y = br.series_admittance()
        i = [model._index[(br.from_bus, ph)] for ph in br.phases]
        j = [model._index[(br.to_bus, ph)] for ph in br.phases]
        Y[np.ix_(i, i)] += y
        Y[np.ix_(j, j)] += y
        Y[np.ix_(i, j)] -= y
        Y[np.ix_(j, i)] -= y
        if br.shunt_admittance is not None:
            # pi model: half the line charging at each end
            Y[np.ix_(i, i)] += br.shunt_admittance / 2
            Y[np.ix_(j, j)] += br.shunt_admittance / 2
    if model.node_shunts is not None:
        Y[np.diag_indices(n)] += model.node_shunts
    return AdmittanceMatrix(Y, model.nodes)


def branch_nodes(model: NetworkModel, branch: Branch) -> tuple[list[int], list[int]]:
    i = [model._index[(branch.from_bus, ph)] for ph in branch.phases]
    j = [model._index[(branch.to_bus, ph)] for ph in branch.phases]
    return i, j


def find_branch(model: NetworkModel, from_bus: str, to_bus: str) -> Branch:
    """The branch joining two buses, in either stored orientation."""
    for br in model.branches:
        if {br.from_bus, br.to_bus} == {from_bus, to_bus}:
            return br
    raise FeederError(f"no branch {from_bus}-{to_bus}")


def bfs_bus_order(model: NetworkModel) -> list[str]:
    """Non-reference buses in breadth-first order from the reference bus."""
    adj: dict[str, list[str]] = {b.name: [] for b in model.buses}
    for br in model.branches:
        adj[br.from_bus].append(br.to_bus)
        adj[br.to_bus].append(br.from_bus)
    ref = model.reference_bus.name
    order, seen, queue = [], {ref}, deque([ref])
    while queue:
        for nb in adj[queue.popleft()]:
            if nb not in seen:
                seen.add(nb)
                order.append(nb)
                queue.append(nb)
    return order
