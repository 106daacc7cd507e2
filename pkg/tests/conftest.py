import json
import sys

import numpy as np
import pytest

from dsse.feeder import build_admittance, load_feeder, parse_feeder


def two_bus_doc(z=(0.01, 0.02), load=None):
    doc = {
        "base_kv": 1.0,
        "base_mva": 1.0,
        "reference_bus": "1",
        "buses": [{"name": "1", "phases": ["A"]}, {"name": "2", "phases": ["A"]}],
        "branches": [{"from": "1", "to": "2", "phases": ["A"], "impedance": [list(z)]}],
        "loads": [],
    }
    if load is not None:
        # base_mva = 1 so p.u. = kW / 1000
        doc["loads"].append({"bus": "2", "phase": "A", "p_kw": load[0] * 1000, "q_kvar": load[1] * 1000})
    return doc


@pytest.fixture
def two_bus():
    return parse_feeder(json.dumps(two_bus_doc()))


@pytest.fixture(scope="session")
def case33():
    m = load_feeder("case33")
    return m, build_admittance(m).Y


@pytest.fixture(scope="session")
def ieee13():
    m = load_feeder("ieee13_simplified")
    return m, build_admittance(m).Y


@pytest.fixture(scope="session")
def four_bus():
    m = load_feeder("four_bus")
    return m, build_admittance(m).Y


@pytest.fixture(scope="session", params=["case33", "ieee13_simplified", "four_bus"])
def feeder(request):
    m = load_feeder(request.param)
    return m, build_admittance(m).Y


def random_state(model, rng, spread=0.03):
    """A feasible voltage state near the reference phasing."""
    from dsse.powerflow import VoltageState

    mag = model.reference_magnitude * (1 + spread * rng.uniform(-1, 1, model.n_nodes))
    ang = model.phase_angles() + spread * rng.uniform(-1, 1, model.n_nodes)
    V_ref = model.reference_voltage()
    ref = model.reference_nodes
    mag[ref], ang[ref] = np.abs(V_ref), np.angle(V_ref)
    return VoltageState(mag, ang)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    verdicts = getattr(mod, "VERDICTS", None)
    if verdicts:
        terminalreporter.section("acceptance criteria")
        for n in sorted(verdicts):
            terminalreporter.write_line(verdicts[n])
