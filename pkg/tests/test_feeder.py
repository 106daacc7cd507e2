import json
from importlib import resources

import numpy as np
import pytest

from dsse.feeder import (
    BUNDLED_FEEDERS,
    FeederError,
    PhaseId,
    bfs_bus_order,
    build_admittance,
    load_feeder,
    node_lookup,
    parse_feeder,
)

from conftest import two_bus_doc


def test_two_bus_document(two_bus):
    assert two_bus.n_nodes == 2
    assert two_bus.reference_bus.name == "1"


def test_case33_counts(case33):
    m, _ = case33
    doc = json.loads((resources.files("dsse.data.feeders") / "case33.json").read_text())
    assert m.n_nodes == len(doc["buses"]) == 33
    assert len(m.branches) == len(doc["branches"]) == 32
    # 3715 kW / 2300 kvar on a 10 MVA base
    assert m.nominal_load.sum() == pytest.approx(0.3715 + 0.23j)


def test_unknown_bus_named_in_error():
    doc = two_bus_doc()
    doc["branches"].append({"from": "2", "to": "99", "phases": ["A"], "impedance": [[0.1, 0.1]]})
    with pytest.raises(FeederError, match="2-99"):
        parse_feeder(json.dumps(doc))


def test_parse_error_has_location():
    with pytest.raises(FeederError, match="line 2"):
        parse_feeder('{"base_kv": 1,\n "buses": [}')


@pytest.mark.parametrize(
    "mutate, message",
    [
        (lambda d: d.update(reference_bus="7"), "reference_bus"),
        (lambda d: d["buses"].append({"name": "3", "phases": ["A"]}), "not connected"),
        (lambda d: d["buses"][1].update(phases=["D"]), "phases"),
        (lambda d: d["branches"][0].update(impedance=[[0.1, 0.0], [0.0, 0.1]]), "entries"),
        (lambda d: d["loads"].append({"bus": "1", "phase": "A", "p_kw": 1, "q_kvar": 0}), "reference"),
        (lambda d: d["loads"].append({"bus": "2", "phase": "B", "p_kw": 1, "q_kvar": 0}), "no phase B"),
    ],
)
def test_invalid_documents(mutate, message):
    doc = two_bus_doc()
    mutate(doc)
    with pytest.raises(FeederError, match=message):
        parse_feeder(json.dumps(doc))


def test_single_branch_admittance():
    Y = build_admittance(parse_feeder(json.dumps(two_bus_doc()))).Y
    y = 20 - 40j
    assert 1 / (0.01 + 0.02j) == pytest.approx(y)
    np.testing.assert_allclose(Y, [[y, -y], [-y, y]], rtol=1e-14)


def test_singular_impedance_names_branch():
    doc = two_bus_doc(z=(0.0, 0.0))
    model = parse_feeder(json.dumps(doc))
    with pytest.raises(FeederError, match="1-2"):
        build_admittance(model)


def test_case33_rows_sum_to_zero(case33):
    _, Y = case33
    assert np.abs(Y.sum(axis=1)).max() < 1e-9


def test_ieee13_three_phase_block(ieee13):
    m, Y = ieee13
    doc = json.loads((resources.files("dsse.data.feeders") / "ieee13_simplified.json").read_text())
    raw = next(b for b in doc["branches"] if (b["from"], b["to"]) == ("632", "670"))
    z_ohm = np.array([complex(re, im) for re, im in raw["impedance"]]).reshape(3, 3)
    z_pu = z_ohm / (doc["base_kv"] ** 2 / doc["base_mva"])
    i = [node_lookup(m, "632", ph).index for ph in "ABC"]
    j = [node_lookup(m, "670", ph).index for ph in "ABC"]
    np.testing.assert_allclose(Y[np.ix_(i, j)], -np.linalg.inv(z_pu), rtol=1e-12)


def test_rows_sum_to_node_shunt(ieee13):
    m, Y = ieee13
    expected = np.zeros(m.n_nodes, dtype=complex)
    for br in m.branches:
        if br.shunt_admittance is None:
            continue
        for end in (br.from_bus, br.to_bus):
            idx = [node_lookup(m, end, ph).index for ph in br.phases]
            expected[idx] += br.shunt_admittance.sum(axis=1) / 2
    expected += m.node_shunts
    np.testing.assert_allclose(Y.sum(axis=1), expected, atol=1e-9)


@pytest.mark.parametrize("name", BUNDLED_FEEDERS)
def test_admittance_symmetric(name):
    Y = build_admittance(load_feeder(name)).Y
    assert np.abs(Y - Y.T).max() < 1e-12


@pytest.mark.parametrize("name", ["case33", "four_bus"])
def test_flat_voltage_draws_no_current(name):
    m = load_feeder(name)
    Y = build_admittance(m).Y
    V = m.reference_magnitude * np.exp(1j * m.phase_angles())
    assert np.abs(Y @ V).max() < 1e-9


def test_node_lookup(ieee13):
    m, _ = ieee13
    assert node_lookup(m, "650", PhaseId.A).index == 0
    n = node_lookup(m, "633", "C")
    assert m.nodes[n.index] == n
    with pytest.raises(FeederError):
        node_lookup(m, "645", "A")
    with pytest.raises(FeederError):
        node_lookup(m, "999", "A")


@pytest.mark.parametrize("name", BUNDLED_FEEDERS)
def test_node_map_bijection(name):
    m = load_feeder(name)
    assert [node_lookup(m, n.bus, n.phase).index for n in m.nodes] == list(range(m.n_nodes))
    assert len({(n.bus, n.phase) for n in m.nodes}) == m.n_nodes
    assert all(n.bus == m.reference_bus.name for n in m.nodes[: len(m.reference_nodes)])


def test_ieee13_layout(ieee13):
    m, _ = ieee13
    assert m.n_nodes == 35
    assert m.reference_magnitude == 1.05
    assert bfs_bus_order(m)[0] == "632"


def test_missing_phases_not_padded(ieee13):
    m, _ = ieee13
    assert [n.phase for n in m.nodes if n.bus == "611"] == [PhaseId.C]
