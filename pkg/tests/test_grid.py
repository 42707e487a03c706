import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gridshield.grid import (TABLE_I, CaseError, GenerationError, Line, MeterKind, PowerNetwork, Profile,
                             build_incidence, bus_label, case_to_dict, generate_case, generate_placement,
                             line_label, load_case, meter_label, parse_label, save_case)
from gridshield.observability import is_observable, measured_graph

from conftest import CASES

FIVE_BUS_INCIDENCE = [
    [1, -1, 0, 0, 0],
    [0, 1, -1, 0, 0],
    [0, 1, 0, -1, 0],
    [0, 0, 1, 0, -1],
    [0, 0, 0, 1, -1],
]


def _doc(**overrides):
    doc = json.loads((CASES / "5bus.json").read_text())
    doc.update(overrides)
    return doc


def test_five_bus_loads(five_bus):
    net, plc, costs = five_bus
    assert (len(net.lines), net.n_buses, len(plc)) == (5, 5, 6)
    assert net.reference == 4
    assert [m.kind for m in plc].count(MeterKind.INJECTION) == 2
    assert costs.acquisition_cost(0) == 1.0


def test_five_bus_incidence(five_bus):
    assert build_incidence(five_bus.network).tolist() == FIVE_BUS_INCIDENCE


def test_single_line_incidence():
    net = PowerNetwork(2, 1, [Line(0, 0, 1, 0.5)])
    assert build_incidence(net).tolist() == [[1, -1]]


@settings(max_examples=100, deadline=None)
@given(st.integers(min_value=0, max_value=10_000))
def test_incidence_rows_sum_to_zero(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 9))
    lines = []
    for k in range(int(rng.integers(1, 12))):
        a, b = rng.choice(n, size=2, replace=False)
        lines.append(Line(k, int(a), int(b), float(rng.uniform(0.1, 1))))
    A = build_incidence(PowerNetwork(n, 0, lines))
    assert not A.sum(axis=1).any()
    assert set(np.unique(A)) <= {-1, 0, 1}


def test_empty_meter_list_loads_but_is_unobservable():
    case = load_case(json.dumps(_doc(meters=[])))
    assert len(case.placement) == 0
    assert not is_observable(measured_graph(case.network, case.placement))


@pytest.mark.parametrize("mutate, path, message", [
    (lambda d: d["lines"][2].update(reactance=0), "$.lines[2].reactance", "nonpositive reactance"),
    (lambda d: d["lines"][0].update(to=9), "$.lines[0].to", "dangling bus"),
    (lambda d: d["meters"][1].update(line=17), "$.meters[1].line", "dangling line"),
    (lambda d: d["meters"][1].update(line=1), "$.meters[1]", "duplicate meter"),
    (lambda d: d["meters"][4].update(kind="flow"), "$.meters[4].kind", "schema violation"),
    (lambda d: d.pop("reference"), "$", "schema violation"),
])
def test_case_errors_carry_json_path(mutate, path, message):
    doc = _doc()
    mutate(doc)
    with pytest.raises(CaseError) as err:
        load_case(json.dumps(doc))
    assert err.value.path == path
    assert message in str(err.value)


def test_same_line_opposite_directions_is_allowed():
    doc = _doc()
    doc["meters"].append({"id": 7, "kind": "flow", "line": 1, "direction": "-", "secure_cost": 2.0})
    assert len(load_case(json.dumps(doc)).placement) == 7


def test_invalid_json_is_a_case_error():
    with pytest.raises(CaseError):
        load_case("{nope")


def test_round_trip_is_identity():
    text = (CASES / "pmu7.json").read_text()
    once = save_case(load_case(text))
    assert json.loads(once) == json.loads(text)
    assert save_case(load_case(once)) == once


def test_infinite_acquisition_round_trips():
    doc = _doc(acquisition=[{"line": 2, "cost": "inf"}, {"line": 1, "cost": 0.5}],
               covert_candidates=[{"line": 4, "covert_cost": 0.1}])
    case = load_case(json.dumps(doc))
    assert math.isinf(case.costs.acquisition_cost(1))
    assert case.costs.acquisition_cost(0) == 0.5
    assert case_to_dict(load_case(save_case(case))) == case_to_dict(case)


def test_labels():
    assert (bus_label(0), line_label(4), meter_label(5)) == ("v1", "e5", "r6")
    assert parse_label("v3", "v") == 2 and parse_label("7", "e") == 6
    with pytest.raises(ValueError):
        parse_label("v0", "v")


@pytest.mark.parametrize("n, seed", [(14, 1), (57, 7), (118, 0)])
def test_generated_counts_match_profile(n, seed):
    net, plc = generate_placement(n, seed)
    prof = TABLE_I[n]
    flows = [m for m in plc if m.kind is MeterKind.FLOW]
    injections = [m for m in plc if m.kind is MeterKind.INJECTION]
    assert (net.n_buses, len(net.lines), len(flows), len(injections)) == (n, prof.lines, prof.flows,
                                                                           prof.injections)
    mg = measured_graph(net, plc)
    assert len(net.lines) - len(mg.edges) == prof.unmeasured
    assert is_observable(mg)


def test_two_bus_profile():
    net, plc = generate_placement(2, 0, Profile(1, 0, 1, 0))
    assert len(net.lines) == 1 and len(plc) == 1


def test_generation_is_reproducible():
    a = save_case(generate_case(14, 3, covert_fraction=0.2))
    b = save_case(generate_case(14, 3, covert_fraction=0.2))
    assert a == b
    assert a != save_case(generate_case(14, 4, covert_fraction=0.2))


def test_generated_cases_round_trip():
    for seed in range(10):
        case = generate_case(14, seed, covert_fraction=0.3)
        assert case_to_dict(load_case(save_case(case))) == case_to_dict(case)


def test_infeasible_profile():
    with pytest.raises(GenerationError):
        generate_placement(5, 0, Profile(lines=2, injections=0, flows=2, unmeasured=0))
    with pytest.raises(GenerationError):
        generate_placement(5, 0, Profile(lines=6, injections=0, flows=9, unmeasured=0))
