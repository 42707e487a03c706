import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from gridshield.attack import (NotAttackable, PartitionAssignment, Theorem1Violation,
                               attack_vector_from_partition, bridging_attack, bridging_pattern_meters,
                               max_flow, min_cut_attack, theorem1_feasible)
from gridshield.dc import (KnowledgeError, apply_attack, attacker_jacobian, build_jacobian, wls_estimate)
from gridshield.grid import CostModel, generate_case
from gridshield.observability import measured_graph, vertex_types


def brute_max_flow(n, arcs, s, t):
    """Min cut over all vertex bipartitions."""
    best = None
    others = [v for v in range(n) if v not in (s, t)]
    for bits in itertools.product((0, 1), repeat=len(others)):
        side = {s} | {v for v, b in zip(others, bits) if b}
        cut = sum((c for u, v, c in arcs if u in side and v not in side), Fraction(0))
        best = cut if best is None else min(best, cut)
    return best


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 100_000))
def test_max_flow_equals_min_cut(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 8))
    arcs = [(int(u), int(v), Fraction(int(rng.integers(0, 6)), int(rng.integers(1, 4))))
            for u, v in rng.integers(0, n, size=(int(rng.integers(0, 16)), 2)) if u != v]
    value, side = max_flow(n, arcs, 0, n - 1)
    assert value == brute_max_flow(n, arcs, 0, n - 1)
    assert 0 in side and n - 1 not in side
    assert sum((c for u, v, c in arcs if u in side and v not in side), Fraction(0)) == value


def brute_cut_cost(net, mg, targets, costs):
    R = net.reference
    free = [b for b in net.buses if b != R and b not in targets]
    edges = mg.edges
    best = float("inf")
    for bits in itertools.product((0, 1), repeat=len(free)):
        sink = set(targets) | {b for b, x in zip(free, bits) if x}
        best = min(best, sum(costs.acquisition_cost(e) for e in edges
                             if (mg.ends[e][0] in sink) != (mg.ends[e][1] in sink)))
    return best


def test_five_bus_cut(five_bus):
    net, plc, costs = five_bus
    plan = min_cut_attack(net, plc, [2], costs)
    assert plan.cost == 2
    assert plan.knowledge_lines == {3, 4}
    assert 4 in plan.source_side and 2 in plan.sink_side
    jac = build_jacobian(net, plc)
    z = jac.reduced @ np.array([0.1, -0.2, 0.05, 0.3])
    before = wls_estimate(jac, z)
    after = wls_estimate(jac, apply_attack(z, plan.attack))
    assert after.residual_norm == pytest.approx(before.residual_norm, abs=1e-12)
    assert after.theta_hat[2] - before.theta_hat[2] == pytest.approx(1.0)


def test_cut_attack_needs_only_crossing_lines(five_bus):
    net, plc, costs = five_bus
    plan = min_cut_attack(net, plc, [2], costs)
    # any error on lines the cut does not cross leaves the attack valid
    eps = KnowledgeError({l: 0.3 for l in range(5) if l not in plan.knowledge_lines})
    wrong = min_cut_attack(net, plc, [2], costs, eps=eps)
    jac = build_jacobian(net, plc)
    res = wls_estimate(jac, apply_attack(np.zeros(6), wrong.attack))
    assert res.residual_norm < 1e-12


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 100_000))
def test_min_cut_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    net, plc, _ = generate_case(14, int(rng.integers(0, 50)))
    mg = measured_graph(net, plc)
    typing = vertex_types(mg)
    costs = CostModel(acquisition={e: float(rng.integers(1, 5)) for e in mg.edges})
    p1 = [b for b in net.buses if b != net.reference and b not in typing.p2_vertices]
    assume(p1)
    targets = sorted(int(x) for x in rng.choice(p1, size=int(rng.integers(1, 3)), replace=False))
    plan = min_cut_attack(net, plc, targets, costs, mg=mg, typing=typing)
    assert plan.cost == pytest.approx(brute_cut_cost(net, mg, targets, costs))
    eps = KnowledgeError.unknown_except(net, plan.knowledge_lines, rng)
    H = attacker_jacobian(net, plc, eps)
    a = H.full @ np.array([1.0 if b in plan.sink_side else 0.0 for b in net.buses])
    jac = build_jacobian(net, plc)
    res = wls_estimate(jac, apply_attack(jac.reduced @ rng.normal(size=jac.n), a))
    assert res.residual_norm < 1e-8


def test_p2_target_is_refused(five_bus):
    with pytest.raises(ValueError, match="bridging"):
        min_cut_attack(five_bus.network, five_bus.placement, [0])
    # when asked, the cut crosses the bridging edge itself
    assert min_cut_attack(five_bus.network, five_bus.placement, [0], allow_p2=True).knowledge_lines == {0}


def test_multi_border_region_is_not_forced_to_follow():
    # seed 24 has a P2 region with four bridging borders; v2 is P1 and the
    # cheapest cut isolates v2 alone instead of dragging the region along
    net, plc, _ = generate_case(14, 24)
    mg = measured_graph(net, plc)
    typing = vertex_types(mg)
    assert 1 not in typing.p2_vertices and len(typing.p2_vertices) > 5
    plan = min_cut_attack(net, plc, [1])
    assert plan.sink_side == {1}
    assert plan.cost == brute_cut_cost(net, mg, [1], CostModel())


def test_reference_target_is_refused(five_bus):
    with pytest.raises(ValueError):
        min_cut_attack(five_bus.network, five_bus.placement, [4])


def test_infinite_costs_block_the_attack(five_bus):
    net, plc, _ = five_bus
    costs = CostModel(acquisition={e: float("inf") for e in range(5)})
    with pytest.raises(NotAttackable):
        min_cut_attack(net, plc, [2], costs)


def test_pinned_bus_raises_cost(five_bus):
    net, plc, costs = five_bus
    free = min_cut_attack(net, plc, [2], costs)
    pinned = min_cut_attack(net, plc, [2], costs, pinned=[3])
    assert pinned.cost >= free.cost
    assert 3 in pinned.source_side


def test_bridging_attack_on_five_bus(five_bus):
    net, plc, _ = five_bus
    mg = measured_graph(net, plc)
    typing = vertex_types(mg)
    att = bridging_attack(net, plc, typing, 0, mg=mg)
    assert att.a.tolist() == [-1, 0, 0, 0, 0, 0]
    assert att.c.tolist() == [-1, 0, 0, 0]
    assert bridging_pattern_meters(net, plc, typing, 0) == {0}
    jac = build_jacobian(net, plc)
    z = jac.reduced @ np.array([0.2, 0.1, 0.0, -0.1])
    before, after = wls_estimate(jac, z), wls_estimate(jac, apply_attack(z, att))
    assert after.residual_norm == pytest.approx(before.residual_norm, abs=1e-12)
    np.testing.assert_allclose(after.theta_hat - before.theta_hat, att.c, atol=1e-12)


def test_bridging_attack_is_topology_free(five_bus):
    # the vector never reads a reactance; scaled reactances give the same a
    net, plc, _ = five_bus
    from gridshield.grid import Line, PowerNetwork
    scaled = PowerNetwork(5, 4, [Line(l.id, l.tail, l.head, l.reactance * 3.7) for l in net.lines])
    typing = vertex_types(measured_graph(net, plc))
    assert (bridging_attack(net, plc, typing, 0).a == bridging_attack(scaled, plc, typing, 0).a).all()


def test_bridging_attack_on_p1_target(five_bus):
    typing = vertex_types(measured_graph(five_bus.network, five_bus.placement))
    with pytest.raises(ValueError):
        bridging_attack(five_bus.network, five_bus.placement, typing, 2)


def test_theorem1_check(five_bus):
    mg = measured_graph(five_bus.network, five_bus.placement)
    c = np.array([0, 0, 1.0, 0, 0])
    assert theorem1_feasible(mg, c, {1, 3}).feasible
    check = theorem1_feasible(mg, c, {1})
    assert not check.feasible and check.violations == [3]
    assert theorem1_feasible(mg, {2: 1.0}, {1, 3}).feasible


def test_partition_attack_raises_on_unknown_crossing(five_bus):
    net, plc, _ = five_bus
    with pytest.raises(Theorem1Violation) as err:
        attack_vector_from_partition(net, plc, PartitionAssignment({2: 1}), {1})
    assert err.value.lines == [3]
    att = attack_vector_from_partition(net, plc, PartitionAssignment({2: 1}), {1, 3}, beta=0.5)
    np.testing.assert_allclose(att.c, [0, 0, 0.5, 0])
