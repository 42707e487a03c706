import numpy as np
import pytest

from gridshield.defense import augment, mixed_defense
from gridshield.grid import CostModel, generate_case
from gridshield.observability import min_weight_emst
from gridshield.tph import (ArcMeasuredArborescence, Sampler, arborescence_problems, prune,
                            sample_arborescences, tph_defense, tph_run)
from gridshield.verify import verify_plan

# twelve-vertex arborescence rooted at v1, written 1-based
TWELVE = [(1, 2), (1, 3), (1, 4), (2, 12), (3, 5), (4, 6), (4, 7), (6, 8), (7, 9), (7, 10), (9, 11)]
INJECTIONS = {(4, 6): {4, 6, 7, 8}, (9, 11): {7, 9, 11}}


def tree_from(pairs, injections=None, root=1):
    injections = injections or {}
    arcs = tuple((t - 1, h - 1, k) for k, (t, h) in enumerate(pairs))
    measures, kinds = {}, set()
    for (t, h, k), pair in zip(arcs, pairs):
        if pair in injections:
            measures[(t, h, k)] = frozenset(b - 1 for b in injections[pair])
            kinds.add((t, h, k))
        else:
            measures[(t, h, k)] = frozenset({t, h})
    return ArcMeasuredArborescence(root - 1, arcs, {a: a[2] for a in arcs}, float(len(arcs)), measures,
                                   {a: 1.0 for a in arcs}, frozenset(kinds))


def test_prune_twelve_vertex_tree():
    tree = tree_from(TWELVE, INJECTIONS)
    assert len(tree.vertices) == 12
    pruned = prune(tree, {0, 4, 7})
    assert sorted(b + 1 for b in pruned.vertices) == [1, 3, 4, 5, 6, 7, 8]
    assert pruned.weight == 6
    assert pruned.injection_arcs == {(3, 5, 5)}


def test_prune_without_injections_keeps_terminal_paths():
    pruned = prune(tree_from(TWELVE), {0, 4, 7})
    assert sorted(b + 1 for b in pruned.vertices) == [1, 3, 4, 5, 6, 8]


def test_prune_keeps_vertices_an_injection_needs():
    # the injection on v4->v6 reads v7, so v7 stays even though v7 has no terminal below
    pruned = prune(tree_from(TWELVE, {(4, 6): {4, 6, 7, 8}}), {0, 4, 7})
    assert 6 in pruned.vertices and 8 not in pruned.vertices


def random_tree(rng, n):
    return [(int(rng.integers(1, h)), h) for h in range(2, n + 1)]


@pytest.mark.parametrize("seed", range(30))
def test_all_terminal_leaves_are_kept(seed):
    rng = np.random.default_rng(seed)
    pairs = random_tree(rng, int(rng.integers(2, 15)))
    tree = tree_from(pairs)
    tails = {t for t, _ in pairs}
    leaves = {h - 1 for _, h in pairs if h not in tails}
    assert prune(tree, leaves | {0}) == tree


@pytest.mark.parametrize("seed", range(30))
def test_prune_keeps_terminals_and_shrinks(seed):
    rng = np.random.default_rng(100 + seed)
    n = int(rng.integers(3, 15))
    tree = tree_from(random_tree(rng, n))
    terms = {0} | {int(x) for x in rng.choice(n, size=int(rng.integers(1, n)), replace=False)}
    pruned = prune(tree, terms)
    assert terms <= pruned.vertices <= tree.vertices
    # every surviving leaf is a terminal
    tails = {t for t, _, _ in pruned.arcs}
    assert all(h in terms for _, h, _ in pruned.arcs if h not in tails)


def test_sampler_streams_nest():
    case = generate_case(14, 3)
    aug = augment(*case)
    vs = frozenset(range(14))
    small = sample_arborescences(aug, vs, 3, seed=9)
    large = sample_arborescences(aug, vs, 6, seed=9)
    assert small == large[:3]
    other = sample_arborescences(aug, vs, 3, seed=10)
    assert other[0] == small[0]            # stream 0 is the exact minimum
    assert other[1:] != small[1:]
    mg = aug.measured_graph()
    for tree in large:
        assert arborescence_problems(tree, mg) == []
        assert tree.vertices == vs


def test_stream_zero_is_minimum_weight():
    case = generate_case(14, 4, covert_fraction=0.3)
    aug = augment(*case)
    first = Sampler(aug, 0).draw(frozenset(range(14)), 0)
    emst = min_weight_emst(aug.measured_graph(), {m.id: aug.cost(m.id) for m in aug.meters})
    assert first.weight == pytest.approx(sum(aug.cost(m) for m in emst.mapping.values()))


@pytest.mark.parametrize("seed", range(10))
def test_heuristic_is_never_cheaper_than_optimum(seed):
    case = generate_case(14, 300 + seed, covert_fraction=0.3)
    rng = np.random.default_rng(seed)
    targets = sorted(int(x) for x in rng.choice([b for b in range(14) if b != case.network.reference],
                                                size=3, replace=False))
    exact = mixed_defense(case.network, case.placement, case.costs, targets)
    plans = [tph_defense(case.network, case.placement, case.costs, targets, K=k, seed=seed)
             for k in (1, 3, 15)]
    assert all(p.total_cost >= exact.total_cost - 1e-9 for p in plans)
    assert plans[0].total_cost >= plans[1].total_cost >= plans[2].total_cost
    for p in plans:
        assert verify_plan(case.network, case.placement, p, trials=3).passed


def test_all_buses_as_targets_gives_spanning_weight():
    case = generate_case(14, 5)
    aug = augment(*case)
    R = case.network.reference
    plan = tph_run(aug, [b for b in range(14) if b != R], K=2, seed=0)
    emst = min_weight_emst(aug.measured_graph(), {m.id: aug.cost(m.id) for m in aug.meters})
    assert plan.total_cost == pytest.approx(sum(aug.cost(m) for m in emst.mapping.values()))
    assert len(plan.arborescence) == 13


def test_same_seed_same_plan():
    case = generate_case(14, 6, covert_fraction=0.2)
    a = tph_defense(case.network, case.placement, case.costs, [2, 9], K=5, seed=4)
    b = tph_defense(case.network, case.placement, case.costs, [2, 9], K=5, seed=4)
    assert a == b


def test_bad_arguments(five_bus):
    aug = augment(*five_bus)
    with pytest.raises(ValueError):
        tph_run(aug, [], K=1)
    with pytest.raises(ValueError):
        tph_run(aug, [2], K=0)
    with pytest.raises(ValueError):
        tph_run(aug, [4], K=1)


def test_five_bus_heuristic(five_bus):
    plan = tph_defense(*five_bus, [0], K=3)
    assert plan.total_cost == 3
    assert verify_plan(five_bus.network, five_bus.placement, plan).passed


def test_unit_cost_plan_is_a_tree():
    case = generate_case(14, 8)
    plan = tph_defense(case.network, case.placement, CostModel(), [5, 10], K=3)
    heads = [h for _, h, _, _ in plan.arborescence]
    assert len(heads) == len(set(heads))
    assert {5, 10} <= set(heads)
