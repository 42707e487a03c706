"""Tree pruning heuristic: sample arc-measured spanning arborescences, prune
them towards the terminals, and repeat on the surviving vertex set."""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .defense import AugmentedPlacement, DefensePlan, Undefendable, augment, plan_from_arcs
from .grid import CostModel, MeterKind, Pmu
from .observability import MeasuredGraph, min_weight_emst

Arc = tuple[int, int, int]  # (tail, head, edge)


@dataclass(frozen=True)
class ArcMeasuredArborescence:
    root: int
    arcs: tuple[Arc, ...]
    mapping: Mapping[Arc, int]
    weight: float
    measures: Mapping[Arc, frozenset[int]]
    arc_cost: Mapping[Arc, float]
    injection_arcs: frozenset[Arc] = frozenset()

    @property
    def vertices(self) -> frozenset[int]:
        return frozenset({self.root} | {h for _, h, _ in self.arcs})


@dataclass
class PruneState:
    children: dict[int, list[int]]
    descendants: dict[int, frozenset[int]]
    terminals: frozenset[int]

    @classmethod
    def of(cls, tree: ArcMeasuredArborescence, terminals) -> "PruneState":
        children: dict[int, list[int]] = {v: [] for v in tree.vertices}
        for t, h, _ in tree.arcs:
            children[t].append(h)
        desc: dict[int, frozenset[int]] = {}

        def walk(v):
            acc = set()
            for c in children[v]:
                acc |= {c} | walk(c)
            desc[v] = frozenset(acc)
            return acc

        walk(tree.root)
        return cls(children, desc, frozenset(terminals))


def arborescence_problems(tree: ArcMeasuredArborescence, mg: MeasuredGraph) -> list[str]:
    problems = []
    heads = [h for _, h, _ in tree.arcs]
    if len(set(heads)) != len(heads) or tree.root in heads:
        problems.append("a vertex has two parents or the root has one")
    reach = {tree.root}
    pending = list(tree.arcs)
    while pending:
        nxt = [a for a in pending if a[0] not in reach]
        if len(nxt) == len(pending):
            problems.append("arcs not connected to the root")
            break
        reach |= {a[1] for a in pending if a[0] in reach}
        pending = nxt
    meters = list(tree.mapping.values())
    if len(set(meters)) != len(meters):
        problems.append("a meter is mapped twice")
    for arc in tree.arcs:
        m = tree.mapping.get(arc)
        if m is None or m not in mg.measurable.get(arc[2], ()):
            problems.append(f"arc {arc} is not measured by its meter")
            continue
        if set(mg.ends[arc[2]]) != {arc[0], arc[1]}:
            problems.append(f"arc {arc} does not follow its edge")
        if mg.meter_kind.get(m) is MeterKind.INJECTION and not tree.measures[arc] <= tree.vertices:
            problems.append(f"injection on arc {arc} measures a vertex outside the tree")
    return problems


def _measures(mg: MeasuredGraph, meter: int, edge: int) -> frozenset[int]:
    if mg.meter_kind.get(meter) is MeterKind.INJECTION:
        return frozenset(x for e in mg.meter_edges[meter] for x in mg.ends[e])
    return frozenset(mg.ends[edge])


def orient(mg: MeasuredGraph, edges_to_meter: Mapping[int, int], root: int,
           cost: Mapping[int, float]) -> ArcMeasuredArborescence:
    adj: dict[int, list[int]] = {}
    for e in edges_to_meter:
        u, v = mg.ends[e]
        adj.setdefault(u, []).append(e)
        adj.setdefault(v, []).append(e)
    arcs, seen, stack = [], {root}, [root]
    while stack:
        a = stack.pop()
        for e in sorted(adj.get(a, ())):
            b = mg.ends[e][1] if mg.ends[e][0] == a else mg.ends[e][0]
            if b not in seen:
                seen.add(b)
                arcs.append((a, b, e))
                stack.append(b)
    mapping = {arc: edges_to_meter[arc[2]] for arc in arcs}
    measures = {arc: _measures(mg, mapping[arc], arc[2]) for arc in arcs}
    arc_cost = {arc: cost[mapping[arc]] for arc in arcs}
    injections = frozenset(a for a in arcs if mg.meter_kind.get(mapping[a]) is MeterKind.INJECTION)
    return ArcMeasuredArborescence(root, tuple(arcs), mapping, sum(arc_cost.values()), measures,
                                   arc_cost, injections)


class Sampler:
    """Seeded witnesses per (k, vertex set); stream k never depends on K."""

    def __init__(self, aug: AugmentedPlacement, seed: int = 0, spread: float = 0.5):
        self.aug = aug
        self.mg = aug.measured_graph()
        self.seed = seed
        self.spread = spread
        self.cache: dict = {}

    def draw(self, vertices: frozenset[int], k: int) -> ArcMeasuredArborescence:
        key = (k, vertices)
        if key not in self.cache:
            tag = zlib.crc32(",".join(map(str, sorted(vertices))).encode())
            rng = np.random.default_rng([self.seed, k, tag])
            meters = sorted(self.mg.meter_edges)
            noise = np.exp(rng.normal(0.0, self.spread, len(meters))) if k else np.ones(len(meters))
            # stream 0 is the exact minimum; later streams perturb the prices
            weights = {m: self.aug.cost(m) * f + 1e-9 * (1 + i) for i, (m, f) in
                       enumerate(zip(meters, noise))}
            emst = min_weight_emst(self.mg, weights, vertices)
            if emst is None:
                raise Undefendable("vertex set is not observable")
            cost = {m: self.aug.cost(m) for m in meters}
            self.cache[key] = orient(self.mg, emst.mapping, self.aug.network.reference, cost)
        return self.cache[key]


def sample_arborescences(aug: AugmentedPlacement, vertices: Iterable[int], K: int, seed: int = 0,
                         sampler: Sampler | None = None) -> list[ArcMeasuredArborescence]:
    sampler = sampler or Sampler(aug, seed)
    vs = frozenset(vertices)
    return [sampler.draw(vs, k) for k in range(K)]


def prune(tree: ArcMeasuredArborescence, terminals: Iterable[int]) -> ArcMeasuredArborescence:
    """Drop subtrees without terminals, root first.

    At each vertex the largest removable set of children is cut: a child is
    removable when its subtree holds no terminal and no remaining
    injection-mapped arc measures a vertex inside it. Removable sets are
    closed under union, so shrinking the candidate set to a fixpoint yields
    the largest one.
    """
    state = PruneState.of(tree, terminals)
    removed: set[int] = set()
    order = [tree.root]
    k = 0
    while k < len(order):
        i = order[k]
        k += 1
        kids = state.children[i]
        closure = {c: {c} | state.descendants[c] for c in kids}
        cand = {c for c in kids if not closure[c] & state.terminals}
        while cand:
            gone = removed.union(*(closure[c] for c in cand))
            watched = set()
            for arc in tree.injection_arcs:
                if arc[1] not in gone:
                    watched |= tree.measures[arc]
            blocked = {c for c in cand if closure[c] & watched}
            if not blocked:
                break
            cand -= blocked
        for c in cand:
            removed |= closure[c]
        order += [c for c in kids if c not in cand]
    arcs = tuple(a for a in tree.arcs if a[1] not in removed)
    keep = set(arcs)
    return ArcMeasuredArborescence(
        tree.root, arcs, {a: tree.mapping[a] for a in arcs}, sum(tree.arc_cost[a] for a in arcs),
        {a: tree.measures[a] for a in arcs}, {a: tree.arc_cost[a] for a in arcs},
        frozenset(a for a in tree.injection_arcs if a in keep))


@dataclass(frozen=True)
class TphTrace:
    rounds: int
    weights: tuple[float, ...]


def _core(aug: AugmentedPlacement, targets: frozenset[int], K: int, sampler: Sampler):
    R = aug.network.reference
    terminals = targets | {R}
    vbar = frozenset(range(aug.network.n_buses))
    best, w_best = None, math.inf
    history = []
    rounds = 0
    while True:
        prev, w_prev = best, w_best
        samples = [sampler.draw(vbar, k) for k in range(K)]
        w0 = min(t.weight for t in samples)
        pruned = [prune(t, terminals) for t in samples]
        best = min(pruned, key=lambda t: (t.weight, len(t.arcs)))
        w_best = best.weight
        history.append(w_best)
        rounds += 1
        vbar = best.vertices
        if w_best >= min(w0, w_prev):
            break
    chosen = prev if w_prev < w0 else best
    return chosen, TphTrace(rounds, tuple(history))


def tph_run(aug: AugmentedPlacement, targets: Iterable[int], K: int = 1, seed: int = 0,
            monotone: bool = True, sampler: Sampler | None = None) -> DefensePlan:
    """Heuristic mixed-defense plan.

    With ``monotone`` the result for K is the best of the runs with 1..K
    samples, so a larger K never costs more.
    """
    targets = frozenset(targets)
    if not targets:
        raise ValueError("no targets")
    if K < 1:
        raise ValueError("K must be at least 1")
    R = aug.network.reference
    if R in targets:
        raise ValueError("the reference bus cannot be a target")
    sampler = sampler or Sampler(aug, seed)
    missing = [d for d in targets if d not in sampler.mg.vertices]
    if missing:
        raise Undefendable("targets outside the measured graph: "
                           + ", ".join(f"v{d + 1}" for d in sorted(missing)))
    runs = range(1, K + 1) if monotone else [K]
    best = None
    for j in runs:
        tree, trace = _core(aug, targets, j, sampler)
        if best is None or tree.weight < best[0].weight - 1e-12:
            best = (tree, trace, j)
    tree, trace, j = best
    arcs = [(t, h, e, tree.mapping[(t, h, e)]) for t, h, e in tree.arcs]
    info = {"rounds": trace.rounds, "weights": list(trace.weights), "K": K, "best_prefix": j,
            "seed": sampler.seed}
    return plan_from_arcs(aug, arcs, targets, "tph", info)


def tph_defense(network, placement, costs: CostModel, targets: Iterable[int], pmus: Iterable[Pmu] = (),
                K: int = 1, seed: int = 0) -> DefensePlan:
    return tph_run(augment(network, placement, costs, pmus), targets, K, seed)
