"""Undetectable attacks: minimum-cost cut attacks, bridging attacks, feasibility."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, NamedTuple

import numpy as np

from .dc import AttackVector, KnowledgeError, attacker_jacobian, build_jacobian, reduced_state
from .grid import CostModel, MeasurementPlacement, MeterKind, PowerNetwork, exact
from .observability import MeasuredGraph, VertexTyping, measured_graph, vertex_types


class NotAttackable(ValueError):
    pass


class Theorem1Violation(ValueError):
    def __init__(self, lines):
        self.lines = sorted(lines)
        super().__init__("crossing lines without exact knowledge: "
                         + ", ".join(f"e{l + 1}" for l in self.lines))


# ------------------------------------------------------------------ max-flow

def max_flow(n_nodes: int, arcs: Iterable[tuple[int, int, Fraction]], source: int, sink: int):
    """Edmonds-Karp on exact capacities.

    ``arcs`` are directed ``(u, v, capacity)``; parallel arcs add up.
    Returns ``(value, source_side)`` where ``source_side`` is the set of
    nodes reachable from the source in the final residual network.
    """
    cap = [dict() for _ in range(n_nodes)]
    for u, v, c in arcs:
        cap[u][v] = cap[u].get(v, 0) + c
        cap[v].setdefault(u, 0)
    value = Fraction(0)
    while True:
        prev = {source: None}
        queue = deque([source])
        while queue and sink not in prev:
            a = queue.popleft()
            for b in sorted(cap[a]):
                if b not in prev and cap[a][b] > 0:
                    prev[b] = a
                    queue.append(b)
        if sink not in prev:
            return value, frozenset(prev)
        push, b = None, sink
        while prev[b] is not None:
            a = prev[b]
            push = cap[a][b] if push is None else min(push, cap[a][b])
            b = a
        b = sink
        while prev[b] is not None:
            a = prev[b]
            cap[a][b] -= push
            cap[b][a] += push
            b = a
        value += push


# -------------------------------------------------------------- feasibility

class Theorem1Check(NamedTuple):
    feasible: bool
    violations: list[int]


def theorem1_feasible(mg: MeasuredGraph, c, known_lines: Iterable[int], tol: float = 1e-12) -> Theorem1Check:
    """Every measured line is known exactly or carries equal error at both ends.

    ``c`` is a bus vector (length n+1) or a bus -> value mapping.
    """
    if isinstance(c, Mapping):
        value = lambda b: c.get(b, 0.0)
    else:
        arr = np.asarray(c, dtype=float)
        value = lambda b: arr[b]
    known = set(known_lines)
    bad = [e for e in mg.edges
           if e not in known and abs(value(mg.ends[e][0]) - value(mg.ends[e][1])) > tol]
    return Theorem1Check(not bad, bad)


# ---------------------------------------------------------------- attacks

@dataclass(frozen=True)
class PartitionAssignment:
    labels: Mapping[int, int]

    def label(self, bus: int) -> int:
        return self.labels.get(bus, 0)


@dataclass(frozen=True)
class AttackPlan:
    source_side: frozenset[int]
    sink_side: frozenset[int]
    knowledge_lines: frozenset[int]
    cost: float
    beta: float
    attack: AttackVector
    flow_value: Fraction | None = None
    topology_free: bool = False
    targets: frozenset[int] = field(default_factory=frozenset)


def attack_vector_from_partition(network: PowerNetwork, placement: MeasurementPlacement,
                                 assignment: PartitionAssignment, known: KnowledgeError | Iterable[int],
                                 beta: float = 1.0, mg: MeasuredGraph | None = None) -> AttackVector:
    """``a = H~ c`` with ``c_j = label(j) * beta``.

    ``known`` is either the attacker's knowledge error (lines with zero
    perturbation count as known) or a set of exactly known lines.
    """
    mg = mg or measured_graph(network, placement)
    if isinstance(known, KnowledgeError):
        eps = known
        known_lines = {l.id for l in network.lines if eps[l.id] == 0}
    else:
        known_lines = set(known)
        eps = KnowledgeError()
    c_full = np.array([assignment.label(b) * beta for b in network.buses], dtype=float)
    c_full -= c_full[network.reference]
    check = theorem1_feasible(mg, c_full, known_lines)
    if not check.feasible:
        raise Theorem1Violation(check.violations)
    H = attacker_jacobian(network, placement, eps)
    a = H.full @ c_full
    return AttackVector(a, reduced_state(network, c_full))


def min_cut_attack(network: PowerNetwork, placement: MeasurementPlacement, targets: Iterable[int],
                   costs: CostModel | None = None, beta: float = 1.0,
                   eps: KnowledgeError | None = None, pinned: Iterable[int] = (),
                   mg: MeasuredGraph | None = None, typing: VertexTyping | None = None,
                   allow_p2: bool = False) -> AttackPlan:
    """Cheapest set of line reactances that lets the attacker shift ``targets``.

    The cut runs over the whole measured graph. A P2 region with a single
    bridging border simply follows the bus it hangs from (that costs
    nothing), while a region with several borders lands on whichever side
    is cheaper. ``pinned`` buses cannot be moved (a secured phasor reading);
    they are tied to the reference by an uncuttable edge. P2 targets are
    refused unless ``allow_p2``: a topology-free attack is cheaper there.
    """
    costs = costs or CostModel()
    targets = sorted(set(targets))
    R = network.reference
    if not targets:
        raise ValueError("no targets")
    if R in targets:
        raise ValueError("the reference bus cannot be a target")
    mg = mg or measured_graph(network, placement)
    typing = typing or vertex_types(mg)
    p2 = [d for d in targets if d in typing.p2_vertices]
    if p2 and not allow_p2:
        raise ValueError("P2-type target(s) " + ", ".join(f"v{d + 1}" for d in p2)
                         + ": use bridging_attack")

    weights = {e: costs.acquisition_cost(e) for e in mg.edges}
    finite = sum((exact(w) for w in weights.values() if math.isfinite(w)), Fraction(0))
    sentinel = finite + 1
    cap = {e: (exact(w) if math.isfinite(w) else sentinel) for e, w in weights.items()}

    sink = network.n_buses
    arcs = []
    for e in mg.edges:
        u, v = mg.ends[e]
        arcs += [(u, v, cap[e]), (v, u, cap[e])]
    for d in targets:
        arcs.append((d, sink, sentinel))
    for b in pinned:
        if b != R:
            arcs += [(R, b, sentinel), (b, R, sentinel)]
    value, reach = max_flow(network.n_buses + 1, arcs, R, sink)
    if value >= sentinel:
        raise NotAttackable("target not attackable with available knowledge")

    source = {b for b in network.buses if b in reach}
    sink_side = frozenset(b for b in network.buses if b not in source)
    source_side = frozenset(source)
    cut = frozenset(e for e in mg.edges
                    if (mg.ends[e][0] in source_side) != (mg.ends[e][1] in source_side))

    labels = {b: 1 for b in sink_side}
    eps = eps or KnowledgeError()
    eps = KnowledgeError({l: v for l, v in eps.epsilon.items() if l not in cut})
    attack = attack_vector_from_partition(network, placement, PartitionAssignment(labels), eps,
                                          beta, mg)
    cost = sum(costs.acquisition_cost(e) for e in cut)
    return AttackPlan(source_side, sink_side, cut, cost, beta, attack, value,
                      targets=frozenset(targets))


def bridging_region(mg: MeasuredGraph, typing: VertexTyping, target: int):
    """``(region, edge)``: the P2 region holding ``target`` and its only border edge."""
    if target not in typing.p2_vertices:
        raise ValueError(f"v{target + 1} is P1-type: a topology-free attack does not apply")
    region = {target}
    stack = [target]
    while stack:
        a = stack.pop()
        for e in mg.edges:
            if e in typing.bridging or a not in mg.ends[e]:
                continue
            b = mg.ends[e][1] if mg.ends[e][0] == a else mg.ends[e][0]
            if b not in region:
                region.add(b)
                stack.append(b)
    border = [e for e in mg.edges if (mg.ends[e][0] in region) != (mg.ends[e][1] in region)]
    if len(border) != 1:
        raise NotAttackable(f"v{target + 1}: region has {len(border)} bridging border edges; "
                            "no single-edge topology-free pattern")
    return frozenset(region), border[0]


def bridging_attack(network: PowerNetwork, placement: MeasurementPlacement, typing: VertexTyping,
                    target: int, amount: float = 1.0, mg: MeasuredGraph | None = None) -> AttackVector:
    """Topology-free attack behind a bridging edge.

    Meters on the border edge get ``+-amount`` so that every bus of the
    target's region reads ``amount / y`` lower. Building ``a`` needs no
    admittance; ``c`` is attached for reference and uses the true ``y``.
    """
    mg = mg or measured_graph(network, placement)
    region, edge = bridging_region(mg, typing, target)
    line = network.lines[edge]
    inner = line.tail if line.tail in region else line.head
    outer = line.other(inner)
    a = np.zeros(len(placement))
    for m in placement:
        if m.kind is MeterKind.INJECTION:
            if m.bus == outer:
                a[m.id] = amount
            elif m.bus == inner:
                a[m.id] = -amount
        elif m.line == edge:
            # flow outer -> inner grows by `amount`
            a[m.id] = m.direction * (amount if line.tail == outer else -amount)
    c_full = np.zeros(network.n_buses)
    for b in region:
        c_full[b] = -amount / line.admittance
    return AttackVector(a, reduced_state(network, c_full))


def bridging_pattern_meters(network, placement, typing, target, mg=None) -> frozenset[int]:
    """Meters a topology-free attack on ``target`` must alter."""
    att = bridging_attack(network, placement, typing, target, mg=mg)
    return frozenset(int(i) for i in np.flatnonzero(att.a))
