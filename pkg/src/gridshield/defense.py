"""Defense planning: covert lines (CTI), secured meters, and PMUs.

Covert lines enter the analysis as virtual flow meters and PMUs as pseudo
flow meters on a line to the reference bus. A plan is a minimum
arc-measured Steiner arborescence (MASA) rooted at the reference, found
with a MILP and restored into covert lines, secured meters, and PMUs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .grid import CostModel, Line, MeasurementPlacement, Meter, MeterKind, PowerNetwork, Pmu
from .milp import MilpModel, MilpSolution, solve
from .observability import MeasuredGraph, VertexTyping, is_observable, measured_graph, vertex_types


class Undefendable(ValueError):
    pass


@dataclass(frozen=True)
class AugmentedPlacement:
    """Analysis meters: the base meters first, then virtual and pseudo ones.

    ``sources[m]`` names the cheapest real item behind analysis meter ``m``:
    ``("meter", id)``, ``("covert", line)`` or ``("pmu", bus)``.
    """

    network: PowerNetwork
    base: MeasurementPlacement
    meters: tuple[Meter, ...]
    merged_costs: Mapping[int, float]
    sources: Mapping[int, tuple[str, int]]
    warnings: tuple[str, ...] = ()

    @property
    def virtual_meters(self) -> list[Meter]:
        return [m for m in self.meters if m.kind is MeterKind.VIRTUAL]

    @property
    def pseudo_meters(self) -> list[Meter]:
        return [m for m in self.meters if m.kind is MeterKind.PSEUDO]

    def cost(self, meter: int) -> float:
        return self.merged_costs[meter]

    def flow_meters_on(self, line: int) -> list[Meter]:
        return [m for m in self.meters if m.kind.is_flow_type and m.line == line]

    def measured_graph(self) -> MeasuredGraph:
        return measured_graph(self.network, self.meters)


def _merge_flow_source(meters, costs, sources, network, line, kind, cost, source, extra_lines=()):
    """Attach a covert line or PMU to ``line``: merge with existing flow-type
    meters at minimum cost, otherwise add a new analysis meter."""
    existing = [m for m in meters if m.kind.is_flow_type and m.line == line]
    if existing:
        for m in existing:
            if cost < costs[m.id]:
                costs[m.id] = cost
                sources[m.id] = source
        return
    mid = len(meters)
    meters.append(Meter(mid, kind, cost, line=line, direction=1))
    costs[mid] = cost
    sources[mid] = source


def virtualize(network: PowerNetwork, placement: MeasurementPlacement, costs: CostModel,
               typing: VertexTyping | None = None) -> AugmentedPlacement:
    """Virtual flow meters for non-bridging covert candidates."""
    if typing is None:
        typing = vertex_types(measured_graph(network, placement))
    meters = list(placement.meters)
    merged = {m.id: m.secure_cost for m in meters}
    sources = {m.id: ("meter", m.id) for m in meters}
    warnings = []
    measured = set(measured_graph(network, placement).edges)
    for line, cost in sorted(costs.covert_candidates.items()):
        if line in typing.bridging:
            warnings.append(f"e{line + 1} is a bridging edge; dropped from the covert candidates")
            continue
        if line not in measured:
            warnings.append(f"e{line + 1} is unmeasured; dropped from the covert candidates")
            continue
        _merge_flow_source(meters, merged, sources, network, line, MeterKind.VIRTUAL, cost,
                           ("covert", line))
    return AugmentedPlacement(network, placement, tuple(meters), merged, sources, tuple(warnings))


def pmu_augment(aug: AugmentedPlacement, pmus: Iterable[Pmu]) -> AugmentedPlacement:
    """Pseudo flow meters that pin PMU buses to the reference."""
    network = aug.network
    R = network.reference
    meters = list(aug.meters)
    merged = dict(aug.merged_costs)
    sources = dict(aug.sources)
    lines = list(network.lines)
    for pmu in pmus:
        if not 0 <= pmu.bus < network.n_buses:
            raise ValueError(f"PMU on nonexistent bus {pmu.bus + 1}")
        if pmu.bus == R:
            continue
        to_ref = [ln for ln in lines if set(ln.ends) == {pmu.bus, R}]
        if to_ref:
            line = to_ref[0].id
        else:
            line = len(lines)
            lines.append(Line(line, pmu.bus, R, 1.0, pseudo=True))
        _merge_flow_source(meters, merged, sources, network, line, MeterKind.PSEUDO,
                           pmu.secure_cost, ("pmu", pmu.bus))
    net = PowerNetwork(network.n_buses, R, lines)
    return AugmentedPlacement(net, aug.base, tuple(meters), merged, sources, aug.warnings)


def augment(network, placement, costs: CostModel, pmus: Iterable[Pmu] = (),
            typing: VertexTyping | None = None) -> AugmentedPlacement:
    return pmu_augment(virtualize(network, placement, costs, typing), pmus)


# ----------------------------------------------------------------- MASA

@dataclass(frozen=True)
class MasaInstance:
    root: int
    terminals: frozenset[int]
    edges: tuple[tuple[int, int, int], ...]          # (edge id, u, v)
    flow_cost: Mapping[int, float]                   # edges with a flow-type meter
    flow_meter: Mapping[int, int]
    injection_cost: Mapping[int, float]              # buses with an injection meter
    injection_meter: Mapping[int, int]
    pseudo_edges: frozenset[int]
    real_neighbors: Mapping[int, tuple[int, ...]]
    tighten: bool = True
    commodities: bool = True

    @property
    def arcs(self) -> list[tuple[int, int, int]]:
        out = []
        for e, u, v in self.edges:
            out += [(u, v, e), (v, u, e)]
        return out

    @property
    def q(self) -> int:
        degree: dict[int, int] = {}
        for _, u, v in self.edges:
            degree[u] = degree.get(u, 0) + 1
            degree[v] = degree.get(v, 0) + 1
        delta = max(degree.values(), default=0)
        return len(self.terminals) + len(self.injection_cost) * (delta + 1) + 1


def masa_instance(aug: AugmentedPlacement, targets: Iterable[int],
                  edges: Iterable[int] | None = None, use_injections: bool = True,
                  flow_costs: Mapping[int, float] | None = None, tighten: bool = True,
                  commodities: bool = True) -> MasaInstance:
    mg = aug.measured_graph()
    R = aug.network.reference
    keep = set(mg.edges if edges is None else edges)
    pseudo = {ln.id for ln in aug.network.lines if ln.pseudo}
    edge_list = tuple((e, *mg.ends[e]) for e in mg.edges if e in keep)
    flow_cost, flow_meter = {}, {}
    for e, _, _ in edge_list:
        if flow_costs is not None:
            if e in flow_costs:
                flow_cost[e] = flow_costs[e]
            continue
        cands = [m for m in aug.flow_meters_on(e)]
        if cands:
            best = min(cands, key=lambda m: (aug.cost(m.id), m.id))
            flow_cost[e], flow_meter[e] = aug.cost(best.id), best.id
    inj_cost, inj_meter = {}, {}
    if use_injections:
        for m in aug.meters:
            if m.kind is MeterKind.INJECTION and m.id in mg.meter_edges:
                if m.bus not in inj_cost or aug.cost(m.id) < inj_cost[m.bus]:
                    inj_cost[m.bus], inj_meter[m.bus] = aug.cost(m.id), m.id
    neighbors = {}
    for b in inj_cost:
        neighbors[b] = tuple(sorted({aug.network.lines[e].other(b) for e in mg.meter_edges[inj_meter[b]]}))
    targets = frozenset(targets)
    if not targets:
        raise ValueError("no targets")
    if R in targets:
        raise ValueError("the reference bus cannot be a target")
    return MasaInstance(R, targets, edge_list, flow_cost, flow_meter, inj_cost, inj_meter,
                        frozenset(pseudo & keep), neighbors, tighten, commodities)


def _x(u, v, e):
    return f"x_{u}_{v}_{e}"


def _y(u, v, e):
    return f"y_{u}_{v}_{e}"


def _z(u, v, e):
    return f"z_{u}_{v}_{e}"


def build_masa_milp(inst: MasaInstance) -> MilpModel:
    """MILP whose optimum is a minimum-cost arc-measured Steiner arborescence.

    ``z_u_v_e = 1`` maps the injection meter at ``u`` onto edge ``e = {u, v}``.
    """
    model = MilpModel(name="masa")
    q = inst.q
    model.metadata.update(q=q, root=inst.root, terminals=sorted(inst.terminals))
    arcs = inst.arcs
    for u, v, e in arcs:
        model.add_variable(_x(u, v, e), "binary")
    for u, v, e in arcs:
        model.add_variable(_y(u, v, e), "continuous", 0.0, math.inf)
    for u, v, e in arcs:
        allowed = u in inst.injection_cost and e not in inst.pseudo_edges
        model.add_variable(_z(u, v, e), "binary", 0.0, 1.0 if allowed else 0.0)

    # demand upper bound: every terminal plus each injection pulling in itself and its neighbours
    if q <= len(inst.terminals) + sum(1 + len(inst.real_neighbors[b]) for b in inst.injection_cost):
        raise AssertionError("q does not exceed the total commodity")

    objective = {}
    for u, v, e in arcs:
        w = inst.flow_cost.get(e, 0.0)
        objective[_x(u, v, e)] = objective.get(_x(u, v, e), 0.0) + w
        if u in inst.injection_cost and e not in inst.pseudo_edges:
            objective[_z(u, v, e)] = inst.injection_cost[u] - w
    model.set_objective(objective)

    has_flow = set(inst.flow_cost)
    for u, v, e in arcs:
        model.add_constraint({_y(u, v, e): 1.0, _x(u, v, e): -float(q)}, "<=", 0.0,
                             name=f"cap_{u}_{v}_{e}")
        model.add_constraint({_x(u, v, e): -1.0, _z(u, v, e): 1.0, _z(v, u, e): 1.0}, ">=",
                             -(1.0 if e in has_flow else 0.0), name=f"map_{u}_{v}_{e}")
    for e, u, v in inst.edges:
        model.add_constraint({_z(u, v, e): 1.0, _z(v, u, e): 1.0,
                              _x(u, v, e): -1.0, _x(v, u, e): -1.0}, "<=", 0.0,
                             name=f"use_{e}")
        # an arborescence never holds both directions of an edge
        model.add_constraint({_x(u, v, e): 1.0, _x(v, u, e): 1.0}, "<=", 1.0, name=f"anti_{e}")
    out_arcs: dict[int, list] = {}
    in_arcs: dict[int, list] = {}
    for u, v, e in arcs:
        out_arcs.setdefault(u, []).append((u, v, e))
        in_arcs.setdefault(v, []).append((u, v, e))
    for b in inst.injection_cost:
        model.add_constraint({_z(b, v, e): 1.0 for _, v, e in out_arcs.get(b, [])
                              if e not in inst.pseudo_edges}, "<=", 1.0, name=f"inj_{b}")

    def mapped(b):
        """Expression: 1 if the injection at b is mapped somewhere."""
        return {_z(b, v, e): 1.0 for _, v, e in out_arcs.get(b, []) if e not in inst.pseudo_edges}

    vertices = sorted({x for _, u, v in inst.edges for x in (u, v)})
    for j in vertices:
        if j == inst.root:
            continue
        expr: dict[str, float] = {}
        for a in in_arcs.get(j, []):
            expr[_y(*a)] = expr.get(_y(*a), 0.0) + 1.0
        for a in out_arcs.get(j, []):
            expr[_y(*a)] = expr.get(_y(*a), 0.0) - 1.0
        demand = {}
        if j in inst.injection_cost:
            for k, c in mapped(j).items():
                demand[k] = demand.get(k, 0.0) + c
        for k in inst.injection_cost:
            if j in inst.real_neighbors[k]:
                for name, c in mapped(k).items():
                    demand[name] = demand.get(name, 0.0) + c
        for name, c in demand.items():
            expr[name] = expr.get(name, 0.0) - c
        model.add_constraint(expr, "=", 1.0 if j in inst.terminals else 0.0, name=f"flow_{j}")

        if inst.tighten:
            entering = {_x(*a): 1.0 for a in in_arcs.get(j, [])}
            if j in inst.terminals:
                model.add_constraint(entering, ">=", 1.0, name=f"reach_{j}")
            if j in inst.injection_cost:
                model.add_constraint({**entering, **{k: -c for k, c in mapped(j).items()}}, ">=", 0.0,
                                     name=f"self_{j}")
            for k in inst.injection_cost:
                if j in inst.real_neighbors[k]:
                    model.add_constraint({**entering, **{n: -c for n, c in mapped(k).items()}},
                                         ">=", 0.0, name=f"nbr_{k}_{j}")
            for a in out_arcs.get(j, []):
                model.add_constraint({**entering, _x(*a): -1.0}, ">=", 0.0,
                                     name=f"chain_{a[0]}_{a[1]}_{a[2]}")
            if entering:
                model.add_constraint(entering, "<=", 1.0, name=f"parent_{j}")
    if inst.commodities:
        # one unit per terminal on its own flow, each capped by x: the
        # aggregated big-q flow alone gives a weak relaxation
        for d in sorted(inst.terminals):
            if d not in vertices:
                continue
            names = {a: f"f{d}_{a[0]}_{a[1]}_{a[2]}" for a in arcs}
            for a in arcs:
                model.add_variable(names[a], "continuous", 0.0, 1.0)
                model.add_constraint({names[a]: 1.0, _x(*a): -1.0}, "<=", 0.0, name=f"fcap{d}_{a[0]}_{a[1]}_{a[2]}")
            for j in vertices:
                if j == inst.root:
                    continue
                expr = {}
                for a in in_arcs.get(j, []):
                    expr[names[a]] = expr.get(names[a], 0.0) + 1.0
                for a in out_arcs.get(j, []):
                    expr[names[a]] = expr.get(names[a], 0.0) - 1.0
                model.add_constraint(expr, "=", 1.0 if j == d else 0.0, name=f"fflow{d}_{j}")
    if any(j not in vertices for j in inst.terminals):
        # a terminal outside the measured graph can never be reached
        model.add_constraint({}, ">=", 1.0, name="unreachable")
    return model


# ------------------------------------------------------------- restoration

@dataclass(frozen=True)
class DefensePlan:
    covert_lines: frozenset[int]
    secured_meters: frozenset[int]
    total_cost: float
    arborescence: tuple[tuple[int, int, int, int], ...]   # (tail, head, edge, analysis meter)
    targets: frozenset[int] = frozenset()
    secured_pmus: frozenset[int] = frozenset()
    mode: str = "mixed"
    solver: Mapping = field(default_factory=dict)
    witness: tuple[tuple[str, int], ...] = ()   # real item behind each arborescence arc

    def restored_items(self):
        return ([("covert", l) for l in sorted(self.covert_lines)]
                + [("meter", m) for m in sorted(self.secured_meters)]
                + [("pmu", b) for b in sorted(self.secured_pmus)])


def item_cost(item: tuple[str, int], placement: MeasurementPlacement, costs: CostModel,
              pmus: Sequence[Pmu]) -> float:
    kind, ident = item
    if kind == "covert":
        return costs.covert_candidates.get(ident, 1.0)
    if kind == "meter":
        return placement[ident].secure_cost
    return next(p.secure_cost for p in pmus if p.bus == ident)


def plan_from_arcs(aug: AugmentedPlacement, mapped_arcs, targets, mode, solver_info=None,
                   item_costs: Mapping | None = None) -> DefensePlan:
    """Restore ``(tail, head, edge, analysis meter)`` arcs into a plan."""
    covert, meters, pmus = set(), set(), set()
    cost = 0.0
    seen = set()
    for _, _, _, mid in mapped_arcs:
        kind, ident = aug.sources[mid]
        if (kind, ident) in seen:
            continue
        seen.add((kind, ident))
        cost += item_costs[(kind, ident)] if item_costs else aug.cost(mid)
        {"covert": covert, "meter": meters, "pmu": pmus}[kind].add(ident)
    return DefensePlan(frozenset(covert), frozenset(meters), cost, tuple(mapped_arcs),
                       frozenset(targets), frozenset(pmus), mode, dict(solver_info or {}),
                       tuple(aug.sources[mid] for *_, mid in mapped_arcs))


def restore_arcs(inst: MasaInstance, sol: MilpSolution) -> list[tuple[int, int, int, int]]:
    """Selected arcs with the analysis meter each one is mapped to."""
    val = sol.values
    out = []
    for e, u, v in inst.edges:
        chosen = [(a, b) for a, b in ((u, v), (v, u)) if val[_x(a, b, e)] > 0.5]
        injections = [a for a, b in ((u, v), (v, u)) if val[_z(a, b, e)] > 0.5]
        for a, b in chosen:
            if injections:
                owner = injections.pop(0)
                out.append((a, b, e, inst.injection_meter[owner]))
            elif e in inst.flow_meter:
                out.append((a, b, e, inst.flow_meter[e]))
            else:
                raise AssertionError(f"arc on edge {e} has no meter")
    return out


def _solve_masa(inst: MasaInstance, backend: str):
    model = build_masa_milp(inst)
    if backend == "auto":
        backend = "bnb" if len(model.binaries) <= 240 else "highs"
    sol = solve(model, backend=backend)
    info = {"status": sol.status, "objective": sol.objective_value, "nodes": sol.nodes,
            "simplex_iterations": sol.simplex_iterations, "backend": backend, "q": inst.q}
    return model, sol, info


def cti_instance(network: PowerNetwork, placement: MeasurementPlacement, costs: CostModel,
                 targets: Iterable[int], typing: VertexTyping | None = None):
    """``(instance, candidates)`` for a covert-lines-only defense."""
    targets = frozenset(targets)
    if not targets:
        raise ValueError("no targets")
    mg = measured_graph(network, placement)
    typing = typing or vertex_types(mg)
    p2 = sorted(targets & typing.p2_vertices)
    if p2:
        raise Undefendable("pure CTI cannot protect P2-type vertices: "
                           + ", ".join(f"v{b + 1}" for b in p2))
    candidates = dict(costs.covert_candidates) or {e: 1.0 for e in mg.edges}
    candidates = {e: c for e, c in candidates.items() if e in mg.edges and e not in typing.bridging}
    aug = virtualize(network, placement, CostModel({}, costs.acquisition), typing)
    # covert lines are the only protection: price edges by their covert cost
    inst = masa_instance(aug, targets, edges=candidates, use_injections=False,
                         flow_costs=candidates)
    return inst, candidates


def steiner_cti(network: PowerNetwork, placement: MeasurementPlacement, costs: CostModel,
                targets: Iterable[int], typing: VertexTyping | None = None,
                backend: str = "auto") -> DefensePlan:
    """Cheapest set of covert lines forming a tree from the reference to ``targets``.

    Without listed covert candidates every measured line is a candidate at
    cost 1.
    """
    inst, candidates = cti_instance(network, placement, costs, targets, typing)
    model, sol, info = _solve_masa(inst, backend)
    if sol.status != "optimal":
        raise Undefendable("targets cannot be connected to the reference by covert candidates")
    chosen = [(u, v, e) for u, v, e in inst.arcs if sol.values[_x(u, v, e)] > 0.5]
    lines = frozenset(e for _, _, e in chosen)
    total = sum(candidates[e] for e in lines)
    arcs = tuple((u, v, e, -1) for u, v, e in chosen)
    return DefensePlan(lines, frozenset(), total, arcs, inst.terminals, frozenset(), "cti", info,
                       tuple(("covert", e) for *_, e in chosen))


def mixed_instance(network: PowerNetwork, placement: MeasurementPlacement, costs: CostModel,
                   targets: Iterable[int], pmus: Iterable[Pmu] = ()):
    """``(instance, augmented placement)`` for a mixed defense."""
    mg = measured_graph(network, placement)
    if not is_observable(mg):
        raise Undefendable("system is unobservable")
    aug = augment(network, placement, costs, pmus, vertex_types(mg))
    return masa_instance(aug, targets), aug


def mixed_defense(network: PowerNetwork, placement: MeasurementPlacement, costs: CostModel,
                  targets: Iterable[int], pmus: Iterable[Pmu] = (),
                  backend: str = "auto") -> DefensePlan:
    """Minimum-dollar mix of covert lines, secured meters and PMUs defending ``targets``."""
    targets = frozenset(targets)
    inst, aug = mixed_instance(network, placement, costs, targets, pmus)
    model, sol, info = _solve_masa(inst, backend)
    if sol.status != "optimal":
        raise Undefendable("targets cannot be defended with given candidates")
    arcs = restore_arcs(inst, sol)
    plan = plan_from_arcs(aug, arcs, targets, "mixed", info)
    return plan
