"""Measured graphs, edge-measured spanning trees, bridging edges, vertex types.

An edge-measured spanning tree (EMST) is a spanning tree whose edges are
mapped one-to-one onto meters that measure them. We search for one as a
common basis of two matroids over (edge, meter) pairs: the graphic matroid
on the pair's edge, and the partition matroid on the pair's meter. This is
the graphic x transversal intersection with the transversal side unfolded.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .grid import MeasurementPlacement, Meter, MeterKind, PowerNetwork


@dataclass(frozen=True)
class MeasuredGraph:
    n_buses: int
    reference: int
    vertices: frozenset[int]
    edges: tuple[int, ...]
    ends: Mapping[int, tuple[int, int]]
    measurable: Mapping[int, frozenset[int]]
    meter_edges: Mapping[int, frozenset[int]]
    meter_kind: Mapping[int, MeterKind] = field(default_factory=dict)
    meter_bus: Mapping[int, int] = field(default_factory=dict)

    def neighbors(self, v: int) -> list[int]:
        return sorted({self.ends[e][0] if self.ends[e][1] == v else self.ends[e][1]
                       for e in self.edges if v in self.ends[e]})

    def without_edges(self, dropped: Iterable[int]) -> "MeasuredGraph":
        dropped = set(dropped)
        edges = tuple(e for e in self.edges if e not in dropped)
        verts = frozenset(v for e in edges for v in self.ends[e])
        meas = {e: self.measurable[e] for e in edges}
        meter_edges = {m: es - dropped for m, es in self.meter_edges.items() if es - dropped}
        return MeasuredGraph(self.n_buses, self.reference, verts, edges,
                             {e: self.ends[e] for e in edges}, meas, meter_edges,
                             self.meter_kind, self.meter_bus)


def measured_graph(network: PowerNetwork, placement: MeasurementPlacement | Sequence[Meter]) -> MeasuredGraph:
    measurable: dict[int, set[int]] = {}
    meter_edges: dict[int, frozenset[int]] = {}
    kinds, buses = {}, {}
    for m in placement:
        if m.kind is MeterKind.INJECTION:
            es = [ln.id for ln in network.lines if not ln.pseudo and m.bus in ln.ends]
            buses[m.id] = m.bus
        else:
            es = [m.line]
        kinds[m.id] = m.kind
        if not es:
            continue
        meter_edges[m.id] = frozenset(es)
        for e in es:
            measurable.setdefault(e, set()).add(m.id)
    edges = tuple(sorted(measurable))
    ends = {e: network.lines[e].ends for e in edges}
    verts = frozenset(v for e in edges for v in ends[e])
    return MeasuredGraph(network.n_buses, network.reference, verts, edges, ends,
                         {e: frozenset(s) for e, s in measurable.items()},
                         meter_edges, kinds, buses)


@dataclass(frozen=True)
class Emst:
    tree_edges: frozenset[int]
    mapping: Mapping[int, int]

    @property
    def edges(self) -> tuple[int, ...]:
        return tuple(sorted(self.tree_edges))

    @property
    def meters(self) -> tuple[int, ...]:
        return tuple(self.mapping[e] for e in self.edges)

    def key(self):
        return (self.edges, self.meters)


def emst_problems(mg: MeasuredGraph, emst: Emst, vertices: Iterable[int] | None = None) -> list[str]:
    """Empty list iff ``emst`` is a valid witness spanning ``vertices``."""
    target = set(range(mg.n_buses)) if vertices is None else set(vertices)
    problems = []
    if set(emst.mapping) != set(emst.tree_edges):
        problems.append("mapping keys differ from tree edges")
    if len(set(emst.mapping.values())) != len(emst.mapping):
        problems.append("meters are not distinct")
    for e, m in emst.mapping.items():
        if e not in mg.measurable or m not in mg.measurable[e]:
            problems.append(f"meter {m} does not measure edge {e}")
    if len(emst.tree_edges) != len(target) - 1:
        problems.append("wrong number of edges for a spanning tree")
    uf = _UnionFind()
    for e in emst.tree_edges:
        u, v = mg.ends.get(e, (None, None))
        if u not in target or v not in target:
            problems.append(f"edge {e} leaves the vertex set")
            continue
        if not uf.union(u, v):
            problems.append(f"edge {e} closes a cycle")
    return problems


class _UnionFind:
    def __init__(self):
        self.parent = {}

    def find(self, x):
        self.parent.setdefault(x, x)
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a, b) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[ra] = rb
        return True


# --------------------------------------------------------- intersection core

def ground_pairs(mg: MeasuredGraph, vertices: Iterable[int] | None = None,
                 edges: Iterable[int] | None = None) -> list[tuple[int, int]]:
    """(edge, meter) pairs usable inside the vertex set ``vertices``.

    An injection meter is usable only when every edge it measures stays
    inside the vertex set.
    """
    allowed_edges = set(mg.edges if edges is None else edges)
    if vertices is None:
        vset = None
    else:
        vset = set(vertices)
    pairs = []
    for e in mg.edges:
        if e not in allowed_edges:
            continue
        u, v = mg.ends[e]
        if vset is not None and (u not in vset or v not in vset):
            continue
        for m in sorted(mg.measurable[e]):
            if vset is not None and mg.meter_kind.get(m) is MeterKind.INJECTION:
                if any(x not in vset for f in mg.meter_edges[m] for x in mg.ends[f]):
                    continue
            pairs.append((e, m))
    return pairs


def common_independent(pairs: Sequence[tuple[int, int]], ends: Mapping[int, tuple[int, int]],
                       weights: Sequence | None = None, start: Iterable[int] = ()) -> list[int]:
    """Maximum common independent set of the graphic and meter-partition matroids.

    ``pairs`` is the ground set in priority order. With ``weights`` the
    result has minimum total weight among maximum-cardinality sets
    (successive shortest augmenting paths; ``start`` must then be empty).
    Without weights ``start`` may seed the search with any common
    independent set. Returns indices into ``pairs``.
    """
    N = len(pairs)
    in_I = [False] * N
    for i in start:
        in_I[i] = True
    if weights is not None and any(in_I):
        raise ValueError("a weighted search must start from the empty set")

    while True:
        chosen = [i for i in range(N) if in_I[i]]
        # forest of the current set, with parent pointers for path queries
        adj: dict[int, list[tuple[int, int]]] = {}
        for i in chosen:
            u, v = ends[pairs[i][0]]
            adj.setdefault(u, []).append((v, i))
            adj.setdefault(v, []).append((u, i))
        comp, parent, depth = {}, {}, {}
        for root in adj:
            if root in comp:
                continue
            comp[root], parent[root], depth[root] = root, None, 0
            stack = [root]
            while stack:
                a = stack.pop()
                for b, i in adj[a]:
                    if b not in comp:
                        comp[b], parent[b], depth[b] = root, (a, i), depth[a] + 1
                        stack.append(b)
        meter_holder = {pairs[i][1]: i for i in chosen}

        sources, sinks = [], set()
        out_arcs: dict[int, list[int]] = {}
        for x in range(N):
            if in_I[x]:
                continue
            e, m = pairs[x]
            u, v = ends[e]
            if comp.get(u, ("solo", u)) != comp.get(v, ("solo", v)):
                sources.append(x)
            else:
                # y on the fundamental cycle of x: I - y + x stays a forest
                a, b = u, v
                while a != b:
                    if depth[a] >= depth[b]:
                        a, i = parent[a]
                    else:
                        b, i = parent[b]
                    out_arcs.setdefault(i, []).append(x)
            holder = meter_holder.get(m)
            if holder is None:
                sinks.add(x)
            else:
                out_arcs.setdefault(x, []).append(holder)

        if not sources or not sinks:
            break
        if weights is None:
            path = _bfs_path(sources, sinks, out_arcs)
        else:
            path = _cheapest_path(sources, sinks, out_arcs, in_I, weights)
        if path is None:
            break
        for i in path:
            in_I[i] = not in_I[i]
    return [i for i in range(N) if in_I[i]]


def _bfs_path(sources, sinks, out_arcs):
    prev = {s: None for s in sources}
    queue = deque(sources)
    while queue:
        a = queue.popleft()
        if a in sinks:
            path = []
            while a is not None:
                path.append(a)
                a = prev[a]
            return path
        for b in out_arcs.get(a, ()):
            if b not in prev:
                prev[b] = a
                queue.append(b)
    return None


def _cheapest_path(sources, sinks, out_arcs, in_I, weights):
    """Minimum (weight, arc count) path; node lengths w(x) outside I, -w(y) inside."""

    def length(i):
        return -weights[i] if in_I[i] else weights[i]

    dist = {s: (length(s), 0) for s in sources}
    prev = {s: None for s in sources}
    queue = deque(sources)
    queued = set(sources)
    while queue:
        a = queue.popleft()
        queued.discard(a)
        da = dist[a]
        for b in out_arcs.get(a, ()):
            cand = (da[0] + length(b), da[1] + 1)
            if b not in dist or cand < dist[b]:
                dist[b] = cand
                prev[b] = a
                if b not in queued:
                    queued.add(b)
                    queue.append(b)
    best = min((dist[t], t) for t in sinks if t in dist) if any(t in dist for t in sinks) else None
    if best is None:
        return None
    a, path = best[1], []
    while a is not None:
        path.append(a)
        a = prev[a]
    return path


def greedy_start(pairs: Sequence[tuple[int, int]], ends, order: Iterable[int]) -> list[int]:
    """Common independent set built greedily in the given element order."""
    uf, used, chosen = _UnionFind(), set(), []
    for i in order:
        e, m = pairs[i]
        if m in used:
            continue
        u, v = ends[e]
        if uf.find(u) == uf.find(v):
            continue
        uf.union(u, v)
        used.add(m)
        chosen.append(i)
    return chosen


def _spanning_size(mg, vertices):
    vs = set(range(mg.n_buses)) if vertices is None else set(vertices)
    return len(vs) - 1, vs


def _covers(mg, vs):
    # every vertex must be touched by some measured edge (unless trivial)
    return len(vs) == 1 or vs <= mg.vertices


def is_observable(mg: MeasuredGraph, vertices: Iterable[int] | None = None,
                  edges: Iterable[int] | None = None) -> bool:
    need, vs = _spanning_size(mg, vertices)
    if not _covers(mg, vs):
        return False
    pairs = ground_pairs(mg, vs, edges)
    start = greedy_start(pairs, mg.ends, range(len(pairs)))
    if len(start) == need:
        return True
    return len(common_independent(pairs, mg.ends, start=start)) == need


def any_emst(mg: MeasuredGraph, vertices: Iterable[int] | None = None,
             edges: Iterable[int] | None = None, order: Sequence[int] | None = None) -> Emst | None:
    """Some EMST (fast, no canonical tie-break)."""
    need, vs = _spanning_size(mg, vertices)
    if not _covers(mg, vs):
        return None
    pairs = ground_pairs(mg, vs, edges)
    order = range(len(pairs)) if order is None else order
    chosen = common_independent(pairs, mg.ends, start=greedy_start(pairs, mg.ends, order))
    if len(chosen) != need:
        return None
    return Emst(frozenset(pairs[i][0] for i in chosen), {pairs[i][0]: pairs[i][1] for i in chosen})


def min_weight_emst(mg: MeasuredGraph, weight_of_meter: Mapping[int, float] | Sequence[float],
                    vertices: Iterable[int] | None = None) -> Emst | None:
    """EMST minimising the total weight of mapped meters."""
    need, vs = _spanning_size(mg, vertices)
    if not _covers(mg, vs):
        return None
    pairs = ground_pairs(mg, vs)
    weights = [weight_of_meter[m] for _, m in pairs]
    chosen = common_independent(pairs, mg.ends, weights=weights)
    if len(chosen) != need:
        return None
    return Emst(frozenset(pairs[i][0] for i in chosen), {pairs[i][0]: pairs[i][1] for i in chosen})


def find_emst(mg: MeasuredGraph) -> Emst | None:
    """Canonical EMST: lexicographically smallest edge set, then meter ids."""
    need, vs = _spanning_size(mg, None)
    if not _covers(mg, vs):
        return None
    pairs = ground_pairs(mg)
    if need == 0:
        return Emst(frozenset(), {})
    if not is_observable(mg):
        return None
    rank = {e: k for k, e in enumerate(mg.edges)}
    top = len(mg.edges) - 1
    # maximising sum 2^(top - rank) picks the lexicographically smallest edge set
    weights = [-(1 << (top - rank[e])) for e, _ in pairs]
    chosen = common_independent(pairs, mg.ends, weights=weights)
    tree = sorted({pairs[i][0] for i in chosen})
    return Emst(frozenset(tree), _smallest_mapping(mg, tree))


def _smallest_mapping(mg, tree):
    mapping = {}
    used = set()
    for k, e in enumerate(tree):
        for m in sorted(mg.measurable[e]):
            if m in used:
                continue
            if _has_matching(mg, tree[k + 1:], used | {m}):
                mapping[e] = m
                used.add(m)
                break
        else:
            raise AssertionError("tree edges admit no meter mapping")
    return mapping


def _has_matching(mg, edges, blocked) -> bool:
    match: dict[int, int] = {}

    def augment(e, seen):
        for m in sorted(mg.measurable[e]):
            if m in blocked or m in seen:
                continue
            seen.add(m)
            if m not in match or augment(match[m], seen):
                match[m] = e
                return True
        return False

    return all(augment(e, set()) for e in edges)


EMST_ENUM_LIMIT = 12


def enumerate_emsts(mg: MeasuredGraph, cap: int = 10_000) -> list[Emst]:
    """Every (tree, mapping) witness up to ``cap``, in lexicographic order."""
    if mg.n_buses > EMST_ENUM_LIMIT:
        raise ValueError(f"enumeration limited to {EMST_ENUM_LIMIT} buses")
    need, vs = _spanning_size(mg, None)
    if not _covers(mg, vs):
        return []
    out: list[Emst] = []
    for tree in itertools.combinations(mg.edges, need):
        uf = _UnionFind()
        if not all(uf.union(*mg.ends[e]) for e in tree):
            continue
        for meters in _matchings(mg, tree, 0, set()):
            out.append(Emst(frozenset(tree), dict(zip(tree, meters))))
            if len(out) >= cap:
                return out
    return out


def _matchings(mg, tree, k, used):
    if k == len(tree):
        yield ()
        return
    for m in sorted(mg.measurable[tree[k]]):
        if m in used:
            continue
        used.add(m)
        for rest in _matchings(mg, tree, k + 1, used):
            yield (m,) + rest
        used.discard(m)


def bridging_edges(mg: MeasuredGraph) -> frozenset[int]:
    base = any_emst(mg)
    if base is None:
        raise ValueError("unobservable system")
    out = set()
    for e in sorted(base.tree_edges):
        remaining = [f for f in mg.edges if f != e]
        if not is_observable(mg, edges=remaining):
            out.add(e)
    return frozenset(out)


@dataclass(frozen=True)
class VertexTyping:
    bridging: frozenset[int]
    p2_vertices: frozenset[int]

    def side_of(self, bus: int) -> str:
        return "P2" if bus in self.p2_vertices else "P1"


def separated_by(mg: MeasuredGraph, edges: Iterable[int], removed: Iterable[int]) -> frozenset[int]:
    """Vertices cut off from the reference once ``removed`` is deleted from ``edges``."""
    removed = set(removed)
    uf = _UnionFind()
    for e in edges:
        if e not in removed:
            uf.union(*mg.ends[e])
    root = uf.find(mg.reference)
    return frozenset(v for v in range(mg.n_buses) if uf.find(v) != root)


def vertex_types(mg: MeasuredGraph, reference: int | None = None) -> VertexTyping:
    """Bridging edges and the vertices they isolate from the reference.

    A vertex is P2 when every path to the reference in the measured graph
    uses a bridging edge. Such a vertex is separated in every EMST once the
    bridging edges are removed.
    """
    if reference is not None and reference != mg.reference:
        mg = MeasuredGraph(mg.n_buses, reference, mg.vertices, mg.edges, mg.ends,
                           mg.measurable, mg.meter_edges, mg.meter_kind, mg.meter_bus)
    bridging = bridging_edges(mg)
    return VertexTyping(bridging, separated_by(mg, mg.edges, bridging))


def emst_typing(mg: MeasuredGraph, emst: Emst, bridging: Iterable[int]) -> frozenset[int]:
    """Vertices separated from the reference in ``emst`` minus ``bridging``."""
    return separated_by(mg, emst.tree_edges, bridging)
