"""Independent checks for defense plans and attacks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .attack import (NotAttackable, bridging_attack, bridging_pattern_meters, bridging_region,
                     min_cut_attack)
from .dc import (JacobianSet, KnowledgeError, attacker_jacobian, build_jacobian, estimator_matrix,
                 matrix_rank, wls_estimate)
from .defense import AugmentedPlacement, DefensePlan
from .grid import CostModel, MeasurementPlacement, MeterKind, PowerNetwork, build_incidence
from .observability import measured_graph, vertex_types

NULL_TOL = 1e-8


def _state_cols(reference: int, buses: Iterable[int]) -> list[int]:
    cols = []
    for b in buses:
        if b == reference:
            raise ValueError("the reference bus has no state column")
        cols.append(b if b < reference else b - 1)
    return cols


def _rows(jac, P):
    H = jac.reduced if isinstance(jac, JacobianSet) else np.asarray(jac, dtype=float)
    return H[sorted(set(P))] if len(list(P)) else np.zeros((0, H.shape[1]))


def rank_condition(jac: JacobianSet, P: Iterable[int], D: Iterable[int]) -> bool:
    """rank(H_P) == rank(H_P restricted to non-target columns) + |D|.

    ``P`` are row indices, ``D`` target buses.
    """
    P, D = list(P), sorted(set(D))
    cols = _state_cols(jac.reference, D)
    H = _rows(jac, P)
    rest = np.delete(H, cols, axis=1)
    return matrix_rank(H) == matrix_rank(rest) + len(cols)


def null_space(M: np.ndarray, rel_tol: float = NULL_TOL) -> np.ndarray:
    """Orthonormal basis (columns) of the null space of ``M``."""
    n = M.shape[1]
    if M.shape[0] == 0:
        return np.eye(n)
    _, s, vt = np.linalg.svd(M)
    top = s.max() if s.size else 0.0
    rank = int((s > rel_tol * max(top, 1e-300)).sum()) if top > 0 else 0
    return vt[rank:].T


def attack_subspace_check(jac: JacobianSet, P: Iterable[int], D: Iterable[int]) -> bool:
    """Every error ``c`` invisible to the secured rows leaves ``D`` untouched."""
    cols = _state_cols(jac.reference, sorted(set(D)))
    basis = null_space(_rows(jac, list(P)))
    if not cols or basis.shape[1] == 0:
        return True
    return bool(np.abs(basis[cols]).max() <= NULL_TOL)


# ---------------------------------------------------------- plan jacobians

def plan_rows(network: PowerNetwork, placement: MeasurementPlacement, plan: DefensePlan) -> JacobianSet:
    """Reduced rows of everything a plan protects.

    Secured meters keep their own rows; a covert line is a secured flow row
    on that line; a PMU pins its bus to the reference.
    """
    A = build_incidence(network)
    H = build_jacobian(network, placement).full
    rows = [H[m] for m in sorted(plan.secured_meters)]
    for l in sorted(plan.covert_lines):
        rows.append(network.lines[l].admittance * A[l].astype(float))
    for b in sorted(plan.secured_pmus):
        if b == network.reference:
            continue
        row = np.zeros(network.n_buses)
        row[b], row[network.reference] = 1.0, -1.0
        rows.append(row)
    full = np.array(rows) if rows else np.zeros((0, network.n_buses))
    reduced = np.delete(full, network.reference, axis=1)
    return JacobianSet(full, reduced, tuple(range(len(rows))), network.reference)


def plan_rank_ok(network, placement, plan, targets=None) -> bool:
    jac = plan_rows(network, placement, plan)
    return rank_condition(jac, range(jac.m), plan.targets if targets is None else targets)


def plan_subspace_ok(network, placement, plan, targets=None) -> bool:
    jac = plan_rows(network, placement, plan)
    return attack_subspace_check(jac, range(jac.m), plan.targets if targets is None else targets)


def protected_costs(network: PowerNetwork, placement: MeasurementPlacement, plan: DefensePlan) -> CostModel:
    """Attacker prices after the plan: protected lines become uncuttable."""
    acquisition = {ln.id: 1.0 for ln in network.lines if not ln.pseudo}
    blocked = set(plan.covert_lines)
    for mid in plan.secured_meters:
        m = placement[mid]
        if m.kind is MeterKind.INJECTION:
            blocked |= {ln.id for ln in network.incident(m.bus) if not ln.pseudo}
        else:
            blocked.add(m.line)
    for l in blocked:
        acquisition[l] = math.inf
    return CostModel({}, acquisition)


def target_attackable(network, placement, plan: DefensePlan, target: int, typing=None) -> str | None:
    """How ``target`` can still be attacked under ``plan``; None when it cannot."""
    mg = measured_graph(network, placement)
    typing = typing or vertex_types(mg)
    if target in typing.p2_vertices:
        try:
            pattern = bridging_pattern_meters(network, placement, typing, target, mg)
            region, _ = bridging_region(mg, typing, target)
        except NotAttackable:
            pass  # several bridging borders: only a cut can reach it
        else:
            if not (pattern & plan.secured_meters or region & plan.secured_pmus):
                return "topology-free bridging attack"
    try:
        att = min_cut_attack(network, placement, [target], protected_costs(network, placement, plan),
                             pinned=plan.secured_pmus, mg=mg, typing=typing, allow_p2=True)
    except NotAttackable:
        return None
    return "cut " + ",".join(f"e{l + 1}" for l in sorted(att.knowledge_lines))


# ------------------------------------------------------------ enumeration

@dataclass(frozen=True)
class EnumResult:
    cost: float
    meters: frozenset[int]
    evaluated: int


ENUM_LIMIT = 25


def _svd_rank(M: np.ndarray) -> int:
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    return int((s > NULL_TOL * max(s[0], 1e-300)).sum()) if s[0] > 0 else 0


def enum_min_defense(aug: AugmentedPlacement, targets: Iterable[int],
                     cost_cap: float = math.inf) -> EnumResult | None:
    """Cheapest analysis-meter subset meeting the rank condition.

    Branch and bound over meters in increasing cost: include before exclude,
    prune when even every remaining meter cannot reach feasibility or when
    the cost bound is hit. ``None`` when no subset within ``cost_cap`` works.
    """
    meters = sorted(aug.meters, key=lambda m: (aug.cost(m.id), m.id))
    if len(meters) > ENUM_LIMIT:
        raise ValueError(f"enumeration limited to {ENUM_LIMIT} meters")
    jac = build_jacobian(aug.network, aug.meters)
    D = sorted(set(targets))
    cols = _state_cols(jac.reference, D)
    H = jac.reduced
    rest_cols = [c for c in range(H.shape[1]) if c not in set(cols)]
    costs = [aug.cost(m.id) for m in meters]
    ids = [m.id for m in meters]
    suffix_min = costs + [math.inf]

    evaluated = 0

    def gain(rows) -> int:
        nonlocal evaluated
        evaluated += 1
        if not rows:
            return 0
        M = H[rows]
        return _svd_rank(M) - _svd_rank(M[:, rest_cols])

    best_cost, best_set = cost_cap, None
    need = len(cols)

    def visit(k, chosen, cost, reachable=False):
        nonlocal best_cost, best_set
        have = gain(chosen)
        if have == need:
            if cost < best_cost - 1e-12 or best_set is None and cost <= best_cost:
                best_cost, best_set = cost, frozenset(chosen)
            return
        if k == len(ids):
            return
        # at least (need - have) more meters, the cheapest ones first
        extra = sum(costs[k:k + need - have]) if k + need - have <= len(costs) else math.inf
        if cost + extra >= best_cost - 1e-12:
            return
        # including ids[k] keeps the same superset, so only check it once
        if not reachable and gain(chosen + ids[k:]) < need:
            return
        visit(k + 1, chosen + [ids[k]], cost + costs[k], True)
        visit(k + 1, chosen, cost)

    if not D:
        return EnumResult(0.0, frozenset(), 0)
    visit(0, [], 0.0)
    if best_set is None:
        return None
    return EnumResult(best_cost, best_set, evaluated)


# ------------------------------------------------------------ simulation

def _noisy_measurements(jac, rng, sigma):
    theta = rng.normal(0.0, 0.1, jac.n)
    return jac.reduced @ theta + rng.normal(0.0, sigma, jac.m)


def simulate_undetectability(network: PowerNetwork, placement: MeasurementPlacement, attack,
                             trials: int = 100, seed: int = 0, sigma: float = 0.01) -> float:
    """Largest |residual(z + a) - residual(z)| over seeded noise draws."""
    jac = build_jacobian(network, placement)
    a = attack.a if hasattr(attack, "a") else np.asarray(attack, dtype=float)
    worst = 0.0
    for t in range(trials):
        rng = np.random.default_rng([seed, t])
        z = _noisy_measurements(jac, rng, sigma)
        r0 = wls_estimate(jac, z).residual_norm
        r1 = wls_estimate(jac, z + a).residual_norm
        worst = max(worst, abs(r1 - r0))
    return worst


def simulate_plan(network: PowerNetwork, placement: MeasurementPlacement, plan: DefensePlan,
                  trials: int = 20, seed: int = 0, sigma: float = 0.01) -> float:
    """Smallest residual jump the cheapest unprotected-system attack suffers under the plan.

    The attacker prepares the cheapest cut (or topology-free) attack as if
    nothing were protected; under the plan covert lines carry unknown errors
    and secured meters reject tampering. Positive means every such attack
    gets noticed; ``inf`` means none can even be injected.
    """
    jac = build_jacobian(network, placement)
    P = estimator_matrix(jac)
    resid = np.eye(jac.m) - jac.reduced @ P
    mg = measured_graph(network, placement)
    typing = vertex_types(mg)
    worst = math.inf
    for d in sorted(plan.targets):
        if d in typing.p2_vertices:
            try:
                region, _ = bridging_region(mg, typing, d)
                a = bridging_attack(network, placement, typing, d, mg=mg).a.copy()
            except NotAttackable:
                pass
            else:
                a[list(plan.secured_meters)] = 0.0
                if a.any() and not plan.secured_pmus & region:
                    worst = min(worst, float(np.linalg.norm(resid @ a)))
                continue
        try:
            plain = min_cut_attack(network, placement, [d], mg=mg, typing=typing, allow_p2=True)
        except NotAttackable:
            continue
        c_full = np.zeros(network.n_buses)
        c_full[list(plain.sink_side)] = plain.beta
        c_full -= c_full[network.reference]
        jumps = []
        for t in range(trials):
            rng = np.random.default_rng([seed, d, t])
            eps = KnowledgeError.unknown_except(network, set(plain.knowledge_lines) - plan.covert_lines, rng)
            a = attacker_jacobian(network, placement, eps).full @ c_full
            a[list(plan.secured_meters)] = 0.0
            if plan.secured_pmus & plain.sink_side or not a.any():
                # a phasor reading exposes the shift outright; an all-secured
                # pattern leaves nothing to inject
                jumps.append(math.inf)
                continue
            jumps.append(float(np.linalg.norm(resid @ a)))
        worst = min(worst, min(jumps))
    return worst


# ------------------------------------------------------------ report

@dataclass(frozen=True)
class VerificationReport:
    rank_ok: bool
    subspace_ok: bool
    simulated_detection_delta: float
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return (self.rank_ok and self.subspace_ok
                and all(v == "defended" for v in self.details.values()))


def verify_plan(network: PowerNetwork, placement: MeasurementPlacement, plan: DefensePlan,
                targets: Sequence[int] | None = None, trials: int = 20, seed: int = 0) -> VerificationReport:
    targets = sorted(plan.targets if targets is None else targets)
    jac = plan_rows(network, placement, plan)
    rank_ok = rank_condition(jac, range(jac.m), targets)
    subspace_ok = attack_subspace_check(jac, range(jac.m), targets)
    if rank_ok != subspace_ok:
        raise AssertionError("rank and null-space checks disagree")
    mg = measured_graph(network, placement)
    typing = vertex_types(mg)
    details = {}
    for d in targets:
        how = target_attackable(network, placement, plan, d, typing)
        details[f"v{d + 1}"] = "defended" if how is None else f"attackable ({how})"
    delta = simulate_plan(network, placement, plan, trials, seed)
    return VerificationReport(rank_ok, subspace_ok, delta, details)
