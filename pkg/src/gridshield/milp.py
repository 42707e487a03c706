"""Mixed-integer linear programs: model container, branch-and-bound over a
bounded-variable primal simplex, and fixed-format MPS export."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.linalg import LinAlgWarning, lu_factor, lu_solve

FEAS_TOL = 1e-7
INT_TOL = 1e-6
OPT_TOL = 1e-9
COEF_LIMIT = 1e6
BLAND_AFTER = 1000
RESORT_EVERY = 64
PIVOT_TOL = 1e-9


@dataclass(frozen=True)
class Variable:
    name: str
    kind: str = "continuous"  # or "binary"
    lower: float = 0.0
    upper: float = math.inf


@dataclass(frozen=True)
class LinearConstraint:
    coefficients: Mapping[str, float]
    relation: str  # "<=", "=", ">="
    rhs: float
    name: str = ""


@dataclass
class MilpModel:
    name: str = "model"
    variables: list[Variable] = field(default_factory=list)
    constraints: list[LinearConstraint] = field(default_factory=list)
    objective: dict[str, float] = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self._index = {v.name: i for i, v in enumerate(self.variables)}

    def add_variable(self, name: str, kind: str = "continuous", lower: float = 0.0,
                     upper: float = math.inf) -> str:
        if name in self._index:
            raise ValueError(f"duplicate variable {name}")
        if kind == "binary":
            lower, upper = max(lower, 0.0), min(upper, 1.0)
        elif kind != "continuous":
            raise ValueError(f"unknown variable kind {kind}")
        self._index[name] = len(self.variables)
        self.variables.append(Variable(name, kind, float(lower), float(upper)))
        return name

    def add_constraint(self, coefficients: Mapping[str, float], relation: str, rhs: float,
                       name: str = "") -> None:
        if relation not in ("<=", "=", ">="):
            raise ValueError(f"unknown relation {relation}")
        coefs = {}
        for var, a in coefficients.items():
            if var not in self._index:
                raise ValueError(f"unknown variable {var}")
            if not math.isfinite(a) or abs(a) > COEF_LIMIT:
                raise ValueError(f"coefficient {a} on {var} outside the sane range")
            if a != 0:
                coefs[var] = coefs.get(var, 0.0) + float(a)
        self.constraints.append(LinearConstraint(coefs, relation, float(rhs),
                                                 name or f"c{len(self.constraints) + 1}"))

    def set_objective(self, coefficients: Mapping[str, float]) -> None:
        for var in coefficients:
            if var not in self._index:
                raise ValueError(f"unknown variable {var}")
        self.objective = {k: float(v) for k, v in coefficients.items() if v != 0}

    def index(self, name: str) -> int:
        return self._index[name]

    @property
    def binaries(self) -> list[int]:
        return [i for i, v in enumerate(self.variables) if v.kind == "binary"]

    def dense(self):
        """``(c, A, senses, b, lower, upper)`` as numpy arrays."""
        n = len(self.variables)
        c = np.zeros(n)
        for k, v in self.objective.items():
            c[self._index[k]] = v
        A = np.zeros((len(self.constraints), n))
        for r, con in enumerate(self.constraints):
            for k, v in con.coefficients.items():
                A[r, self._index[k]] = v
        senses = [con.relation for con in self.constraints]
        b = np.array([con.rhs for con in self.constraints], dtype=float)
        lower = np.array([v.lower for v in self.variables], dtype=float)
        upper = np.array([v.upper for v in self.variables], dtype=float)
        return c, A, senses, b, lower, upper

    def evaluate(self, values: Mapping[str, float]) -> float:
        return sum(a * values.get(k, 0.0) for k, a in self.objective.items())

    def violations(self, values: Mapping[str, float], tol: float = 1e-6) -> list[str]:
        bad = []
        for v in self.variables:
            x = values.get(v.name, 0.0)
            if x < v.lower - tol or x > v.upper + tol:
                bad.append(f"bound {v.name}")
            if v.kind == "binary" and min(abs(x), abs(x - 1)) > tol:
                bad.append(f"integrality {v.name}")
        for con in self.constraints:
            lhs = sum(a * values.get(k, 0.0) for k, a in con.coefficients.items())
            if ((con.relation == "<=" and lhs > con.rhs + tol)
                    or (con.relation == ">=" and lhs < con.rhs - tol)
                    or (con.relation == "=" and abs(lhs - con.rhs) > tol)):
                bad.append(con.name)
        return bad


@dataclass
class MilpSolution:
    status: str  # optimal | infeasible | unbounded | iteration-limit
    values: dict[str, float]
    objective_value: float
    simplex_iterations: int | None
    nodes: int
    incumbent_history: list[float] = field(default_factory=list)
    node_bounds: list[float] = field(default_factory=list)


# ------------------------------------------------------------------- simplex

class _LPResult:
    """``basis`` and ``at_upper`` index structurals then slacks (warm-start data)."""

    __slots__ = ("status", "x", "objective", "iterations", "basis", "at_upper")

    def __init__(self, status, x, objective, iterations, basis=None, at_upper=None):
        self.status, self.x, self.objective, self.iterations = status, x, objective, iterations
        self.basis, self.at_upper = basis, at_upper


def _slack_bounds(senses):
    lo = np.array([-math.inf if s == ">=" else 0.0 for s in senses])
    up = np.array([math.inf if s == "<=" else 0.0 for s in senses])
    return lo, up


def _nonbasic_start(lo, up):
    if math.isfinite(lo):
        return lo
    if math.isfinite(up):
        return up
    return 0.0


def _primal_violation(A, senses, b, lower, upper, x) -> float:
    act = A @ x - b
    worst = max(float(np.max(lower - x, initial=0.0)), float(np.max(x - upper, initial=0.0)))
    for sense, sign in (("<=", 1.0), (">=", -1.0)):
        rows = np.array([s == sense for s in senses], bool)
        if rows.any():
            worst = max(worst, float(np.max(sign * act[rows])))
    rows = np.array([s == "=" for s in senses], bool)
    if rows.any():
        worst = max(worst, float(np.max(np.abs(act[rows]))))
    return worst


def lp_solve(c, A, senses, b, lower, upper, max_iter: int = 1_000_000) -> _LPResult:
    """Solve the LP relaxation; an optimum that fails the feasibility audit is
    reported as ``numerical``."""
    res = _lp_bounded(c, A, senses, b, lower, upper, max_iter)
    if res.status == "optimal" and _primal_violation(A, senses, b, lower, upper, res.x) > 1e-6:
        return _LPResult("numerical", None, math.inf, res.iterations)
    return res


def _lp_bounded(c, A, senses, b, lower, upper, max_iter):
    """Bounded-variable primal simplex on a dense tableau (two phases).

    Every row gets a slack with bounds that encode its sense; rows whose
    slack starts out of bounds get an artificial column for phase one.
    Fixed columns are folded into the right-hand side first.
    """
    fixed = lower == upper
    if fixed.any() and not fixed.all():
        free = ~fixed
        res = _lp_core(c[free], A[:, free], senses, b - A[:, fixed] @ lower[fixed],
                       lower[free], upper[free], max_iter)
        if res.x is None:
            return res
        x = lower.astype(float).copy()
        x[free] = res.x
        n, m = len(c), len(b)
        # back to full column numbering: structurals, then slacks
        index = np.concatenate([np.flatnonzero(free), n + np.arange(m)])
        at_upper = np.zeros(n + m, bool)
        at_upper[index] = res.at_upper
        return _LPResult(res.status, x, float(c @ x), res.iterations, index[res.basis], at_upper)
    return _lp_core(c, A, senses, b, lower, upper, max_iter)


def dual_resolve(c, A, senses, b, lower, upper, basis, at_upper, max_iter: int = 1_000_000):
    """Re-optimise from a previous optimal basis after bound changes.

    Bounded dual simplex: the old basis stays dual feasible when only bounds
    move, so primal infeasibilities are pivoted out one row at a time.
    Returns None when the basis cannot be reused (singular or no longer dual
    feasible); the caller then solves from scratch.
    """
    m, n = A.shape
    N = n + m
    slo, sup = _slack_bounds(senses)
    lo = np.concatenate([lower, slo])
    up = np.concatenate([upper, sup])
    if np.any(lo > up + FEAS_TOL):
        return _LPResult("infeasible", None, math.inf, 0)
    M = np.hstack([A, np.eye(m)])
    basis = np.array(basis, dtype=int)
    with warnings.catch_warnings():
        warnings.simplefilter("error", LinAlgWarning)
        try:
            lu = lu_factor(M[:, basis])
        except (LinAlgWarning, ValueError):
            return None
    T = lu_solve(lu, M)
    is_basic = np.zeros(N, bool)
    is_basic[basis] = True
    nb = ~is_basic
    x = np.where(np.isfinite(lo), lo, np.where(np.isfinite(up), up, 0.0))
    use_up = at_upper & np.isfinite(up)
    x[use_up] = up[use_up]
    x[basis] = 0.0
    x[basis] = lu_solve(lu, b - M[:, nb] @ x[nb])
    cost = np.concatenate([c, np.zeros(m)])
    d = cost - cost[basis] @ T
    movable = nb & (lo < up)
    at_lo = np.abs(x - lo) <= 1e-12
    at_up = np.abs(up - x) <= 1e-12
    if np.any(movable & (((d < -OPT_TOL) & ~at_up) | ((d > OPT_TOL) & ~at_lo))):
        return None
    iterations = 0
    limit = min(max_iter, 50 * (m + n))
    while True:
        xb = x[basis]
        below = lo[basis] - xb
        above = xb - up[basis]
        viol = np.maximum(below, above)
        r = int(np.argmax(viol)) if m else 0
        if not m or viol[r] <= FEAS_TOL:
            break
        if iterations >= limit:
            return None
        raising = below[r] > above[r]
        target = lo[basis[r]] if raising else up[basis[r]]
        alpha = T[r]
        can_inc = movable & (x < up - 1e-12)
        can_dec = movable & (x > lo + 1e-12)
        if raising:
            eligible = (can_inc & (alpha < -1e-9)) | (can_dec & (alpha > 1e-9))
        else:
            eligible = (can_inc & (alpha > 1e-9)) | (can_dec & (alpha < -1e-9))
        if not eligible.any():
            return _LPResult("infeasible", None, math.inf, iterations)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(eligible, np.abs(d) / np.abs(alpha), math.inf)
        best = ratio.min()
        ties = np.flatnonzero(ratio <= best + 1e-12)
        j = int(ties[np.argmax(np.abs(alpha[ties]))])
        step = (x[basis[r]] - target) / alpha[j]
        x[j] += step
        x[basis] -= step * T[:, j]
        leaving = basis[r]
        x[leaving] = target
        T[r] /= T[r, j]
        rows = np.flatnonzero(T[:, j])
        rows = rows[rows != r]
        if rows.size:
            T[rows] -= np.outer(T[rows, j], T[r])
        d -= d[j] * T[r]
        is_basic[leaving], is_basic[j] = False, True
        nb[leaving], nb[j] = True, False
        movable[leaving] = lo[leaving] < up[leaving]
        movable[j] = False
        basis[r] = j
        iterations += 1
    sol = x[:n].copy()
    if _primal_violation(A, senses, b, lower, upper, sol) > 1e-6:
        return None
    return _LPResult("optimal", sol, float(c @ sol), iterations, basis,
                     nb & np.isfinite(up) & (np.abs(up - x) <= 1e-9) & (lo < up))


def _lp_core(c, A, senses, b, lower, upper, max_iter):
    m, n = A.shape
    slack_lo, slack_up = _slack_bounds(senses)
    if np.any(lower > upper + FEAS_TOL):
        return _LPResult("infeasible", None, math.inf, 0)

    x = np.zeros(n + m)
    x[:n] = [_nonbasic_start(lo, up) for lo, up in zip(lower, upper)]
    activity = b - A @ x[:n]
    art_rows, art_sign = [], []
    for i in range(m):
        v = activity[i]
        if v < slack_lo[i] - FEAS_TOL or v > slack_up[i] + FEAS_TOL:
            art_rows.append(i)
            bound = slack_lo[i] if v < slack_lo[i] else slack_up[i]
            art_sign.append(1.0 if v - bound > 0 else -1.0)
            x[n + i] = bound
        else:
            x[n + i] = v
    k = len(art_rows)
    N = n + m + k
    lo = np.concatenate([lower, slack_lo, np.zeros(k)])
    up = np.concatenate([upper, slack_up, np.full(k, math.inf)])
    x = np.concatenate([x, np.zeros(k)])

    T = np.zeros((m, N))
    T[:, :n] = A
    T[:, n:n + m] = np.eye(m)
    basis = list(range(n, n + m))
    for j, (i, s) in enumerate(zip(art_rows, art_sign)):
        col = n + m + j
        T[i, col] = s
        basis[i] = col
        x[col] = s * (activity[i] - x[n + i])
        T[i] /= s
    is_basic = np.zeros(N, bool)
    is_basic[basis] = True

    iterations = 0

    def run(cost, allowed):
        nonlocal iterations
        cb = cost[basis]
        d = cost - cb @ T
        degenerate = 0
        while True:
            if iterations >= max_iter:
                return "iteration-limit"
            at_lo = np.abs(x - lo) <= 1e-12
            at_up = np.abs(up - x) <= 1e-12
            can_inc = allowed & ~is_basic & ~at_up & (d < -OPT_TOL)
            can_dec = allowed & ~is_basic & ~at_lo & (d > OPT_TOL)
            eligible = can_inc | can_dec
            if not eligible.any():
                return "optimal"
            if degenerate >= BLAND_AFTER:
                j = int(np.flatnonzero(eligible)[0])
            else:
                j = int(np.argmax(np.where(eligible, np.abs(d), -1.0)))
            sigma = 1.0 if can_inc[j] else -1.0
            alpha = sigma * T[:, j]
            xb = x[basis]
            lob, upb = lo[basis], up[basis]
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio_dec = np.where(alpha > PIVOT_TOL, (xb - lob) / alpha, math.inf)
                ratio_inc = np.where(alpha < -PIVOT_TOL, (upb - xb) / -alpha, math.inf)
            ratios = np.maximum(np.minimum(ratio_dec, ratio_inc), 0.0)
            step_flip = up[j] - lo[j]
            r = -1
            step = math.inf
            if ratios.size:
                step = float(ratios.min())
                if math.isfinite(step):
                    ties = np.flatnonzero(ratios <= step + 1e-12)
                    if degenerate >= BLAND_AFTER:
                        r = int(min(ties, key=lambda i: basis[i]))
                    else:
                        r = int(ties[np.argmax(np.abs(alpha[ties]))])
            if step_flip <= step:
                step, r = step_flip, -1
            if not math.isfinite(step):
                return "unbounded"
            iterations += 1
            degenerate = degenerate + 1 if step < 1e-12 else 0
            x[j] += sigma * step
            x[basis] = xb - step * alpha
            if r < 0:
                continue
            leaving = basis[r]
            x[leaving] = lo[leaving] if alpha[r] > 0 else up[leaving]
            piv = T[r, j]
            T[r] /= piv
            rows = np.flatnonzero(T[:, j])
            rows = rows[rows != r]
            if rows.size:
                T[rows] -= np.outer(T[rows, j], T[r])
            d -= d[j] * T[r]
            is_basic[leaving], is_basic[j] = False, True
            basis[r] = j

    def refresh():
        Binv = T[:, n:n + m]
        nonbasic = ~is_basic
        M = np.zeros((m, N))
        M[:, :n] = A
        M[:, n:n + m] = np.eye(m)
        for jj, (i, s) in enumerate(zip(art_rows, art_sign)):
            M[i, n + m + jj] = s
        rhs = b - M[:, nonbasic] @ x[nonbasic]
        x[basis] = Binv @ rhs

    allowed = np.ones(N, bool)
    if k:
        cost1 = np.zeros(N)
        cost1[n + m:] = 1.0
        status = run(cost1, allowed)
        if status == "iteration-limit":
            return _LPResult(status, None, math.inf, iterations)
        refresh()
        if x[n + m:].sum() > FEAS_TOL * max(1.0, k):
            return _LPResult("infeasible", None, math.inf, iterations)
        up[n + m:] = 0.0
        x[n + m:] = np.maximum(x[n + m:], 0.0)
        allowed[n + m:] = False
    cost2 = np.zeros(N)
    cost2[:n] = c
    status = run(cost2, allowed)
    if status != "optimal":
        return _LPResult(status, None, -math.inf if status == "unbounded" else math.inf, iterations)
    refresh()
    sol = x[:n].copy()
    # an artificial still basic (at zero) stands in for its row's slack
    out = np.array(basis)
    for jj, i in enumerate(art_rows):
        out[out == n + m + jj] = n + i
    at_upper = ~is_basic[:n + m] & np.isfinite(up[:n + m]) & (np.abs(up[:n + m] - x[:n + m]) <= 1e-9)
    return _LPResult("optimal", sol, float(c @ sol), iterations, out, at_upper)


# ---------------------------------------------------------- branch and bound

def solve(model: MilpModel, node_limit: int = 200_000, iteration_limit: int = 50_000_000,
          backend: str = "bnb") -> MilpSolution:
    """Exact minimum of ``model``.

    ``backend="bnb"`` is the embedded branch and bound; ``"highs"`` hands the
    same model to SciPy's HiGHS interface for large instances.
    """
    if backend == "highs":
        return _solve_highs(model)
    if backend != "bnb":
        raise ValueError(f"unknown backend {backend}")
    c, A, senses, b, lower, upper = model.dense()
    names = [v.name for v in model.variables]
    binaries = model.binaries
    is_bin = np.zeros(len(names), bool)
    is_bin[binaries] = True

    incumbent, best = None, math.inf
    history, bounds = [], []
    iterations = 0
    nodes = 0
    stack = [(lower.copy(), upper.copy(), -math.inf, None)]
    status = "optimal"
    unbounded = False
    while stack:
        if nodes >= node_limit or iterations >= iteration_limit:
            status = "iteration-limit"
            break
        if nodes and nodes % RESORT_EVERY == 0:
            # best bound ends up on top of the stack
            stack.sort(key=lambda item: -item[2])
        lo, up, parent_bound, warm = stack.pop()
        if parent_bound >= best - _gap(best):
            continue
        nodes += 1
        res = None
        if warm is not None:
            res = dual_resolve(c, A, senses, b, lo, up, *warm, max_iter=iteration_limit - iterations)
        if res is None:
            res = lp_solve(c, A, senses, b, lo, up, max_iter=iteration_limit - iterations)
        iterations += res.iterations
        if res.status in ("iteration-limit", "numerical"):
            status = "iteration-limit"
            break
        if res.status == "unbounded":
            unbounded = True
            break
        if res.status != "optimal":
            continue
        bounds.append(res.objective)
        if res.objective >= best - _gap(best):
            continue
        xs = res.x
        frac = np.abs(xs - np.round(xs))
        frac[~is_bin] = 0.0
        if frac.max() <= INT_TOL:
            sol = xs.copy()
            sol[is_bin] = np.round(sol[is_bin])
            incumbent, best = sol, res.objective
            history.append(best)
            continue
        # most fractional, lowest index on ties
        score = np.where(is_bin, np.abs(xs - np.floor(xs) - 0.5), math.inf)
        j = int(np.argmin(score))
        down_up = up.copy()
        down_up[j] = math.floor(xs[j])
        up_lo = lo.copy()
        up_lo[j] = math.ceil(xs[j])
        # explore the side the relaxation leans to first
        first, second = (up_lo, up), (lo, down_up)
        if xs[j] - math.floor(xs[j]) < 0.5:
            first, second = second, first
        warm = (res.basis, res.at_upper)
        stack.append((second[0], second[1], res.objective, warm))
        stack.append((first[0], first[1], res.objective, warm))

    if unbounded:
        return MilpSolution("unbounded", {}, -math.inf, iterations, nodes, history, bounds)
    if incumbent is None:
        st = "iteration-limit" if status == "iteration-limit" else "infeasible"
        return MilpSolution(st, {}, math.inf, iterations, nodes, history, bounds)
    values = {name: float(v) for name, v in zip(names, incumbent)}
    return MilpSolution(status, values, float(c @ incumbent), iterations, nodes, history, bounds)


def _gap(best):
    return 1e-9 * max(1.0, abs(best)) if math.isfinite(best) else 0.0


def _solve_highs(model: MilpModel) -> MilpSolution:
    from scipy.optimize import Bounds, LinearConstraint as SciConstraint, milp

    c, A, senses, b, lower, upper = model.dense()
    lb = np.array([-np.inf if s == "<=" else v for s, v in zip(senses, b)])
    ub = np.array([np.inf if s == ">=" else v for s, v in zip(senses, b)])
    integrality = np.array([1 if v.kind == "binary" else 0 for v in model.variables])
    cons = [SciConstraint(A, lb, ub)] if len(b) else []
    res = milp(c, constraints=cons, integrality=integrality, bounds=Bounds(lower, upper),
               options={"mip_rel_gap": 0.0})
    nodes = int(getattr(res, "mip_node_count", 0) or 0)
    if res.status == 0:
        x = res.x.copy()
        for i in model.binaries:
            x[i] = round(x[i])
        values = {v.name: float(x[i]) for i, v in enumerate(model.variables)}
        return MilpSolution("optimal", values, float(c @ x), None, nodes, [float(c @ x)])
    if res.status == 2:
        return MilpSolution("infeasible", {}, math.inf, None, nodes)
    if res.status == 3:
        return MilpSolution("unbounded", {}, -math.inf, None, nodes)
    return MilpSolution("iteration-limit", {}, math.inf, None, nodes)


# ------------------------------------------------------------------- MPS

def _short_names(names, prefix):
    out, used = {}, set()
    for k, name in enumerate(names):
        cand = name.replace(" ", "_")[:8] or f"{prefix}{k}"
        serial = 0
        while cand in used:
            serial += 1
            tag = str(serial)
            cand = name.replace(" ", "_")[:8 - len(tag)] + tag
        used.add(cand)
        out[name] = cand
    return out


def _num(v: float) -> str:
    if float(v).is_integer() and abs(v) < 1e11:
        return str(int(v))
    for digits in range(12, 0, -1):
        text = f"{v:.{digits}g}"
        if len(text) <= 12:
            return text
    return f"{v:.5e}"


def _field_line(f1="", f2="", f3="", f4="", f5="", f6=""):
    # fixed columns: 2-3, 5-12, 15-22, 25-36, 40-47, 50-61
    line = " " + f"{f1:<2}" + " " + f"{f2:<8}" + "  " + f"{f3:<8}" + "  " + f"{f4:>12}"
    if f5 or f6:
        line += "   " + f"{f5:<8}" + "  " + f"{f6:>12}"
    return line.rstrip()


def export_mps(model: MilpModel) -> str:
    """Fixed-format MPS text (minimisation)."""
    var_names = _short_names([v.name for v in model.variables], "X")
    row_names = _short_names([c.name for c in model.constraints], "R")
    obj_name = "OBJ"
    while obj_name in row_names.values():
        obj_name += "_"
    out = [f"NAME          {model.name[:8]}", "ROWS", f" N  {obj_name}"]
    kind = {"<=": "L", ">=": "G", "=": "E"}
    for con in model.constraints:
        out.append(f" {kind[con.relation]}  {row_names[con.name]}")
    out.append("COLUMNS")
    column_entries: dict[str, list[tuple[str, float]]] = {v.name: [] for v in model.variables}
    for v in model.variables:
        if model.objective.get(v.name, 0.0):
            column_entries[v.name].append((obj_name, model.objective[v.name]))
    for con in model.constraints:
        for var, a in con.coefficients.items():
            column_entries[var].append((row_names[con.name], a))
    in_int = False
    marker = 0
    for v in model.variables:
        want_int = v.kind == "binary"
        if want_int != in_int:
            tag = "'INTORG'" if want_int else "'INTEND'"
            out.append(_field_line("", f"MARKER{marker:02d}"[:8], "'MARKER'", "", tag))
            marker += 1
            in_int = want_int
        entries = column_entries[v.name] or [(obj_name, 0.0)]
        for k in range(0, len(entries), 2):
            pair = entries[k:k + 2]
            fields = ["", var_names[v.name], pair[0][0], _num(pair[0][1])]
            if len(pair) == 2:
                fields += [pair[1][0], _num(pair[1][1])]
            out.append(_field_line(*fields))
    if in_int:
        out.append(_field_line("", f"MARKER{marker:02d}"[:8], "'MARKER'", "", "'INTEND'"))
    out.append("RHS")
    rhs = [(row_names[con.name], con.rhs) for con in model.constraints if con.rhs != 0]
    for k in range(0, len(rhs), 2):
        pair = rhs[k:k + 2]
        fields = ["", "RHS", pair[0][0], _num(pair[0][1])]
        if len(pair) == 2:
            fields += [pair[1][0], _num(pair[1][1])]
        out.append(_field_line(*fields))
    out.append("BOUNDS")
    for v in model.variables:
        name = var_names[v.name]
        if v.kind == "binary" and v.lower == 0 and v.upper == 1:
            out.append(_field_line("BV", "BND", name))
            continue
        if v.lower == v.upper:
            out.append(_field_line("FX", "BND", name, _num(v.lower)))
            continue
        if v.lower == -math.inf and v.upper == math.inf:
            out.append(_field_line("FR", "BND", name))
            continue
        if v.lower == -math.inf:
            out.append(_field_line("MI", "BND", name))
        elif v.lower != 0:
            out.append(_field_line("LO", "BND", name, _num(v.lower)))
        if v.upper != math.inf:
            out.append(_field_line("UP", "BND", name, _num(v.upper)))
    out.append("ENDATA")
    return "\n".join(out) + "\n"
