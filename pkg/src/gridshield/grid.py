"""Networks, meters, cost models, case files and the seeded case generator.

Ids are 0-based in memory and 1-based in case files and labels
(``v1``, ``e1``, ``r1``).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Iterable, Mapping

import jsonschema
import numpy as np


class CaseError(ValueError):
    """Invalid case content; ``path`` is a JSON path such as ``$.lines[2].reactance``."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.message = message


class MeterKind(str, Enum):
    FLOW = "flow"
    INJECTION = "injection"
    VIRTUAL = "virtual"
    PSEUDO = "pseudo"

    @property
    def is_flow_type(self) -> bool:
        return self is not MeterKind.INJECTION


@dataclass(frozen=True)
class Line:
    id: int
    tail: int
    head: int
    reactance: float
    pseudo: bool = False

    def __post_init__(self):
        if not self.reactance > 0:
            raise ValueError(f"line {self.id}: nonpositive reactance")
        if self.tail == self.head:
            raise ValueError(f"line {self.id}: tail equals head")

    @property
    def admittance(self) -> float:
        return 1.0 / self.reactance

    @property
    def ends(self) -> tuple[int, int]:
        return (self.tail, self.head)

    def other(self, bus: int) -> int:
        return self.head if bus == self.tail else self.tail


@dataclass(frozen=True)
class PowerNetwork:
    n_buses: int
    reference: int
    lines: tuple[Line, ...]

    def __post_init__(self):
        object.__setattr__(self, "lines", tuple(self.lines))
        if not 0 <= self.reference < self.n_buses:
            raise ValueError("reference bus outside the bus list")
        for idx, line in enumerate(self.lines):
            if line.id != idx:
                raise ValueError("line ids must be dense and ordered")
            for b in line.ends:
                if not 0 <= b < self.n_buses:
                    raise ValueError(f"line {line.id}: unknown bus {b}")

    @property
    def buses(self) -> range:
        return range(self.n_buses)

    @property
    def n_states(self) -> int:
        return self.n_buses - 1

    def state_index(self, bus: int) -> int:
        """Column of ``bus`` in the reduced Jacobian."""
        if bus == self.reference:
            raise ValueError("the reference bus has no state column")
        return bus if bus < self.reference else bus - 1

    def state_bus(self, col: int) -> int:
        return col if col < self.reference else col + 1

    def incident(self, bus: int) -> list[Line]:
        return [ln for ln in self.lines if bus in ln.ends]

    def with_reference(self, reference: int) -> "PowerNetwork":
        return PowerNetwork(self.n_buses, reference, self.lines)

    def with_reactances(self, reactances: Iterable[float]) -> "PowerNetwork":
        lines = [Line(ln.id, ln.tail, ln.head, float(x), ln.pseudo)
                 for ln, x in zip(self.lines, reactances)]
        return PowerNetwork(self.n_buses, self.reference, lines)


@dataclass(frozen=True)
class Meter:
    id: int
    kind: MeterKind
    secure_cost: float = 1.0
    line: int | None = None
    direction: int = 1
    bus: int | None = None

    def __post_init__(self):
        if self.secure_cost < 0:
            raise ValueError(f"meter {self.id}: negative cost")
        if self.kind is MeterKind.INJECTION:
            if self.bus is None:
                raise ValueError(f"meter {self.id}: injection meter without bus")
        elif self.line is None:
            raise ValueError(f"meter {self.id}: flow meter without line")
        if self.direction not in (1, -1):
            raise ValueError(f"meter {self.id}: direction must be +1 or -1")


@dataclass(frozen=True)
class MeasurementPlacement:
    meters: tuple[Meter, ...]

    def __post_init__(self):
        object.__setattr__(self, "meters", tuple(self.meters))
        for idx, m in enumerate(self.meters):
            if m.id != idx:
                raise ValueError("meter ids must be dense and ordered")

    def __len__(self):
        return len(self.meters)

    def __iter__(self):
        return iter(self.meters)

    def __getitem__(self, idx: int) -> Meter:
        return self.meters[idx]

    def validate_against(self, network: PowerNetwork) -> None:
        for m in self.meters:
            if m.line is not None and not 0 <= m.line < len(network.lines):
                raise ValueError(f"meter {m.id}: unknown line {m.line}")
            if m.bus is not None and not 0 <= m.bus < network.n_buses:
                raise ValueError(f"meter {m.id}: unknown bus {m.bus}")


@dataclass(frozen=True)
class CostModel:
    """Defender and attacker prices.

    ``covert_candidates`` maps line -> covert cost. ``acquisition`` maps
    line -> attacker cost (``math.inf`` allowed); ``None`` means every line
    costs ``DEFAULT_ACQUISITION``.
    """

    covert_candidates: Mapping[int, float] = field(default_factory=dict)
    acquisition: Mapping[int, float] | None = None

    DEFAULT_ACQUISITION = 1.0

    def acquisition_cost(self, line: int) -> float:
        if self.acquisition is None:
            return self.DEFAULT_ACQUISITION
        return self.acquisition.get(line, self.DEFAULT_ACQUISITION)


@dataclass(frozen=True)
class Pmu:
    bus: int
    secure_cost: float = 1.0


@dataclass(frozen=True)
class Case:
    network: PowerNetwork
    placement: MeasurementPlacement
    costs: CostModel = field(default_factory=CostModel)
    pmus: tuple[Pmu, ...] = ()

    def __iter__(self):
        # allows ``network, placement, costs = load_case(text)``
        return iter((self.network, self.placement, self.costs))


def bus_label(b: int) -> str:
    return f"v{b + 1}"


def line_label(l: int) -> str:
    return f"e{l + 1}"


def meter_label(m: int) -> str:
    return f"r{m + 1}"


def parse_label(text: str, prefix: str) -> int:
    """``'v3'`` or ``'3'`` -> 2."""
    s = text.strip()
    if s.lower().startswith(prefix):
        s = s[len(prefix):]
    try:
        value = int(s)
    except ValueError:
        raise ValueError(f"bad {prefix}-label {text!r}") from None
    if value < 1:
        raise ValueError(f"bad {prefix}-label {text!r}")
    return value - 1


def exact(value: float) -> Fraction:
    """Exact rational for a decimal number as written in a case file."""
    return Fraction(repr(float(value)))


def build_incidence(network: PowerNetwork) -> np.ndarray:
    A = np.zeros((len(network.lines), network.n_buses), dtype=int)
    for ln in network.lines:
        A[ln.id, ln.tail] = 1
        A[ln.id, ln.head] = -1
    return A


# ---------------------------------------------------------------- case files

_NUMBER = {"type": "number"}
_INT = {"type": "integer"}

CASE_SCHEMA = {
    "type": "object",
    "required": ["buses", "reference", "lines", "meters"],
    "additionalProperties": False,
    "properties": {
        "buses": {"type": "array", "items": _INT},
        "reference": _INT,
        "lines": {"type": "array", "items": {
            "type": "object",
            "required": ["id", "from", "to", "reactance"],
            "additionalProperties": False,
            "properties": {"id": _INT, "from": _INT, "to": _INT, "reactance": _NUMBER},
        }},
        "meters": {"type": "array", "items": {
            "type": "object",
            "required": ["id", "kind", "secure_cost"],
            "additionalProperties": False,
            "properties": {
                "id": _INT,
                "kind": {"enum": ["flow", "injection"]},
                "line": _INT,
                "direction": {"enum": ["+", "-"]},
                "bus": _INT,
                "secure_cost": _NUMBER,
            },
            "oneOf": [
                {"properties": {"kind": {"const": "flow"}},
                 "required": ["line", "direction"], "not": {"required": ["bus"]}},
                {"properties": {"kind": {"const": "injection"}},
                 "required": ["bus"],
                 "not": {"anyOf": [{"required": ["line"]}, {"required": ["direction"]}]}},
            ],
        }},
        "covert_candidates": {"type": "array", "items": {
            "type": "object", "required": ["line", "covert_cost"], "additionalProperties": False,
            "properties": {"line": _INT, "covert_cost": _NUMBER},
        }},
        "acquisition": {"type": "array", "items": {
            "type": "object", "required": ["line", "cost"], "additionalProperties": False,
            "properties": {"line": _INT,
                           "cost": {"anyOf": [_NUMBER, {"const": "inf"}]}},
        }},
        "pmus": {"type": "array", "items": {
            "type": "object", "required": ["bus", "secure_cost"], "additionalProperties": False,
            "properties": {"bus": _INT, "secure_cost": _NUMBER},
        }},
    },
}


def _check_cost(value, path):
    if value < 0 or not math.isfinite(value):
        raise CaseError(path, "cost must be finite and nonnegative")
    return float(value)


def case_from_dict(doc: dict) -> Case:
    try:
        jsonschema.validate(doc, CASE_SCHEMA)
    except jsonschema.ValidationError as err:
        raise CaseError(err.json_path, f"schema violation: {err.message}") from None

    buses = doc["buses"]
    if sorted(buses) != list(range(1, len(buses) + 1)):
        raise CaseError("$.buses", "bus ids must be 1..n without gaps or repeats")
    n = len(buses)

    def bus(value, path):
        if not 1 <= value <= n:
            raise CaseError(path, f"dangling bus id {value}")
        return value - 1

    reference = bus(doc["reference"], "$.reference")

    raw_lines = sorted(enumerate(doc["lines"]), key=lambda p: p[1]["id"])
    lines = []
    for pos, (k, ln) in enumerate(raw_lines):
        path = f"$.lines[{k}]"
        if ln["id"] != pos + 1:
            raise CaseError(f"{path}.id", "line ids must be 1..t without gaps or repeats")
        if not ln["reactance"] > 0:
            raise CaseError(f"{path}.reactance", "nonpositive reactance")
        tail, head = bus(ln["from"], f"{path}.from"), bus(ln["to"], f"{path}.to")
        if tail == head:
            raise CaseError(path, "line endpoints must differ")
        lines.append(Line(pos, tail, head, float(ln["reactance"])))
    network = PowerNetwork(n, reference, lines)

    def line(value, path):
        if not 1 <= value <= len(lines):
            raise CaseError(path, f"dangling line id {value}")
        return value - 1

    raw_meters = sorted(enumerate(doc["meters"]), key=lambda p: p[1]["id"])
    meters, seen = [], set()
    for pos, (k, m) in enumerate(raw_meters):
        path = f"$.meters[{k}]"
        if m["id"] != pos + 1:
            raise CaseError(f"{path}.id", "meter ids must be 1..m without gaps or repeats")
        cost = _check_cost(m["secure_cost"], f"{path}.secure_cost")
        if m["kind"] == "flow":
            key = ("flow", line(m["line"], f"{path}.line"), 1 if m["direction"] == "+" else -1)
            meter = Meter(pos, MeterKind.FLOW, cost, line=key[1], direction=key[2])
        else:
            key = ("injection", bus(m["bus"], f"{path}.bus"))
            meter = Meter(pos, MeterKind.INJECTION, cost, bus=key[1])
        if key in seen:
            raise CaseError(path, "duplicate meter on same line+direction")
        seen.add(key)
        meters.append(meter)
    placement = MeasurementPlacement(meters)

    covert = None
    if "covert_candidates" in doc:
        covert = {}
        for k, item in enumerate(doc["covert_candidates"]):
            path = f"$.covert_candidates[{k}]"
            lid = line(item["line"], f"{path}.line")
            if lid in covert:
                raise CaseError(path, "duplicate covert candidate")
            covert[lid] = _check_cost(item["covert_cost"], f"{path}.covert_cost")
    acquisition = None
    if "acquisition" in doc:
        acquisition = {}
        for k, item in enumerate(doc["acquisition"]):
            path = f"$.acquisition[{k}]"
            lid = line(item["line"], f"{path}.line")
            if lid in acquisition:
                raise CaseError(path, "duplicate acquisition entry")
            value = item["cost"]
            acquisition[lid] = math.inf if value == "inf" else float(value)
            if acquisition[lid] < 0:
                raise CaseError(f"{path}.cost", "cost must be nonnegative")
    pmus = []
    if "pmus" in doc:
        for k, item in enumerate(doc["pmus"]):
            path = f"$.pmus[{k}]"
            pmus.append(Pmu(bus(item["bus"], f"{path}.bus"),
                            _check_cost(item["secure_cost"], f"{path}.secure_cost")))
        if len({p.bus for p in pmus}) != len(pmus):
            raise CaseError("$.pmus", "duplicate PMU bus")
    costs = CostModel(covert if covert is not None else {}, acquisition)
    case = Case(network, placement, costs, tuple(pmus))
    object.__setattr__(case, "_has_covert", covert is not None)
    object.__setattr__(case, "_has_pmus", "pmus" in doc)
    return case


def load_case(text: str) -> Case:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise CaseError("$", f"invalid JSON: {err}") from None
    return case_from_dict(doc)


def _num(x: float):
    return "inf" if math.isinf(x) else x


def case_to_dict(case: Case) -> dict:
    net, plc = case.network, case.placement
    doc = {
        "buses": [b + 1 for b in net.buses],
        "reference": net.reference + 1,
        "lines": [{"id": ln.id + 1, "from": ln.tail + 1, "to": ln.head + 1,
                   "reactance": ln.reactance} for ln in net.lines if not ln.pseudo],
        "meters": [],
    }
    for m in plc:
        if m.kind is MeterKind.FLOW:
            doc["meters"].append({"id": m.id + 1, "kind": "flow", "line": m.line + 1,
                                  "direction": "+" if m.direction > 0 else "-",
                                  "secure_cost": m.secure_cost})
        elif m.kind is MeterKind.INJECTION:
            doc["meters"].append({"id": m.id + 1, "kind": "injection", "bus": m.bus + 1,
                                  "secure_cost": m.secure_cost})
        else:
            raise ValueError("analysis meters are never written to case files")
    if case.costs.covert_candidates or getattr(case, "_has_covert", False):
        doc["covert_candidates"] = [{"line": l + 1, "covert_cost": c}
                                    for l, c in sorted(case.costs.covert_candidates.items())]
    if case.costs.acquisition is not None:
        doc["acquisition"] = [{"line": l + 1, "cost": _num(c)}
                              for l, c in sorted(case.costs.acquisition.items())]
    if case.pmus or getattr(case, "_has_pmus", False):
        doc["pmus"] = [{"bus": p.bus + 1, "secure_cost": p.secure_cost} for p in case.pmus]
    return doc


def save_case(case: Case) -> str:
    return json.dumps(case_to_dict(case), indent=2, sort_keys=True) + "\n"


# ------------------------------------------------------------ case generator

@dataclass(frozen=True)
class Profile:
    lines: int
    injections: int
    flows: int
    unmeasured: int


TABLE_I = {
    14: Profile(20, 8, 12, 1),
    57: Profile(80, 30, 50, 2),
    118: Profile(186, 70, 110, 7),
}

RETRY_CAP = 1000


class GenerationError(ValueError):
    pass


def _random_topology(rng: np.random.Generator, n: int, t: int) -> list[tuple[int, int]]:
    """Sparse, grid-like topology: Euclidean spanning tree plus short extra lines."""
    pts = rng.random((n, 2))
    dist = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=2)
    in_tree = np.zeros(n, bool)
    in_tree[0] = True
    best = dist[0].copy()
    parent = np.zeros(n, int)
    edges = []
    for _ in range(n - 1):
        cand = np.where(~in_tree, best, np.inf)
        v = int(np.argmin(cand))
        edges.append((int(parent[v]), v))
        in_tree[v] = True
        closer = dist[v] < best
        best[closer] = dist[v][closer]
        parent[closer] = v
    have = {frozenset(e) for e in edges}
    pool = [(dist[i, j], i, j) for i in range(n) for j in range(i + 1, n)
            if frozenset((i, j)) not in have]
    pool.sort()
    extra = t - (n - 1)
    # draw extras from the shortest candidates, with some slack for variety
    window = pool[:max(extra, min(len(pool), 3 * extra))]
    picks = rng.choice(len(window), size=extra, replace=False) if extra else []
    edges += [(window[k][1], window[k][2]) for k in sorted(picks)]
    out = []
    for i, j in edges:
        out.append((i, j) if rng.random() < 0.5 else (j, i))
    order = rng.permutation(len(out))
    return [out[k] for k in order]


def _attempt(rng, n, profile):
    t = profile.lines
    ends = _random_topology(rng, n, t)
    reactances = np.round(rng.uniform(0.02, 0.5, size=t), 4)
    lines = [Line(i, a, b, float(x)) for i, ((a, b), x) in enumerate(zip(ends, reactances))]
    network = PowerNetwork(n, 0, lines)

    unmeasured = set(rng.choice(t, size=profile.unmeasured, replace=False).tolist())
    blocked = {b for l in unmeasured for b in lines[l].ends}
    allowed = [b for b in range(n) if b not in blocked]
    if len(allowed) < profile.injections:
        return None
    inj = sorted(rng.choice(allowed, size=profile.injections, replace=False).tolist())
    covered = {ln.id for ln in lines if set(ln.ends) & set(inj)}
    needed = [l for l in range(t) if l not in unmeasured and l not in covered]
    if len(needed) > profile.flows:
        return None
    rest = [l for l in range(t) if l not in unmeasured and l not in needed]
    extra = rng.choice(rest, size=profile.flows - len(needed), replace=False).tolist()
    flow_lines = sorted(needed + extra)
    meters = [Meter(k, MeterKind.FLOW, 1.0, line=l, direction=int(rng.choice([1, -1])))
              for k, l in enumerate(flow_lines)]
    meters += [Meter(len(meters) + k, MeterKind.INJECTION, 1.0, bus=b) for k, b in enumerate(inj)]
    return network, MeasurementPlacement(meters)


def generate_placement(n_buses: int, seed: int, profile: Profile | Mapping | None = None):
    """Seeded synthetic network and placement with the given meter counts.

    Retries derived sub-seeds until the placement is observable.
    """
    from .observability import find_emst, measured_graph

    if profile is None:
        profile = TABLE_I[n_buses]
    if isinstance(profile, Mapping):
        profile = Profile(**profile)
    t = profile.lines
    if n_buses < 2 or t < n_buses - 1 or t > n_buses * (n_buses - 1) // 2:
        raise GenerationError("infeasible profile: line count cannot form a connected simple graph")
    if profile.flows > t - profile.unmeasured or profile.injections > n_buses:
        raise GenerationError("infeasible profile: meter counts exceed available elements")
    if profile.unmeasured > t or min(profile.flows, profile.injections, profile.unmeasured) < 0:
        raise GenerationError("infeasible profile")
    for sub in range(RETRY_CAP):
        rng = np.random.default_rng([seed, sub])
        result = _attempt(rng, n_buses, profile)
        if result is None:
            continue
        network, placement = result
        if find_emst(measured_graph(network, placement)) is not None:
            return network, placement
    raise GenerationError(f"no observable placement within {RETRY_CAP} retries")


def generate_case(n_buses: int, seed: int, profile=None, covert_fraction: float = 0.0,
                  covert_cost: float = 0.1, meter_cost: float = 1.0) -> Case:
    """Generated case with a covert-candidate set drawn from the measured lines."""
    network, placement = generate_placement(n_buses, seed, profile)
    if meter_cost != 1.0:
        placement = MeasurementPlacement(
            [Meter(m.id, m.kind, meter_cost, m.line, m.direction, m.bus) for m in placement])
    covert = {}
    if covert_fraction > 0:
        measured = sorted({l for l in _measured_lines(network, placement)})
        rng = np.random.default_rng([seed, 7919])
        k = max(1, round(covert_fraction * len(network.lines)))
        k = min(k, len(measured))
        covert = {int(l): covert_cost for l in sorted(rng.choice(measured, size=k, replace=False))}
    return Case(network, placement, CostModel(covert))


def _measured_lines(network, placement):
    for m in placement:
        if m.line is not None:
            yield m.line
        else:
            yield from (ln.id for ln in network.incident(m.bus))
