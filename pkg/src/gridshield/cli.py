"""``gridshield`` command line."""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .attack import (NotAttackable, Theorem1Violation, bridging_attack, bridging_region,
                     min_cut_attack)
from .dc import Unobservable, bdd_detect, build_jacobian, default_tau, wls_estimate
from .defense import (DefensePlan, Undefendable, cti_instance, build_masa_milp, mixed_defense,
                      mixed_instance, steiner_cti)
from .grid import (TABLE_I, CaseError, GenerationError, Pmu, bus_label, generate_case, line_label,
                   load_case, meter_label, parse_label, save_case)
from .milp import export_mps
from .observability import find_emst, is_observable, measured_graph, vertex_types
from .tph import tph_defense
from .verify import verify_plan


class UsageError(ValueError):
    pass


class Infeasible(RuntimeError):
    pass


@dataclass(frozen=True)
class RunConfig:
    subcommand: str
    case: str | None = None
    targets: tuple[int, ...] = ()
    mode: str = "mixed"
    k: int = 1
    seed: int = 0
    beta: float = 1.0
    tau: float | None = None
    out: str | None = None
    fmt: str = "json"


# ----------------------------------------------------------------- helpers

def _num(x):
    if isinstance(x, (np.floating, np.integer)):
        x = x.item()
    if isinstance(x, float):
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return round(x, 12) + 0.0
    return x


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return _num(obj)


def _dump_json(doc) -> str:
    return json.dumps(_clean(doc), indent=2, sort_keys=True) + "\n"


def _flatten(doc, prefix="") -> list[tuple[str, object]]:
    rows = []
    if isinstance(doc, dict):
        for k in sorted(doc):
            rows += _flatten(doc[k], f"{prefix}.{k}" if prefix else str(k))
    elif isinstance(doc, list) and any(isinstance(v, (dict, list)) for v in doc):
        for i, v in enumerate(doc):
            rows += _flatten(v, f"{prefix}[{i}]")
    elif isinstance(doc, list):
        rows.append((prefix, ";".join(str(_num(v)) for v in doc)))
    else:
        rows.append((prefix, _num(doc)))
    return rows


def _csv(rows, header=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if header:
        w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _render(doc, cfg: RunConfig) -> str:
    if cfg.fmt == "csv":
        return _csv(_flatten(_clean(doc)), ["field", "value"])
    return _dump_json(doc)


def _emit(text: str, cfg: RunConfig):
    if cfg.out:
        Path(cfg.out).write_text(text)
    else:
        sys.stdout.write(text)


def _read_case(path: str):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    return load_case(text)


def _targets(text: str | None, case) -> tuple[int, ...]:
    if not text:
        raise UsageError("--targets is required")
    try:
        buses = tuple(sorted({parse_label(t, "v") for t in text.split(",") if t.strip()}))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    n = case.network.n_buses
    for b in buses:
        if b >= n:
            raise UsageError(f"{bus_label(b)} is not a bus of this case")
        if b == case.network.reference:
            raise UsageError("targets must exclude the reference bus")
    if not buses:
        raise UsageError("--targets is empty")
    return buses


def _pmus(text: str | None, case) -> tuple[Pmu, ...]:
    """Case PMUs, or the ``--pmus v5,v7:2.5`` list (cost from the case or 1.0)."""
    if text is None:
        return tuple(case.pmus)
    listed = {p.bus: p.secure_cost for p in case.pmus}
    out = []
    for item in filter(None, (s.strip() for s in text.split(","))):
        label, _, cost = item.partition(":")
        try:
            bus = parse_label(label, "v")
            price = float(cost) if cost else listed.get(bus, 1.0)
        except ValueError as exc:
            raise UsageError(f"bad --pmus entry {item!r}: {exc}") from None
        if bus >= case.network.n_buses:
            raise UsageError(f"{bus_label(bus)} is not a bus of this case")
        out.append(Pmu(bus, price))
    return tuple(out)


def _vector(values, label) -> dict:
    return {label(i): float(v) for i, v in enumerate(values) if abs(v) > 1e-12}


# -------------------------------------------------------------- inspect

def cmd_inspect(cfg: RunConfig, args) -> int:
    case = _read_case(cfg.case)
    network, placement = case.network, case.placement
    mg = measured_graph(network, placement)
    observable = is_observable(mg)
    jac = build_jacobian(network, placement)
    if args.dump_jacobian and cfg.fmt == "csv":
        header = ["meter"] + [bus_label(b) for b in network.buses]
        rows = [[meter_label(i)] + [_num(float(v)) for v in row] for i, row in enumerate(jac.full)]
        _emit(_csv(rows, header), cfg)
        return 0
    doc = {
        "buses": len(network.buses),
        "lines": len(network.lines),
        "meters": len(placement),
        "reference": bus_label(network.reference),
        "observable": observable,
        "unmeasured_lines": [line_label(l.id) for l in network.lines if l.id not in mg.edges],
    }
    if observable:
        typing = vertex_types(mg)
        emst = find_emst(mg)
        doc["bridging"] = [line_label(e) for e in sorted(typing.bridging)]
        doc["p2"] = [bus_label(b) for b in sorted(typing.p2_vertices)]
        doc["p1"] = [bus_label(b) for b in network.buses
                     if b not in typing.p2_vertices and b != network.reference]
        doc["emst"] = {line_label(e): meter_label(emst.mapping[e]) for e in emst.edges}
    if args.dump_jacobian:
        doc["jacobian"] = {meter_label(i): [float(v) for v in row] for i, row in enumerate(jac.full)}
    _emit(_render(doc, cfg), cfg)
    return 0


# --------------------------------------------------------------- attack

def cmd_attack(cfg: RunConfig, args) -> int:
    case = _read_case(cfg.case)
    network, placement, costs = case
    targets = _targets(args.targets, case)
    mg = measured_graph(network, placement)
    if not is_observable(mg):
        raise Infeasible("system is unobservable")
    typing = vertex_types(mg)
    p2 = [d for d in targets if d in typing.p2_vertices]
    p1 = [d for d in targets if d not in typing.p2_vertices]
    a = np.zeros(len(placement))
    c = np.zeros(network.n_states)
    doc = {"targets": [bus_label(d) for d in targets], "beta": cfg.beta}
    cut, cost = [], 0.0
    if p1:
        plan = min_cut_attack(network, placement, p1, costs, cfg.beta, mg=mg, typing=typing)
        a += plan.attack.a
        c += plan.attack.c
        cut, cost = sorted(plan.knowledge_lines), plan.cost
        doc["sink_side"] = [bus_label(b) for b in sorted(plan.sink_side)]
    shifted = set()
    for d in p2:
        if d in shifted:
            continue
        region, _ = bridging_region(mg, typing, d)
        shifted |= region
        att = bridging_attack(network, placement, typing, d, cfg.beta, mg)
        a += att.a
        c += att.c
    doc["cut"] = [line_label(l) for l in cut]
    doc["cost"] = cost
    doc["topology_free"] = [bus_label(d) for d in p2]
    doc["kind"] = "topology-free" if p2 and not p1 else ("cut" if not p2 else "cut+topology-free")
    doc["injections"] = _vector(a, meter_label)
    shift = np.insert(c, network.reference, 0.0)
    doc["state_shift"] = _vector(shift, bus_label)
    # residual of the attack alone; the BDD residual of z + a equals that of z when this is 0
    jac = build_jacobian(network, placement)
    res = wls_estimate(jac, a)
    tau = cfg.tau if cfg.tau is not None else default_tau(jac.m, jac.n)
    doc["attack_residual"] = res.residual_norm
    doc["tau"] = tau
    doc["detected"] = bool(bdd_detect(res, tau))
    _emit(_render(doc, cfg), cfg)
    return 0


# --------------------------------------------------------------- defend

def plan_to_dict(plan: DefensePlan) -> dict:
    label = {"meter": meter_label, "covert": line_label, "pmu": bus_label}
    witness = []
    for (t, h, e, _), (kind, ident) in zip(plan.arborescence, plan.witness):
        witness.append({"tail": bus_label(t), "head": bus_label(h), "edge": line_label(e),
                        "protected_by": {"kind": kind, "item": label[kind](ident)}})
    doc = {
        "mode": plan.mode,
        "targets": [bus_label(d) for d in sorted(plan.targets)],
        "covert_lines": [line_label(l) for l in sorted(plan.covert_lines)],
        "secured_meters": [meter_label(m) for m in sorted(plan.secured_meters)],
        "secured_pmus": [bus_label(b) for b in sorted(plan.secured_pmus)],
        "total_cost": plan.total_cost,
        "witness_arcs": witness,
    }
    info = {k: v for k, v in plan.solver.items() if k in ("backend", "nodes", "objective", "rounds",
                                                          "K", "seed", "best_prefix")}
    if info:
        doc["solver"] = info
    return doc


def plan_from_dict(doc: dict, case) -> DefensePlan:
    try:
        targets = frozenset(parse_label(v, "v") for v in doc["targets"])
        lines = frozenset(parse_label(e, "e") for e in doc.get("covert_lines", []))
        meters = frozenset(parse_label(r, "r") for r in doc.get("secured_meters", []))
        pmus = frozenset(parse_label(v, "v") for v in doc.get("secured_pmus", []))
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"malformed plan: {exc}") from None
    if any(l >= len(case.network.lines) for l in lines) or any(m >= len(case.placement) for m in meters):
        raise UsageError("plan refers to lines or meters missing from the case")
    return DefensePlan(lines, meters, float(doc.get("total_cost", 0.0)), (), targets, pmus,
                       doc.get("mode", "mixed"))


def cmd_defend(cfg: RunConfig, args) -> int:
    case = _read_case(cfg.case)
    network, placement, costs = case
    targets = _targets(args.targets, case)
    pmus = _pmus(args.pmus, case)
    if cfg.mode == "cti":
        plan = steiner_cti(network, placement, costs, targets)
    elif cfg.mode == "mixed":
        plan = mixed_defense(network, placement, costs, targets, pmus)
    else:
        plan = tph_defense(network, placement, costs, targets, pmus, cfg.k, cfg.seed)
    _emit(_render(plan_to_dict(plan), cfg), cfg)
    return 0


# --------------------------------------------------------------- verify

def cmd_verify(cfg: RunConfig, args) -> int:
    case = _read_case(cfg.case)
    try:
        doc = json.loads(Path(args.plan).read_text())
    except OSError as exc:
        raise UsageError(f"cannot read {args.plan}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{args.plan}: not JSON ({exc.msg})") from None
    plan = plan_from_dict(doc, case)
    report = verify_plan(case.network, case.placement, plan, seed=cfg.seed)
    out = {"rank_ok": report.rank_ok, "subspace_ok": report.subspace_ok,
           "simulated_detection_delta": report.simulated_detection_delta,
           "details": report.details, "passed": report.passed}
    _emit(_render(out, cfg), cfg)
    return 0 if report.passed else 1


# ------------------------------------------------------------- gen-case

def cmd_gen_case(cfg: RunConfig, args) -> int:
    if args.buses not in TABLE_I:
        raise UsageError(f"--buses must be one of {sorted(TABLE_I)}")
    if not 0.0 <= args.covert_fraction <= 1.0:
        raise UsageError("--covert-fraction must lie in [0, 1]")
    case = generate_case(args.buses, cfg.seed, covert_fraction=args.covert_fraction,
                         covert_cost=args.covert_cost)
    _emit(save_case(case) + "\n", cfg)
    return 0


# ----------------------------------------------------------- export-mps

def cmd_export_mps(cfg: RunConfig, args) -> int:
    case = _read_case(cfg.case)
    network, placement, costs = case
    targets = _targets(args.targets, case)
    if cfg.mode == "cti":
        inst, _ = cti_instance(network, placement, costs, targets)
    elif cfg.mode == "mixed":
        inst, _ = mixed_instance(network, placement, costs, targets, _pmus(args.pmus, case))
    else:
        raise UsageError("export-mps supports --mode cti or mixed")
    _emit(export_mps(build_masa_milp(inst)), cfg)
    return 0


# ----------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gridshield",
                                     description="DC state-estimation attack and defense planner")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p, case=True, targets=False):
        if case:
            p.add_argument("case", help="case JSON file")
        if targets:
            p.add_argument("--targets", help="comma-separated buses, e.g. v3,v7")
        p.add_argument("--out", help="write output here instead of stdout")
        p.add_argument("--format", dest="fmt", choices=["json", "csv"], default="json")
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("inspect", help="observability, bridging edges, vertex types")
    common(p)
    p.add_argument("--dump-jacobian", action="store_true")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("attack", help="cheapest undetectable attack on the targets")
    common(p, targets=True)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--tau", type=float)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("defend", help="defense plan for the targets")
    common(p, targets=True)
    p.add_argument("--mode", choices=["cti", "mixed", "tph"], default="mixed")
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--pmus", help="PMU candidates, e.g. v5 or v5:2.0 (default: from the case)")
    p.set_defaults(func=cmd_defend)

    p = sub.add_parser("verify", help="check a plan produced by defend")
    common(p)
    p.add_argument("--plan", required=True)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("gen-case", help="seeded synthetic case with a standard profile")
    common(p, case=False)
    p.add_argument("--buses", type=int, default=14)
    p.add_argument("--covert-fraction", type=float, default=0.0)
    p.add_argument("--covert-cost", type=float, default=0.1)
    p.set_defaults(func=cmd_gen_case)

    p = sub.add_parser("export-mps", help="write the defense MILP in MPS format")
    common(p, targets=True)
    p.add_argument("--mode", choices=["cti", "mixed"], default="mixed")
    p.add_argument("--pmus")
    p.set_defaults(func=cmd_export_mps)
    return parser


def _config(args) -> RunConfig:
    k = getattr(args, "k", 1)
    if k < 1:
        raise UsageError("--k must be at least 1")
    return RunConfig(args.subcommand, getattr(args, "case", None), (), getattr(args, "mode", "mixed"),
                     k, args.seed, getattr(args, "beta", 1.0), getattr(args, "tau", None),
                     args.out, args.fmt)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = _config(args)
        return args.func(cfg, args)
    except (UsageError, CaseError) as exc:
        print(f"gridshield: {exc}", file=sys.stderr)
        return 2
    except (Infeasible, NotAttackable, Theorem1Violation, Undefendable, Unobservable,
            GenerationError) as exc:
        print(f"gridshield: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"gridshield: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
