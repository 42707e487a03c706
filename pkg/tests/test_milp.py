import itertools
import math

import numpy as np
import pytest

from gridshield.defense import build_masa_milp, mixed_instance
from gridshield.grid import Profile, generate_case
from gridshield.milp import MilpModel, export_mps, lp_solve, solve

from conftest import DATA


def random_binary_model(seed, n_max=15):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, n_max + 1))
    model = MilpModel(f"r{seed}")
    names = [model.add_variable(f"b{i}", "binary") for i in range(n)]
    for k in range(int(rng.integers(1, 6))):
        coefs = {v: float(rng.integers(-4, 6)) for v in names if rng.random() < 0.6}
        rel = str(rng.choice(["<=", ">=", "="], p=[0.5, 0.4, 0.1]))
        total = sum(abs(a) for a in coefs.values())
        model.add_constraint(coefs, rel, float(rng.integers(-2, int(total / 2) + 2)))
    model.set_objective({v: float(rng.integers(-5, 8)) for v in names})
    return model


def brute_force(model):
    c, A, senses, b, _, _ = model.dense()
    n = len(c)
    X = np.array(list(itertools.product((0, 1), repeat=n)), dtype=float)
    ok = np.ones(len(X), bool)
    lhs = X @ A.T
    for r, s in enumerate(senses):
        if s == "<=":
            ok &= lhs[:, r] <= b[r] + 1e-9
        elif s == ">=":
            ok &= lhs[:, r] >= b[r] - 1e-9
        else:
            ok &= np.abs(lhs[:, r] - b[r]) <= 1e-9
    return (X[ok] @ c).min() if ok.any() else math.inf


@pytest.mark.parametrize("seed", range(100))
def test_branch_and_bound_matches_enumeration(seed):
    model = random_binary_model(seed)
    sol = solve(model)
    expect = brute_force(model)
    if math.isinf(expect):
        assert sol.status == "infeasible"
        return
    assert sol.status == "optimal"
    assert sol.objective_value == pytest.approx(expect, abs=1e-6)
    assert model.violations(sol.values) == []
    # the root relaxation bounds the optimum; incumbents only improve
    assert sol.node_bounds[0] <= expect + 1e-6
    assert all(b <= a + 1e-9 for a, b in zip(sol.incumbent_history, sol.incumbent_history[1:]))


def random_mixed_model(seed):
    rng = np.random.default_rng(seed)
    model = MilpModel()
    bins = [model.add_variable(f"b{i}", "binary") for i in range(int(rng.integers(1, 8)))]
    conts = [model.add_variable(f"x{i}", "continuous", 0.0, float(rng.integers(1, 5)))
             for i in range(int(rng.integers(1, 6)))]
    every = bins + conts
    for _ in range(int(rng.integers(2, 7))):
        coefs = {v: float(rng.normal()) for v in every if rng.random() < 0.7}
        model.add_constraint(coefs, str(rng.choice(["<=", ">="])), float(rng.normal()))
    model.set_objective({v: float(rng.normal()) for v in every})
    return model


@pytest.mark.parametrize("seed", range(40))
def test_mixed_models_agree_with_highs(seed):
    model = random_mixed_model(seed)
    ours, ref = solve(model), solve(model, backend="highs")
    assert ours.status == ref.status
    if ref.status == "optimal":
        assert ours.objective_value == pytest.approx(ref.objective_value, abs=1e-6)
        assert model.violations(ours.values) == []


def test_trivial_model():
    model = MilpModel()
    model.add_variable("x", "binary")
    model.add_constraint({"x": 1}, ">=", 1)
    model.set_objective({"x": 1})
    sol = solve(model)
    assert (sol.status, sol.values, sol.objective_value) == ("optimal", {"x": 1.0}, 1.0)


def test_fractional_knapsack_needs_branching():
    model = MilpModel()
    w, v = [3, 4, 5, 6], [4, 5, 6, 8]
    for i in range(4):
        model.add_variable(f"k{i}", "binary")
    model.add_constraint({f"k{i}": w[i] for i in range(4)}, "<=", 10)
    model.set_objective({f"k{i}": -v[i] for i in range(4)})
    sol = solve(model)
    assert sol.objective_value == -13
    assert sol.nodes > 1
    assert sol.node_bounds[0] < -13


def test_infeasible_and_unbounded():
    model = MilpModel()
    model.add_variable("x", "binary")
    model.add_constraint({"x": 1}, ">=", 2)
    assert solve(model).status == "infeasible"
    free = MilpModel()
    free.add_variable("y", lower=-math.inf)
    free.set_objective({"y": 1})
    assert solve(free).status == "unbounded"


def test_node_limit_reports_iteration_limit():
    # parity makes this integer infeasible while every relaxation is feasible
    hard = MilpModel()
    for i in range(12):
        hard.add_variable(f"b{i}", "binary")
    hard.add_constraint({f"b{i}": 2 for i in range(12)}, "=", 11)
    assert solve(hard, node_limit=3).status == "iteration-limit"
    assert solve(hard).status == "infeasible"


def test_lp_relaxation_vertex():
    c = np.array([-1.0, -1.0])
    A = np.array([[1.0, 2.0], [3.0, 1.0]])
    res = lp_solve(c, A, ["<=", "<="], np.array([4.0, 6.0]), np.zeros(2), np.full(2, np.inf))
    assert res.status == "optimal"
    np.testing.assert_allclose(res.x, [1.6, 1.2])


def test_model_guards():
    model = MilpModel()
    model.add_variable("x")
    with pytest.raises(ValueError):
        model.add_variable("x")
    with pytest.raises(ValueError):
        model.add_variable("y", "integer")
    with pytest.raises(ValueError):
        model.add_constraint({"x": 1e9}, "<=", 1)
    with pytest.raises(ValueError):
        model.add_constraint({"x": math.nan}, "<=", 1)
    with pytest.raises(ValueError):
        model.add_constraint({"nope": 1}, "<=", 1)
    with pytest.raises(ValueError):
        model.add_constraint({"x": 1}, "<", 1)
    with pytest.raises(ValueError):
        model.set_objective({"nope": 1})


def single_constraint_model():
    model = MilpModel("single")
    model.add_variable("pick_first_meter", "binary")
    model.add_variable("pick_first_meter_too", "binary")
    model.add_variable("slack", "continuous", 0.0, 2.5)
    model.add_constraint({"pick_first_meter": 1, "pick_first_meter_too": 1, "slack": -0.5}, ">=", 1,
                         "cover")
    model.set_objective({"pick_first_meter": 3, "pick_first_meter_too": 2.25, "slack": 0.1})
    return model


def test_mps_golden_file():
    assert export_mps(single_constraint_model()) == (DATA / "golden_single.mps").read_text()


def test_empty_model_mps():
    text = export_mps(MilpModel("empty"))
    assert text.splitlines() == ["NAME          empty", "ROWS", " N  OBJ", "COLUMNS", "RHS",
                                 "BOUNDS", "ENDATA"]


def test_mps_names_are_unique_and_short():
    text = export_mps(single_constraint_model())
    columns = text.split("COLUMNS\n")[1].split("RHS\n")[0]
    names = {line[4:12].strip() for line in columns.splitlines() if "MARKER" not in line}
    assert names == {"pick_fir", "pick_fi1", "slack"}


def _six_bus_model():
    case = generate_case(6, 3, Profile(lines=8, injections=2, flows=5, unmeasured=1))
    inst, _ = mixed_instance(case.network, case.placement, case.costs, [1, 2])
    return build_masa_milp(inst)


def test_masa_model_exports_and_reimports(tmp_path):
    highspy = pytest.importorskip("highspy")
    model = _six_bus_model()
    path = tmp_path / "masa.mps"
    path.write_text(export_mps(model))
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("mip_rel_gap", 0.0)
    assert h.readModel(str(path)) == highspy.HighsStatus.kOk
    h.run()
    assert h.getInfo().objective_function_value == pytest.approx(solve(model).objective_value, abs=1e-6)
    assert h.getLp().num_col_ == len(model.variables)
    assert h.getLp().num_row_ == len(model.constraints)
