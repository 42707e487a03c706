import json
import shutil
import subprocess

import pytest

from gridshield.cli import main
from gridshield.grid import load_case

from conftest import CASES

FIVE = str(CASES / "5bus.json")
PMU7 = str(CASES / "pmu7.json")


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_inspect_five_bus(capsys):
    code, out, _ = run(capsys, "inspect", FIVE)
    doc = json.loads(out)
    assert code == 0
    assert doc["observable"] is True
    assert doc["bridging"] == ["e1"] and doc["p2"] == ["v1"]
    assert sorted(doc["emst"]) == ["e1", "e2", "e3", "e4"]


def test_inspect_dumps_jacobian_csv(capsys):
    code, out, _ = run(capsys, "inspect", FIVE, "--dump-jacobian", "--format", "csv")
    rows = out.strip().splitlines()
    assert code == 0
    assert len(rows) == 7          # header plus six meters
    assert rows[0] == "meter,v1,v2,v3,v4,v5"
    assert rows[1] == "r1,1.0,-1.0,0.0,0.0,0.0"


def test_attack_cut(capsys):
    code, out, _ = run(capsys, "attack", FIVE, "--targets", "v3")
    doc = json.loads(out)
    assert code == 0 and doc["kind"] == "cut"
    assert doc["cost"] == 2 and len(doc["cut"]) == 2
    assert doc["detected"] is False and doc["attack_residual"] <= 1e-9


def test_attack_p2_target_is_topology_free(capsys):
    code, out, _ = run(capsys, "attack", FIVE, "--targets", "v1")
    doc = json.loads(out)
    assert code == 0
    assert doc["topology_free"] == ["v1"]
    assert doc["injections"] == {"r1": -1.0}
    assert doc["state_shift"]["v1"] == -1.0


def test_defend_then_verify(capsys, tmp_path):
    plan = tmp_path / "plan.json"
    code, _, _ = run(capsys, "defend", FIVE, "--mode", "mixed", "--targets", "v1", "--out", str(plan))
    doc = json.loads(plan.read_text())
    assert code == 0
    assert doc["secured_meters"] == ["r1", "r2", "r4"] and doc["total_cost"] == 3
    code, out, _ = run(capsys, "verify", FIVE, "--plan", str(plan))
    assert code == 0 and json.loads(out)["passed"] is True


@pytest.mark.parametrize("mode", ["cti", "mixed", "tph"])
def test_every_mode_verifies(capsys, tmp_path, mode):
    plan = tmp_path / f"{mode}.json"
    assert run(capsys, "defend", FIVE, "--mode", mode, "--targets", "v3,v4", "--k", "3",
               "--out", str(plan))[0] == 0
    assert run(capsys, "verify", FIVE, "--plan", str(plan))[0] == 0


def test_tampered_plan_fails_verification(capsys, tmp_path):
    plan = tmp_path / "plan.json"
    run(capsys, "defend", PMU7, "--targets", "v7", "--out", str(plan))
    doc = json.loads(plan.read_text())
    assert doc["secured_pmus"] == ["v5"] and doc["secured_meters"] == ["r5"]
    doc["secured_pmus"] = []
    plan.write_text(json.dumps(doc))
    code, out, _ = run(capsys, "verify", PMU7, "--plan", str(plan))
    assert code == 1
    assert json.loads(out)["details"]["v7"].startswith("attackable")


def test_reruns_are_byte_identical(capsys, tmp_path):
    outputs = []
    for _ in range(2):
        out = tmp_path / "again.json"
        run(capsys, "defend", PMU7, "--mode", "tph", "--targets", "v3,v7", "--k", "5", "--seed", "3",
            "--out", str(out))
        outputs.append(out.read_bytes())
    assert outputs[0] == outputs[1]


@pytest.mark.parametrize("argv, code", [
    (["attack", FIVE, "--targets", "v5"], 2),            # the reference
    (["attack", FIVE, "--targets", "v9"], 2),
    (["attack", FIVE], 2),
    (["defend", FIVE, "--targets", "v1", "--k", "0"], 2),
    (["defend", FIVE, "--targets", "v1", "--mode", "cti"], 1),
    (["defend", FIVE, "--targets", "v1", "--mode", "bogus"], 2),
    (["inspect", "missing.json"], 2),
    (["gen-case", "--buses", "15"], 2),
    ([], 2),
])
def test_exit_codes(capsys, argv, code):
    assert run(capsys, *argv)[0] == code


def test_bad_case_reports_json_path(capsys, tmp_path):
    doc = json.loads((CASES / "5bus.json").read_text())
    doc["lines"][2]["reactance"] = 0
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    code, _, err = run(capsys, "inspect", str(bad))
    assert code == 2 and "$.lines[2].reactance" in err


def test_gen_case_is_seeded(capsys, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    run(capsys, "gen-case", "--buses", "14", "--seed", "5", "--covert-fraction", "0.2", "--out", str(a))
    run(capsys, "gen-case", "--buses", "14", "--seed", "5", "--covert-fraction", "0.2", "--out", str(b))
    assert a.read_bytes() == b.read_bytes()
    case = load_case(a.read_text())
    assert case.network.n_buses == 14 and len(case.network.lines) == 20
    assert case.costs.covert_candidates


def test_export_mps(capsys):
    code, out, _ = run(capsys, "export-mps", FIVE, "--targets", "v1")
    assert code == 0
    assert out.startswith("NAME          masa\nROWS\n") and out.endswith("ENDATA\n")
    assert "'INTORG'" in out


def test_csv_output(capsys):
    code, out, _ = run(capsys, "attack", FIVE, "--targets", "v3", "--format", "csv")
    lines = out.strip().splitlines()
    assert code == 0 and lines[0] == "field,value"
    assert "cost,2.0" in lines


@pytest.mark.skipif(shutil.which("gridshield") is None, reason="console script not installed")
def test_console_script():
    proc = subprocess.run(["gridshield", "inspect", FIVE], capture_output=True, text=True)
    assert proc.returncode == 0 and json.loads(proc.stdout)["p2"] == ["v1"]
