import io
import json

import numpy as np
import pytest

from ssprollout import cli
from ssprollout.certificates import Check
from ssprollout.io import load_instance, model_from_dict, read_vector, write_json
from ssprollout.scenarios import random_disturbance_ssp, random_proper_ssp


def run(*argv):
    out = io.StringIO()
    code = cli.main(list(argv), out)
    return code, out.getvalue()


def write(tmp_path, name, obj):
    p = tmp_path / name
    write_json(obj, p)
    return str(p)


@pytest.mark.parametrize("model", [random_proper_ssp(6, 2, seed=1),
                                   random_disturbance_ssp(6, 2, 3, seed=1)])
def test_model_round_trip(tmp_path, model):
    path = write(tmp_path, "m.json", model.to_dict())
    back = load_instance(path).model
    assert back.digest() == model.digest()
    assert model_from_dict(json.loads(json.dumps(model.to_dict()))).digest() == model.digest()


def test_read_vector_forms(tmp_path):
    assert read_vector(write(tmp_path, "a.json", [1, 2])).tolist() == [1.0, 2.0]
    assert read_vector(write(tmp_path, "b.json", {"values": [3]})).tolist() == [3.0]


def test_validate_ok(tmp_path):
    code, out = run("validate", write(tmp_path, "m.json", random_proper_ssp(5, 2, seed=0).to_dict()))
    assert code == 0 and out.strip() == "valid"


def test_validate_row_sum_violation(tmp_path):
    d = random_proper_ssp(4, 2, seed=0).to_dict()
    d["transitions"][0]["row"] = [[1, 0.5], [3, 0.4]]
    code, out = run("validate", write(tmp_path, "m.json", d))
    assert code == 1
    assert "row_sum" in out and "state=0" in out


def test_validate_missing_file(tmp_path):
    code, _ = run("validate", str(tmp_path / "nope.json"))
    assert code == 2


def test_validate_bad_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    assert run("validate", str(p))[0] == 2


def test_certify_sharpness_report():
    code, out = run("certify", "--scenario", "sharpness", "--M", "4", "--eps", "0.1")
    assert code == 0
    rep = json.loads(out)
    assert rep["gap"] == pytest.approx(0.2) and rep["bound_hitting"] == pytest.approx(1.0)
    assert rep["passed"] is True


def test_certify_table_output(tmp_path):
    path = tmp_path / "t.csv"
    code, _ = run("certify", "--scenario", "sharpness", "--format", "table", "--output", str(path))
    header, row = path.read_text().strip().splitlines()
    assert code == 0 and header.startswith("kind,start,proper")
    assert row.startswith("rollout,0,true")


def test_certify_improper_exit_3(tmp_path):
    d = {"n_states": 2, "terminal": 1, "actions": [["exit", "loop"], ["stop"]],
         "transitions": [{"state": 0, "action": 0, "row": [[1, 1.0]], "cost": 1.0},
                         {"state": 0, "action": 1, "row": [[0, 1.0]], "cost": 0.1}]}
    code, out = run("certify", "--model", write(tmp_path, "m.json", d),
                    "--value", write(tmp_path, "v.json", [-5.0, 0.0]))
    assert code == 3
    assert json.loads(out)["proper"] is False


def test_certify_failed_assumption_exit_1():
    code, out = run("certify", "--scenario", "sharpness", "--M", "4", "--N", "2")
    assert code == 1
    names = [c["name"] for c in json.loads(out)["checks"] if not c["passed"]]
    assert names == ["uniform_hitting_assumption"]


def test_bound_violation_maps_to_exit_4():
    assert cli._exit_code([Check("hitting_time_bound", False, 2.0, 1.0)]) == 4
    assert cli._exit_code([Check("uniform_hitting_assumption", False, 2.0, 1.0, "assumption")]) == 1
    assert cli._exit_code([Check("x", True, 0.0, 1.0)]) == 0


def test_certify_min_time():
    code, out = run("certify", "--scenario", "corridor", "--length", "20", "--min-time",
                    "--surrogate", "offset", "--noise", "0.02")
    assert code == 0
    assert json.loads(out)["multiplicative"] == pytest.approx(20 / 0.96)


def test_certify_min_time_factor_too_large():
    code, out = run("certify", "--scenario", "corridor", "--min-time", "--surrogate", "offset",
                    "--noise", "0.7")
    assert code == 1 and json.loads(out)["multiplicative"] is None


def test_certify_lyapunov_file(tmp_path):
    L = write(tmp_path, "L.json", [float(x) for x in range(20, -1, -1)])
    code, out = run("certify", "--scenario", "corridor", "--min-time", "--surrogate", "exact",
                    "--lyapunov", L, "--c", "1")
    assert code == 0
    assert json.loads(out)["additive_lyapunov"] == pytest.approx(20.0)


def test_certify_ce_gridworld():
    code, out = run("certify", "--scenario", "gridworld", "--penalty", "5", "--ce")
    rep = json.loads(out)
    assert code == 0 and rep["kind"] == "ce" and rep["delta"] > 0


def test_sweep_sharpness():
    code, out = run("sweep", "--M-list", "1,4", "--eps-list", "0.1")
    lines = out.strip().splitlines()
    assert code == 0 and len(lines) == 3
    assert lines[2].split(",")[5] == "0.4"


def test_sweep_random_is_byte_identical(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for p in (a, b):
        assert run("sweep", "--scenario", "random", "--seeds", "0-9", "--output", str(p))[0] == 0
    assert a.read_bytes() == b.read_bytes()


def test_simulate_cross_check():
    code, out = run("simulate", "--scenario", "sharpness", "--M", "10", "--reps", "500",
                    "--cross-check")
    rep = json.loads(out)
    assert code == 0 and rep["cross_check_passed"] and rep["exact_tau"] == 11.0


def test_simulate_estimate_only():
    code, out = run("simulate", "--scenario", "random", "--seed", "3", "--reps", "200",
                    "--policy", "optimal")
    rep = json.loads(out)
    assert code == 0 and rep["estimate"]["replications"] == 200


def test_parse_int_list():
    assert cli.parse_int_list("0-3,7") == [0, 1, 2, 3, 7]
    assert cli.parse_int_list("-2") == [-2]
