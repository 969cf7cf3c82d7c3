import copy
import json
from pathlib import Path

import numpy as np
import pytest

from volgame import cli
from volgame.config import config_from_dict, load_config
from volgame.errors import ParseError, ValidationError

CONFIGS = Path(__file__).parent.parent / "scripts" / "configs"


def c(v):
    return {"family": "constant", "value": v}


LQ = {
    "schema_version": 1,
    "problem_kind": "lq",
    "grid": {"t0": 0.0, "t1": 1.0, "n": 17, "rule": "trapezoid"},
    "kernels": {"y0": c([[1.0]]), "A": c([[-0.5]]), "B": c([[1.0]]), "C": c([[0.5]]),
                "P1": c([[1.0]]), "Q1": c([[1.0]]), "R1": c([[-2.0]])},
    "problem": {"y0": "y0", "A": "A", "B": "B", "C": "C", "P1": "P1", "Q1": "Q1", "R1": "R1"},
    "solver": {"seed": 0},
    "output": {"directory": "out"},
}


def write(tmp_path, d, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(d))
    return p


def run_cli(*argv):
    return cli.main([str(a) for a in argv])


def test_minimal_config_loads(tmp_path):
    cfg = load_config(write(tmp_path, LQ))
    assert cfg.problem_kind == "lq" and cfg.grid.n == 17


def test_config_round_trip(tmp_path):
    for path in sorted(CONFIGS.glob("*.json")):
        cfg = load_config(path)
        again = load_config(write(tmp_path, json.loads(cfg.to_json()), path.name))
        assert again == cfg
        assert config_from_dict(cfg.to_dict()) == cfg


def test_undefined_kernel_named(tmp_path):
    d = copy.deepcopy(LQ)
    d["problem"]["P0"] = "P9"
    with pytest.raises(ValidationError, match="P9"):
        load_config(write(tmp_path, d))
    assert run_cli("lq", "solve", "--config", write(tmp_path, d), "--out", tmp_path / "o") == cli.EXIT_CONFIG


def test_table_grid_mismatch(tmp_path):
    d = copy.deepcopy(LQ)
    d["grid"]["n"] = 33
    d["kernels"]["P1"] = {"family": "table", "values": np.ones((65, 1, 1)).tolist()}
    with pytest.raises(ValidationError, match="grid mismatch"):
        load_config(write(tmp_path, d))


def test_parse_error_has_position(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "problem_kind": "lq",\n  oops\n}')
    with pytest.raises(ParseError) as exc:
        load_config(p)
    assert "line 3" in str(exc.value)
    assert run_cli("lq", "solve", "--config", p) == cli.EXIT_CONFIG


def test_missing_config_file(tmp_path):
    assert run_cli("lq", "solve", "--config", tmp_path / "nope.json") == cli.EXIT_CONFIG


def test_zero_lq_problem(tmp_path):
    d = copy.deepcopy(LQ)
    d["kernels"]["y0"] = c([[0.0]])
    cfg_path = write(tmp_path, d)
    out = tmp_path / "zero"
    assert run_cli("lq", "solve", "--config", cfg_path, "--out", out) == cli.EXIT_OK
    tr = cli.read_trajectory(out / cli.CSV_NAME)
    assert np.all(tr["u"] == 0) and np.all(tr["v"] == 0)
    result, code = cli.verify(load_config(cfg_path), out)
    assert code == cli.EXIT_OK
    assert all(ch["magnitude"] == 0.0 for ch in result["checks"].values())


def test_uncertified_exit_code(tmp_path):
    d = copy.deepcopy(LQ)
    d["kernels"]["Q1"] = c([[-1.0]])
    out = tmp_path / "unc"
    assert run_cli("lq", "solve", "--config", write(tmp_path, d), "--out", out) == cli.EXIT_CERT
    rep = json.loads((out / cli.REPORT_NAME).read_text())
    assert rep["certification"]["jointly_pd_11"] is False and rep["exit_status"] == 2
    assert run_cli("lq", "solve", "--config", write(tmp_path, d), "--out", out,
                   "--override-certification") == cli.EXIT_OK


def test_bracket_exit_code(tmp_path):
    d = json.loads((CONFIGS / "pursuit_planar.json").read_text())
    d["grid"]["t1_bracket"] = [0.2, 0.5]
    d["grid"]["n"] = 17
    out = tmp_path / "br"
    assert run_cli("pursuit", "solve", "--config", write(tmp_path, d), "--out", out) == cli.EXIT_BRACKET
    rep = json.loads((out / cli.REPORT_NAME).read_text())
    assert set(rep["bracket"]) == {"t_lo", "t_hi"}
    assert rep["bracket"]["t_lo"]["sign"] == rep["bracket"]["t_hi"]["sign"] != 0


def test_nonconvergence_exit_code(tmp_path):
    d = json.loads((CONFIGS / "lqc_cubic.json").read_text())
    d["solver"] = {"max_iter": 1}
    assert run_cli("lqc", "solve", "--config", write(tmp_path, d), "--out", tmp_path / "nc") == cli.EXIT_CONVERGENCE


def test_command_kind_mismatch(tmp_path):
    assert run_cli("pursuit", "solve", "--config", write(tmp_path, LQ)) == cli.EXIT_CONFIG


@pytest.mark.parametrize("name,cmd", [
    ("lq_scalar", ["lq", "solve"]),
    ("quadform_small", ["quadform", "saddle"]),
    ("quadform_small", ["quadform", "check"]),
    ("lqc_cubic", ["lqc", "solve", "--side", "upper"]),
])
def test_run_then_verify(tmp_path, name, cmd):
    path = CONFIGS / f"{name}.json"
    out = tmp_path / name
    assert run_cli(*cmd, "--config", path, "--out", out) == cli.EXIT_OK
    assert run_cli("verify", "--config", path, "--out", out) == cli.EXIT_OK


def test_pursuit_run_then_verify(tmp_path):
    d = json.loads((CONFIGS / "pursuit_planar.json").read_text())
    d["grid"]["n"] = 17
    path = write(tmp_path, d)
    out = tmp_path / "pur"
    assert run_cli("pursuit", "solve", "--config", path, "--out", out) == cli.EXIT_OK
    result, code = cli.verify(load_config(path), out)
    assert code == cli.EXIT_OK and "capture" in result["checks"]


def test_perturbed_trajectory_fails_verify(tmp_path):
    path = CONFIGS / "lq_scalar.json"
    out = tmp_path / "pert"
    assert run_cli("lq", "solve", "--config", path, "--out", out) == cli.EXIT_OK
    tr = cli.read_trajectory(out / cli.CSV_NAME)
    cols = {"y": tr["y"], "u": tr["u"] + 1e-2, "v": tr["v"]}
    cli.write_trajectory(out / cli.CSV_NAME, tr["t"], cols)
    result, code = cli.verify(load_config(path), out)
    assert code == cli.EXIT_VERIFY
    st = result["checks"]["stationarity"]
    assert not st["pass"] and st["magnitude"] > 1e-3


def test_verify_without_artifacts(tmp_path):
    assert run_cli("verify", "--config", CONFIGS / "lq_scalar.json", "--out", tmp_path / "empty") == cli.EXIT_CONFIG


def test_csv_header_and_precision(tmp_path):
    out = tmp_path / "hdr"
    run_cli("lqc", "solve", "--config", CONFIGS / "lqc_cubic.json", "--out", out)
    lines = (out / cli.CSV_NAME).read_text().splitlines()
    header = lines[0].split(",")
    assert header[0] == "t" and header[1].startswith("y_") and header[-1].startswith("psi_")
    tr = cli.read_trajectory(out / cli.CSV_NAME)
    cli.write_trajectory(out / "again.csv", tr["t"], {k: tr[k] for k in ("y", "u", "v", "psi")})
    assert (out / "again.csv").read_text() == (out / cli.CSV_NAME).read_text()


def test_deterministic_artifacts(tmp_path):
    for name, cmd in (("lq_scalar", ["lq", "solve"]), ("lqc_cubic", ["lqc", "solve"])):
        a, b = tmp_path / f"{name}_a", tmp_path / f"{name}_b"
        run_cli(*cmd, "--config", CONFIGS / f"{name}.json", "--out", a, "--seed", 7)
        run_cli(*cmd, "--config", CONFIGS / f"{name}.json", "--out", b, "--seed", 7)
        assert (a / cli.CSV_NAME).read_bytes() == (b / cli.CSV_NAME).read_bytes()
