import csv
import json
import logging

import pytest

import app
from config import settings


@pytest.fixture(autouse=True)
def restore_root_handlers():
    root = logging.getLogger()
    saved, level = list(root.handlers), root.level
    yield
    root.handlers[:] = saved
    root.setLevel(level)


def run(capsys, *argv):
    code = app.main(list(argv))
    out, err = capsys.readouterr()
    lines = [line for line in out.splitlines() if line.startswith("{")]
    payload = json.loads(lines[-1]) if lines else None
    errors = [json.loads(line) for line in err.splitlines() if line.startswith("{")]
    return code, payload, errors


# --- simulate ----------------------------------------------------------------------

def test_simulate_writes_ensemble_sidecar_and_f64(capsys, payload, tmp_path):
    code, out, _ = run(capsys, "simulate", "--config", payload("simulate_fbm.json"), "--out", str(tmp_path))
    assert code == 0
    assert out["shape"] == [5, 65]
    assert out["files"] == ["fbm.csv", "fbm.csv.json", "fbm.path0.csv", "fbm.path0.csv.f64"]
    for name in out["files"]:
        assert (tmp_path / name).exists()
    meta = json.loads((tmp_path / "fbm.csv.json").read_text(encoding="utf-8"))
    assert meta["run_id"] == out["run_id"]
    assert meta["kernel"] == {"family": "molchan_golosov", "H": 0.7}


def test_simulate_json_format(capsys, payload, tmp_path):
    code, out, _ = run(capsys, "simulate", "--config", payload("simulate_gamma.json"), "--out", str(tmp_path))
    assert code == 0
    body = json.loads((tmp_path / "gamma_subordinated.json").read_text(encoding="utf-8"))
    assert len(body["paths"]) == 4 and len(body["times"]) == 33
    assert body["kernel"] is None


# --- integrate ---------------------------------------------------------------------

def test_integrate_smooth_pair(capsys, payload, tmp_path):
    code, out, _ = run(capsys, "integrate", "--config", payload("integrate_poly.json"), "--out", str(tmp_path),
                       "--rs-check")
    assert code == 0
    assert out["value"] == pytest.approx(2.0 / 3.0, rel=5e-3)
    assert out["rs_check"]["within"]


def test_integrate_alpha_sweep(capsys, payload, tmp_path):
    code, out, _ = run(capsys, "integrate", "--config", payload("integrate_sweep.json"), "--out", str(tmp_path))
    assert code == 0
    assert out["sweep"]["alphas"] == [0.3, 0.5, 0.7]
    assert out["alpha"] == 0.3


def test_integrate_divergent_derivative_exit_code(capsys, tmp_path):
    rows = ["t,value"] + [f"{k / 64!r},{'inf' if k == 10 else repr(k / 64)}" for k in range(65)]
    (tmp_path / "f.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    cfg = {"command": "integrate", "f": {"kind": "path", "file": "f.csv"},
           "g": {"kind": "function", "expr": "poly:x"}, "alpha": 0.5}
    (tmp_path / "div.json").write_text(json.dumps(cfg), encoding="utf-8")
    code, _, errors = run(capsys, "integrate", "--config", str(tmp_path / "div.json"), "--out", str(tmp_path))
    assert code == 4
    assert errors[-1]["kind"] == "divergent_derivative"
    assert errors[-1]["factor"] == "D^alpha f"


# --- check -------------------------------------------------------------------------

def test_check_example_one_is_finite(capsys, payload, tmp_path):
    code, out, _ = run(capsys, "check", "--config", payload("check_example_one.json"), "--out", str(tmp_path))
    assert code == 0
    assert out["report"]["verdict"] is True
    assert out["report"]["condition"] == "Dp"
    assert out["files"] == ["check_trace.csv"]
    with open(tmp_path / "check_trace.csv", newline="", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    assert {r["entry"] for r in rows} == {"D2_1", "D2_2", "D2_3", "D2_4"}


def test_check_divergent_condition_exit_code(capsys, payload, tmp_path):
    code, out, errors = run(capsys, "check", "--config", payload("check_dinf_divergent.json"),
                            "--out", str(tmp_path))
    assert code == 5
    assert out["report"]["verdict"] is False
    assert errors[-1]["kind"] == "divergent_condition"
    assert "Dinf_1" in errors[-1]["entries"]


def test_check_precondition_exit_code(capsys, payload, tmp_path):
    code, out, errors = run(capsys, "check", "--config", payload("check_precondition.json"), "--out", str(tmp_path))
    assert code == 2
    assert out is None
    assert errors[-1] == {"ok": False, "error": errors[-1]["error"], "kind": "precondition", "flag": "a_zero"}


# --- verify ------------------------------------------------------------------------

def test_verify_from_config(capsys, payload, tmp_path):
    code, out, _ = run(capsys, "verify", "--config", payload("verify_frac_units.json"), "--out", str(tmp_path))
    assert code == 0
    assert out["passed"] and out["suite"] == "frac-units"
    assert out["files"] == ["frac_units_criteria.csv"]


def test_verify_suite_flag_without_config(capsys, tmp_path):
    code, out, _ = run(capsys, "verify", "--suite", "frac-units", "--out", str(tmp_path), "--format", "json")
    assert code == 0
    assert out["files"] == ["verify_criteria.json"]


# --- errors and bookkeeping -------------------------------------------------------

def test_missing_config_exit_code(capsys):
    code, out, errors = run(capsys, "check")
    assert code == 2
    assert out is None
    assert errors[-1]["kind"] == "config"


def test_invalid_config_lists_problems(capsys, tmp_path):
    (tmp_path / "bad.json").write_text(json.dumps({"command": "check", "alpha": "high"}), encoding="utf-8")
    code, _, errors = run(capsys, "check", "--config", str(tmp_path / "bad.json"))
    assert code == 2
    assert any("alpha" in p for p in errors[-1]["problems"])


def test_bad_arguments_exit_code(capsys):
    assert app.main(["bogus"]) == 2
    capsys.readouterr()


def test_run_id_ignores_output_dir_but_not_seed(capsys, payload, tmp_path):
    args = ("integrate", "--config", payload("integrate_poly.json"))
    _, a, _ = run(capsys, *args, "--out", str(tmp_path / "a"))
    _, b, _ = run(capsys, *args, "--out", str(tmp_path / "b"))
    _, c, _ = run(capsys, *args, "--out", str(tmp_path / "c"), "--seed", "5")
    assert a["run_id"] == b["run_id"] != c["run_id"]
    assert len(a["run_id"]) == 12


def test_run_log_row_per_command(capsys, payload, tmp_path, monkeypatch):
    monkeypatch.setenv("LEVY_RUN_LOG", "1")
    settings.cache_clear()
    run(capsys, "check", "--config", payload("check_precondition.json"), "--out", str(tmp_path))
    with open(tmp_path / "logs" / "run_log.csv", newline="", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 1
    assert rows[0]["command"] == "check"
    assert rows[0]["status"] == "precondition"
    assert rows[0]["exit_code"] == "2"


def test_run_log_stays_under_out_dir(capsys, payload, tmp_path, monkeypatch):
    work = tmp_path / "cwd"
    work.mkdir()
    monkeypatch.chdir(work)
    monkeypatch.setenv("LEVY_RUN_LOG", "1")
    monkeypatch.delenv("LEVY_LOG_DIR", raising=False)
    settings.cache_clear()
    out = tmp_path / "out"
    code, _, _ = run(capsys, "integrate", "--config", payload("integrate_poly.json"), "--out", str(out))
    assert code == 0
    assert list(work.iterdir()) == []
    assert sorted(p.name for p in tmp_path.iterdir()) == ["cwd", "out"]
    assert (out / "logs" / "run_log.csv").exists()


def test_simulate_reruns_are_byte_identical(capsys, payload, tmp_path):
    args = ("simulate", "--config", payload("simulate_fbm.json"), "--seed", "11")
    run(capsys, *args, "--out", str(tmp_path / "a"))
    run(capsys, *args, "--out", str(tmp_path / "b"), "--threads", "3")
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert names == sorted(p.name for p in (tmp_path / "b").iterdir())
    for name in names:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
