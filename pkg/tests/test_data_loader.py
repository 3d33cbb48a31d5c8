import csv
import json

import numpy as np
import pytest

import data_loader
from domain import Grid, GridPath
from domain.logger import FIELDNAMES, LOG_NAME, log_event


def test_path_csv_round_trip_with_f64(out_dir):
    grid = Grid.over(1.0, 8)
    path = GridPath.on(grid, np.sin(grid.times) / 3.0, label="p")
    target = data_loader.write_path_csv(path, out_dir / "p.csv", f64=True)
    assert (out_dir / "p.csv.f64").exists()
    back = data_loader.read_path_csv(target)
    assert np.array_equal(back.values, path.values)
    assert back.grid.n == 8 and back.label == "p"
    assert target.read_bytes().splitlines()[0] == b"t,value"


def test_read_path_csv_rejects_bad_files(out_dir):
    with pytest.raises(FileNotFoundError):
        data_loader.read_path_csv(out_dir / "none.csv")
    (out_dir / "cols.csv").write_text("t,y\n0,1\n1,2\n", encoding="utf-8")
    with pytest.raises(ValueError, match="missing columns"):
        data_loader.read_path_csv(out_dir / "cols.csv")
    (out_dir / "ragged.csv").write_text("t,value\n0,1\n0.3,2\n1,3\n", encoding="utf-8")
    with pytest.raises(ValueError, match="uniform"):
        data_loader.read_path_csv(out_dir / "ragged.csv")


def test_ensemble_csv_round_trip(out_dir):
    grid = Grid.over(2.0, 4)
    ens = np.random.default_rng(5).standard_normal((3, 5))
    target = data_loader.write_ensemble_csv(ens, grid, out_dir / "ens.csv")
    back, g = data_loader.read_ensemble_csv(target)
    assert np.array_equal(back, ens)
    assert g.n == 4 and g.dt == pytest.approx(0.5)
    with pytest.raises(ValueError):
        data_loader.write_ensemble_csv(ens[:, :4], grid, out_dir / "bad.csv")


def test_sidecar_is_sorted_json(out_dir):
    out = data_loader.write_sidecar(out_dir / "x.csv", {"b": 1, "a": [1, 2]})
    assert out.name == "x.csv.json"
    text = out.read_text(encoding="utf-8")
    assert text.index('"a"') < text.index('"b"')
    assert json.loads(text) == {"a": [1, 2], "b": 1}


def test_load_martingale_csv(out_dir):
    (out_dir / "E.csv").write_text("t,E\n0,0\n0.5,0.25\n1,1\n", encoding="utf-8")
    E = data_loader.load_martingale_csv(out_dir / "E.csv")
    assert E.kind == "piecewise_linear" and E.label == "E"
    assert float(E.E(0.75)) == pytest.approx(0.625)
    (out_dir / "down.csv").write_text("t,E\n0,1\n1,0\n", encoding="utf-8")
    with pytest.raises(ValueError):
        data_loader.load_martingale_csv(out_dir / "down.csv")


@pytest.mark.parametrize("expr,x,expected", [
    ("const:5", 0.3, 5.0),
    ("poly:x", 0.3, 0.3),
    ("poly:x^2", 0.5, 0.25),
    ("poly:3*x^1.5", 4.0, 24.0),
    ("sin:1", 0.25, 1.0),
    ("exp:1", 1.0, np.e),
])
def test_parse_function_expr(expr, x, expected):
    assert float(data_loader.parse_function_expr(expr)(np.array([x]))[0]) == pytest.approx(expected)


@pytest.mark.parametrize("expr", ["tan:1", "poly:y^2", "const:abc"])
def test_parse_function_expr_errors(expr):
    with pytest.raises(ValueError):
        data_loader.parse_function_expr(expr)


def test_grid_source(out_dir):
    grid = Grid.over(1.0, 4)
    f = data_loader.grid_source({"kind": "function", "expr": "poly:x"}, grid)
    assert np.allclose(f.values, grid.times) and f.label == "poly:x"
    data_loader.write_path_csv(f, out_dir / "f.csv")
    again = data_loader.grid_source({"kind": "path", "file": "f.csv"}, base_dir=out_dir)
    assert np.allclose(again.values, f.values)
    with pytest.raises(ValueError, match="needs a grid"):
        data_loader.grid_source({"kind": "function", "expr": "poly:x"})


def test_run_log_header_and_rows(tmp_path):
    log_dir = tmp_path / "logs"
    log_event({"run_id": "abc", "command": "check", "seed": 1, "exit_code": 5, "verdict": "divergent"},
              log_dir=str(log_dir))
    log_event({"run_id": "def", "command": "verify"}, log_dir=str(log_dir))
    with open(log_dir / LOG_NAME, newline="", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    assert list(rows[0]) == FIELDNAMES
    assert [r["run_id"] for r in rows] == ["abc", "def"]
    assert rows[0]["exit_code"] == "5"
    assert rows[1]["status"] == "ok"
    assert rows[0]["timestamp"].endswith("Z")
