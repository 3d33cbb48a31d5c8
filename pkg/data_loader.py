"""
data_loader.py
Path, ensemble and E_t files for the experiment runner.

CSV is written with a header row, UTF-8, LF line endings and "%.17g"
floats, so a value read back is the value written.
"""

import json
import re
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Tuple, Union

import numpy as np
import pandas as pd

from domain import Grid, GridPath
from domain.conditions import MartingaleDescriptor

# ---------------------------------------------------------------------------
# Paths
# ---------------------------------------------------------------------------

FLOAT_FORMAT = "%.17g"
F64_SUFFIX = ".f64"
SIDECAR_SUFFIX = ".json"

PathLike = Union[str, Path]


def _write_frame(df: pd.DataFrame, target: PathLike) -> Path:
    target = Path(target)
    target.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(target, index=False, float_format=FLOAT_FORMAT, lineterminator="\n", encoding="utf-8")
    return target


def _uniform_grid(times: np.ndarray, source: PathLike) -> Grid:
    if times.size < 2:
        raise ValueError(f"{source}: need at least 2 time points, got {times.size}")
    dt = (times[-1] - times[0]) / (times.size - 1)
    if not dt > 0 or not np.allclose(np.diff(times), dt, rtol=1e-9, atol=1e-12):
        raise ValueError(f"{source}: time column is not a uniform increasing grid")
    return Grid(float(times[0]), float(dt), int(times.size - 1))


# ---------------------------------------------------------------------------
# Single paths ("t,value")
# ---------------------------------------------------------------------------

def write_path_csv(path: GridPath, target: PathLike, f64: bool = False) -> Path:
    """Write t,value rows; with f64 also a little-endian float64 copy of the values."""
    out = _write_frame(pd.DataFrame({"t": path.times, "value": path.values}), target)
    if f64:
        np.asarray(path.values, dtype="<f8").tofile(str(out) + F64_SUFFIX)
    return out


def read_path_csv(source: PathLike, label: Optional[str] = None) -> GridPath:
    """Read a t,value file; values come from the .f64 sidecar when one sits next to it."""
    source = Path(source)
    if not source.exists():
        raise FileNotFoundError(f"Path file not found at: {source}")
    df = pd.read_csv(source, float_precision="round_trip")
    missing = [c for c in ("t", "value") if c not in df.columns]
    if missing:
        raise ValueError(f"{source}: missing columns {missing}")
    grid = _uniform_grid(df["t"].to_numpy(dtype=float), source)
    values = df["value"].to_numpy(dtype=float)
    sidecar = Path(str(source) + F64_SUFFIX)
    if sidecar.exists():
        exact = np.fromfile(sidecar, dtype="<f8")
        if exact.size != values.size:
            raise ValueError(f"{sidecar}: {exact.size} values, CSV has {values.size}")
        values = exact
    return GridPath.on(grid, values, label=label or source.stem)


# ---------------------------------------------------------------------------
# Ensembles (rows = paths, columns = grid times)
# ---------------------------------------------------------------------------

def write_ensemble_csv(ensemble: np.ndarray, grid: Grid, target: PathLike) -> Path:
    ens = np.atleast_2d(np.asarray(ensemble, dtype=float))
    if ens.shape[1] != grid.n + 1:
        raise ValueError(f"ensemble has {ens.shape[1]} columns, grid has {grid.n + 1} points")
    columns = [format(t, ".17g") for t in grid.times]
    return _write_frame(pd.DataFrame(ens, columns=columns), target)


def read_ensemble_csv(source: PathLike) -> Tuple[np.ndarray, Grid]:
    source = Path(source)
    if not source.exists():
        raise FileNotFoundError(f"Ensemble file not found at: {source}")
    df = pd.read_csv(source, float_precision="round_trip")
    grid = _uniform_grid(np.array([float(c) for c in df.columns]), source)
    return df.to_numpy(dtype=float), grid


def write_sidecar(target: PathLike, meta: Dict[str, Any]) -> Path:
    """JSON description next to a data file: <file>.json, keys sorted."""
    out = Path(str(target) + SIDECAR_SUFFIX)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8", newline="\n") as f:
        json.dump(meta, f, sort_keys=True, indent=2, allow_nan=False)
        f.write("\n")
    return out


def write_table_csv(rows, target: PathLike) -> Path:
    """Plot-ready table from a list of flat records."""
    return _write_frame(pd.DataFrame(list(rows)), target)


# ---------------------------------------------------------------------------
# E_t files ("t,E")
# ---------------------------------------------------------------------------

def load_martingale_csv(source: PathLike, continuous: bool = True) -> MartingaleDescriptor:
    """Piecewise-linear E_t from a t,E table (nondecreasing E)."""
    source = Path(source)
    if not source.exists():
        raise FileNotFoundError(f"E_t file not found at: {source}")
    df = pd.read_csv(source, float_precision="round_trip")
    missing = [c for c in ("t", "E") if c not in df.columns]
    if missing:
        raise ValueError(f"{source}: missing columns {missing}")
    knots = list(zip(df["t"].astype(float), df["E"].astype(float)))
    return MartingaleDescriptor.piecewise_linear(knots, label=source.stem, continuous=continuous)


# ---------------------------------------------------------------------------
# Grid functions from expressions
# ---------------------------------------------------------------------------

_POLY = re.compile(r"^(?:(?P<c>[-+]?[0-9.eE+-]+)\*)?x(?:\^(?P<k>[0-9.]+))?$")


def parse_function_expr(expr: str) -> Callable[[np.ndarray], np.ndarray]:
    """
    "const:5", "poly:x", "poly:x^2", "poly:3*x^1.5", "sin:2" (sin(2 pi x)),
    "exp:1" (exp(x)).
    """
    kind, _, arg = expr.partition(":")
    kind, arg = kind.strip(), arg.strip()
    try:
        if kind == "const":
            c = float(arg)
            return lambda x: np.full_like(np.asarray(x, dtype=float), c)
        if kind == "poly":
            m = _POLY.match(arg.replace(" ", ""))
            if not m:
                raise ValueError(arg)
            c = float(m.group("c")) if m.group("c") else 1.0
            k = float(m.group("k")) if m.group("k") else 1.0
            return lambda x: c * np.asarray(x, dtype=float) ** k
        if kind == "sin":
            w = float(arg or 1.0)
            return lambda x: np.sin(2.0 * np.pi * w * np.asarray(x, dtype=float))
        if kind == "exp":
            r = float(arg or 1.0)
            return lambda x: np.exp(r * np.asarray(x, dtype=float))
    except ValueError:
        raise ValueError(f"Cannot parse function expression: {expr}")
    raise ValueError(f"Unknown function kind: {kind}")


def grid_source(spec: Dict[str, Any], grid: Optional[Grid] = None, base_dir: Optional[PathLike] = None) -> GridPath:
    """GridPath from {"kind": "function", "expr": ...} on grid, or {"kind": "path", "file": ...}."""
    if spec["kind"] == "path":
        file = Path(spec["file"])
        if base_dir is not None and not file.is_absolute():
            file = Path(base_dir) / file
        return read_path_csv(file)
    if grid is None:
        raise ValueError(f"function source {spec['expr']} needs a grid")
    fn = parse_function_expr(spec["expr"])
    return GridPath.on(grid, np.asarray(fn(grid.times), dtype=float), label=spec["expr"])
