"""
app.py
Experiment runner for Levy-driven Volterra processes.

    python app.py simulate  --config experiments/fbm.json --out outputs/fbm
    python app.py integrate --config experiments/gls.json --rs-check
    python app.py check     --config experiments/example_one.json
    python app.py verify    --suite frac-units

stdout carries the JSON payload only; diagnostics go to stderr.
Exit codes: 0 ok, 1 verify failure, 2 config/precondition, 3 numerical,
4 divergent fractional derivative, 5 divergent condition.
"""

import argparse
import hashlib
import json
import logging
import math
import sys
import time
import traceback
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

import data_loader
from config import settings, worker_count
from config_loader import ConfigError, canonical, load_experiment_config
from domain import DivergentDerivativeError, Grid, GridPath, NumericalError, PreconditionError
from domain.conditions import (
    IntegratorHypotheses,
    MartingaleDescriptor,
    check_D2,
    check_Dinf,
    check_Dp,
    check_wiener_subordinated,
)
from domain.fractional import gls_alpha_sweep, gls_integral, refine_linear, rs_integral
from domain.levy_noise import LevyTriplet, driver_from_config, sample_ensemble, subordinator_from_config
from domain.logger import log_event
from domain.suites import get_suite
from domain.volterra import build_ensemble, kernel_from_config

log = logging.getLogger("levy_volterra")

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_DIVERGENT_DERIVATIVE = 4
EXIT_DIVERGENT_CONDITION = 5

RS_REFINE = 8


# --------------------------------------------------------------------
# Payload helpers
# --------------------------------------------------------------------

def clean_nan(obj):
    """NaN/inf -> None, numpy scalars and arrays -> plain Python, recursively."""
    if isinstance(obj, dict):
        return {str(k): clean_nan(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean_nan(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean_nan(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        return None if (math.isnan(value) or math.isinf(value)) else value
    return obj


def dumps(payload: Dict[str, Any]) -> str:
    return json.dumps(clean_nan(payload), sort_keys=True, allow_nan=False)


def emit(payload: Dict[str, Any]) -> None:
    sys.stdout.write(dumps(payload) + "\n")
    sys.stdout.flush()


def fail(error: Exception, kind: str, **extra) -> None:
    sys.stderr.write(dumps({"ok": False, "error": str(error), "kind": kind, **extra}) + "\n")


def make_run_id(cfg: Dict[str, Any]) -> str:
    text = f"{canonical(cfg)}|seed={cfg.get('seed', 0)}"
    return hashlib.sha1(text.encode("utf-8")).hexdigest()[:12]


class Context:
    """Resolved run settings shared by the command handlers."""

    def __init__(self, cfg: Dict[str, Any]):
        output = cfg.get("output") or {}
        self.cfg = cfg
        self.run_id = make_run_id(cfg)
        self.seed = int(cfg.get("seed", 0))
        self.threads = worker_count(cfg.get("threads"))
        self.out_dir = Path(output.get("dir") or settings().out_dir)
        self.fmt = output.get("format", "csv")
        self.name = output.get("name") or cfg["command"]
        self.f64 = bool(output.get("f64", False))
        loaded_from = (cfg.get("meta") or {}).get("loaded_from")
        self.base_dir = Path(loaded_from).resolve().parent if loaded_from else Path.cwd()

    def target(self, suffix: str) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        return self.out_dir / f"{self.name}{suffix}"

    def write_records(self, rows: List[Dict[str, Any]], suffix: str) -> str:
        """Plot-ready table as CSV or JSON, by the configured format."""
        if self.fmt == "json":
            path = self.target(f"{suffix}.json")
            path.write_text(dumps({"rows": rows}) + "\n", encoding="utf-8")
        else:
            path = data_loader.write_table_csv(rows, self.target(f"{suffix}.csv"))
        return path.name


def _grid(table: Dict[str, Any]) -> Grid:
    return Grid.over(float(table.get("T", 1.0)), int(table["n"]))


# --------------------------------------------------------------------
# simulate
# --------------------------------------------------------------------

def cmd_simulate(ctx: Context) -> Tuple[int, str]:
    cfg = ctx.cfg
    grid = _grid(cfg["grid"])
    source, what = driver_from_config(cfg["driver"])
    n_paths = int(cfg["n_paths"])
    kernel_cfg = cfg.get("kernel")

    if kernel_cfg:
        if what == "subordinator":
            raise ConfigError("kernel needs a driver, not raw subordinator paths", ["kernel"])
        kernel = kernel_from_config(kernel_cfg)
        data, _ = build_ensemble(kernel, source, grid, ctx.seed, n_paths, threads=ctx.threads)
        kernel_meta = kernel.as_dict()
    else:
        data = sample_ensemble(source, grid, ctx.seed, n_paths, threads=ctx.threads, what=what)
        kernel_meta = None

    meta = {
        "command": "simulate",
        "run_id": ctx.run_id,
        "seed": ctx.seed,
        "driver": source.label,
        "what": what,
        "kernel": kernel_meta,
        "grid": {"t0": grid.t0, "dt": grid.dt, "n": grid.n},
        "n_paths": n_paths,
        "columns": "grid times",
    }
    files = []
    if ctx.fmt == "json":
        target = ctx.target(".json")
        target.write_text(dumps({**meta, "times": grid.times, "paths": data}) + "\n", encoding="utf-8")
        files.append(target.name)
    else:
        target = data_loader.write_ensemble_csv(data, grid, ctx.target(".csv"))
        files += [target.name, data_loader.write_sidecar(target, meta).name]
    if ctx.f64:
        first = GridPath.on(grid, data[0], label="path0")
        path_file = data_loader.write_path_csv(first, ctx.target(".path0.csv"), f64=True)
        files += [path_file.name, path_file.name + data_loader.F64_SUFFIX]

    log.info("SIMULATE | run=%s | paths=%d | n=%d | driver=%s | kernel=%s",
             ctx.run_id, n_paths, grid.n, source.label, kernel_meta)
    emit({"ok": True, "command": "simulate", "run_id": ctx.run_id, "shape": list(data.shape), "files": files})
    return EXIT_OK, "ok"


# --------------------------------------------------------------------
# integrate
# --------------------------------------------------------------------

def _integrand_pair(ctx: Context):
    cfg = ctx.cfg
    grid = _grid(cfg["grid"]) if cfg.get("grid") else None
    f_spec, g_spec = cfg["f"], cfg["g"]
    for spec in (f_spec, g_spec):
        if grid is None and spec["kind"] == "path":
            grid = data_loader.grid_source(spec, base_dir=ctx.base_dir).grid
    if grid is None:
        raise ConfigError("two function sources need a grid table", ["grid"])
    f = data_loader.grid_source(f_spec, grid, base_dir=ctx.base_dir)
    g = data_loader.grid_source(g_spec, grid, base_dir=ctx.base_dir)
    return f, g


def cmd_integrate(ctx: Context) -> Tuple[int, str]:
    cfg = ctx.cfg
    f, g = _integrand_pair(ctx)
    payload: Dict[str, Any] = {"ok": True, "command": "integrate", "run_id": ctx.run_id}

    if cfg.get("alphas"):
        alphas = [float(a) for a in cfg["alphas"]]
        sweep = gls_alpha_sweep(f, g, alphas)
        payload.update({"value": sweep.values[0], "alpha": alphas[0], "sweep": sweep.as_dict()})
        verdict = "band_ok" if sweep.band_ok else "band_exceeded"
    else:
        alpha = float(cfg.get("alpha", 0.5))
        result = gls_integral(f, g, alpha, drop_recentering=bool(cfg.get("drop_recentering", False)))
        payload.update({"value": result.value, "alpha": alpha, "diagnostics": result.as_dict()})
        verdict = "ok"

    if cfg.get("rs_check"):
        rs = rs_integral(refine_linear(f, RS_REFINE), refine_linear(g, RS_REFINE), mode="midpoint")
        diff = abs(payload["value"] - rs)
        payload["rs_check"] = {"rs": rs, "abs_diff": diff, "refine": RS_REFINE,
                               "within": diff <= 1e-2 * (1.0 + abs(rs))}

    log.info("INTEGRATE | run=%s | f=%s | g=%s | value=%.10g", ctx.run_id, f.label, g.label, payload["value"])
    emit(payload)
    return EXIT_OK, verdict


# --------------------------------------------------------------------
# check
# --------------------------------------------------------------------

def _noise(ctx: Context, spec: Optional[Dict[str, Any]]):
    if not spec:
        return LevyTriplet.brownian(1.0)
    if spec["kind"] != "martingale":
        source, _ = driver_from_config(spec)
        return source if isinstance(source, LevyTriplet) else LevyTriplet.subordinated(source)
    preset = spec["preset"]
    if preset == "linear":
        return MartingaleDescriptor.linear(float(spec.get("sigma2", 1.0)))
    if preset == "piecewise_linear":
        if "knots" not in spec:
            raise ConfigError("piecewise_linear E_t needs knots", ["noise.knots"])
        return MartingaleDescriptor.piecewise_linear(spec["knots"])
    if "file" not in spec:
        raise ConfigError("csv E_t needs a file", ["noise.file"])
    file = Path(spec["file"])
    return data_loader.load_martingale_csv(file if file.is_absolute() else ctx.base_dir / file)


def _p(value: Any) -> float:
    if isinstance(value, str):
        if value.strip().lower() in ("inf", "infinity"):
            return math.inf
        raise ConfigError(f"p: expected a number or 'inf', got {value!r}", ["p"])
    return float(value)


def cmd_check(ctx: Context) -> Tuple[int, str]:
    cfg = ctx.cfg
    condition = cfg["condition"]
    kernel = kernel_from_config(cfg["kernel"])
    alpha = float(cfg["alpha"])
    T, n = float(cfg.get("T", 1.0)), cfg.get("n")

    if condition == "wiener_subordinated":
        if "subordinator" not in cfg:
            raise ConfigError("wiener_subordinated needs a subordinator table", ["subordinator"])
        report = check_wiener_subordinated(subordinator_from_config(cfg["subordinator"]), kernel,
                                           _p(cfg.get("p", 2.0)), alpha, T, n)
    elif condition == "Dinf":
        missing = [k for k in ("beta", "rho") if k not in cfg]
        if missing:
            raise ConfigError(f"Dinf needs {missing}", missing)
        h = IntegratorHypotheses(math.inf, alpha, _noise(ctx, cfg.get("noise")), kernel, T, n)
        report = check_Dinf(h, float(cfg["beta"]), float(cfg["rho"]), fast_path=bool(cfg.get("fast_path", True)))
    else:
        p = 2.0 if condition == "D2" else _p(cfg.get("p", 2.0))
        h = IntegratorHypotheses(p, alpha, _noise(ctx, cfg.get("noise")), kernel, T, n)
        report = check_D2(h) if condition == "D2" else check_Dp(h, enforce=bool(cfg.get("enforce", True)))

    rows = [{"entry": e.name, **point} for e in report.entries for point in e.trace]
    files = [ctx.write_records(rows, "_trace")] if rows else []
    payload = {"ok": True, "command": "check", "run_id": ctx.run_id, "report": report.as_dict(), "files": files}
    log.info("CHECK | run=%s | condition=%s | kernel=%s | verdict=%s", ctx.run_id, condition, kernel.label,
             report.verdict)
    emit(payload)
    if report.verdict:
        return EXIT_OK, "finite"
    divergent = [e.name for e in report.entries if not e.finite]
    fail(RuntimeError(f"divergent entries: {divergent}"), "divergent_condition", entries=divergent)
    return EXIT_DIVERGENT_CONDITION, "divergent"


# --------------------------------------------------------------------
# verify
# --------------------------------------------------------------------

def cmd_verify(ctx: Context) -> Tuple[int, str]:
    cfg = ctx.cfg
    suite = get_suite(cfg["suite"])
    result = suite.run(seed=ctx.seed, threads=ctx.threads, n_paths=cfg.get("n_paths"), **(cfg.get("options") or {}))
    rows = [{"criterion": c.name, "passed": c.passed} for c in result.criteria]
    files = [ctx.write_records(rows, "_criteria")]
    emit({"ok": True, "command": "verify", "run_id": ctx.run_id, **result.as_dict(), "files": files})
    if result.passed:
        return EXIT_OK, "pass"
    fail(RuntimeError(f"suite {result.suite} failed: {result.failing}"), "verify_failed", failing=result.failing)
    return EXIT_VERIFY_FAILED, "fail"


COMMANDS: Dict[str, Callable[[Context], Tuple[int, str]]] = {
    "simulate": cmd_simulate,
    "integrate": cmd_integrate,
    "check": cmd_check,
    "verify": cmd_verify,
}


# --------------------------------------------------------------------
# Entry point
# --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config (JSON); falls back to LEVY_CONFIG_PATH")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--threads", type=int, help="worker thread cap")
    common.add_argument("--format", choices=("csv", "json"), help="file format for tables and ensembles")
    common.add_argument("--verbose", action="store_true", help="debug logging on stderr")

    parser = argparse.ArgumentParser(prog="app.py", description="Levy-driven Volterra experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="sample drivers or Volterra paths")
    integrate = sub.add_parser("integrate", parents=[common], help="generalized Lebesgue-Stieltjes integral")
    integrate.add_argument("--rs-check", action="store_true", help="compare with a Riemann-Stieltjes sum")
    sub.add_parser("check", parents=[common], help="integrator condition checks")
    verify = sub.add_parser("verify", parents=[common], help="run a verification suite")
    verify.add_argument("--suite", help="suite name (overrides the config)")
    verify.add_argument("--n-paths", type=int, help="Monte Carlo paths (overrides the suite default)")
    return parser


def configure_logging(verbose: bool) -> None:
    level = logging.DEBUG if verbose else getattr(logging, settings().log_level.upper(), logging.INFO)
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    root.addHandler(handler)
    root.setLevel(level)


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    out = {"seed": args.seed, "threads": args.threads, "output.dir": args.out, "output.format": args.format}
    if args.command == "integrate" and args.rs_check:
        out["rs_check"] = True
    if args.command == "verify":
        out["suite"] = args.suite
        out["n_paths"] = args.n_paths
    return out


def load_for(args: argparse.Namespace) -> Dict[str, Any]:
    base = None
    if args.command == "verify" and args.suite and not args.config:
        base = {"command": "verify"}
    return load_experiment_config(args.config, _overrides(args), base=base, command=args.command)


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    configure_logging(args.verbose)

    t0 = time.perf_counter()
    cfg: Dict[str, Any] = {}
    run_id, seed, out_dir = None, args.seed, ""
    code, verdict, status = EXIT_OK, "", "ok"
    try:
        cfg = load_for(args)
        ctx = Context(cfg)
        run_id, seed, out_dir = ctx.run_id, ctx.seed, str(ctx.out_dir)
        log.info("RUN | command=%s | run=%s | seed=%s | threads=%d", args.command, run_id, seed, ctx.threads)
        code, verdict = COMMANDS[args.command](ctx)
    except ConfigError as e:
        code, status = EXIT_CONFIG, "config_error"
        fail(e, "config", problems=e.problems)
    except PreconditionError as e:
        code, status = EXIT_CONFIG, "precondition"
        fail(e, "precondition", flag=e.flag)
    except DivergentDerivativeError as e:
        code, status = EXIT_DIVERGENT_DERIVATIVE, "divergent_derivative"
        fail(e, "divergent_derivative", factor=e.factor, norms=e.norms)
    except NumericalError as e:
        code, status = EXIT_NUMERICAL, "numerical_error"
        fail(e, "numerical", partial=e.partial, trace=e.trace)
    except (ValueError, FileNotFoundError, KeyError) as e:
        code, status = EXIT_CONFIG, "invalid_argument"
        fail(e, "value")
    except Exception as e:
        traceback.print_exc()
        code, status = EXIT_NUMERICAL, "internal_error"
        fail(e, "internal")
    if code in (EXIT_VERIFY_FAILED, EXIT_DIVERGENT_CONDITION):
        status = verdict

    elapsed_ms = round((time.perf_counter() - t0) * 1000.0, 2)
    log.info("RUN | command=%s | run=%s | exit=%d | verdict=%s | elapsed_ms=%s",
             args.command, run_id, code, verdict, elapsed_ms)
    if settings().run_log:
        log_dir = settings().log_dir or str(Path(out_dir or settings().out_dir) / "logs")
        log_event({"run_id": run_id, "command": args.command, "seed": seed, "status": status,
                   "exit_code": code, "verdict": verdict, "elapsed_ms": elapsed_ms, "out_dir": out_dir},
                  log_dir=log_dir)
    return code


if __name__ == "__main__":
    sys.exit(main())
