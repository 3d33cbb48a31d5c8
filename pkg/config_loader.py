"""
config_loader.py
Reads an experiment configuration (JSON, nested tables) and validates it
against the schema of its command before anything runs.
"""

import copy
import json
import os
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple

from config import settings
from domain.suites import SUITES

COMMANDS = ("simulate", "integrate", "check", "verify")
FORMATS = ("csv", "json")
CONDITIONS = ("D2", "Dp", "Dinf", "wiener_subordinated")


class ConfigError(ValueError):
    """Invalid or incomplete experiment configuration."""

    def __init__(self, message: str, problems: Optional[List[str]] = None):
        super().__init__(message)
        self.problems = problems or []


# --------------------------------------------------------------------
# Schema
# --------------------------------------------------------------------

NUMBER = (int, float)


@dataclass(frozen=True)
class Field:
    types: Tuple[type, ...] = ()
    required: bool = True
    table: Optional[Dict[str, "Field"]] = None
    variants: Optional[Tuple[str, Dict[str, Dict[str, "Field"]]]] = None
    choices: Optional[Tuple[Any, ...]] = None
    nullable: bool = False


def opt(types=(), **kw) -> Field:
    return Field(types, required=False, **kw)


SUBORDINATOR = Field(variants=("family", {
    "gamma": {"c": Field(NUMBER), "rate": Field(NUMBER), "drift": opt(NUMBER)},
    "stable": {"index": Field(NUMBER), "scale": opt(NUMBER), "drift": opt(NUMBER)},
    "compound_poisson": {"rate": Field(NUMBER), "dist": Field((str,)), "params": opt((dict,)),
                         "drift": opt(NUMBER)},
    "tempered_stable": {"c": Field(NUMBER), "index": Field(NUMBER), "rate": Field(NUMBER),
                        "drift": opt(NUMBER)},
    "none": {"drift": Field(NUMBER)},
}))

DRIVER_VARIANTS = {
    "brownian": {"a": opt(NUMBER)},
    "atoms": {"atoms": Field((list,)), "a": opt(NUMBER), "b": opt(NUMBER)},
    "subordinated": {"subordinator": SUBORDINATOR},
    "subordinator": {"subordinator": SUBORDINATOR},
}

NOISE_VARIANTS = {
    **{k: v for k, v in DRIVER_VARIANTS.items() if k != "subordinator"},
    "martingale": {"preset": Field((str,), choices=("linear", "piecewise_linear", "csv")),
                   "sigma2": opt(NUMBER), "knots": opt((list,)), "file": opt((str,))},
}

KERNEL = Field(variants=("family", {
    "molchan_golosov": {"H": Field(NUMBER)},
    "example_one": {"H": Field(NUMBER)},
    "constant": {"c": opt(NUMBER)},
    "power": {"exponent": Field(NUMBER)},
}))

GRID = Field(table={"T": opt(NUMBER), "n": Field((int,))})

OUTPUT = Field(table={"dir": opt((str,)), "format": opt((str,), choices=FORMATS), "name": opt((str,)),
                      "f64": opt((bool,))}, required=False)

SOURCE = Field(variants=("kind", {
    "function": {"expr": Field((str,))},
    "path": {"file": Field((str,))},
}))

COMMON = {"command": Field((str,), choices=COMMANDS), "seed": opt((int,)), "threads": opt((int,)),
          "output": OUTPUT, "meta": opt((dict,))}

SCHEMAS: Dict[str, Dict[str, Field]] = {
    "simulate": {
        **COMMON,
        "driver": Field(variants=("kind", DRIVER_VARIANTS)),
        "kernel": Field(variants=KERNEL.variants, required=False, nullable=True),
        "grid": GRID,
        "n_paths": Field((int,)),
    },
    "integrate": {
        **COMMON,
        "f": SOURCE,
        "g": SOURCE,
        "alpha": opt(NUMBER),
        "alphas": opt((list,)),
        "grid": Field(table=GRID.table, required=False),
        "rs_check": opt((bool,)),
        "drop_recentering": opt((bool,)),
    },
    "check": {
        **COMMON,
        "condition": Field((str,), choices=CONDITIONS),
        "p": opt(NUMBER + (str,)),
        "alpha": Field(NUMBER),
        "kernel": KERNEL,
        "noise": Field(variants=("kind", NOISE_VARIANTS), required=False),
        "subordinator": Field(variants=SUBORDINATOR.variants, required=False),
        "T": opt(NUMBER),
        "n": opt((int,)),
        "beta": opt(NUMBER),
        "rho": opt(NUMBER),
        "fast_path": opt((bool,)),
        "enforce": opt((bool,)),
    },
    "verify": {
        **COMMON,
        "suite": Field((str,), choices=tuple(SUITES)),
        "n_paths": opt((int,), nullable=True),
        "options": opt((dict,)),
    },
}


def _type_ok(value: Any, types: Tuple[type, ...]) -> bool:
    if isinstance(value, bool) and bool not in types:
        return False
    return isinstance(value, types)


def _check(value: Any, spec: Field, key: str, problems: List[str]) -> None:
    if value is None:
        if not spec.nullable:
            problems.append(f"{key}: must not be null")
        return
    if spec.table is not None or spec.variants is not None:
        if not isinstance(value, dict):
            problems.append(f"{key}: expected a table, got {type(value).__name__}")
            return
        if spec.table is not None:
            _check_table(value, spec.table, key, problems)
            return
        tag, variants = spec.variants
        choice = value.get(tag)
        if choice not in variants:
            problems.append(f"{key}.{tag}: expected one of {sorted(variants)}, got {choice!r}")
            return
        _check_table({k: v for k, v in value.items() if k != tag}, variants[choice], key, problems)
        return
    if spec.types and not _type_ok(value, spec.types):
        names = "/".join(t.__name__ for t in spec.types)
        problems.append(f"{key}: expected {names}, got {type(value).__name__}")
        return
    if spec.choices is not None and value not in spec.choices:
        problems.append(f"{key}: expected one of {list(spec.choices)}, got {value!r}")


def _check_table(table: Dict[str, Any], schema: Dict[str, Field], prefix: str, problems: List[str]) -> None:
    dot = f"{prefix}." if prefix else ""
    for k in table:
        if k not in schema:
            problems.append(f"{dot}{k}: unknown key")
    missing = [f"{dot}{k}" for k, f in schema.items() if f.required and k not in table]
    if missing:
        problems.append(f"missing keys: {missing}")
    for k, f in schema.items():
        if k in table:
            _check(table[k], f, f"{dot}{k}", problems)


def validate(cfg: Dict[str, Any]) -> Dict[str, Any]:
    """Raise ConfigError naming every problem; return cfg unchanged otherwise."""
    command = cfg.get("command")
    if command not in SCHEMAS:
        raise ConfigError(f"command: expected one of {list(COMMANDS)}, got {command!r}",
                          [f"command: {command!r}"])
    problems: List[str] = []
    _check_table(cfg, SCHEMAS[command], "", problems)
    if command == "integrate" and "alpha" in cfg and "alphas" in cfg:
        problems.append("alpha/alphas: give one of them, not both")
    if problems:
        raise ConfigError(f"Invalid {command} config: " + "; ".join(problems), problems)
    return cfg


# --------------------------------------------------------------------
# Loading
# --------------------------------------------------------------------

def _set_dotted(cfg: Dict[str, Any], dotted: str, value: Any) -> None:
    node = cfg
    parts = dotted.split(".")
    for part in parts[:-1]:
        node = node.setdefault(part, {})
    node[parts[-1]] = value


def apply_overrides(cfg: Dict[str, Any], overrides: Optional[Dict[str, Any]]) -> Dict[str, Any]:
    """Flag overrides by dotted key ("seed", "output.dir", ...); None values are ignored."""
    out = copy.deepcopy(cfg)
    for key, value in (overrides or {}).items():
        if value is not None:
            _set_dotted(out, key, value)
    return out


def read_config_file(path: Optional[str] = None) -> Dict[str, Any]:
    """Raw JSON table from path, or from LEVY_CONFIG_PATH."""
    path = path or os.environ.get("LEVY_CONFIG_PATH") or settings().config_path
    if not path:
        raise ConfigError("No experiment config given (--config or LEVY_CONFIG_PATH)")
    if not os.path.exists(path):
        raise ConfigError(f"Experiment config not found at: {path}")

    try:
        with open(path, "r", encoding="utf-8") as f:
            cfg = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"Failed to read experiment config: {e}")
    if not isinstance(cfg, dict):
        raise ConfigError("Experiment config must be a JSON object at the top level")
    cfg.setdefault("meta", {})["loaded_from"] = path
    return cfg


def load_experiment_config(path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None,
                           base: Optional[Dict[str, Any]] = None, command: Optional[str] = None) -> Dict[str, Any]:
    """
    Load, override and validate. `base` replaces the file when the command
    needs no file (verify with --suite); `command` fills in or checks the
    "command" key.
    """
    cfg = copy.deepcopy(base) if base is not None else read_config_file(path)
    if command is not None:
        found = cfg.setdefault("command", command)
        if found != command:
            raise ConfigError(f"config is for {found!r}, not {command!r}", [f"command: {found!r}"])
    return validate(apply_overrides(cfg, overrides))


def canonical(cfg: Dict[str, Any]) -> str:
    """Stable text form used for run ids; meta, threads and the output directory do not count."""
    body = {k: v for k, v in cfg.items() if k not in ("meta", "threads")}
    if isinstance(body.get("output"), dict):
        body["output"] = {k: v for k, v in body["output"].items() if k != "dir"}
    return json.dumps(body, sort_keys=True, separators=(",", ":"))
