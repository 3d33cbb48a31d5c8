"""
Levy Volterra toolkit – configuration
Centralised numerical settings & runtime flags.

Usage:
    from config import settings, worker_count

Put a `.env` file alongside app.py, or export LEVY_* variables.
"""

import json
import os
from dataclasses import dataclass, field
from functools import lru_cache

# Optional: load .env if present (does nothing if python-dotenv isn't installed)
try:
    from dotenv import load_dotenv  # type: ignore
    load_dotenv()
except Exception:
    pass


def _env(name: str, default: str):
    return field(default_factory=lambda: os.getenv(name, default))


def _env_float(name: str, default: str):
    return field(default_factory=lambda: float(os.getenv(name, default)))


def _env_int(name: str, default: str):
    return field(default_factory=lambda: int(os.getenv(name, default)))


@dataclass(frozen=True)
class Settings:
    # Runtime
    threads: int = _env_int("LEVY_THREADS", "1")
    out_dir: str = _env("LEVY_OUT_DIR", "outputs")
    log_dir: str = _env("LEVY_LOG_DIR", "")  # empty: <out_dir>/logs
    log_level: str = _env("LEVY_LOG_LEVEL", "INFO")
    run_log: bool = field(default_factory=lambda: os.getenv("LEVY_RUN_LOG", "1") == "1")
    config_path: str = _env("LEVY_CONFIG_PATH", "")

    # Quadrature / refinement
    quad_rel_tol: float = _env_float("LEVY_QUAD_REL_TOL", "1e-3")
    divergence_ratio: float = _env_float("LEVY_DIVERGENCE_RATIO", "1.5")
    shell_slope_tol: float = _env_float("LEVY_SHELL_SLOPE_TOL", "-0.05")
    max_shells: int = _env_int("LEVY_MAX_SHELLS", "60")

    # Sampling
    small_jump_eps: float = _env_float("LEVY_SMALL_JUMP_EPS", "1e-4")

    # Kernels
    row_cache_max_n: int = _env_int("LEVY_ROW_CACHE_MAX_N", "16384")
    hyp_tol: float = _env_float("LEVY_HYP_TOL", "1e-10")

    # Condition checks
    condition_grid_n: int = _env_int("LEVY_CONDITION_N", "512")


@lru_cache(maxsize=1)
def settings() -> Settings:
    return Settings()


def worker_count(flag_value: int | str | None = None) -> int:
    """
    Decide how many worker threads to use:
    - CLI flag (--threads) wins when given
    - otherwise LEVY_THREADS
    Never below 1.
    """
    if flag_value is None or str(flag_value).strip() == "":
        return max(1, settings().threads)
    return max(1, int(flag_value))


# --------------------------------------------------------------------
# Presets (config/presets.json)
# --------------------------------------------------------------------

PRESETS_PATH = os.path.join(os.path.dirname(os.path.abspath(__file__)), "config", "presets.json")


@lru_cache(maxsize=1)
def presets() -> dict:
    """Suite defaults shipped with the repo."""
    if not os.path.exists(PRESETS_PATH):
        return {}
    with open(PRESETS_PATH, "r", encoding="utf-8") as f:
        return json.load(f)


def suite_defaults(name: str) -> dict:
    return dict(presets().get("suites", {}).get(name, {}))
