"""
Hypothesis gates for the moment bounds and integrator conditions.

Each bound or condition lists the noise flags it needs; the gate reports
which ones are violated so callers can either mark a bound inapplicable or
raise a PreconditionError naming the flag.
"""
from __future__ import annotations

import math

from . import PreconditionError

# regimes of the a priori estimates and integrator conditions
SMALL_P = "small_p"      # 1 <= p < 2
MARTINGALE_P = "p2"      # p == 2
LARGE_P = "large_p"      # p > 2

REQUIRED_FLAGS = {
    SMALL_P: ["a_zero", "b_zero", "symmetric", "moment_finite"],
    MARTINGALE_P: ["b_zero", "symmetric", "moment_finite"],
    LARGE_P: ["a_zero", "symmetric", "moment_finite"],
}


def regime_for(p: float) -> str:
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    if p < 2:
        return SMALL_P
    if p == 2:
        return MARTINGALE_P
    return LARGE_P


def noise_flags(triplet, p: float) -> dict[str, bool]:
    """Flags of a triplet relevant to the p-th moment bounds."""
    from .levy_noise import pi_abs_moment

    moment = pi_abs_moment(triplet, p) if not math.isinf(p) else None
    return {
        "a_zero": triplet.diffusion_a == 0,
        "b_zero": triplet.drift_b == 0,
        "symmetric": bool(triplet.symmetric),
        "moment_finite": bool(moment.finite) if moment is not None else False,
    }


def violated(flags: dict[str, bool], regime: str) -> list[str]:
    return [name for name in REQUIRED_FLAGS[regime] if not flags.get(name, False)]


def require(flags: dict[str, bool], regime: str, what: str = "") -> None:
    """Raise on the first violated flag of the regime."""
    missing = violated(flags, regime)
    if missing:
        raise PreconditionError(
            f"{what or regime} requires {', '.join(REQUIRED_FLAGS[regime])}; violated: {missing}",
            flag=missing[0],
        )


# --- moment-bound regimes ------------------------------------------------------

BOUND_FLAGS = {
    "small_p": ["a_zero", "b_zero", "symmetric", "moment_finite"],
    "large_p": ["b_zero", "symmetric", "moment_finite"],
    "drift": ["moment_finite"],
}


def applicable_bounds(flags: dict[str, bool], p: float) -> dict[str, bool]:
    """Which a priori estimates apply for this p and noise."""
    out = {}
    for name, needed in BOUND_FLAGS.items():
        in_range = (1 <= p < 2) if name == "small_p" else (p >= 2) if name == "large_p" else p >= 1
        out[name] = in_range and all(flags.get(f, False) for f in needed)
    return out
