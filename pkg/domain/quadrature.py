"""
domain.quadrature
-----------------
Refinement ladders for improper and singular integrals.

Every ladder walks outward (or inward) through dyadic shells and keeps
counters plus a trace of partial values, so a caller can report *why* an
integral was declared divergent, not just that it was.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import integrate

from config import settings
from . import NumericalError

log = logging.getLogger(__name__)

TINY = 1e-300


@dataclass
class QuadResult:
    value: float
    finite: bool
    trace: List[Tuple[float, float]] = field(default_factory=list)
    counters: dict = field(default_factory=dict)
    reason: str = ""

    def as_dict(self) -> dict:
        return {
            "value": self.value if self.finite else math.inf,
            "finite": self.finite,
            "reason": self.reason,
            "counters": dict(self.counters),
            "trace": [[float(a), float(b)] for a, b in self.trace],
        }


# --- helpers -----------------------------------------------------------------

def quad(fn: Callable[[float], float], a: float, b: float, **kw) -> float:
    """scipy quad that raises NumericalError instead of warning on a bad estimate."""
    kw.setdefault("limit", 200)
    kw.setdefault("epsabs", 1e-13)
    kw.setdefault("epsrel", 1e-10)
    res = integrate.quad(fn, a, b, full_output=1, **kw)
    value, abserr = float(res[0]), float(res[1])
    if not math.isfinite(value):
        raise NumericalError(f"quadrature on [{a}, {b}] returned {value}", partial=value)
    if len(res) > 3 and abserr > 1e-6 * max(1.0, abs(value)):
        raise NumericalError(
            f"quadrature on [{a}, {b}] did not converge: {res[3]}",
            partial=value,
            trace=[(a, value), (b, abserr)],
        )
    return value


@lru_cache(maxsize=16)
def _legendre(order: int) -> Tuple[np.ndarray, np.ndarray]:
    x, w = leggauss(order)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_legendre_panels(breaks: Sequence[float], order: int = 16) -> Tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of a composite Gauss-Legendre rule over consecutive breaks."""
    x, w = _legendre(order)
    b = np.asarray(breaks, dtype=float)
    lo, hi = b[:-1, None], b[1:, None]
    half = 0.5 * (hi - lo)
    nodes = (lo + half * (1.0 + x[None, :])).ravel()
    weights = (half * w[None, :]).ravel()
    return nodes, weights


def power_cell(mu: float, lo, hi):
    """Exact integral of x**mu over [lo, hi] (vectorized, lo > 0)."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if abs(mu + 1.0) < 1e-12:
        return np.log(hi / lo)
    return (hi ** (mu + 1.0) - lo ** (mu + 1.0)) / (mu + 1.0)


# --- shell ladder ------------------------------------------------------------

def sum_shells(
    shell: Callable[[int], float],
    rel_tol: Optional[float] = None,
    max_levels: Optional[int] = None,
    min_levels: int = 6,
    label: str = "",
) -> QuadResult:
    """
    Sum shell(0) + shell(1) + ... until the geometric remainder is below
    rel_tol, or until two successive non-shrinking shells above rel_tol
    declare divergence. Undecided ladders that still shrink are closed with
    the geometric extrapolation; ladders that neither shrink nor grow raise.
    """
    rel_tol = settings().quad_rel_tol if rel_tol is None else rel_tol
    max_levels = settings().max_shells if max_levels is None else max_levels

    total = 0.0
    parts: List[float] = []
    trace: List[Tuple[float, float]] = []
    counters = {"levels": 0, "non_shrinking": 0, "extrapolated": 0}
    prev: Optional[float] = None
    last_ratio: Optional[float] = None

    for k in range(max_levels):
        d = float(shell(k))
        if not math.isfinite(d):
            return QuadResult(math.inf, False, trace, counters, reason=f"{label} shell {k} not finite")
        parts.append(d)
        total = math.fsum(parts)
        trace.append((float(k), total))
        counters["levels"] = k + 1
        scale = max(abs(total), TINY)

        if prev is None:
            prev = d
            continue
        if d == 0.0 and prev == 0.0:
            return QuadResult(total, True, trace, counters, reason="vanishing shells")

        ratio = abs(d) / abs(prev) if prev != 0.0 else math.inf
        prev = d
        if ratio < 1.0:
            last_ratio = ratio
            counters["non_shrinking"] = 0
            remainder = abs(d) * ratio / (1.0 - ratio)
            if remainder <= rel_tol * scale and k + 1 >= min(min_levels, 3):
                return QuadResult(total + math.copysign(remainder, d), True, trace, counters, reason="converged")
        elif abs(d) > rel_tol * scale:
            counters["non_shrinking"] += 1
            if counters["non_shrinking"] >= 2 and k + 1 >= min_levels:
                log.debug("QUAD | %s | divergent after %d shells | partial=%g", label, k + 1, total)
                return QuadResult(math.inf, False, trace, counters,
                                  reason=f"{label} shells stopped shrinking at level {k}")

    if last_ratio is not None and last_ratio < 1.0:
        counters["extrapolated"] = 1
        d = parts[-1]
        remainder = abs(d) * last_ratio / (1.0 - last_ratio)
        return QuadResult(total + math.copysign(remainder, d), True, trace, counters, reason="extrapolated")
    raise NumericalError(f"{label} shell ladder undecided after {max_levels} levels", partial=total, trace=trace)


def integrate_half_line(
    fn: Callable[[float], float],
    split: float = 1.0,
    rel_tol: Optional[float] = None,
    origin: bool = True,
    tail: bool = True,
    label: str = "",
) -> Tuple[QuadResult, QuadResult]:
    """
    Integrate fn over (0, inf) as two ladders: origin shells
    [split 2^-(k+1), split 2^-k] and tail shells [split 2^k, split 2^(k+1)].
    Returns (origin_result, tail_result); either end can be switched off.
    """
    def origin_shell(k: int) -> float:
        return quad(fn, split * 2.0 ** (-k - 1), split * 2.0 ** (-k))

    def tail_shell(k: int) -> float:
        return quad(fn, split * 2.0 ** k, split * 2.0 ** (k + 1))

    zero = QuadResult(0.0, True, [], {"levels": 0}, reason="skipped")
    o = sum_shells(origin_shell, rel_tol, label=f"{label}:origin") if origin else zero
    t = sum_shells(tail_shell, rel_tol, label=f"{label}:tail") if tail else zero
    return o, t


def integrate_interval(
    fn: Callable[[float], float],
    a: float,
    b: float,
    rel_tol: Optional[float] = None,
    label: str = "",
) -> QuadResult:
    """
    Integrate fn over (a, b) with possible endpoint singularities: shells
    shrink toward each endpoint from the midpoint.
    """
    if b <= a:
        return QuadResult(0.0, True, [], {"levels": 0}, reason="empty interval")
    m = 0.5 * (a + b)
    half = m - a

    def left(k: int) -> float:
        return quad(fn, a + half * 2.0 ** (-k - 1), a + half * 2.0 ** (-k))

    def right(k: int) -> float:
        return quad(fn, b - half * 2.0 ** (-k), b - half * 2.0 ** (-k - 1))

    lo = sum_shells(left, rel_tol, label=f"{label}:left")
    hi = sum_shells(right, rel_tol, label=f"{label}:right")
    counters = {"left_levels": lo.counters.get("levels", 0), "right_levels": hi.counters.get("levels", 0)}
    if not (lo.finite and hi.finite):
        reason = lo.reason if not lo.finite else hi.reason
        return QuadResult(math.inf, False, lo.trace + hi.trace, counters, reason=reason)
    return QuadResult(lo.value + hi.value, True, lo.trace + hi.trace, counters, reason="converged")


# --- refinement verdicts -----------------------------------------------------

def refinement_verdict(
    levels: Sequence[float],
    partials: Sequence[float],
    ratio: Optional[float] = None,
    slope_tol: Optional[float] = None,
    label: str = "",
) -> QuadResult:
    """
    Decide finiteness from partial values computed at successively finer
    windows (or meshes). Shells are the increments between successive partials.

    divergent when
      - both partial ratios over the last three levels exceed `ratio`, or
      - the log2 shells over the last three levels are not shrinking
        (fitted slope >= slope_tol).
    finite otherwise, with the geometric remainder added to the last partial.
    """
    ratio = settings().divergence_ratio if ratio is None else ratio
    slope_tol = settings().shell_slope_tol if slope_tol is None else slope_tol
    p = np.asarray(partials, dtype=float)
    trace = [(float(l), float(v)) for l, v in zip(levels, p)]
    counters = {"levels": int(p.size), "growth": 0}

    if p.size < 2:
        raise ValueError(f"refinement verdict needs at least 2 levels, got {p.size}")
    if not np.all(np.isfinite(p)):
        return QuadResult(math.inf, False, trace, counters, reason=f"{label} non-finite partial")

    scale = max(float(np.max(np.abs(p))), TINY)
    shells = np.abs(np.diff(p))
    if np.all(shells <= 1e-12 * max(1.0, scale)):
        return QuadResult(float(p[-1]), True, trace, counters, reason="stable")

    # ratios on the finest levels only
    head = p[-3:]
    noise = max(1e-3 * abs(float(p[-1])), TINY)
    growth = 0
    for prev, cur in zip(head[:-1], head[1:]):
        if abs(prev) > noise and abs(cur) / abs(prev) > ratio:
            growth += 1
            if growth >= 2:
                counters["growth"] = growth
                return QuadResult(math.inf, False, trace, counters,
                                  reason=f"{label} partial ratio above {ratio} twice")
        else:
            growth = 0
    counters["growth"] = growth

    tail = shells[-3:]
    if tail.size >= 2:
        floor = 1e-14 * scale
        logs = np.log2(np.maximum(tail, floor))
        slope = float(np.polyfit(np.arange(tail.size), logs, 1)[0])
        counters["shell_slope"] = slope
        if slope >= slope_tol and tail[-1] > 1e-9 * scale:
            return QuadResult(math.inf, False, trace, counters,
                              reason=f"{label} shells not shrinking (slope {slope:.3f})")
        r = 2.0 ** min(slope, -1e-3)
        remainder = float(tail[-1]) * r / (1.0 - r)
        sign = 1.0 if p[-1] >= p[-2] else -1.0
        return QuadResult(float(p[-1]) + sign * remainder, True, trace, counters, reason="shrinking shells")

    return QuadResult(float(p[-1]), True, trace, counters, reason="two levels only")


def fsum(values) -> float:
    return math.fsum(np.asarray(values, dtype=float).ravel().tolist())
