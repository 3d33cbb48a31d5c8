"""
Gauss hypergeometric function 2F1(a, b; c; z) for real arguments z < 1.

Power series near the origin; for z < -1/2 the Pfaff transformation maps the
argument into (1/3, 1), and arguments close to 1 go through the 1 - z
connection formula. Everything is vectorized over z.
"""
from __future__ import annotations

import logging

import numpy as np
from scipy.special import gamma, rgamma

from config import settings
from . import NumericalError

log = logging.getLogger(__name__)

MAX_TERMS = 5000
SERIES_RADIUS = 0.5
CONNECTION_FROM = 0.75


def taylor_series(a: float, b: float, c: float, z, tol: float | None = None, max_terms: int = MAX_TERMS):
    """Plain power series; only used where |z| is safely below 1."""
    tol = settings().hyp_tol if tol is None else tol
    z = np.asarray(z, dtype=float)
    term = np.ones_like(z)
    total = np.ones_like(z)
    for k in range(max_terms):
        term = term * ((a + k) * (b + k) / ((c + k) * (k + 1.0))) * z
        total = total + term
        if np.all(np.abs(term) <= tol * np.maximum(np.abs(total), tol)):
            return total
    raise NumericalError(
        f"2F1({a}, {b}; {c}; z) series did not converge in {max_terms} terms",
        partial=float(np.max(np.abs(total))) if total.size else None,
    )


def _near_integer(x: float) -> bool:
    return abs(x - round(x)) < 1e-8


def _connection(a: float, b: float, c: float, w, tol: float | None = None):
    """2F1 at w close to 1 via the expansion in powers of 1 - w."""
    s = c - a - b
    if _near_integer(s):
        log.debug("HYP2F1 | degenerate connection (c-a-b=%g) | falling back to series", s)
        return taylor_series(a, b, c, w, tol=tol, max_terms=200_000)
    one_minus = 1.0 - np.asarray(w, dtype=float)
    A = gamma(c) * gamma(s) * rgamma(c - a) * rgamma(c - b)
    B = gamma(c) * gamma(-s) * rgamma(a) * rgamma(b)
    first = A * taylor_series(a, b, 1.0 - s, one_minus, tol=tol) if A != 0.0 else 0.0
    second = B * one_minus ** s * taylor_series(c - a, c - b, 1.0 + s, one_minus, tol=tol) if B != 0.0 else 0.0
    return first + second


def _unit_interval(a: float, b: float, c: float, w, tol: float | None = None):
    """2F1 for w in [0, 1)."""
    w = np.asarray(w, dtype=float)
    out = np.empty_like(w)
    near = w > CONNECTION_FROM
    if np.any(~near):
        out[~near] = taylor_series(a, b, c, w[~near], tol=tol)
    if np.any(near):
        out[near] = _connection(a, b, c, w[near], tol=tol)
    return out


def hyp2f1(a: float, b: float, c: float, z, tol: float | None = None):
    """
    Gauss hypergeometric function for real z < 1.

    Scalars in, scalar out; arrays in, arrays out.
    """
    if c <= 0 and _near_integer(c):
        raise ValueError(f"2F1 undefined for c={c} (non-positive integer)")
    z_arr = np.asarray(z, dtype=float)
    scalar = z_arr.ndim == 0
    z_arr = np.atleast_1d(z_arr)
    if np.any(z_arr >= 1.0):
        raise ValueError(f"2F1 only evaluated for z < 1, got max z={z_arr.max()}")

    if a == 0.0 or b == 0.0:
        out = np.ones_like(z_arr)
        return float(out[0]) if scalar else out

    out = np.empty_like(z_arr)
    small = np.abs(z_arr) <= SERIES_RADIUS
    negative = z_arr < -SERIES_RADIUS
    positive = z_arr > SERIES_RADIUS

    if np.any(small):
        out[small] = taylor_series(a, b, c, z_arr[small], tol=tol)
    if np.any(negative):
        # Pfaff: F(a,b;c;z) = (1-z)^-a F(a, c-b; c; z/(z-1))
        zn = z_arr[negative]
        w = zn / (zn - 1.0)
        out[negative] = (1.0 - zn) ** (-a) * _unit_interval(a, c - b, c, w, tol=tol)
    if np.any(positive):
        out[positive] = _unit_interval(a, b, c, z_arr[positive], tol=tol)

    return float(out[0]) if scalar else out
