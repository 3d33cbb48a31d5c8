"""
Monte Carlo estimators shared by the verifiers and suites:
moments with standard errors, empirical characteristic functions,
variogram regression and flat-ratio checks.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

# --- helpers -----------------------------------------------------------------


def _as_samples(x) -> np.ndarray:
    arr = np.asarray(x, dtype=float).ravel()
    if arr.size < 2:
        raise ValueError(f"need at least 2 samples, got {arr.size}")
    return arr


def _dyadic_lags(n: int, max_fraction: int = 8, start: int = 1) -> list[int]:
    lags, h = [], start
    while h <= max(n // max_fraction, start):
        lags.append(h)
        h *= 2
    return lags


# --- core estimators ----------------------------------------------------------

@dataclass(frozen=True)
class MomentEstimate:
    mean: float
    stderr: float
    n: int

    def z(self, target: float) -> float:
        """Distance to target in standard errors."""
        if self.stderr == 0:
            return 0.0 if math.isclose(self.mean, target) else math.inf
        return abs(self.mean - target) / self.stderr

    def as_dict(self) -> dict:
        return {"mean": self.mean, "stderr": self.stderr, "n": self.n}


def mc_mean(samples) -> MomentEstimate:
    x = _as_samples(samples)
    return MomentEstimate(float(np.mean(x)), float(np.std(x, ddof=1) / math.sqrt(x.size)), int(x.size))


def mc_abs_moment(samples, p: float) -> MomentEstimate:
    """E|X|^p with the standard error from the sample variance of |X|^p."""
    return mc_mean(np.abs(_as_samples(samples)) ** p)


def empirical_cf(samples, lams: Sequence[float]) -> np.ndarray:
    x = _as_samples(samples)
    lam = np.asarray(lams, dtype=float)
    return np.exp(1j * np.outer(lam, x)).mean(axis=1)


def cf_within(empirical: np.ndarray, theoretical: np.ndarray, n: int, k: float = 3.0) -> np.ndarray:
    """Per-probe check |emp - theo| <= k / sqrt(n)."""
    return np.abs(np.asarray(empirical) - np.asarray(theoretical)) <= k / math.sqrt(n)


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    stderr: float
    intercept: float


def fit_loglog(x, y) -> SlopeFit:
    """Least-squares slope of log y against log x."""
    lx = np.log(np.asarray(x, dtype=float))
    ly = np.log(np.asarray(y, dtype=float))
    if lx.size < 3:
        raise ValueError(f"log-log fit needs at least 3 points, got {lx.size}")
    if lx.size > 3:
        coef, cov = np.polyfit(lx, ly, 1, cov=True)
        err = float(math.sqrt(max(cov[0, 0], 0.0)))
    else:
        coef = np.polyfit(lx, ly, 1)
        err = 0.0
    return SlopeFit(float(coef[0]), err, float(coef[1]))


def variogram(ensemble: np.ndarray, lags: Sequence[int]) -> np.ndarray:
    """Mean squared increment at each lag, averaged over paths and positions."""
    Y = np.atleast_2d(np.asarray(ensemble, dtype=float))
    out = []
    for h in lags:
        d = Y[:, h:] - Y[:, :-h]
        out.append(float(np.mean(d * d)))
    return np.array(out)


def default_lags(n: int) -> list[int]:
    return _dyadic_lags(n)


def covariance_probe(ensemble: np.ndarray, idx: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    """
    Empirical E[Y_s Y_t] on the probe indices with per-entry standard errors.
    Paths start at zero, so the raw second moment is the covariance of interest.
    """
    Y = np.asarray(ensemble, dtype=float)[:, list(idx)]
    prod = Y[:, :, None] * Y[:, None, :]
    mean = prod.mean(axis=0)
    err = prod.std(axis=0, ddof=1) / math.sqrt(Y.shape[0])
    return mean, err


def flat_ratio(values: Sequence[float], stderrs: Sequence[float], k: float = 3.0) -> bool:
    """True when every value sits within k combined standard errors of the weighted mean."""
    v = np.asarray(values, dtype=float)
    s = np.asarray(stderrs, dtype=float)
    if not np.all(np.isfinite(v)):
        return False
    if np.all(s == 0):
        return bool(np.allclose(v, v[0]))
    w = 1.0 / np.maximum(s, 1e-300) ** 2
    centre = float(np.sum(w * v) / np.sum(w))
    return bool(np.all(np.abs(v - centre) <= k * np.sqrt(s ** 2 + 1.0 / np.sum(w))))
