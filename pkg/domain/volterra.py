"""
domain.volterra
---------------
Volterra kernels g(t, s) on 0 <= s < t <= T and paths Y_t = int_0^t g(t, s) dZ_s.

Kernel families
  molchan_golosov  C_H (t-s)^(H-1/2) 2F1(1/2-H, H-1/2; H+1/2; (s-t)/s), H in (0, 1)
  example_one      c_H s^(1/2-H) int_s^t u^(H-1/2) (u-s)^(H-3/2) j(u) du, H in (1/2, 1)
  constant         g = c
  power            g = (t-s)^exponent
  custom           user evaluator plus annotations
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Callable, Dict, Optional, Sequence, Union

import numpy as np
from scipy.special import beta as beta_fn
from scipy.special import gamma

from config import settings
from . import Grid, GridPath, NumericalError
from .estimators import SlopeFit, default_lags, fit_loglog, variogram
from .hypergeometric import hyp2f1
from .levy_noise import Source, sample_ensemble
from .quadrature import gauss_legendre_panels

log = logging.getLogger(__name__)

FAMILIES = ("molchan_golosov", "example_one", "constant", "power", "custom")

# panels of the transformed inner integral, graded toward v = 1
_INNER_BREAKS = tuple([0.0] + [1.0 - 2.0 ** -k for k in range(1, 12)] + [1.0])
_INNER_ORDER = 20


# --------------------------------------------------------------------
# Normalization constants
# --------------------------------------------------------------------

def mg_constant(H: float) -> float:
    """C_H = (2H Gamma(3/2-H) / (Gamma(H+1/2) Gamma(2-2H)))^(1/2)."""
    return math.sqrt(2.0 * H * gamma(1.5 - H) / (gamma(H + 0.5) * gamma(2.0 - 2.0 * H)))


def example_one_constant(H: float) -> float:
    """c_H = (H(2H-1) / B(2-2H, H-1/2))^(1/2)."""
    return math.sqrt(H * (2.0 * H - 1.0) / beta_fn(2.0 - 2.0 * H, H - 0.5))


# --------------------------------------------------------------------
# Kernel type
# --------------------------------------------------------------------

@dataclass(frozen=True)
class VolterraKernel:
    """
    A Volterra kernel. `params` is a sorted tuple of (name, value) pairs so the
    kernel is hashable and usable as a cache key; `j` and `fn` are compared by
    identity.

    annotations (optional, read by the condition checks):
      bound        sup |g|
      half_holder  C with |g(t,s) - g(v,s)| <= C |t - v|^(1/2)
      lp           list of p with g(t, .) in L_p([0, t])
    """
    family: str
    params: tuple = ()
    j: Optional[Callable] = None
    fn: Optional[Callable] = None
    annotations: Dict[str, Any] = field(default_factory=dict, hash=False, compare=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"Unknown kernel family: {self.family}")
        p = dict(self.params)
        if self.family == "molchan_golosov" and not 0.0 < p.get("H", -1.0) < 1.0:
            raise ValueError(f"Molchan-Golosov kernel needs H in (0, 1), got {p.get('H')}")
        if self.family == "example_one" and not 0.5 < p.get("H", -1.0) < 1.0:
            raise ValueError(f"example_one kernel needs H in (1/2, 1), got {p.get('H')}")
        if self.family == "custom" and self.fn is None:
            raise ValueError("custom kernel needs an evaluator fn(t, s)")

    # --- constructors ---

    @classmethod
    def molchan_golosov(cls, H: float) -> "VolterraKernel":
        ann = {"lp": [2.0]}
        if H == 0.5:
            ann.update(bound=1.0, half_holder=0.0)
        return cls("molchan_golosov", (("H", float(H)),), annotations=ann)

    @classmethod
    def example_one(cls, H: float, j: Optional[Callable] = None, j_bound: float = 1.0) -> "VolterraKernel":
        return cls("example_one", (("H", float(H)), ("j_bound", float(j_bound))), j=j,
                   annotations={"lp": [2.0]})

    @classmethod
    def constant(cls, c: float = 1.0) -> "VolterraKernel":
        return cls("constant", (("c", float(c)),), annotations={"bound": abs(float(c)), "half_holder": 0.0})

    @classmethod
    def power(cls, exponent: float) -> "VolterraKernel":
        if exponent <= -1.0:
            raise ValueError(f"power kernel needs exponent > -1, got {exponent}")
        ann: Dict[str, Any] = {}
        if exponent >= 0.5:
            ann = {"half_holder": float(exponent)}
        return cls("power", (("exponent", float(exponent)),), annotations=ann)

    @classmethod
    def custom(cls, fn: Callable, label: str = "custom", **annotations) -> "VolterraKernel":
        return cls("custom", (("label", label),), fn=fn, annotations=dict(annotations))

    # --- metadata ---

    @property
    def H(self) -> Optional[float]:
        return dict(self.params).get("H")

    @property
    def label(self) -> str:
        inner = ",".join(f"{k}={v}" for k, v in self.params)
        return f"{self.family}({inner})"

    def as_dict(self) -> dict:
        return {"family": self.family, **{k: v for k, v in self.params}}

    # --- evaluation ---

    def row(self, t: float, s) -> np.ndarray:
        """g(t, s) over an array of s; zero wherever s >= t."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        out = np.zeros_like(s)
        live = (s < t) & (s >= 0.0)
        if not np.any(live):
            return out
        out[live] = _evaluate(self, float(t), s[live])
        return out


def _evaluate(k: VolterraKernel, t: float, s: np.ndarray) -> np.ndarray:
    p = dict(k.params)
    if k.family == "molchan_golosov":
        H = p["H"]
        if H == 0.5:
            return np.ones_like(s)
        with np.errstate(divide="ignore"):
            z = np.where(s > 0, (s - t) / np.where(s > 0, s, 1.0), -np.inf)
        if np.any(~np.isfinite(z)):
            raise ValueError("Molchan-Golosov kernel is evaluated for s > 0 only")
        return mg_constant(H) * (t - s) ** (H - 0.5) * hyp2f1(0.5 - H, H - 0.5, H + 0.5, z)
    if k.family == "example_one":
        return _example_one(p["H"], k.j, t, s)
    if k.family == "constant":
        return np.full_like(s, p["c"])
    if k.family == "power":
        return (t - s) ** p["exponent"]
    return np.asarray(k.fn(t, s), dtype=float) * np.ones_like(s)


def _example_one(H: float, j: Optional[Callable], t: float, s: np.ndarray) -> np.ndarray:
    # u = s + (t-s) v^kappa turns (u-s)^(H-3/2) du into kappa (t-s)^(H-1/2) dv
    kappa = 1.0 / (H - 0.5)
    v, w = gauss_legendre_panels(_INNER_BREAKS, _INNER_ORDER)
    span = (t - s)[:, None]
    u = s[:, None] + span * v[None, :] ** kappa
    integrand = u ** (H - 0.5)
    if j is not None:
        integrand = integrand * np.asarray(j(u), dtype=float)
    inner = kappa * (t - s) ** (H - 0.5) * (integrand @ w)
    with np.errstate(divide="ignore"):
        return example_one_constant(H) * s ** (0.5 - H) * inner


def eval_kernel(k: VolterraKernel, t: float, s: float) -> float:
    """Single kernel value; strict about the domain 0 <= s < t."""
    if not 0.0 <= s < t:
        raise ValueError(f"kernel evaluated outside 0 <= s < t: (t, s) = ({t}, {s})")
    value = float(k.row(t, [s])[0])
    if not math.isfinite(value):
        raise NumericalError(f"{k.label} is not finite at (t, s) = ({t}, {s})", partial=value)
    return value


# --------------------------------------------------------------------
# Kernel matrix
# --------------------------------------------------------------------

def _midpoints(grid: Grid) -> np.ndarray:
    return grid.t0 + grid.dt * (np.arange(grid.n) + 0.5)


def kernel_row(k: VolterraKernel, grid: Grid, i: int) -> np.ndarray:
    """g(t_i, midpoint_j) for j < i, zero for j >= i."""
    row = np.zeros(grid.n)
    if i > 0:
        t = grid.t0 + grid.dt * i
        row[:i] = k.row(t, _midpoints(grid)[:i])
    return row


@lru_cache(maxsize=8)
def _cached_matrix(k: VolterraKernel, grid: Grid) -> np.ndarray:
    G = np.vstack([kernel_row(k, grid, i) for i in range(grid.n + 1)])
    if not np.all(np.isfinite(G)):
        raise NumericalError(f"{k.label} has non-finite values on the grid")
    G.setflags(write=False)
    log.debug("VOLTERRA | kernel matrix | %s | n=%d", k.label, grid.n)
    return G


def kernel_matrix(k: VolterraKernel, grid: Grid) -> np.ndarray:
    """
    (n+1, n) matrix G[i, j] = g(t_i, midpoint_j), lower triangular by
    construction. Only for n up to row_cache_max_n; larger grids go row by
    row through kernel_row.
    """
    limit = settings().row_cache_max_n
    if grid.n > limit:
        raise ValueError(f"kernel matrix for n = {grid.n} exceeds row_cache_max_n = {limit}; use kernel_row")
    return _cached_matrix(k, grid)


def apply_kernel(k: VolterraKernel, grid: Grid, dZ: np.ndarray) -> np.ndarray:
    """Y[..., i] = sum_j G[i, j] dZ[..., j] for increments of shape (..., n)."""
    dZ = np.asarray(dZ, dtype=float)
    if grid.n <= settings().row_cache_max_n:
        return dZ @ kernel_matrix(k, grid).T
    cols = []
    for i in range(grid.n + 1):
        row = kernel_row(k, grid, i)
        if not np.all(np.isfinite(row)):
            raise NumericalError(f"{k.label} has non-finite values in row {i}")
        cols.append(dZ @ row)
    return np.stack(cols, axis=-1)


# --------------------------------------------------------------------
# Paths
# --------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class VolterraPath:
    path: GridPath
    driver_meta: Dict[str, Any] = field(default_factory=dict)
    kernel_meta: Dict[str, Any] = field(default_factory=dict)

    @property
    def values(self) -> np.ndarray:
        return self.path.values

    @property
    def grid(self) -> Grid:
        return self.path.grid


def _check_grid(Z: GridPath) -> Grid:
    if abs(Z.t0) > 1e-12:
        raise ValueError(f"Volterra paths start at t0 = 0, driver starts at {Z.t0}")
    return Z.grid


def build_path(k: VolterraKernel, Z: GridPath) -> VolterraPath:
    """Y_{t_i} = sum_{j<i} g(t_i, midpoint_j) (Z_{t_j+1} - Z_{t_j})."""
    grid = _check_grid(Z)
    Y = apply_kernel(k, grid, Z.increments)
    driver_meta = {"label": Z.label, "seed": Z.seed, **Z.meta}
    return VolterraPath(
        path=GridPath.on(grid, Y, label=f"Y[{k.label}]", seed=Z.seed, meta={"kernel": k.as_dict()}),
        driver_meta=driver_meta,
        kernel_meta=k.as_dict(),
    )


def build_ensemble(
    k: VolterraKernel,
    source: Source,
    grid: Grid,
    seed: int,
    n_paths: int,
    threads: Optional[int] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """(Y, Z) ensembles, each (n_paths, n+1); row i uses driver substream i."""
    Z = sample_ensemble(source, grid, seed, n_paths, threads=threads)
    Y = apply_kernel(k, grid, np.diff(Z, axis=1))
    log.info("VOLTERRA | ensemble | %s | paths=%d | n=%d | seed=%s", k.label, n_paths, grid.n, seed)
    return Y, Z


@dataclass(frozen=True)
class IncrementParts:
    boundary_term: float
    history_term: float

    @property
    def total(self) -> float:
        return self.boundary_term + self.history_term


def increment_decomposition(k: VolterraKernel, Z: GridPath, s_idx: int, t_idx: int) -> IncrementParts:
    """Y_t - Y_s split into the new-noise part on [s, t) and the history part on [0, s)."""
    grid = _check_grid(Z)
    if not 0 <= s_idx < t_idx <= grid.n:
        raise IndexError(f"need 0 <= s_idx < t_idx <= {grid.n}, got ({s_idx}, {t_idx})")
    dZ = Z.increments
    row_t = kernel_row(k, grid, t_idx)
    row_s = kernel_row(k, grid, s_idx)
    boundary = math.fsum((row_t[s_idx:t_idx] * dZ[s_idx:t_idx]).tolist())
    history = math.fsum(((row_t[:s_idx] - row_s[:s_idx]) * dZ[:s_idx]).tolist())
    return IncrementParts(boundary, history)


# --------------------------------------------------------------------
# Regularity
# --------------------------------------------------------------------

def holder_exponent_estimate(
    paths: Union[VolterraPath, GridPath, np.ndarray],
    lags: Optional[Sequence[int]] = None,
    dt: Optional[float] = None,
) -> SlopeFit:
    """Half the log-log slope of the mean squared increment against the lag."""
    if isinstance(paths, VolterraPath):
        paths = paths.path
    if isinstance(paths, GridPath):
        dt, Y = paths.dt, paths.values[None, :]
    else:
        if dt is None:
            raise ValueError("an ensemble array needs dt")
        Y = np.atleast_2d(np.asarray(paths, dtype=float))
    n = Y.shape[1] - 1
    lags = default_lags(n) if lags is None else [int(h) for h in lags if 0 < int(h) <= n]
    if len(lags) < 4:
        raise ValueError(f"Hoelder estimate needs at least 4 lags inside the grid, got {len(lags)}")
    fit = fit_loglog(np.asarray(lags) * dt, variogram(Y, lags))
    return SlopeFit(fit.slope / 2.0, fit.stderr / 2.0, fit.intercept)


def fbm_covariance(s, t, H: float):
    """(s^2H + t^2H - |t-s|^2H) / 2."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    return 0.5 * (s ** (2 * H) + t ** (2 * H) - np.abs(t - s) ** (2 * H))


def fbm_exact(H: float, grid: Grid, seed: int, n_paths: int = 1) -> np.ndarray:
    """
    Exact fBm samples on grid.times through the Cholesky factor of the
    covariance; (n_paths, n+1) with a zero first column. Reference sampler
    for checks against the kernel construction.
    """
    if not 0.0 < H < 1.0:
        raise ValueError(f"H must lie in (0, 1), got {H}")
    if grid.t0 != 0.0:
        raise ValueError(f"fBm starts at 0, got t0={grid.t0}")
    t = grid.times[1:]
    cov = fbm_covariance(t[:, None], t[None, :], H)
    chol = np.linalg.cholesky(cov)
    rng = np.random.default_rng(np.random.SeedSequence(int(seed)))
    out = np.zeros((int(n_paths), grid.n + 1))
    out[:, 1:] = rng.standard_normal((int(n_paths), grid.n)) @ chol.T
    return out


def kernel_from_config(cfg: dict) -> VolterraKernel:
    """Kernel from a {"family": ..., params...} mapping."""
    family = cfg.get("family")
    if family == "molchan_golosov":
        return VolterraKernel.molchan_golosov(float(cfg["H"]))
    if family == "example_one":
        return VolterraKernel.example_one(float(cfg["H"]))
    if family == "constant":
        return VolterraKernel.constant(float(cfg.get("c", 1.0)))
    if family == "power":
        return VolterraKernel.power(float(cfg["exponent"]))
    raise ValueError(f"Unknown kernel family: {family}")
