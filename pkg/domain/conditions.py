"""
domain.conditions
-----------------
Numerical checks that Y = int g(t, s) dZ_s is an appropriate (p, alpha)-integrator.

Every condition is an iterated integral with a singular weight in one
distance variable (t - s, u - s, y - x or v - s). The kernel is tabulated
once on a uniform grid (G[i, j] = g(t_i, midpoint_j)); the singular weight is
integrated exactly per cell; and the distance is cut at windows
delta_k = T 2^-k. The partial integrals over the windows then go through
refinement_verdict: growth by more than the divergence ratio twice in a row
over the three finest windows, or shells that stop shrinking, mean divergent.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
from scipy.special import beta as beta_fn

from config import settings
from . import Grid, PreconditionError
from .estimators import SlopeFit
from .hypotheses import MARTINGALE_P, noise_flags, regime_for, require
from .levy_noise import LevyTriplet, SubordinatorSpec, nu_moment, pi_abs_moment
from .quadrature import QuadResult, power_cell, quad, refinement_verdict
from .volterra import VolterraKernel, holder_exponent_estimate, kernel_matrix

log = logging.getLogger(__name__)


# --------------------------------------------------------------------
# Martingale descriptors E_t = E<M>_t
# --------------------------------------------------------------------

@dataclass(frozen=True)
class MartingaleDescriptor:
    """Nondecreasing, piecewise-linear E_t; `linear` is sigma2 * t."""
    kind: str
    knots_t: tuple = ()
    knots_E: tuple = ()
    sigma2: float = 1.0
    continuous: bool = True
    label: str = ""

    def __post_init__(self):
        if self.kind == "linear":
            if self.sigma2 < 0:
                raise ValueError(f"linear E_t needs sigma2 >= 0, got {self.sigma2}")
        elif self.kind == "piecewise_linear":
            t = np.asarray(self.knots_t, dtype=float)
            e = np.asarray(self.knots_E, dtype=float)
            if t.size < 2 or t.size != e.size:
                raise ValueError("piecewise-linear E_t needs at least two (t, E) knots")
            if not np.all(np.diff(t) > 0):
                raise ValueError("E_t knots must have strictly increasing t")
            if np.any(np.diff(e) < 0):
                raise ValueError("E_t must be nondecreasing")
        else:
            raise ValueError(f"Unknown martingale preset: {self.kind}")

    @classmethod
    def linear(cls, sigma2: float = 1.0) -> "MartingaleDescriptor":
        return cls("linear", sigma2=float(sigma2), label=f"linear({sigma2})")

    @classmethod
    def piecewise_linear(cls, knots: Sequence[Sequence[float]], label: str = "piecewise_linear",
                         continuous: bool = True) -> "MartingaleDescriptor":
        ts, es = zip(*[(float(t), float(e)) for t, e in knots])
        return cls("piecewise_linear", tuple(ts), tuple(es), continuous=continuous, label=label)

    def E(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "linear":
            return self.sigma2 * t
        kt, ke = np.asarray(self.knots_t), np.asarray(self.knots_E)
        out = np.interp(t, kt, ke)
        slope = (ke[-1] - ke[-2]) / (kt[-1] - kt[-2])
        return np.where(t > kt[-1], ke[-1] + slope * (t - kt[-1]), out)

    def density(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "linear":
            return np.full_like(t, self.sigma2)
        kt, ke = np.asarray(self.knots_t), np.asarray(self.knots_E)
        slopes = np.diff(ke) / np.diff(kt)
        idx = np.clip(np.searchsorted(kt, t, side="right") - 1, 0, slopes.size - 1)
        return slopes[idx]

    @property
    def density_bound(self) -> float:
        if self.kind == "linear":
            return self.sigma2
        return float(np.max(np.diff(self.knots_E) / np.diff(self.knots_t)))

    def as_dict(self) -> dict:
        if self.kind == "linear":
            return {"preset": "linear", "sigma2": self.sigma2}
        return {"preset": "piecewise_linear", "knots": [list(k) for k in zip(self.knots_t, self.knots_E)],
                "label": self.label}


Noise = Union[LevyTriplet, MartingaleDescriptor]


# --------------------------------------------------------------------
# Hypotheses and reports
# --------------------------------------------------------------------

@dataclass(frozen=True)
class IntegratorHypotheses:
    p: float
    alpha: float
    noise: Noise
    kernel: VolterraKernel
    T: float = 1.0
    n: Optional[int] = None

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not (self.p >= 1 or math.isinf(self.p)):
            raise ValueError(f"p must be >= 1 or inf, got {self.p}")
        if not self.T > 0:
            raise ValueError(f"T must be positive, got {self.T}")

    @property
    def grid(self) -> Grid:
        return Grid.over(self.T, self.n or settings().condition_grid_n)

    def martingale(self) -> MartingaleDescriptor:
        """E_t of the noise; for a Levy triplet (a + int x^2 pi) t."""
        if isinstance(self.noise, MartingaleDescriptor):
            return self.noise
        flags = noise_flags(self.noise, 2.0)
        require(flags, MARTINGALE_P, "a martingale driver")
        m2 = pi_abs_moment(self.noise, 2.0).value
        return MartingaleDescriptor.linear(self.noise.diffusion_a + m2)

    def as_dict(self) -> dict:
        noise = self.noise.as_dict() if isinstance(self.noise, MartingaleDescriptor) else {"triplet": self.noise.label}
        return {"p": "inf" if math.isinf(self.p) else self.p, "alpha": self.alpha, "T": self.T,
                "n": self.grid.n, "kernel": self.kernel.as_dict(), "noise": noise}


@dataclass
class ConditionEntry:
    name: str
    finite: bool
    value: float
    trace: List[Dict[str, float]] = field(default_factory=list)
    reason: str = ""

    def as_dict(self) -> dict:
        out = {"name": self.name, "status": "finite" if self.finite else "divergent",
               "trace": self.trace, "reason": self.reason}
        if self.finite:
            out["value"] = self.value
        return out


@dataclass
class ConditionReport:
    condition: str
    hypotheses: Dict[str, Any]
    entries: List[ConditionEntry]
    fast_path: bool = False

    @property
    def verdict(self) -> bool:
        return all(e.finite for e in self.entries)

    @property
    def class_label(self) -> Optional[str]:
        if not self.verdict:
            return None
        p = self.hypotheses.get("p")
        return f"ED^-_{p}(alpha={self.hypotheses.get('alpha')}, T={self.hypotheses.get('T')})"

    def entry(self, name: str) -> ConditionEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(f"No entry named {name}")

    def as_dict(self) -> dict:
        return {"condition": self.condition, "hypotheses": self.hypotheses,
                "entries": [e.as_dict() for e in self.entries], "verdict": self.verdict,
                "class_label": self.class_label, "fast_path": self.fast_path}


# --------------------------------------------------------------------
# Windowed partial sums
# --------------------------------------------------------------------

def _windows(T: float, h: float) -> List[float]:
    out, k = [], 1
    while T * 2.0 ** -k >= 4.0 * h - 1e-12:
        out.append(T * 2.0 ** -k)
        k += 1
    if len(out) < 4:
        raise ValueError(f"condition grid too coarse: need T / h >= 64, got {T / h:g}")
    return out


def _entry(name: str, windows: Sequence[float], partials: Sequence[float], n: int) -> ConditionEntry:
    levels = [-math.log2(w) for w in windows]
    res: QuadResult = refinement_verdict(levels, partials, label=name)
    trace = [{"window": w, "n": n, "partial": float(v)} for w, v in zip(windows, partials)]
    log.debug("CONDITIONS | %s | finite=%s | %s", name, res.finite, res.reason)
    return ConditionEntry(name, res.finite, res.value, trace, res.reason)


def _windowed(name: str, contrib: np.ndarray, dist: np.ndarray, windows: Sequence[float], n: int) -> ConditionEntry:
    c = np.asarray(contrib, dtype=float).ravel()
    d = np.asarray(dist, dtype=float).ravel()
    keep = c != 0.0
    c, d = c[keep], d[keep]
    order = np.argsort(-d, kind="stable")
    csum = np.cumsum(c[order])
    neg = -d[order]
    partials = []
    for w in windows:
        count = int(np.searchsorted(neg, -w, side="right"))
        partials.append(float(csum[count - 1]) if count > 0 else 0.0)
    return _entry(name, windows, partials, n)


class _Tables:
    """Grid tables shared by the condition items."""

    def __init__(self, kernel: VolterraKernel, grid: Grid):
        self.grid = grid
        self.n = grid.n
        self.h = grid.dt
        self.T = grid.t_end
        self.G = np.asarray(kernel_matrix(kernel, grid))            # (n+1, n)
        self.nodes = grid.times                                      # t_0..t_n
        self.outer = np.full(self.n, self.h)                         # s cells at t_0..t_{n-1}
        self.outer[0] = 0.5 * self.h

        a = np.arange(self.n)[:, None]
        b = np.arange(self.n + 1)[None, :]
        self.lag = (b - a).astype(float)                             # (n, n+1)
        self.upper = b > a

    def end_weights(self, mu: float) -> np.ndarray:
        """int over the s cell around t_a of (T - s)^mu, a = 0..n-1."""
        h, t = self.h, self.nodes[:-1]
        lo = np.maximum(t - 0.5 * h, 0.0)
        hi = t + 0.5 * h
        return power_cell(mu, self.T - hi, self.T - lo)

    def lag_weights(self, mu: float) -> np.ndarray:
        """int over the u cell around t_b of (u - t_a)^mu, zero unless b > a."""
        h = self.h
        lo = np.where(self.upper, (self.lag - 0.5) * h, 1.0)
        last = np.arange(self.n + 1)[None, :] == self.n
        hi = np.where(self.upper, np.where(last, self.lag * h, (self.lag + 0.5) * h), 1.0)
        return np.where(self.upper, power_cell(mu, lo, hi), 0.0)


# --------------------------------------------------------------------
# (D_2)
# --------------------------------------------------------------------

def _d2_entries(tab: _Tables, alpha: float, dE: np.ndarray, prefix: str) -> List[ConditionEntry]:
    n, h, G = tab.n, tab.h, tab.G
    windows = _windows(tab.T, h)
    a_idx = np.arange(n)
    j_idx = np.arange(n)
    end_dist = tab.T - tab.nodes[:-1]
    W_end = tab.end_weights(2 * alpha - 2)
    g_end = G[n]

    # 1: int (t-s)^(2a-2) int_s^t g^2(t,u) dE_u ds
    sq = g_end ** 2 * dE
    A1 = np.cumsum(sq[::-1])[::-1]
    e1 = _windowed(f"{prefix}1", W_end * A1, end_dist, windows, n)

    # 2: int (t-s)^(2a-2) int_0^s (g(t,u) - g(s,u))^2 dE_u ds
    below = j_idx[None, :] < a_idx[:, None]
    A2 = np.sum(np.where(below, (g_end[None, :] - G[:n]) ** 2, 0.0) * dE[None, :], axis=1)
    e2 = _windowed(f"{prefix}2", W_end * A2, end_dist, windows, n)

    # 3: int int_s^t (int_v^t g(u,v) (u-s)^(a-2) du)^2 dE_v ds
    Wt = tab.lag_weights(alpha - 2)
    K3 = Wt @ G                                                     # (n, n): s = t_a, v = midpoint_j
    v_dist = (j_idx[None, :] - a_idx[:, None] + 0.5) * h
    on_or_above = j_idx[None, :] >= a_idx[:, None]
    c3 = np.where(on_or_above, tab.outer[:, None] * K3 ** 2 * dE[None, :], 0.0)
    e3 = _windowed(f"{prefix}3", c3, np.where(on_or_above, v_dist, -1.0), windows, n)

    # 4: int int_0^s (int_s^t (g(u,v) - g(s,v)) (u-s)^(a-2) du)^2 dE_v ds, cut in u - s
    partials = []
    u_dist = tab.lag * h
    for w in windows:
        Wk = np.where(u_dist >= w - 1e-12, Wt, 0.0)
        K4 = Wk @ G - G[:n] * Wk.sum(axis=1)[:, None]
        partials.append(float(np.sum(np.where(below, tab.outer[:, None] * K4 ** 2 * dE[None, :], 0.0))))
    e4 = _entry(f"{prefix}4", windows, partials, n)
    return [e1, e2, e3, e4]


def check_D2(h: IntegratorHypotheses) -> ConditionReport:
    """Assumptions (D_2) for Y = int g dM with E_t = E<M>_t, evaluated at t = T."""
    E = h.martingale()
    grid = h.grid
    tab = _Tables(h.kernel, grid)
    dE = np.diff(E.E(grid.times))
    entries = _d2_entries(tab, h.alpha, dE, "D2_")
    hyp = h.as_dict()
    hyp["p"] = 2.0
    hyp["E"] = E.as_dict()
    report = ConditionReport("D2", hyp, entries)
    log.info("CONDITIONS | D2 | %s | alpha=%s | verdict=%s", h.kernel.label, h.alpha, report.verdict)
    return report


# --------------------------------------------------------------------
# (D_p)
# --------------------------------------------------------------------

def _gate(h: IntegratorHypotheses) -> str:
    if not isinstance(h.noise, LevyTriplet):
        raise PreconditionError("(D_p) for p != 2 needs a Levy triplet as noise", flag="noise")
    regime = regime_for(h.p)
    require(noise_flags(h.noise, h.p), regime, f"(D_p) with p={h.p}")
    return regime


def check_Dp(h: IntegratorHypotheses, enforce: bool = True) -> ConditionReport:
    """
    Assumptions (D_p) at t = T. For p = 2 the martingale form (D_2) with
    E_t = (a + int x^2 pi) t is evaluated instead.
    """
    if math.isinf(h.p):
        raise ValueError("use check_Dinf for p = inf")
    if h.p == 2:
        report = check_D2(h) if enforce or isinstance(h.noise, MartingaleDescriptor) else _d2_ungated(h)
        report.condition = "Dp"
        return report
    if enforce:
        _gate(h)

    p, alpha = h.p, h.alpha
    grid = h.grid
    tab = _Tables(h.kernel, grid)
    n, step, G = tab.n, tab.h, tab.G
    windows = _windows(tab.T, step)
    a_idx = np.arange(n)
    end_dist = tab.T - tab.nodes[:-1]
    W_end = tab.end_weights(p * alpha - p)
    g_end = G[n]

    absp = np.abs(G) ** p * step                                   # (n+1, n)
    A1 = np.cumsum(np.abs(g_end[::-1]) ** p * step)[::-1]
    e1 = _windowed("Dp1", W_end * A1, end_dist, windows, n)

    below = a_idx[None, :] < a_idx[:, None]
    A2 = np.sum(np.where(below, np.abs(g_end[None, :] - G[:n]) ** p, 0.0), axis=1) * step
    e2 = _windowed("Dp2", W_end * A2, end_dist, windows, n)

    Wt = tab.lag_weights(p * alpha - 2 * p)
    suffix = np.cumsum(absp[:, ::-1], axis=1)[:, ::-1]             # suffix[b, a] = sum_{j>=a} |g(t_b, v_j)|^p h
    C3 = suffix[:, :n].T                                           # (n, n+1): [a, b]
    u_dist = np.where(tab.upper, tab.lag * step, -1.0)
    e3 = _windowed("Dp3", tab.outer[:, None] * Wt * C3, u_dist, windows, n)

    A4 = np.zeros((n, n + 1))
    for a in range(1, n):
        diff = np.abs(G[a + 1:, :a] - G[a, :a][None, :]) ** p
        A4[a, a + 1:] = diff.sum(axis=1) * step
    e4 = _windowed("Dp4", tab.outer[:, None] * Wt * A4, u_dist, windows, n)

    report = ConditionReport("Dp", h.as_dict(), [e1, e2, e3, e4])
    log.info("CONDITIONS | Dp | p=%s | %s | alpha=%s | verdict=%s", p, h.kernel.label, alpha, report.verdict)
    return report


def _d2_ungated(h: IntegratorHypotheses) -> ConditionReport:
    m2 = pi_abs_moment(h.noise, 2.0)
    if not m2.finite:
        raise PreconditionError("(D_2) needs a finite second moment of pi", flag="moment_finite")
    E = MartingaleDescriptor.linear(h.noise.diffusion_a + m2.value)
    return check_D2(IntegratorHypotheses(2.0, h.alpha, E, h.kernel, h.T, h.n))


# --------------------------------------------------------------------
# (D_inf)
# --------------------------------------------------------------------

def corollary_applies(kernel: VolterraKernel, alpha: float, beta: float, rho: float) -> bool:
    """Bounded, half-Hoelder-in-t kernel with alpha > 1/2, rho >= 2/(2 alpha - 1), 1/rho + 1 - alpha < beta < 1/2."""
    ann = kernel.annotations
    if "bound" not in ann or "half_holder" not in ann:
        return False
    if alpha <= 0.5:
        return False
    return rho >= 2.0 / (2.0 * alpha - 1.0) and 1.0 / rho + 1.0 - alpha < beta < 0.5


def check_Dinf(h: IntegratorHypotheses, beta: float, rho: float, fast_path: bool = True) -> ConditionReport:
    """
    Assumptions (D_inf) over the region x < y, for a continuous martingale
    noise with bounded density of <M>.
    """
    if rho < 1:
        raise ValueError(f"rho must be >= 1, got {rho}")
    if not beta > 1.0 / rho + 1.0 - h.alpha:
        raise PreconditionError(f"(D_inf) needs beta > 1/rho + 1 - alpha, got beta={beta}", flag="beta")
    if isinstance(h.noise, LevyTriplet):
        if h.noise.levy_measure.kind != "none":
            raise PreconditionError("(D_inf) needs a continuous martingale noise", flag="continuous")
    elif not h.noise.continuous:
        raise PreconditionError("(D_inf) needs a continuous martingale noise", flag="continuous")
    elif not math.isfinite(h.noise.density_bound):
        raise PreconditionError("(D_inf) needs a bounded density of <M>", flag="bounded_density")

    hyp = {**h.as_dict(), "p": "inf", "beta": beta, "rho": rho}
    if fast_path and corollary_applies(h.kernel, h.alpha, beta, rho):
        entries = [ConditionEntry(name, True, math.nan, [], "bounded half-Hoelder kernel")
                   for name in ("Dinf_1", "Dinf_2")]
        log.info("CONDITIONS | Dinf | %s | fast path", h.kernel.label)
        return ConditionReport("Dinf", hyp, entries, fast_path=True)

    tab = _Tables(h.kernel, h.grid)
    n, step, G = tab.n, tab.h, tab.G
    windows = _windows(tab.T, step)
    Wd = tab.outer[:, None] * tab.lag_weights(-beta * rho - 1.0)     # x = t_a, y cell around t_b

    sq = G ** 2 * step                                              # (n+1, n)
    suffix = np.cumsum(sq[:, ::-1], axis=1)[:, ::-1]
    inner1 = suffix[:, :n].T                                        # [a, b] = int_x^y g^2(y, u) du
    prefix = np.concatenate([np.zeros((n + 1, 1)), np.cumsum(sq, axis=1)], axis=1)
    gram = G[:n] @ G.T * step                                       # [a, b] = sum_{j<a} g(t_a) g(t_b) h
    own = prefix[np.arange(n), np.arange(n)][:, None]               # sum_{j<a} g(t_a, v_j)^2 h
    inner2 = np.maximum(prefix[:, :n].T - 2.0 * gram + own, 0.0)    # [a, b] = int_0^x (g(y,u) - g(x,u))^2 du

    dist = np.where(tab.upper, tab.lag * step, -1.0)
    e1 = _windowed("Dinf_1", Wd * inner1 ** (rho / 2.0), dist, windows, n)
    e2 = _windowed("Dinf_2", Wd * inner2 ** (rho / 2.0), dist, windows, n)
    report = ConditionReport("Dinf", hyp, [e1, e2])
    log.info("CONDITIONS | Dinf | %s | beta=%s | rho=%s | verdict=%s", h.kernel.label, beta, rho, report.verdict)
    return report


# --------------------------------------------------------------------
# Subordinated Wiener noise
# --------------------------------------------------------------------

def check_wiener_subordinated(
    sub: SubordinatorSpec,
    kernel: VolterraKernel,
    p: float,
    alpha: float,
    T: float = 1.0,
    n: Optional[int] = None,
) -> ConditionReport:
    """(D_p) for Y = int g dW^L: a = 0 when p <= 2 and int s^(p/2) nu(ds) finite."""
    if p <= 2 and sub.drift != 0:
        raise PreconditionError("subordinated Wiener noise with p <= 2 needs zero subordinator drift", flag="a_zero")
    moment = nu_moment(sub, p / 2.0)
    if not moment.finite:
        raise PreconditionError(f"int s^{p / 2} nu(ds) is infinite for {sub.label}", flag="moment_finite")
    triplet = LevyTriplet.subordinated(sub)
    report = check_Dp(IntegratorHypotheses(p, alpha, triplet, kernel, T, n), enforce=False)
    report.condition = "wiener_subordinated"
    report.hypotheses["noise"] = {"subordinator": sub.label}
    return report


# --------------------------------------------------------------------
# Example-1 integrals
# --------------------------------------------------------------------

def frac_integral_identity(H: float, z: float, v: float) -> dict:
    """
    int_0^z u^(1-2H) (z-u)^(H-3/2) (v-u)^(H-3/2) du against the shape
    v^(1/2-H) z^(1/2-H) (v-z)^(2H-2); their ratio is B(2-2H, H-1/2).
    """
    if not 0.5 < H < 1.0:
        raise ValueError(f"H must lie in (1/2, 1), got {H}")
    if not 0 < z < v:
        raise ValueError(f"need 0 < z < v, got z={z}, v={v}")
    lhs = quad(lambda u: (v - u) ** (H - 1.5), 0.0, z, weight="alg", wvar=(1.0 - 2.0 * H, H - 1.5))
    shape = v ** (0.5 - H) * z ** (0.5 - H) * (v - z) ** (2.0 * H - 2.0)
    return {"lhs": lhs, "shape": shape, "constant": lhs / shape, "closed_form": beta_fn(2.0 - 2.0 * H, H - 0.5)}


def reduction_J12(H: float, alpha: float, t: float) -> float:
    """int_0^t (t-s)^(2H+2alpha-2) ds; infinite when 2H + 2alpha - 2 <= -1."""
    e = 2.0 * H + 2.0 * alpha - 1.0
    return t ** e / e if e > 0 else math.inf


def example1_J_integrals(H: float, alpha: float, t: float = 1.0, n: Optional[int] = None,
                         probes: Sequence[float] = (0.5, 1.0, 2.0)) -> dict:
    """J_1..J_4 for the example_one kernel with j = 1 and E_t = t, plus the J_1 + J_2 reduction check."""
    if not 0.5 < H < 1.0:
        raise ValueError(f"H must lie in (1/2, 1), got {H}")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    kernel = VolterraKernel.example_one(H)
    E = MartingaleDescriptor.linear(1.0)

    def run(horizon: float) -> ConditionReport:
        return check_D2(IntegratorHypotheses(2.0, alpha, E, kernel, horizon, n))

    report = run(t)
    J = {f"J{i + 1}": (e.value if e.finite else math.inf) for i, e in enumerate(report.entries)}
    ratios = []
    for probe in probes:
        rep = report if probe == t else run(probe)
        e1, e2 = rep.entries[0], rep.entries[1]
        red = reduction_J12(H, alpha, probe)
        value = e1.value + e2.value if (e1.finite and e2.finite) else math.inf
        ratios.append(value / red if math.isfinite(value) and math.isfinite(red) else math.nan)
    finite_ratios = [r for r in ratios if math.isfinite(r)]
    flat = bool(finite_ratios) and len(finite_ratios) == len(ratios) and \
        max(finite_ratios) <= 1.2 * min(finite_ratios)
    return {**J, "all_finite": report.verdict, "entries": [e.as_dict() for e in report.entries],
            "reduction": {"probes": list(probes), "ratios": ratios, "flat": flat}}


# --------------------------------------------------------------------
# Garsia-Rodemich-Rumsey diagnostic
# --------------------------------------------------------------------

def _xi_power(Y: np.ndarray, dt: float, beta: float, rho: float) -> np.ndarray:
    """Per path: int int |Y_x - Y_y|^rho / |x - y|^(beta rho + 1) dx dy on the grid."""
    n = Y.shape[1] - 1
    total = np.zeros(Y.shape[0])
    for m in range(1, n + 1):
        d = np.abs(Y[:, m:] - Y[:, :-m]) ** rho
        total += 2.0 * d.sum(axis=1) * dt * dt / (m * dt) ** (beta * rho + 1.0)
    return total


def grr_holder_diagnostic(ensemble: np.ndarray, dt: float, beta: float, rho: float) -> dict:
    """E xi^rho at n and n/2 plus the variogram Hoelder slope."""
    Y = np.atleast_2d(np.asarray(ensemble, dtype=float))
    fine = float(np.mean(_xi_power(Y, dt, beta, rho)))
    coarse = float(np.mean(_xi_power(Y[:, ::2], 2.0 * dt, beta, rho)))
    ratio = fine / coarse if coarse > 0 else (1.0 if fine == 0 else math.inf)
    finite_looking = bool(math.isfinite(fine) and ratio < settings().divergence_ratio)
    fit: SlopeFit = holder_exponent_estimate(Y, dt=dt)
    target = beta - 1.0 / rho
    return {
        "xi_moment": fine,
        "xi_moment_coarse": coarse,
        "ratio": ratio,
        "finite_looking": finite_looking,
        "holder_slope": fit.slope,
        "holder_stderr": fit.stderr,
        "target": target,
        "slope_ok": bool(fit.slope >= target - 0.1) if finite_looking else None,
    }
