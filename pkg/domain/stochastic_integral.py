"""
domain.stochastic_integral
--------------------------
Integrals of deterministic functions against Lévy drivers.

  - integrability through the r(u) criterion
  - left-point discrete integral on sampled paths
  - law of the integral (characteristic exponent) and exact second moment
  - a priori p-th moment bounds and their Monte Carlo scaling check
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from . import Grid, GridPath, PreconditionError
from .estimators import flat_ratio, mc_abs_moment
from .hypotheses import applicable_bounds, noise_flags
from .levy_noise import (
    LevyTriplet,
    Source,
    SubordinatorSpec,
    as_triplet,
    characteristic_exponent,
    nu_moment,
    pi_abs_moment,
    sample_ensemble,
    tau,
)
from .quadrature import QuadResult, integrate_interval, quad

log = logging.getLogger(__name__)

SCALES = (1.0, 2.0, 4.0, 8.0)


# --------------------------------------------------------------------
# Deterministic integrands
# --------------------------------------------------------------------

@dataclass(frozen=True)
class DeterministicFunction:
    """
    Integrand on [0, T]: either a step function (levels on
    [breakpoints[k], breakpoints[k+1])) or a vectorized callable with
    optional Hölder / L_p annotations.
    """
    T: float
    kind: str = "callable"
    breakpoints: tuple = ()
    levels: tuple = ()
    fn: Optional[Callable] = None
    holder: Optional[float] = None
    lp_norms: Dict[float, float] = field(default_factory=dict, hash=False, compare=False)
    label: str = ""

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError(f"function domain needs T > 0, got {self.T}")
        if self.kind == "step":
            b = np.asarray(self.breakpoints, dtype=float)
            if b.size != len(self.levels) + 1:
                raise ValueError("step function needs len(breakpoints) == len(levels) + 1")
            if not (np.all(np.diff(b) > 0) and b[0] >= 0 and b[-1] <= self.T):
                raise ValueError(f"step breakpoints must increase strictly within [0, T], got {self.breakpoints}")
        elif self.kind == "callable":
            if self.fn is None:
                raise ValueError("callable function needs fn")
            for p, norm in self.lp_norms.items():
                actual = self.lp_norm(p, use_annotation=False)
                if not math.isclose(actual, norm, rel_tol=1e-6):
                    raise ValueError(f"annotated L_{p} norm {norm} does not match quadrature {actual}")
        else:
            raise ValueError(f"Unknown function kind: {self.kind}")

    # --- constructors ---

    @classmethod
    def step(cls, breakpoints: Sequence[float], levels: Sequence[float], T: Optional[float] = None) -> "DeterministicFunction":
        T = float(breakpoints[-1]) if T is None else float(T)
        return cls(T=T, kind="step", breakpoints=tuple(float(b) for b in breakpoints),
                   levels=tuple(float(v) for v in levels), label="step")

    @classmethod
    def constant(cls, c: float, T: float = 1.0) -> "DeterministicFunction":
        return cls.step([0.0, T], [c], T)

    @classmethod
    def indicator(cls, a: float, b: float, T: float) -> "DeterministicFunction":
        pts, lv = [0.0], []
        if a > 0:
            pts.append(a)
            lv.append(0.0)
        pts.append(b)
        lv.append(1.0)
        if b < T:
            pts.append(T)
            lv.append(0.0)
        return cls.step(pts, lv, T)

    @classmethod
    def from_callable(cls, fn: Callable, T: float, holder: Optional[float] = None,
                      lp_norms: Optional[dict] = None, label: str = "callable") -> "DeterministicFunction":
        return cls(T=float(T), kind="callable", fn=fn, holder=holder, lp_norms=dict(lp_norms or {}), label=label)

    # --- evaluation ---

    def __call__(self, s):
        s_arr = np.asarray(s, dtype=float)
        if self.kind == "step":
            b = np.asarray(self.breakpoints)
            lv = np.append(np.asarray(self.levels), self.levels[-1])
            idx = np.clip(np.searchsorted(b, s_arr, side="right") - 1, 0, len(self.levels))
            inside = (s_arr >= b[0]) & (s_arr <= b[-1])
            out = np.where(inside, lv[idx], 0.0)
        else:
            out = np.asarray(self.fn(s_arr), dtype=float) * np.ones_like(s_arr)
        return float(out) if out.ndim == 0 else out

    def pieces(self):
        """(start, end, level) triples of a step function."""
        if self.kind != "step":
            raise ValueError("pieces() only exists for step functions")
        b = self.breakpoints
        return [(b[k], b[k + 1], self.levels[k]) for k in range(len(self.levels))]

    def scaled(self, c: float) -> "DeterministicFunction":
        if self.kind == "step":
            return DeterministicFunction.step(self.breakpoints, [c * v for v in self.levels], self.T)
        fn = self.fn
        return DeterministicFunction.from_callable(lambda s: c * fn(s), self.T, self.holder,
                                                   label=f"{c}*{self.label}")

    def integrate(self, h: Callable[[float], float], rel_tol: float = 1e-8) -> QuadResult:
        """Integral over [0, T] of h(f(s)) (exact for steps)."""
        if self.kind == "step":
            parts = [h(level) * (end - start) for start, end, level in self.pieces()]
            if not all(math.isfinite(p) for p in parts):
                return QuadResult(math.inf, False, [], {}, reason="infinite level contribution")
            return QuadResult(math.fsum(parts), True, [], {"pieces": len(parts)}, reason="exact")
        return integrate_interval(lambda s: h(float(self.fn(s))), 0.0, self.T, rel_tol=rel_tol, label=self.label)

    def lp_norm(self, p: float, use_annotation: bool = True) -> float:
        if use_annotation and p in self.lp_norms:
            return self.lp_norms[p]
        res = self.integrate(lambda u: abs(u) ** p)
        return res.value ** (1.0 / p) if res.finite else math.inf


# --------------------------------------------------------------------
# r(u) criterion
# --------------------------------------------------------------------

def _jump_parts(triplet: LevyTriplet, u: float) -> tuple[float, float]:
    """(integral of min((xu)^2, 1), integral of tau(xu) - u tau(x)) against pi."""
    pi = triplet.levy_measure
    if u == 0 or pi.kind == "none":
        return 0.0, 0.0
    if pi.kind == "atoms":
        xs = np.array([x for x, _ in pi.atoms])
        ms = np.array([m for _, m in pi.atoms])
        sq = math.fsum(ms * np.minimum((xs * u) ** 2, 1.0))
        comp = math.fsum(ms * (tau(xs * u) - u * tau(xs)))
        return sq, comp

    cut = 1.0 / abs(u)
    h_pos = lambda x: float(pi.pdf(x))
    h_neg = lambda x: float(pi.pdf(-x))
    sides = (h_pos,) if pi.symmetric else (h_pos, h_neg)
    sq = 0.0
    for h in sides:
        sq += quad(lambda x: (x * u) ** 2 * h(x), 0.0, cut) + quad(h, cut, np.inf)
    if pi.symmetric:
        return 2.0 * sq, 0.0
    start = min(1.0, cut)
    g = lambda x: (float(tau(x * u)) - u * float(tau(x))) * (h_pos(x) - h_neg(x))
    comp = quad(g, start, max(1.0, cut)) + quad(g, max(1.0, cut), np.inf)
    return sq, comp


def r_function(triplet: LevyTriplet, u: float) -> float:
    sq, comp = _jump_parts(triplet, u)
    return triplet.diffusion_a * u * u + sq + abs(triplet.drift_b * u + comp)


@dataclass(frozen=True)
class RCriterion:
    value: float
    integrable: bool
    trace: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"value": self.value if self.integrable else math.inf, "integrable": self.integrable,
                "trace": [list(t) for t in self.trace]}


def r_criterion(triplet: LevyTriplet, f: DeterministicFunction) -> RCriterion:
    """Z-integrability: the integral of r(f(s)) over [0, T] is finite."""
    res = f.integrate(lambda u: r_function(triplet, u))
    log.debug("INTEGRAL | r-criterion | %s | value=%s | %s", triplet.label, res.value, res.reason)
    return RCriterion(res.value if res.finite else math.inf, res.finite, res.trace)


# --------------------------------------------------------------------
# Discrete integral
# --------------------------------------------------------------------

def _check_domain(f: DeterministicFunction, t0: float, t_end: float) -> None:
    tol = 1e-12 * max(1.0, f.T)
    if t0 < -tol or t_end > f.T + tol:
        raise ValueError(f"path spans [{t0}, {t_end}] but the integrand lives on [0, {f.T}]")


def integrate_deterministic(f: DeterministicFunction, Z: GridPath) -> float:
    """Left-point sum of f(t_j) (Z_{t_j+1} - Z_{t_j})."""
    _check_domain(f, Z.t0, Z.t_end)
    weights = np.asarray(f(Z.times[:-1]), dtype=float)
    return math.fsum((weights * Z.increments).tolist())


def integrate_ensemble(f: DeterministicFunction, ensemble: np.ndarray, grid: Grid) -> np.ndarray:
    """Left-point integral for every row of a (paths, n+1) ensemble."""
    _check_domain(f, grid.t0, grid.t_end)
    weights = np.asarray(f(grid.times[:-1]), dtype=float)
    return np.diff(np.asarray(ensemble, dtype=float), axis=1) @ weights


# --------------------------------------------------------------------
# Law of the integral
# --------------------------------------------------------------------

@dataclass(frozen=True)
class IntegralLawSpec:
    b_f: float
    a_f: float
    triplet: LevyTriplet
    f: DeterministicFunction

    def _psi(self, v: float) -> complex:
        route = "laplace" if self.triplet.levy_measure.kind == "subordinated" else "direct"
        return characteristic_exponent(self.triplet, v, route=route)

    def exponent(self, lam: float) -> complex:
        """Integral over [0, T] of Psi(lam f(s))."""
        if lam == 0:
            return 0j
        if self.f.kind == "step":
            return complex(sum((end - start) * self._psi(lam * level) for start, end, level in self.f.pieces()))
        re = quad(lambda s: self._psi(lam * float(self.f.fn(s))).real, 0.0, self.f.T)
        im = quad(lambda s: self._psi(lam * float(self.f.fn(s))).imag, 0.0, self.f.T)
        return complex(re, im)

    def cf(self, lam: float) -> complex:
        return complex(np.exp(self.exponent(lam)))

    def pushforward_mass(self, lo: float, hi: float) -> float:
        """F_f((lo, hi]) for an interval away from 0."""
        if lo < 0 < hi or not lo < hi:
            raise ValueError(f"pushforward mass needs an interval (lo, hi] excluding 0, got ({lo}, {hi}]")
        pi = self.triplet.levy_measure

        def mass_at(v: float) -> float:
            if v == 0 or pi.kind == "none":
                return 0.0
            a, b = sorted((lo / v, hi / v))
            if pi.kind == "atoms":
                return math.fsum(m for x, m in pi.atoms if a < x <= b)
            return quad(lambda x: float(pi.pdf(x)), a, b)

        if self.f.kind == "step":
            return math.fsum((end - start) * mass_at(level) for start, end, level in self.f.pieces())
        return quad(lambda s: mass_at(float(self.f.fn(s))), 0.0, self.f.T)


def _big_jump_drift(triplet: LevyTriplet) -> float:
    """Integral of (x - tau(x)) pi(dx)."""
    pi = triplet.levy_measure
    if pi.kind == "none" or pi.symmetric:
        return 0.0
    if pi.kind == "atoms":
        return math.fsum(m * (x - tau(x)) for x, m in pi.atoms)
    return quad(lambda x: (x - 1.0) * (float(pi.pdf(x)) - float(pi.pdf(-x))), 1.0, np.inf)


def integral_law(triplet: LevyTriplet, f: DeterministicFunction) -> IntegralLawSpec:
    crit = r_criterion(triplet, f)
    if not crit.integrable:
        raise PreconditionError(f"{f.label} is not integrable against {triplet.label}", flag="r_criterion")
    b_part = f.integrate(lambda u: triplet.drift_b * u + _jump_parts(triplet, u)[1])
    a_f = triplet.diffusion_a * f.lp_norm(2) ** 2
    return IntegralLawSpec(b_f=b_part.value, a_f=a_f, triplet=triplet, f=f)


# --------------------------------------------------------------------
# Moments
# --------------------------------------------------------------------

def second_moment_exact(triplet: LevyTriplet, f: DeterministicFunction) -> float:
    """E|int f dZ|^2 = ||f||_2^2 (a + int x^2 pi(dx)) for b = 0 and symmetric pi."""
    if triplet.drift_b != 0:
        raise PreconditionError("exact second moment needs b = 0", flag="b_zero")
    if not triplet.symmetric:
        raise PreconditionError("exact second moment needs a symmetric Levy measure", flag="symmetric")
    m2 = pi_abs_moment(triplet, 2.0)
    if not m2.finite:
        raise PreconditionError("exact second moment needs a finite second moment of pi", flag="moment_finite")
    return f.lp_norm(2) ** 2 * (triplet.diffusion_a + m2.value)


def second_moment_general(triplet: LevyTriplet, f: DeterministicFunction) -> float:
    """Second moment with drift: (int f)^2 (b + int (x - tau(x)) pi)^2 + ||f||_2^2 (a + int x^2 pi)."""
    m2 = pi_abs_moment(triplet, 2.0)
    if not m2.finite:
        raise PreconditionError("second moment needs a finite second moment of pi", flag="moment_finite")
    mean_rate = triplet.drift_b + _big_jump_drift(triplet)
    integral_f = f.integrate(lambda u: u).value
    return (integral_f * mean_rate) ** 2 + f.lp_norm(2) ** 2 * (triplet.diffusion_a + m2.value)


@dataclass(frozen=True)
class MomentBound:
    p: float
    terms: Dict[str, float]
    applicable: Dict[str, bool]
    flags: Dict[str, bool]

    @property
    def bound(self) -> Optional[str]:
        primary = "small_p" if self.p < 2 else "large_p"
        for name in (primary, "drift"):
            if self.applicable.get(name):
                return name
        return None

    @property
    def any_applicable(self) -> bool:
        return self.bound is not None

    @property
    def rhs(self) -> float:
        name = self.bound
        if name is None:
            return math.nan
        if name == "small_p":
            return self.terms["lp_jump"]
        if name == "large_p":
            return self.terms["l2_diffusion"] + self.terms["lp_jump"]
        return math.fsum(self.terms.values())

    def as_dict(self) -> dict:
        return {"p": self.p, "terms": dict(self.terms), "applicable": dict(self.applicable),
                "flags": dict(self.flags), "bound": self.bound,
                "rhs": self.rhs if self.any_applicable else None}


def moment_bound_rhs(triplet: LevyTriplet, f: DeterministicFunction, p: float) -> MomentBound:
    """Structural right-hand sides of the a priori p-th moment estimates."""
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    flags = noise_flags(triplet, p)
    moment = pi_abs_moment(triplet, p)
    terms = {
        "lp_jump": f.lp_norm(p) ** p * moment.value if moment.finite else math.inf,
        "l2_diffusion": triplet.diffusion_a ** (p / 2.0) * f.lp_norm(2) ** p,
        "l1_drift": abs(triplet.drift_b) ** p * f.lp_norm(1) ** p,
    }
    return MomentBound(p=p, terms=terms, applicable=applicable_bounds(flags, p), flags=flags)


def subordinated_moment_bound_rhs(sub: SubordinatorSpec, f: DeterministicFunction, p: float) -> MomentBound:
    """
    Moment estimates for the Wiener process time-changed by a subordinator,
    written through the subordinator itself: the drift plays the diffusion
    coefficient and s^(p/2) nu(ds) the p-th jump moment.
    """
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    moment = nu_moment(sub, p / 2.0)
    flags = {"a_zero": sub.drift == 0.0, "moment_finite": moment.finite}
    terms = {
        "lp_jump": f.lp_norm(p) ** p * moment.value if moment.finite else math.inf,
        "l2_diffusion": sub.drift ** (p / 2.0) * f.lp_norm(2) ** p,
    }
    if p < 2:
        applicable = {"small_p": flags["a_zero"] and flags["moment_finite"], "large_p": False}
    else:
        applicable = {"small_p": False, "large_p": flags["moment_finite"]}
    if p == 2.0:
        mean_jump = nu_moment(sub, 1.0)
        terms["l2_mean_jump"] = f.lp_norm(2) ** 2 * mean_jump.value if mean_jump.finite else math.inf
    return MomentBound(p=p, terms=terms, applicable=applicable, flags=flags)


def kernel_moment_bound_rhs(triplet: LevyTriplet, kernel, t: float, p: float) -> MomentBound:
    """moment_bound_rhs for the frozen kernel f = g(t, .) on [0, t]."""
    if not t > 0:
        raise ValueError(f"kernel bound needs t > 0, got {t}")
    f = DeterministicFunction.from_callable(
        lambda s: kernel.row(t, s).reshape(np.shape(s)), t, label=f"{kernel.label}(t={t})")
    return moment_bound_rhs(triplet, f, p)


@dataclass
class ScalingReport:
    p: float
    ratio_curve: List[Dict[str, float]]
    bounded: bool
    flat: bool
    bound: Dict[str, Any]
    exact_ratio: Optional[Dict[str, float]] = None
    warnings: List[str] = field(default_factory=list)

    @property
    def monotone_bounded(self) -> bool:
        return self.bounded and self.flat

    @property
    def verdict(self) -> bool:
        exact_ok = self.exact_ratio is None or self.exact_ratio["z"] <= 3.0
        return self.monotone_bounded and exact_ok

    def as_dict(self) -> dict:
        return {
            "p": self.p,
            "hypotheses": self.bound["flags"],
            "terms": self.bound["terms"],
            "bound": self.bound["bound"],
            "ratio_curve": self.ratio_curve,
            "bounded": self.bounded,
            "flat": self.flat,
            "monotone_bounded": self.monotone_bounded,
            "exact_ratio": self.exact_ratio,
            "warnings": list(self.warnings),
            "verdict": self.verdict,
        }


def _child_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1)[0])


def verify_moment_scaling(
    source: Source,
    f: DeterministicFunction,
    p: float,
    n_paths: int,
    seed: int,
    n_steps: int = 64,
    threads: Optional[int] = None,
) -> ScalingReport:
    """
    Simulate E|int c f dZ|^p for c in 1, 2, 4, 8 on independent substreams and
    compare with the p-homogeneous right-hand side of the applicable bound.
    """
    triplet = as_triplet(source)
    bound = moment_bound_rhs(triplet, f, p)
    if not bound.any_applicable:
        missing = [k for k, v in bound.flags.items() if not v]
        raise PreconditionError(f"no moment bound applies for p={p}: violated {missing}",
                                flag=missing[0] if missing else None)

    grid = Grid.over(f.T, n_steps)
    curve = []
    first_samples = None
    for i, c in enumerate(SCALES):
        ens = sample_ensemble(source, grid, _child_seed(seed, i), n_paths, threads=threads)
        samples = c * integrate_ensemble(f, ens, grid)
        if i == 0:
            first_samples = samples
        est = mc_abs_moment(samples, p)
        rhs = bound.rhs * c ** p
        curve.append({"c": c, "moment": est.mean, "moment_stderr": est.stderr,
                      "rhs": rhs, "ratio": est.mean / rhs, "ratio_stderr": est.stderr / rhs})
        log.info("SCALING | p=%s | c=%s | moment=%.6g | ratio=%.6g", p, c, est.mean, est.mean / rhs)

    ratios = [row["ratio"] for row in curve]
    errs = [row["ratio_stderr"] for row in curve]
    bounded = all(math.isfinite(r) and r > 0 for r in ratios)
    flat = flat_ratio(ratios, errs, k=3.0)

    warn = []
    if not pi_abs_moment(triplet, 2.0 * p).finite:
        warn.append(f"moment of order {2 * p} is infinite; standard errors of |I|^{p} are unreliable")

    exact = None
    if p == 2 and triplet.drift_b == 0 and triplet.symmetric:
        target = second_moment_exact(triplet, f)
        est = mc_abs_moment(first_samples, 2.0)
        exact = {"target": target, "mean": est.mean, "stderr": est.stderr, "z": est.z(target),
                 "ratio": est.mean / target}

    return ScalingReport(p=p, ratio_curve=curve, bounded=bounded, flat=flat, bound=bound.as_dict(),
                         exact_ratio=exact, warnings=warn)
