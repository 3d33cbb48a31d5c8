"""
domain.levy_noise
-----------------
Lévy triplets, subordinators and their subordinate Wiener processes.

Laws are described by immutable specs; sampling is a pure function of
(spec, grid, seed, path index), so ensembles come out identical whatever
the number of worker threads.
"""
from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Callable, Dict, Optional, Tuple, Union

import numpy as np
import scipy.stats
from scipy.integrate import cumulative_trapezoid
from scipy.special import gamma as gamma_fn

from config import settings, worker_count
from . import Grid, GridPath, NumericalError, PreconditionError
from .quadrature import QuadResult, integrate_half_line, quad

log = logging.getLogger(__name__)

SUBORDINATOR_STREAM = 0
WIENER_STREAM = 1
JUMP_STREAM = 2
GAUSS_STREAM = 3


def tau(z):
    """Truncation function: identity on [-1, 1], sign outside."""
    z = np.asarray(z, dtype=float)
    out = np.where(np.abs(z) <= 1.0, z, np.sign(z))
    return float(out) if out.ndim == 0 else out


def abs_normal_moment(p: float) -> float:
    """E|N|^p for a standard normal N."""
    return 2.0 ** (p / 2.0) * gamma_fn((p + 1.0) / 2.0) / math.sqrt(math.pi)


# --------------------------------------------------------------------
# Subordinator families
# --------------------------------------------------------------------

@dataclass(frozen=True)
class GammaFamily:
    c: float
    rate: float

    def __post_init__(self):
        if not (self.c > 0 and self.rate > 0):
            raise ValueError(f"Gamma subordinator needs c > 0 and rate > 0, got c={self.c}, rate={self.rate}")

    @property
    def label(self) -> str:
        return f"gamma(c={self.c},rate={self.rate})"

    def nu(self, x):
        x = np.asarray(x, dtype=float)
        return self.c * np.exp(-self.rate * x) / x


@dataclass(frozen=True)
class StableFamily:
    index: float   # alpha in (0, 1)
    scale: float   # c1 in Phi(lambda) = c1 lambda^alpha

    def __post_init__(self):
        if not (0.0 < self.index < 1.0):
            raise ValueError(f"stable subordinator needs index in (0,1), got {self.index}")
        if not self.scale > 0:
            raise ValueError(f"stable subordinator needs scale > 0, got {self.scale}")

    @property
    def label(self) -> str:
        return f"stable(index={self.index},scale={self.scale})"

    @property
    def nu_constant(self) -> float:
        return self.scale * self.index / gamma_fn(1.0 - self.index)

    def nu(self, x):
        x = np.asarray(x, dtype=float)
        return self.nu_constant * x ** (-1.0 - self.index)


@dataclass(frozen=True)
class CompoundPoissonFamily:
    rate: float
    jumps: Any  # frozen scipy.stats distribution on [0, inf)
    name: str = "custom"

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError(f"compound Poisson needs rate > 0, got {self.rate}")
        lo, _ = self.jumps.support()
        if lo < 0:
            raise ValueError(f"compound Poisson subordinator needs non-negative jumps, support starts at {lo}")

    @classmethod
    def from_config(cls, rate: float, dist: str, **params) -> "CompoundPoissonFamily":
        try:
            law = getattr(scipy.stats, dist)
        except AttributeError:
            raise ValueError(f"Unknown jump distribution: {dist}")
        return cls(rate=float(rate), jumps=law(**params), name=dist)

    @property
    def label(self) -> str:
        return f"compound_poisson(rate={self.rate},jumps={self.name})"

    def nu(self, x):
        return self.rate * self.jumps.pdf(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class CustomNuFamily:
    density: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"

    def __post_init__(self):
        o, t = integrate_half_line(lambda x: min(x, 1.0) * float(self.density(x)), label="custom nu")
        if not (o.finite and t.finite):
            raise ValueError(f"custom Levy measure {self.name} fails the integral of min(x,1) nu(dx)")

    @classmethod
    def tempered_stable(cls, c: float, index: float, rate: float) -> "CustomNuFamily":
        if not (c > 0 and 0 < index < 1 and rate > 0):
            raise ValueError(f"tempered stable needs c > 0, index in (0,1), rate > 0; got {c}, {index}, {rate}")
        return cls(lambda x: c * np.asarray(x, dtype=float) ** (-1.0 - index) * np.exp(-rate * np.asarray(x, dtype=float)),
                   name=f"tempered_stable(c={c},index={index},rate={rate})")

    @property
    def label(self) -> str:
        return self.name

    def nu(self, x):
        return np.asarray(self.density(np.asarray(x, dtype=float)), dtype=float)


Family = Union[GammaFamily, StableFamily, CompoundPoissonFamily, CustomNuFamily]


@dataclass(frozen=True)
class SubordinatorSpec:
    family: Optional[Family] = None
    drift: float = 0.0

    def __post_init__(self):
        if self.drift < 0:
            raise ValueError(f"subordinator drift must be >= 0, got {self.drift}")

    @property
    def label(self) -> str:
        fam = self.family.label if self.family is not None else "none"
        return f"{fam}+drift({self.drift})" if self.drift else fam

    def nu(self, x):
        if self.family is None:
            return np.zeros_like(np.asarray(x, dtype=float))
        return self.family.nu(x)


# --------------------------------------------------------------------
# Levy measures and triplets
# --------------------------------------------------------------------

@dataclass(frozen=True)
class LevyMeasureSpec:
    kind: str = "none"                       # none | density | atoms | subordinated
    density: Optional[Callable] = None
    atoms: Tuple[Tuple[float, float], ...] = ()
    subordinator: Optional[SubordinatorSpec] = None
    symmetric: bool = True
    singular_at_zero: bool = False
    moment_cache: Dict[Any, Any] = field(default_factory=dict, compare=False, repr=False, hash=False)

    def __post_init__(self):
        if self.kind not in {"none", "density", "atoms", "subordinated"}:
            raise ValueError(f"Unknown Levy measure kind: {self.kind}")
        if self.kind == "atoms":
            for loc, mass in self.atoms:
                if loc == 0 or not mass > 0:
                    raise ValueError(f"atom ({loc}, {mass}) needs a nonzero location and positive mass")
            locs = {loc: mass for loc, mass in self.atoms}
            sym = all(math.isclose(locs.get(-loc, 0.0), mass) for loc, mass in self.atoms)
            object.__setattr__(self, "symmetric", sym)
        elif self.kind == "subordinated":
            if self.subordinator is None:
                raise ValueError("subordinated Levy measure needs a subordinator")
            object.__setattr__(self, "symmetric", True)
        elif self.kind == "density":
            if self.density is None:
                raise ValueError("density Levy measure needs a density callable")
            if self.symmetric:
                probes = np.array([1e-3, 0.1, 0.5, 1.0, 2.0, 10.0])
                if not np.allclose(self.density(probes), self.density(-probes), rtol=1e-12, atol=0.0):
                    raise ValueError("density flagged symmetric but density(x) != density(-x) at probe points")
            for side in (1.0, -1.0):
                o, t = integrate_half_line(lambda x, s=side: min(x * x, 1.0) * float(self.density(s * x)),
                                           label="levy density")
                if not (o.finite and t.finite):
                    raise ValueError("density Levy measure fails the integral of min(x^2,1) pi(dx)")
        elif self.kind == "none":
            object.__setattr__(self, "symmetric", True)

    @classmethod
    def zero(cls) -> "LevyMeasureSpec":
        return cls(kind="none")

    @classmethod
    def from_atoms(cls, atoms) -> "LevyMeasureSpec":
        return cls(kind="atoms", atoms=tuple((float(l), float(m)) for l, m in atoms))

    @classmethod
    def from_density(cls, density: Callable, symmetric: bool = False, singular_at_zero: bool = True) -> "LevyMeasureSpec":
        return cls(kind="density", density=density, symmetric=symmetric, singular_at_zero=singular_at_zero)

    @classmethod
    def subordinated(cls, sub: SubordinatorSpec) -> "LevyMeasureSpec":
        return cls(kind="subordinated", subordinator=sub, singular_at_zero=sub.family is not None)

    @property
    def label(self) -> str:
        if self.kind == "atoms":
            return "atoms(" + ",".join(f"{l}:{m}" for l, m in self.atoms) + ")"
        if self.kind == "subordinated":
            return f"subordinated[{self.subordinator.label}]"
        return self.kind

    def pdf(self, x):
        """Density of pi at x != 0 (density and subordinated kinds)."""
        if self.kind == "density":
            return np.asarray(self.density(np.asarray(x, dtype=float)), dtype=float)
        if self.kind == "subordinated":
            return induced_density(self.subordinator, x)
        raise ValueError(f"Levy measure of kind {self.kind} has no density")


@dataclass(frozen=True)
class LevyTriplet:
    diffusion_a: float = 0.0
    drift_b: float = 0.0
    levy_measure: LevyMeasureSpec = field(default_factory=LevyMeasureSpec.zero)

    def __post_init__(self):
        if self.diffusion_a < 0:
            raise ValueError(f"diffusion coefficient a must be >= 0, got {self.diffusion_a}")

    @classmethod
    def brownian(cls, a: float = 1.0) -> "LevyTriplet":
        return cls(diffusion_a=float(a))

    @classmethod
    def subordinated(cls, sub: SubordinatorSpec) -> "LevyTriplet":
        """W(L_t): diffusion is the subordinator drift, jumps follow the induced density."""
        return cls(diffusion_a=sub.drift, drift_b=0.0, levy_measure=LevyMeasureSpec.subordinated(sub))

    @property
    def symmetric(self) -> bool:
        return self.levy_measure.symmetric

    @property
    def label(self) -> str:
        return f"triplet(a={self.diffusion_a},b={self.drift_b},pi={self.levy_measure.label})"


Source = Union[LevyTriplet, SubordinatorSpec]


def as_triplet(source: Source) -> LevyTriplet:
    return source if isinstance(source, LevyTriplet) else LevyTriplet.subordinated(source)


def subordinator_from_config(cfg: dict) -> SubordinatorSpec:
    """SubordinatorSpec from a {"family": ..., params..., "drift": ...} mapping."""
    family = cfg.get("family")
    drift = float(cfg.get("drift", 0.0))
    if family == "gamma":
        fam = GammaFamily(c=float(cfg["c"]), rate=float(cfg["rate"]))
    elif family == "stable":
        fam = StableFamily(index=float(cfg["index"]), scale=float(cfg.get("scale", 1.0)))
    elif family == "compound_poisson":
        fam = CompoundPoissonFamily.from_config(cfg["rate"], cfg["dist"], **cfg.get("params", {}))
    elif family == "tempered_stable":
        fam = CustomNuFamily.tempered_stable(float(cfg["c"]), float(cfg["index"]), float(cfg["rate"]))
    elif family == "none":
        fam = None
    else:
        raise ValueError(f"Unknown subordinator family: {family}")
    return SubordinatorSpec(family=fam, drift=drift)


def driver_from_config(cfg: dict) -> Tuple[Source, str]:
    """(source, ensemble kind) from a {"kind": ...} driver mapping."""
    kind = cfg.get("kind")
    if kind == "brownian":
        return LevyTriplet.brownian(float(cfg.get("a", 1.0))), "driver"
    if kind == "atoms":
        pi = LevyMeasureSpec.from_atoms(cfg["atoms"])
        return LevyTriplet(float(cfg.get("a", 0.0)), float(cfg.get("b", 0.0)), pi), "driver"
    if kind == "subordinated":
        return subordinator_from_config(cfg["subordinator"]), "driver"
    if kind == "subordinator":
        return subordinator_from_config(cfg["subordinator"]), "subordinator"
    raise ValueError(f"Unknown driver kind: {kind}")


# --------------------------------------------------------------------
# Exponents and densities
# --------------------------------------------------------------------

def laplace_exponent(sub: SubordinatorSpec, lam: float, route: str = "closed") -> float:
    """Phi(lam) = drift*lam + integral of (1 - exp(-lam x)) nu(dx)."""
    if lam < 0:
        raise ValueError(f"Laplace exponent needs lambda >= 0, got {lam}")
    if lam == 0:
        return 0.0
    fam = sub.family
    base = sub.drift * lam
    if fam is None:
        return base
    if route == "closed":
        if isinstance(fam, GammaFamily):
            return base + fam.c * math.log1p(lam / fam.rate)
        if isinstance(fam, StableFamily):
            return base + fam.scale * lam ** fam.index
        if isinstance(fam, CompoundPoissonFamily):
            return base + fam.rate * (1.0 - fam.jumps.expect(lambda x: math.exp(-lam * x)))
    elif route != "quad":
        raise ValueError(f"Unknown route: {route}")
    o, t = integrate_half_line(lambda x: -math.expm1(-lam * x) * float(fam.nu(x)), rel_tol=1e-10,
                               label="laplace exponent")
    if not (o.finite and t.finite):
        raise NumericalError(f"Laplace exponent of {sub.label} at {lam} did not converge",
                             partial=o.value + t.value, trace=o.trace + t.trace)
    return base + o.value + t.value


def induced_density(sub: SubordinatorSpec, x, route: str = "closed"):
    """
    Jump density of W(L): integral over s of the N(0, s) density at x
    against nu(ds). Symmetric in x, undefined at 0.
    """
    x_arr = np.abs(np.asarray(x, dtype=float))
    scalar = x_arr.ndim == 0
    if np.any(x_arr == 0):
        raise ValueError("induced density is undefined at x = 0")
    fam = sub.family
    if fam is None:
        out = np.zeros_like(x_arr)
    elif route == "closed" and isinstance(fam, GammaFamily):
        out = fam.c * np.exp(-math.sqrt(2.0 * fam.rate) * x_arr) / x_arr
    elif route == "closed" and isinstance(fam, StableFamily):
        a = fam.index
        out = fam.nu_constant * (2.0 * math.pi) ** -0.5 * gamma_fn(a + 0.5) * (x_arr * x_arr / 2.0) ** (-0.5 - a)
    elif route in ("closed", "quad"):
        out = np.array([_induced_quad(sub, float(v)) for v in np.atleast_1d(x_arr)]).reshape(x_arr.shape)
    else:
        raise ValueError(f"Unknown route: {route}")
    return float(out) if scalar else out


def _induced_quad(sub: SubordinatorSpec, x: float) -> float:
    def integrand(s: float) -> float:
        return math.exp(-x * x / (2.0 * s)) / math.sqrt(2.0 * math.pi * s) * float(sub.nu(s))

    # ladder below x^2, fixed dyadic pieces on [x^2, 1], ladder past 1
    x2 = x * x
    split = max(x2, 1.0)
    o, _ = integrate_half_line(integrand, split=x2, rel_tol=1e-10, tail=False, label="induced density")
    _, t = integrate_half_line(integrand, split=split, rel_tol=1e-10, origin=False, label="induced density")
    if not (o.finite and t.finite):
        raise NumericalError(f"induced density of {sub.label} at {x} did not converge",
                             partial=o.value + t.value, trace=o.trace + t.trace)
    pieces = int(math.ceil(math.log2(split / x2)))
    edges = np.minimum(x2 * 2.0 ** np.arange(pieces + 1), split)
    middle = math.fsum(quad(integrand, lo, hi) for lo, hi in zip(edges[:-1], edges[1:]) if hi > lo)
    return o.value + middle + t.value


def _fourier_pieces(h: Callable[[float], float], mu: float) -> Tuple[float, float]:
    """
    (integral of (cos(mu x) - 1) h(x), integral of (sin(mu x) - mu tau(x)) h(x))
    over (0, inf). The tails use the oscillatory-weight quadrature.
    """
    cos_head = quad(lambda x: (math.cos(mu * x) - 1.0) * h(x), 0.0, 1.0)
    sin_head = quad(lambda x: (math.sin(mu * x) - mu * x) * h(x), 0.0, 1.0)
    mass_tail = quad(h, 1.0, np.inf)
    cos_tail = quad(h, 1.0, np.inf, weight="cos", wvar=mu)
    sin_tail = quad(h, 1.0, np.inf, weight="sin", wvar=mu)
    return cos_head + cos_tail - mass_tail, sin_head + sin_tail - mu * mass_tail


def characteristic_exponent(triplet: LevyTriplet, mu: float, route: str = "direct") -> complex:
    """Psi(mu) with E exp(i mu Z_t) = exp(t Psi(mu))."""
    if mu == 0:
        return 0j
    a, b, pi = triplet.diffusion_a, triplet.drift_b, triplet.levy_measure
    base = complex(-0.5 * a * mu * mu, b * mu)

    if pi.kind == "none":
        return base
    if pi.kind == "atoms":
        jumps = sum(m * (np.exp(1j * mu * x) - 1.0 - 1j * mu * tau(x)) for x, m in pi.atoms)
        return base + complex(jumps)
    if pi.kind == "subordinated" and route == "laplace":
        sub = pi.subordinator
        lam = 0.5 * mu * mu
        return base - (laplace_exponent(sub, lam) - sub.drift * lam)
    if route not in ("direct", "laplace"):
        raise ValueError(f"Unknown route: {route}")

    key = ("fourier", float(mu))
    cached = pi.moment_cache.get(key)
    if cached is None:
        if pi.symmetric:
            re, _ = _fourier_pieces(lambda x: float(pi.pdf(x)), mu)
            cached = complex(2.0 * re, 0.0)
        else:
            re_p, im_p = _fourier_pieces(lambda x: float(pi.pdf(x)), mu)
            re_n, im_n = _fourier_pieces(lambda x: float(pi.pdf(-x)), mu)
            cached = complex(re_p + re_n, im_p - im_n)
        cached = pi.moment_cache.setdefault(key, cached)
    return base + cached


# --------------------------------------------------------------------
# Moments and conditions
# --------------------------------------------------------------------

@dataclass(frozen=True)
class MomentResult:
    """
    Moment of a Levy measure. `finite` reflects the large-jump tail (moment
    existence); when the small-jump end diverges the value is truncated at
    `truncated_at` and flagged.
    """
    value: float
    finite: bool
    origin_finite: bool = True
    truncated_at: Optional[float] = None
    evidence: Dict[str, Any] = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "value": self.value if self.finite else math.inf,
            "finite": self.finite,
            "origin_finite": self.origin_finite,
            "truncated_at": self.truncated_at,
            "evidence": self.evidence,
        }


def _moment_from_ladders(o: QuadResult, t: QuadResult, truncated: Callable[[], float]) -> MomentResult:
    evidence = {"origin": o.reason, "tail": t.reason,
                "origin_levels": o.counters.get("levels", 0), "tail_levels": t.counters.get("levels", 0)}
    if not t.finite:
        return MomentResult(math.inf, False, o.finite, None, evidence)
    if o.finite:
        return MomentResult(o.value + t.value, True, True, None, evidence)
    eps = settings().small_jump_eps
    return MomentResult(truncated() + t.value, True, False, eps, evidence)


def nu_moment(sub: SubordinatorSpec, q: float) -> MomentResult:
    """Integral of s^q nu(ds) over (0, inf)."""
    if not q > 0:
        raise ValueError(f"nu moment needs q > 0, got {q}")
    fam = sub.family
    eps = settings().small_jump_eps
    if fam is None:
        return MomentResult(0.0, True)
    if isinstance(fam, GammaFamily):
        return MomentResult(fam.c * gamma_fn(q) / fam.rate ** q, True, evidence={"route": "closed"})
    if isinstance(fam, StableFamily):
        a, c = fam.index, fam.nu_constant
        evidence = {"route": "closed"}
        if q >= a:
            return MomentResult(math.inf, False, q > a, None, evidence)
        return MomentResult(c * eps ** (q - a) / (a - q), True, False, eps, evidence)
    if isinstance(fam, CompoundPoissonFamily):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            m = fam.jumps.expect(lambda x: x ** q)
        if not np.isfinite(m) or m > 1e300:
            return MomentResult(math.inf, False, evidence={"route": "jump law"})
        return MomentResult(fam.rate * float(m), True, evidence={"route": "jump law"})

    o, t = integrate_half_line(lambda s: s ** q * float(fam.nu(s)), label=f"nu moment {q}")
    return _moment_from_ladders(o, t, lambda: quad(lambda s: s ** q * float(fam.nu(s)), eps, 1.0))


def pi_abs_moment(triplet: LevyTriplet, p: float) -> MomentResult:
    """Integral of |x|^p pi(dx); cached on the measure."""
    if p < 1:
        raise ValueError(f"pi moment needs p >= 1, got {p}")
    pi = triplet.levy_measure
    key = ("abs_moment", float(p))
    if key in pi.moment_cache:
        return pi.moment_cache[key]

    if pi.kind == "none":
        res = MomentResult(0.0, True)
    elif pi.kind == "atoms":
        res = MomentResult(math.fsum(m * abs(x) ** p for x, m in pi.atoms), True, evidence={"route": "atoms"})
    elif pi.kind == "subordinated":
        # mixture of N(0, s) laws: |x|^p integrates to E|N|^p s^(p/2)
        nm = nu_moment(pi.subordinator, p / 2.0)
        value = abs_normal_moment(p) * nm.value if nm.finite else math.inf
        res = MomentResult(value, nm.finite, nm.origin_finite, nm.truncated_at,
                           {"route": "normal mixture", **nm.evidence})
    else:
        eps = settings().small_jump_eps
        parts = []
        for side in ((1.0,) if pi.symmetric else (1.0, -1.0)):
            fn = lambda x, s=side: x ** p * float(pi.density(s * x))
            o, t = integrate_half_line(fn, label=f"pi moment {p}")
            parts.append(_moment_from_ladders(o, t, lambda fn=fn: quad(fn, eps, 1.0)))
        mult = 2.0 if pi.symmetric else 1.0
        finite = all(r.finite for r in parts)
        res = MomentResult(
            mult * math.fsum(r.value for r in parts) if finite else math.inf,
            finite,
            all(r.origin_finite for r in parts),
            eps if any(r.truncated_at for r in parts) else None,
            {"sides": [r.evidence for r in parts]},
        )
    return pi.moment_cache.setdefault(key, res)


@dataclass(frozen=True)
class ConditionsCD:
    C: bool
    D: bool
    EL1: Optional[float]
    evidence: Dict[str, Any] = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"C": self.C, "D": self.D, "EL1": self.EL1, "evidence": self.evidence}


def check_conditions_C_D(sub: SubordinatorSpec) -> ConditionsCD:
    half = nu_moment(sub, 0.5)
    first = nu_moment(sub, 1.0)
    el1 = sub.drift + first.value if first.finite else None
    return ConditionsCD(C=half.finite or first.finite, D=first.finite, EL1=el1,
                        evidence={"half": half.as_dict(), "first": first.as_dict()})


def stable_fractional_moment(sub: SubordinatorSpec, t: float, beta: float) -> float:
    """E L_t^beta for a driftless stable subordinator; inf for beta >= index."""
    fam = sub.family
    if not isinstance(fam, StableFamily):
        raise ValueError(f"fractional moment formula needs a stable subordinator, got {sub.label}")
    if not (0 < beta < 1):
        raise ValueError(f"beta must be in (0,1), got {beta}")
    a = fam.index
    if beta >= a:
        return math.inf
    return (fam.scale * t) ** (beta / a) * gamma_fn(1.0 - beta / a) / gamma_fn(1.0 - beta)


def quadratic_characteristic(sub: SubordinatorSpec, t: float) -> float:
    """E<W(L)>_t = t E L_1."""
    cd = check_conditions_C_D(sub)
    if not cd.D:
        raise PreconditionError(f"{sub.label} has no finite first moment", flag="D")
    return t * cd.EL1


# --------------------------------------------------------------------
# Sampling
# --------------------------------------------------------------------

def _stream(seed: int, path_index: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(int(path_index), int(stream))))


def positive_stable(index: float, size: int, rng: np.random.Generator) -> np.ndarray:
    """One-sided stable draws with E exp(-lam S) = exp(-lam^index)."""
    a = index
    v = rng.uniform(-0.5 * math.pi, 0.5 * math.pi, size)
    w = rng.standard_exponential(size)
    # Chambers-Mallows-Stuck with skewness 1; the shift is pi/2 and the
    # scale factor cancels against the Laplace normalisation cos(pi a / 2)^(1/a)
    shifted = a * (v + 0.5 * math.pi)
    return np.sin(shifted) / np.cos(v) ** (1.0 / a) * (np.cos(v - shifted) / w) ** ((1.0 - a) / a)


@lru_cache(maxsize=32)
def _jump_table(density: Callable, eps: float, points: int = 4096) -> Tuple[float, float, np.ndarray, np.ndarray]:
    """
    (mass above eps, mean of jumps below eps, x grid, cdf) for inverse-CDF
    sampling of jumps of size >= eps from an unnormalised density on (0, inf).
    """
    mass = quad(lambda x: float(density(x)), eps, 1.0) + quad(lambda x: float(density(x)), 1.0, np.inf)
    small_mean = quad(lambda x: x * float(density(x)), 0.0, eps)
    x_max = max(1.0, 10.0 * eps)
    for _ in range(80):
        if quad(lambda x: float(density(x)), x_max, np.inf) <= 1e-12 * max(mass, 1e-300):
            break
        x_max *= 2.0
    else:
        raise NumericalError(f"jump table: tail mass did not vanish up to {x_max}")
    grid = np.geomspace(eps, x_max, points)
    # integrate in log x for resolution near eps
    weights = np.asarray(density(grid), dtype=float) * grid
    cdf = cumulative_trapezoid(weights, np.log(grid), initial=0.0)
    cdf /= cdf[-1]
    grid.setflags(write=False)
    cdf.setflags(write=False)
    return mass, small_mean, grid, cdf


def _sample_table(table, count: int, rng: np.random.Generator) -> np.ndarray:
    _, _, grid, cdf = table
    return np.interp(rng.uniform(size=count), cdf, grid)


def _side_table(pi: LevyMeasureSpec, sign: float, eps: float):
    """Jump table and tau-compensator for one half-line of a density measure."""
    key = ("jump_table", sign, eps)
    if key not in pi.moment_cache:
        dens = lambda x: pi.density(sign * np.asarray(x, dtype=float))
        table = _jump_table(dens, eps)
        big_tau = quad(lambda x: x * float(dens(x)), eps, 1.0) + quad(lambda x: float(dens(x)), 1.0, np.inf)
        pi.moment_cache.setdefault(key, (table, big_tau))
    return pi.moment_cache[key]


def _scatter(counts: np.ndarray, sizes: np.ndarray, n: int) -> np.ndarray:
    return np.bincount(np.repeat(np.arange(n), counts), weights=sizes, minlength=n).astype(float)


def _subordinator_increments(sub: SubordinatorSpec, grid: Grid, rng: np.random.Generator) -> np.ndarray:
    n, dt = grid.n, grid.dt
    fam = sub.family
    if fam is None:
        return np.zeros(n)
    if isinstance(fam, GammaFamily):
        return rng.gamma(shape=fam.c * dt, scale=1.0 / fam.rate, size=n)
    if isinstance(fam, StableFamily):
        return (fam.scale * dt) ** (1.0 / fam.index) * positive_stable(fam.index, n, rng)
    if isinstance(fam, CompoundPoissonFamily):
        counts = rng.poisson(fam.rate * dt, n)
        sizes = np.asarray(fam.jumps.rvs(size=int(counts.sum()), random_state=rng), dtype=float)
        return _scatter(counts, sizes, n)
    table = _jump_table(fam.density, settings().small_jump_eps)
    mass, small_mean = table[0], table[1]
    counts = rng.poisson(mass * dt, n)
    return _scatter(counts, _sample_table(table, int(counts.sum()), rng), n) + small_mean * dt


def sample_subordinator(sub: SubordinatorSpec, grid: Grid, seed: int, path_index: int = 0) -> GridPath:
    """Nondecreasing path of L on the grid, starting at 0."""
    rng = _stream(seed, path_index, SUBORDINATOR_STREAM)
    jumps = _subordinator_increments(sub, grid, rng)
    values = sub.drift * grid.dt * np.arange(grid.n + 1)
    values[1:] += np.cumsum(jumps)
    return GridPath.on(grid, values, label=f"L[{sub.label}]", seed=seed, meta={"path_index": path_index})


def _triplet_increments(triplet: LevyTriplet, grid: Grid, seed: int, path_index: int) -> np.ndarray:
    n, dt = grid.n, grid.dt
    a, b, pi = triplet.diffusion_a, triplet.drift_b, triplet.levy_measure
    incr = np.full(n, b * dt)
    if a > 0:
        incr += math.sqrt(a * dt) * _stream(seed, path_index, WIENER_STREAM).standard_normal(n)
    rng = _stream(seed, path_index, JUMP_STREAM)

    if pi.kind == "atoms":
        locs = np.array([x for x, _ in pi.atoms])
        masses = np.array([m for _, m in pi.atoms])
        total = float(masses.sum())
        counts = rng.poisson(total * dt, n)
        picks = rng.choice(locs.size, size=int(counts.sum()), p=masses / total)
        incr += _scatter(counts, locs[picks], n)
        incr -= dt * math.fsum(masses * tau(locs))
    elif pi.kind == "density":
        eps = settings().small_jump_eps
        if pi.symmetric:
            table, _ = _side_table(pi, 1.0, eps)
            counts = rng.poisson(2.0 * table[0] * dt, n)
            k = int(counts.sum())
            signs = np.where(rng.uniform(size=k) < 0.5, -1.0, 1.0)
            incr += _scatter(counts, signs * _sample_table(table, k, rng), n)
        else:
            for sign in (1.0, -1.0):
                table, big_tau = _side_table(pi, sign, eps)
                counts = rng.poisson(table[0] * dt, n)
                incr += _scatter(counts, sign * _sample_table(table, int(counts.sum()), rng), n)
                incr -= sign * dt * big_tau
    elif pi.kind == "subordinated":
        raise ValueError("subordinated triplets are sampled through the subordinator")
    return incr


def sample_driver(source: Source, grid: Grid, seed: int, path_index: int = 0) -> GridPath:
    """
    One driver path Z on the grid with Z at t0 equal to 0. Subordinated
    drivers are sampled as W(L): normal increments with variance dL. A
    subordinated triplet adds its drift_b and any Gaussian part beyond the
    subordinator drift.
    """
    if isinstance(source, SubordinatorSpec) or source.levy_measure.kind == "subordinated":
        sub = source if isinstance(source, SubordinatorSpec) else source.levy_measure.subordinator
        extra_a, b = 0.0, 0.0
        if isinstance(source, LevyTriplet):
            extra_a, b = source.diffusion_a - sub.drift, source.drift_b
            if extra_a < -settings().hyp_tol:
                raise ValueError(f"diffusion_a = {source.diffusion_a} is below the subordinator drift {sub.drift}")
        L = sample_subordinator(sub, grid, seed, path_index)
        w = _stream(seed, path_index, WIENER_STREAM).standard_normal(grid.n)
        incr = np.sqrt(np.maximum(L.increments, 0.0)) * w + b * grid.dt
        if extra_a > settings().hyp_tol:
            incr += math.sqrt(extra_a * grid.dt) * _stream(seed, path_index, GAUSS_STREAM).standard_normal(grid.n)
        label = f"W(L)[{sub.label}]"
    else:
        incr = _triplet_increments(source, grid, seed, path_index)
        label = source.label
    values = np.zeros(grid.n + 1)
    values[1:] = np.cumsum(incr)
    return GridPath.on(grid, values, label=label, seed=seed, meta={"path_index": path_index})


def sample_ensemble(
    source: Source,
    grid: Grid,
    seed: int,
    n_paths: int,
    threads: Optional[int] = None,
    what: str = "driver",
) -> np.ndarray:
    """
    (n_paths, n+1) matrix of driver (or subordinator) paths, rows in path
    order regardless of the worker count.
    """
    if n_paths < 1:
        raise ValueError(f"n_paths must be >= 1, got {n_paths}")
    if what == "driver":
        one = lambda i: sample_driver(source, grid, seed, i).values
    elif what == "subordinator":
        if not isinstance(source, SubordinatorSpec):
            raise ValueError("subordinator ensembles need a SubordinatorSpec")
        one = lambda i: sample_subordinator(source, grid, seed, i).values
    else:
        raise ValueError(f"Unknown ensemble kind: {what}")

    workers = worker_count(threads)
    log.debug("LEVY | ensemble | what=%s | paths=%d | n=%d | workers=%d", what, n_paths, grid.n, workers)
    if workers == 1:
        rows = [one(i) for i in range(n_paths)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(one, range(n_paths)))
    return np.vstack(rows)
