"""
domain.suites
-------------
Verification suites behind `app.py verify`.

Each suite runs a fixed experiment against an analytic oracle and reports
one pass/fail record per criterion. Sizes default to config/presets.json
("suites" table); callers may raise n_paths to the full acceptance sizes.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np
from scipy.special import gamma

from config import suite_defaults
from . import Grid, GridPath
from .conditions import (
    IntegratorHypotheses,
    MartingaleDescriptor,
    check_D2,
    check_Dinf,
    check_Dp,
    example1_J_integrals,
    frac_integral_identity,
)
from .estimators import cf_within, covariance_probe, empirical_cf, mc_abs_moment, mc_mean
from .fractional import (
    FracOrder,
    frac_derivative,
    frac_integral,
    gls_alpha_sweep,
    gls_integral,
    refine_linear,
    rs_integral,
)
from .levy_noise import (
    CompoundPoissonFamily,
    GammaFamily,
    LevyMeasureSpec,
    LevyTriplet,
    StableFamily,
    SubordinatorSpec,
    as_triplet,
    quadratic_characteristic,
    sample_ensemble,
    stable_fractional_moment,
)
from .stochastic_integral import DeterministicFunction, integral_law, integrate_ensemble, second_moment_exact
from .volterra import VolterraKernel, build_ensemble, fbm_covariance, fbm_exact, holder_exponent_estimate

log = logging.getLogger(__name__)

CF_PROBES = (-4.0, -2.0, -1.0, -0.5, -0.25, 0.25, 0.5, 1.0, 2.0, 4.0)
GLS_ALPHAS = (0.3, 0.5, 0.7)


def _child(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1)[0])


def _rel_l2(approx: np.ndarray, exact: np.ndarray) -> float:
    return float(np.linalg.norm(approx - exact) / np.linalg.norm(exact))


def _max_rel(approx: np.ndarray, exact: np.ndarray) -> float:
    return float(np.max(np.abs(approx - exact) / np.abs(exact)))


# --------------------------------------------------------------------
# Results
# --------------------------------------------------------------------

@dataclass
class Criterion:
    name: str
    passed: bool
    details: Dict[str, Any] = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"criterion": self.name, "passed": bool(self.passed), "details": self.details}


@dataclass
class SuiteResult:
    suite: str
    seed: int
    options: Dict[str, Any]
    criteria: List[Criterion]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.criteria)

    @property
    def failing(self) -> List[str]:
        return [c.name for c in self.criteria if not c.passed]

    def as_dict(self) -> dict:
        return {"suite": self.suite, "seed": self.seed, "options": self.options, "passed": self.passed,
                "failing": self.failing, "criteria": [c.as_dict() for c in self.criteria]}


# --------------------------------------------------------------------
# Base class
# --------------------------------------------------------------------

class BaseSuite:
    """Common suite interface with timing + metadata."""
    name: str = "base"
    defaults: Dict[str, Any] = {}

    def __init__(self):
        self.metadata: Dict[str, Any] = {}

    def options(self, overrides: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
        opts = {**self.defaults, **suite_defaults(self.name)}
        opts.update({k: v for k, v in (overrides or {}).items() if v is not None})
        return opts

    def run(self, seed: int = 0, threads: Optional[int] = None, **overrides) -> SuiteResult:
        opts = self.options(overrides)
        self._start()
        criteria = self.criteria(opts, int(seed), threads)
        self._stop()
        result = SuiteResult(self.name, int(seed), opts, criteria)
        log.info("VERIFY | suite=%s | passed=%s | failing=%s | latency_ms=%s",
                 self.name, result.passed, result.failing, self.metadata.get("latency_ms"))
        return result

    def criteria(self, opts: Dict[str, Any], seed: int, threads: Optional[int]) -> List[Criterion]:
        raise NotImplementedError("Subclasses must implement criteria()")

    def _start(self):
        self._t0 = time.perf_counter()

    def _stop(self):
        if hasattr(self, "_t0"):
            self.metadata["latency_ms"] = round((time.perf_counter() - self._t0) * 1000.0, 2)


# --------------------------------------------------------------------
# Monte Carlo suites
# --------------------------------------------------------------------

class CfMatchSuite(BaseSuite):
    """Empirical CF of int f dW^L against exp(int Psi(lambda f(s)) ds)."""
    name = "cf-match"
    defaults = {"n_paths": 20000, "n_steps": 32}

    def criteria(self, opts, seed, threads):
        n_paths = int(opts["n_paths"])
        sub = SubordinatorSpec(CompoundPoissonFamily.from_config(rate=2.0, dist="expon"))
        f = DeterministicFunction.step([0.0, 0.5, 1.0], [1.0, -0.5])
        grid = Grid.over(1.0, int(opts["n_steps"]))
        Z = sample_ensemble(sub, grid, seed, n_paths, threads=threads)
        samples = integrate_ensemble(f, Z, grid)

        law = integral_law(as_triplet(sub), f)
        emp = empirical_cf(samples, CF_PROBES)
        theo = np.array([law.cf(lam) for lam in CF_PROBES])
        ok = cf_within(emp, theo, n_paths, k=3.0)
        out = []
        for lam, e, t, passed in zip(CF_PROBES, emp, theo, ok):
            out.append(Criterion(f"cf[lambda={lam:g}]", bool(passed), {
                "empirical": [float(e.real), float(e.imag)],
                "theoretical": [float(t.real), float(t.imag)],
                "distance": float(abs(e - t)),
                "tolerance": 3.0 / math.sqrt(n_paths),
            }))
        return out


class SecondMomentSuite(BaseSuite):
    """E|int f dZ|^2 against ||f||_2^2 (a + int x^2 pi(dx)) for three drivers."""
    name = "second-moment"
    defaults = {"n_paths": 20000, "n_steps": 16}

    def drivers(self) -> Dict[str, Any]:
        return {
            "brownian": LevyTriplet.brownian(1.0),
            "gamma_subordinated": SubordinatorSpec(GammaFamily(c=1.0, rate=1.0)),
            "compound_poisson": LevyTriplet(levy_measure=LevyMeasureSpec.from_atoms([(1.0, 0.5), (-1.0, 0.5)])),
        }

    def criteria(self, opts, seed, threads):
        n_paths = int(opts["n_paths"])
        f = DeterministicFunction.step([0.0, 0.25, 1.0], [2.0, 1.0])
        grid = Grid.over(1.0, int(opts["n_steps"]))
        out = []
        for i, (label, source) in enumerate(self.drivers().items()):
            Z = sample_ensemble(source, grid, _child(seed, i), n_paths, threads=threads)
            est = mc_abs_moment(integrate_ensemble(f, Z, grid), 2.0)
            target = second_moment_exact(as_triplet(source), f)
            z = est.z(target)
            out.append(Criterion(f"second_moment[{label}]", z <= 4.0,
                                 {**est.as_dict(), "target": target, "z": z}))
        return out


class SubordinatorMomentsSuite(BaseSuite):
    """Gamma Var(W^L_1) = c / rate and stable E L_1^0.3 closed form."""
    name = "subordinator-moments"
    defaults = {"n_paths": 20000}

    def criteria(self, opts, seed, threads):
        n_paths = int(opts["n_paths"])
        grid = Grid.over(1.0, 4)

        gamma_sub = SubordinatorSpec(GammaFamily(c=2.0, rate=1.5))
        W = sample_ensemble(gamma_sub, grid, _child(seed, 0), n_paths, threads=threads)[:, -1]
        var = mc_abs_moment(W, 2.0)
        target = gamma_sub.family.c / gamma_sub.family.rate
        out = [Criterion("gamma_variance", var.z(target) <= 3.0,
                         {**var.as_dict(), "target": target, "z": var.z(target)})]

        qc = quadratic_characteristic(gamma_sub, 1.0)
        out.append(Criterion("gamma_quadratic_characteristic", math.isclose(qc, target, rel_tol=1e-9),
                             {"value": qc, "target": target}))

        stable_sub = SubordinatorSpec(StableFamily(index=0.7, scale=1.0))
        L = sample_ensemble(stable_sub, grid, _child(seed, 1), n_paths, threads=threads, what="subordinator")[:, -1]
        est = mc_mean(L ** 0.3)
        exact = stable_fractional_moment(stable_sub, 1.0, 0.3)
        rel = abs(est.mean - exact) / exact
        out.append(Criterion("stable_fractional_moment", rel <= 0.1,
                             {**est.as_dict(), "target": exact, "rel_err": rel,
                              "closed_form": float(gamma(1.0 - 3.0 / 7.0) / gamma(0.7))}))
        return out


class FbmCovarianceSuite(BaseSuite):
    """Molchan-Golosov kernel: fBm covariance, Hoelder slope, and the pure-jump variogram slope."""
    name = "fbm-cov"
    defaults = {"n_paths": 2000, "n_steps": 256, "H": 0.7}

    def criteria(self, opts, seed, threads):
        n_paths, n, H = int(opts["n_paths"]), int(opts["n_steps"]), float(opts["H"])
        grid = Grid.over(1.0, n)
        kernel = VolterraKernel.molchan_golosov(H)
        Y, _ = build_ensemble(kernel, LevyTriplet.brownian(1.0), grid, _child(seed, 0), n_paths, threads)

        idx = [int(round(k * n / 5.0)) for k in range(1, 6)]
        t = grid.times[idx]
        mean, err = covariance_probe(Y, idx)
        exact = fbm_covariance(t[:, None], t[None, :], H)
        z = np.abs(mean - exact) / err
        out = [Criterion("covariance_5x5", bool(np.all(z <= 4.0)),
                         {"probes": t.tolist(), "max_z": float(np.max(z)),
                          "empirical": mean.tolist(), "exact": exact.tolist()})]

        fit = holder_exponent_estimate(Y, dt=grid.dt)
        out.append(Criterion("holder_slope", abs(fit.slope - H) <= 0.05,
                             {"slope": fit.slope, "stderr": fit.stderr, "target": H}))

        jumps = LevyTriplet(levy_measure=LevyMeasureSpec.from_atoms([(1.0, 0.5), (-1.0, 0.5)]))
        Yj, _ = build_ensemble(kernel, jumps, grid, _child(seed, 1), n_paths, threads)
        fit_j = holder_exponent_estimate(Yj, dt=grid.dt)
        out.append(Criterion("jump_variogram_slope", abs(2.0 * fit_j.slope - 2.0 * H) <= 0.1,
                             {"variogram_slope": 2.0 * fit_j.slope, "target": 2.0 * H}))
        return out


# --------------------------------------------------------------------
# Deterministic suites
# --------------------------------------------------------------------

class GlsVsRsSuite(BaseSuite):
    """GLS integral: smooth oracle, alpha-independence and RS coincidence on an fBm pair."""
    name = "gls-vs-rs"
    defaults = {"n_steps": 4096, "rough_n_steps": 2048, "H_f": 0.6, "H_g": 0.8, "alpha": 0.5}

    def criteria(self, opts, seed, threads):
        grid = Grid.over(1.0, int(opts["n_steps"]))
        x = grid.times
        f, g = GridPath.on(grid, x, label="x"), GridPath.on(grid, x ** 2, label="x^2")
        out = []
        for alpha in GLS_ALPHAS:
            value = gls_integral(f, g, alpha).value
            rel = abs(value - 2.0 / 3.0) / (2.0 / 3.0)
            out.append(Criterion(f"smooth_pair[alpha={alpha}]", rel <= 1e-3, {"value": value, "rel_err": rel}))

        sweep = gls_alpha_sweep(f, g, GLS_ALPHAS)
        out.append(Criterion("alpha_band", sweep.band_ok, sweep.as_dict()))

        const = GridPath.on(grid, np.full_like(x, 5.0), label="5")
        value = gls_integral(const, g, 0.5).value
        out.append(Criterion("constant_integrand", math.isclose(value, 5.0, rel_tol=1e-12),
                             {"value": value, "target": 5.0}))

        rough = Grid.over(1.0, int(opts["rough_n_steps"]))
        fr = GridPath.on(rough, fbm_exact(float(opts["H_f"]), rough, _child(seed, 0))[0], label="fbm_f")
        gr = GridPath.on(rough, fbm_exact(float(opts["H_g"]), rough, _child(seed, 1))[0], label="fbm_g")
        gls = gls_integral(fr, gr, float(opts["alpha"])).value
        rs = rs_integral(refine_linear(fr, 8), refine_linear(gr, 8), mode="midpoint")
        out.append(Criterion("rs_coincidence", abs(gls - rs) <= 1e-2 * (1.0 + abs(rs)),
                             {"gls": gls, "rs": rs, "tolerance": 1e-2 * (1.0 + abs(rs))}))
        return out


class FracUnitsSuite(BaseSuite):
    """Power-law formulas, inversion and the semigroup property of the fractional operators."""
    name = "frac-units"
    defaults = {"n_steps": 4096, "alpha": 0.3, "beta": 0.4}

    def criteria(self, opts, seed, threads):
        grid = Grid.over(1.0, int(opts["n_steps"]))
        a, b = float(opts["alpha"]), float(opts["beta"])
        x = grid.times
        xi = x[1:]
        one = GridPath.on(grid, np.ones_like(x), label="1")
        lin = GridPath.on(grid, x, label="x")
        smooth = GridPath.on(grid, np.sin(np.pi * x), label="sin")
        left = FracOrder(a)
        out = []

        err = _max_rel(frac_integral(one, left).values[1:], xi ** a / gamma(1.0 + a))
        out.append(Criterion("integral_of_one", err <= 1e-5, {"max_rel_err": err}))
        err = _max_rel(frac_integral(lin, left).values[1:], xi ** (1.0 + a) / gamma(2.0 + a))
        out.append(Criterion("integral_of_power", err <= 1e-5, {"max_rel_err": err}))
        err = _max_rel(frac_derivative(one, left, probe=False).values, xi ** -a / gamma(1.0 - a))
        out.append(Criterion("derivative_of_one", err <= 1e-5, {"max_rel_err": err}))
        err = _max_rel(frac_derivative(lin, left, probe=False).values, xi ** (1.0 - a) / gamma(2.0 - a))
        out.append(Criterion("derivative_of_power", err <= 1e-5, {"max_rel_err": err}))

        back = frac_derivative(frac_integral(smooth, left), left, probe=False).values
        err = _rel_l2(back, smooth.values[1:])
        out.append(Criterion("inversion", err <= 1e-4, {"rel_l2": err}))

        shifted = smooth.with_values(smooth.values + 1.0)
        twice = frac_integral(frac_integral(shifted, FracOrder(b)), left).values
        once = frac_integral(shifted, FracOrder(a + b)).values
        err = _rel_l2(twice[1:], once[1:])
        out.append(Criterion("semigroup", err <= 1e-4, {"rel_l2": err}))
        return out


class ConditionsMatrixSuite(BaseSuite):
    """Condition verdicts for the example kernel, g = 1 under (D_inf), and the Example-1 identities."""
    name = "conditions-matrix"
    defaults = {"n_steps": 512, "hurst": [0.6, 0.7, 0.9]}

    def criteria(self, opts, seed, threads):
        n = int(opts["n_steps"])
        E = MartingaleDescriptor.linear(1.0)
        brownian = LevyTriplet.brownian(1.0)
        out = []
        for H in opts["hurst"]:
            kernel = VolterraKernel.example_one(float(H))
            for alpha in (round(1.0 - H + 0.1, 10), 0.9):
                d2 = check_D2(IntegratorHypotheses(2.0, alpha, E, kernel, 1.0, n))
                dp = check_Dp(IntegratorHypotheses(2.0, alpha, brownian, kernel, 1.0, n))
                tag = f"H={H},alpha={alpha}"
                out.append(Criterion(f"D2_finite[{tag}]", d2.verdict, {"entries": [e.as_dict() for e in d2.entries]}))
                out.append(Criterion(f"Dp2_finite[{tag}]", dp.verdict, {"class_label": dp.class_label}))
                same = all(e.finite == o.finite and (not e.finite or math.isclose(e.value, o.value, rel_tol=1e-12))
                           for e, o in zip(d2.entries, dp.entries))
                out.append(Criterion(f"D2_equals_Dp2[{tag}]", same, {}))
            low = max(round(1.0 - H - 0.1, 10), 0.05)
            rep = check_D2(IntegratorHypotheses(2.0, low, E, kernel, 1.0, n))
            divergent = [e.name for e in rep.entries if not e.finite]
            out.append(Criterion(f"D2_divergent[H={H},alpha={low}]", bool(divergent), {"divergent": divergent}))

        flat = VolterraKernel.constant(1.0)
        for beta, expect in ((0.45, True), (0.6, False)):
            rep = check_Dinf(IntegratorHypotheses(math.inf, 0.9, brownian, flat, 1.0, n), beta=beta, rho=4.0,
                             fast_path=False)
            out.append(Criterion(f"Dinf[beta={beta}]", rep.verdict == expect,
                                 {"verdict": rep.verdict, "expected": expect}))

        probes = [(0.2, 0.5), (0.5, 0.9), (0.3, 1.7)]
        consts = [frac_integral_identity(0.7, z, v) for z, v in probes]
        ratios = [c["constant"] / c["closed_form"] for c in consts]
        out.append(Criterion("example1_identity", max(abs(r - 1.0) for r in ratios) <= 1e-3, {"ratios": ratios}))

        J = example1_J_integrals(0.7, 0.6, n=n)
        out.append(Criterion("example1_reduction", J["all_finite"] and J["reduction"]["flat"], J["reduction"]))
        return out


SUITES = {
    "cf-match": CfMatchSuite,
    "second-moment": SecondMomentSuite,
    "subordinator-moments": SubordinatorMomentsSuite,
    "fbm-cov": FbmCovarianceSuite,
    "gls-vs-rs": GlsVsRsSuite,
    "frac-units": FracUnitsSuite,
    "conditions-matrix": ConditionsMatrixSuite,
}


def get_suite(name: str) -> BaseSuite:
    """Return suite instance by name."""
    cls = SUITES.get(name.lower())
    if not cls:
        raise ValueError(f"Unknown suite: {name}")
    return cls()
