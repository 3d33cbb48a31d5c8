import math

import numpy as np
import pytest

from domain import Grid, GridPath, PreconditionError
from domain.estimators import fit_loglog
from domain.levy_noise import (
    GammaFamily,
    LevyMeasureSpec,
    LevyTriplet,
    StableFamily,
    SubordinatorSpec,
    sample_driver,
    sample_ensemble,
)
from domain.stochastic_integral import (
    DeterministicFunction,
    integral_law,
    integrate_deterministic,
    integrate_ensemble,
    kernel_moment_bound_rhs,
    moment_bound_rhs,
    r_criterion,
    r_function,
    second_moment_exact,
    second_moment_general,
    subordinated_moment_bound_rhs,
    verify_moment_scaling,
)
from domain.volterra import VolterraKernel


@pytest.fixture
def step_f():
    # ||f||_2^2 = 4 * 0.25 + 0.75 = 1.75
    return DeterministicFunction.step([0.0, 0.25, 1.0], [2.0, 1.0])


# --- integrands -----------------------------------------------------------------

def test_step_function_evaluation():
    f = DeterministicFunction.step([0.0, 0.5, 1.0], [1.0, -0.5])
    assert f(0.25) == 1.0
    assert f(0.75) == -0.5
    assert f(1.0) == -0.5
    assert f(1.5) == 0.0
    assert np.array_equal(f(np.array([0.0, 0.6])), np.array([1.0, -0.5]))


def test_indicator_and_pieces():
    f = DeterministicFunction.indicator(0.2, 0.6, 1.0)
    assert [f(0.1), f(0.3), f(0.8)] == [0.0, 1.0, 0.0]
    assert f.pieces() == [(0.0, 0.2, 0.0), (0.2, 0.6, 1.0), (0.6, 1.0, 0.0)]


@pytest.mark.parametrize("breaks,levels", [([0.0, 0.5, 0.5], [1.0, 2.0]), ([0.0, 1.0], [1.0, 2.0])])
def test_bad_step_functions_rejected(breaks, levels):
    with pytest.raises(ValueError):
        DeterministicFunction.step(breaks, levels)


def test_lp_norms(step_f):
    assert step_f.lp_norm(2) ** 2 == pytest.approx(1.75)
    assert step_f.lp_norm(1) == pytest.approx(1.25)
    lin = DeterministicFunction.from_callable(lambda s: s, 1.0, lp_norms={2: 1.0 / math.sqrt(3.0)})
    assert lin.lp_norm(2, use_annotation=False) == pytest.approx(1.0 / math.sqrt(3.0), rel=1e-6)


def test_wrong_norm_annotation_rejected():
    with pytest.raises(ValueError, match="annotated"):
        DeterministicFunction.from_callable(lambda s: s, 1.0, lp_norms={2: 1.0})


def test_scaled_step(step_f):
    assert step_f.scaled(3.0).levels == (6.0, 3.0)


# --- r criterion ------------------------------------------------------------------

def test_r_function_brownian_and_atoms(brownian, symmetric_atoms):
    assert r_function(brownian, 2.0) == pytest.approx(4.0)
    # min((2x)^2, 1) = 1 on both atoms; compensators cancel by symmetry
    assert r_function(symmetric_atoms, 2.0) == pytest.approx(1.0)


def test_r_criterion_step(brownian, step_f):
    crit = r_criterion(brownian, step_f)
    assert crit.integrable
    assert crit.value == pytest.approx(1.75)
    assert crit.as_dict()["integrable"] is True


# --- discrete integral --------------------------------------------------------------

def test_integrate_deterministic_left_point():
    grid = Grid.over(1.0, 4)
    Z = GridPath.on(grid, grid.times ** 2)
    f = DeterministicFunction.step([0.0, 0.5, 1.0], [1.0, 3.0])
    # increments of t^2 on quarters: 1/16, 3/16, 5/16, 7/16
    assert integrate_deterministic(f, Z) == pytest.approx((1 + 3) / 16 + 3 * (5 + 7) / 16)


def test_integrate_deterministic_domain_check():
    grid = Grid.over(2.0, 4)
    Z = GridPath.on(grid, grid.times)
    with pytest.raises(ValueError):
        integrate_deterministic(DeterministicFunction.constant(1.0, T=1.0), Z)


def test_integrate_ensemble_rows_match_single_path():
    grid = Grid.over(1.0, 8)
    rng = np.random.default_rng(0)
    ens = np.cumsum(np.hstack([np.zeros((3, 1)), rng.standard_normal((3, 8))]), axis=1)
    f = DeterministicFunction.step([0.0, 0.5, 1.0], [2.0, -1.0])
    rows = integrate_ensemble(f, ens, grid)
    for i in range(3):
        assert rows[i] == pytest.approx(integrate_deterministic(f, GridPath.on(grid, ens[i])))


def test_integrate_deterministic_is_linear_in_f(brownian):
    grid = Grid.over(1.0, 128)
    Z = sample_driver(brownian, grid, seed=2)
    f = DeterministicFunction.step([0.0, 0.3, 1.0], [1.5, -2.0])
    g = DeterministicFunction.from_callable(np.sin, 1.0)
    combo = DeterministicFunction.from_callable(lambda s: 2.0 * f(s) - 0.5 * np.sin(s), 1.0)
    assert integrate_deterministic(combo, Z) == pytest.approx(
        2.0 * integrate_deterministic(f, Z) - 0.5 * integrate_deterministic(g, Z), rel=1e-12, abs=1e-12)
    assert integrate_deterministic(DeterministicFunction.constant(3.0), Z) == pytest.approx(3.0 * Z.values[-1])


def test_halving_dt_changes_integral_at_the_holder_rate(brownian):
    lam = 0.3
    # Weierstrass sum, Holder-lam everywhere
    weierstrass = DeterministicFunction.from_callable(
        lambda s: sum(2.0 ** (-k * lam) * np.cos(2.0 ** k * np.pi * np.asarray(s)) for k in range(24)), 1.0, holder=lam)
    fine = Grid.over(1.0, 2048)
    Z = sample_ensemble(brownian, fine, seed=17, n_paths=400)
    dts, gaps = [], []
    for n in (128, 256, 512, 1024):
        coarse, finer = Grid.over(1.0, n), Grid.over(1.0, 2 * n)
        Ic = integrate_ensemble(weierstrass, Z[:, :: fine.n // n], coarse)
        If = integrate_ensemble(weierstrass, Z[:, :: fine.n // (2 * n)], finer)
        dts.append(coarse.dt)
        gaps.append(math.sqrt(np.mean((If - Ic) ** 2)))
    assert fit_loglog(dts, gaps).slope == pytest.approx(min(lam, 0.5), abs=0.15)


# --- law and moments ------------------------------------------------------------------

def test_integral_law_brownian_is_gaussian(brownian, step_f):
    law = integral_law(brownian, step_f)
    assert law.a_f == pytest.approx(1.75)
    for lam in (0.5, 1.0, 2.0):
        assert law.cf(lam) == pytest.approx(math.exp(-0.5 * 1.75 * lam ** 2))


def test_integral_law_atoms_pushforward(symmetric_atoms):
    f = DeterministicFunction.step([0.0, 0.5, 1.0], [1.0, 2.0])
    law = integral_law(symmetric_atoms, f)
    # jumps of size f(s) * x land in (1.5, 2.5] only on the second piece with x = +1
    assert law.pushforward_mass(1.5, 2.5) == pytest.approx(0.5 * 0.5)
    with pytest.raises(ValueError):
        law.pushforward_mass(-1.0, 1.0)


def test_second_moment_exact(brownian, symmetric_atoms, step_f):
    assert second_moment_exact(brownian, step_f) == pytest.approx(1.75)
    assert second_moment_exact(symmetric_atoms, step_f) == pytest.approx(1.75)
    gam = LevyTriplet.subordinated(SubordinatorSpec(GammaFamily(c=2.0, rate=4.0)))
    assert second_moment_exact(gam, step_f) == pytest.approx(1.75 * 0.5)


def test_second_moment_exact_preconditions(step_f):
    with pytest.raises(PreconditionError) as exc:
        second_moment_exact(LevyTriplet(diffusion_a=1.0, drift_b=0.5), step_f)
    assert exc.value.flag == "b_zero"
    lopsided = LevyTriplet(levy_measure=LevyMeasureSpec.from_atoms([(1.0, 1.0)]))
    with pytest.raises(PreconditionError) as exc:
        second_moment_exact(lopsided, step_f)
    assert exc.value.flag == "symmetric"


def test_second_moment_general_adds_mean(step_f):
    drifted = LevyTriplet(diffusion_a=1.0, drift_b=0.5)
    assert second_moment_general(drifted, step_f) == pytest.approx((1.25 * 0.5) ** 2 + 1.75)


# --- a priori bounds -------------------------------------------------------------------

def test_moment_bound_brownian_small_p_falls_back_to_drift_bound(brownian, step_f):
    bound = moment_bound_rhs(brownian, step_f, 1.5)
    assert not bound.flags["a_zero"]
    assert not bound.applicable["small_p"]
    assert bound.bound == "drift"
    assert bound.rhs == pytest.approx(1.75 ** 0.75)


def test_moment_bound_pure_jump_small_p(symmetric_atoms, step_f):
    bound = moment_bound_rhs(symmetric_atoms, step_f, 1.5)
    assert bound.bound == "small_p"
    assert bound.rhs == pytest.approx(2.0 ** 1.5 * 0.25 + 0.75)


def test_moment_bound_large_p(brownian, step_f):
    bound = moment_bound_rhs(brownian, step_f, 4.0)
    assert bound.bound == "large_p"
    assert bound.rhs == pytest.approx(1.75 ** 2)
    assert bound.as_dict()["rhs"] == pytest.approx(1.75 ** 2)


def test_subordinated_bound_uses_nu_moments(step_f):
    sub = SubordinatorSpec(GammaFamily(c=1.0, rate=1.0))
    bound = subordinated_moment_bound_rhs(sub, step_f, 2.0)
    assert bound.bound == "large_p"
    assert bound.terms["l2_mean_jump"] == pytest.approx(1.75)
    assert bound.rhs == pytest.approx(1.75)

    drifted = SubordinatorSpec(GammaFamily(c=1.0, rate=1.0), drift=0.5)
    assert not subordinated_moment_bound_rhs(drifted, step_f, 1.5).any_applicable

    stable = SubordinatorSpec(StableFamily(index=0.5, scale=1.0))
    bound = subordinated_moment_bound_rhs(stable, step_f, 1.5)
    assert not bound.flags["moment_finite"]
    assert bound.bound is None and math.isnan(bound.rhs)


def test_kernel_moment_bound(brownian):
    bound = kernel_moment_bound_rhs(brownian, VolterraKernel.constant(1.0), 2.0, 2.0)
    assert bound.rhs == pytest.approx(2.0, rel=1e-6)
    with pytest.raises(ValueError):
        kernel_moment_bound_rhs(brownian, VolterraKernel.constant(1.0), 0.0, 2.0)


def test_moment_scaling_flat_for_brownian(brownian):
    report = verify_moment_scaling(brownian, DeterministicFunction.constant(1.0), 2.0,
                                   n_paths=4000, seed=3, n_steps=16)
    assert report.bounded
    assert [row["c"] for row in report.ratio_curve] == [1.0, 2.0, 4.0, 8.0]
    for row in report.ratio_curve:
        assert row["ratio"] == pytest.approx(1.0, abs=6.0 * row["ratio_stderr"])
    assert report.exact_ratio is not None
    assert report.as_dict()["p"] == 2.0


def test_moment_scaling_needs_an_applicable_bound():
    stable = SubordinatorSpec(StableFamily(index=0.5, scale=1.0))
    with pytest.raises(PreconditionError):
        verify_moment_scaling(stable, DeterministicFunction.constant(1.0), 1.5, n_paths=10, seed=0)
