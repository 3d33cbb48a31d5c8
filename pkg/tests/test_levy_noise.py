import math

import numpy as np
import pytest
from scipy.special import gamma as gamma_fn

from domain import Grid, PreconditionError
from domain.levy_noise import (
    CompoundPoissonFamily,
    GammaFamily,
    LevyMeasureSpec,
    LevyTriplet,
    StableFamily,
    SubordinatorSpec,
    abs_normal_moment,
    characteristic_exponent,
    check_conditions_C_D,
    driver_from_config,
    induced_density,
    laplace_exponent,
    nu_moment,
    pi_abs_moment,
    positive_stable,
    quadratic_characteristic,
    sample_driver,
    sample_ensemble,
    sample_subordinator,
    stable_fractional_moment,
    subordinator_from_config,
    tau,
)


# --- specs -------------------------------------------------------------------

def test_tau_truncates_outside_unit_interval():
    assert tau(0.3) == 0.3
    assert tau(-2.5) == -1.0
    assert np.array_equal(tau(np.array([-3.0, 0.5, 7.0])), np.array([-1.0, 0.5, 1.0]))


def test_abs_normal_moment_known_values():
    assert abs_normal_moment(2.0) == pytest.approx(1.0)
    assert abs_normal_moment(1.0) == pytest.approx(math.sqrt(2.0 / math.pi))
    assert abs_normal_moment(4.0) == pytest.approx(3.0)


def test_atom_symmetry_is_detected(symmetric_atoms):
    assert symmetric_atoms.symmetric
    lopsided = LevyMeasureSpec.from_atoms([(1.0, 0.5), (-1.0, 0.25)])
    assert not lopsided.symmetric


@pytest.mark.parametrize("atoms", [[(0.0, 1.0)], [(1.0, 0.0)], [(1.0, -0.5)]])
def test_bad_atoms_rejected(atoms):
    with pytest.raises(ValueError):
        LevyMeasureSpec.from_atoms(atoms)


def test_negative_diffusion_rejected():
    with pytest.raises(ValueError):
        LevyTriplet(diffusion_a=-1.0)


def test_family_parameter_checks():
    with pytest.raises(ValueError):
        GammaFamily(c=0.0, rate=1.0)
    with pytest.raises(ValueError):
        StableFamily(index=1.2, scale=1.0)
    with pytest.raises(ValueError):
        SubordinatorSpec(GammaFamily(1.0, 1.0), drift=-0.1)
    with pytest.raises(ValueError):
        CompoundPoissonFamily.from_config(rate=1.0, dist="norm")
    with pytest.raises(ValueError):
        CompoundPoissonFamily.from_config(rate=1.0, dist="no_such_law")


def test_subordinated_triplet_uses_drift_as_diffusion():
    sub = SubordinatorSpec(GammaFamily(1.0, 2.0), drift=0.3)
    triplet = LevyTriplet.subordinated(sub)
    assert triplet.diffusion_a == 0.3
    assert triplet.drift_b == 0.0
    assert triplet.levy_measure.kind == "subordinated"
    assert triplet.symmetric


def test_subordinator_from_config_families():
    sub = subordinator_from_config({"family": "gamma", "c": 2.0, "rate": 1.5, "drift": 0.1})
    assert isinstance(sub.family, GammaFamily) and sub.drift == 0.1
    sub = subordinator_from_config({"family": "stable", "index": 0.6})
    assert isinstance(sub.family, StableFamily) and sub.family.scale == 1.0
    sub = subordinator_from_config({"family": "compound_poisson", "rate": 2.0, "dist": "expon"})
    assert isinstance(sub.family, CompoundPoissonFamily)
    sub = subordinator_from_config({"family": "none", "drift": 1.0})
    assert sub.family is None
    with pytest.raises(ValueError, match="Unknown subordinator family"):
        subordinator_from_config({"family": "weird"})


def test_driver_from_config_kinds():
    source, what = driver_from_config({"kind": "brownian", "a": 2.0})
    assert isinstance(source, LevyTriplet) and source.diffusion_a == 2.0 and what == "driver"
    source, what = driver_from_config({"kind": "atoms", "atoms": [[1.0, 0.5], [-1.0, 0.5]]})
    assert source.levy_measure.kind == "atoms" and source.diffusion_a == 0.0
    source, what = driver_from_config({"kind": "subordinator",
                                       "subordinator": {"family": "gamma", "c": 1.0, "rate": 1.0}})
    assert isinstance(source, SubordinatorSpec) and what == "subordinator"
    with pytest.raises(ValueError):
        driver_from_config({"kind": "poisson"})


# --- exponents and densities ---------------------------------------------------

def test_laplace_exponent_closed_forms():
    gam = SubordinatorSpec(GammaFamily(c=1.5, rate=2.0), drift=0.2)
    assert laplace_exponent(gam, 3.0) == pytest.approx(0.6 + 1.5 * math.log1p(1.5))
    stab = SubordinatorSpec(StableFamily(index=0.5, scale=2.0))
    assert laplace_exponent(stab, 4.0) == pytest.approx(4.0)
    cp = SubordinatorSpec(CompoundPoissonFamily.from_config(rate=2.0, dist="expon"))
    assert laplace_exponent(cp, 1.0) == pytest.approx(2.0 * (1.0 - 0.5), rel=1e-8)
    assert laplace_exponent(gam, 0.0) == 0.0
    with pytest.raises(ValueError):
        laplace_exponent(gam, -1.0)


def test_laplace_exponent_quadrature_route_matches_closed_form():
    gam = SubordinatorSpec(GammaFamily(c=1.0, rate=2.0))
    assert laplace_exponent(gam, 1.5, route="quad") == pytest.approx(laplace_exponent(gam, 1.5), rel=1e-5)


def test_induced_density_gamma_closed_form_matches_quadrature(gamma_sub):
    closed = induced_density(gamma_sub, 0.7)
    assert closed == pytest.approx(math.exp(-math.sqrt(2.0) * 0.7) / 0.7)
    assert induced_density(gamma_sub, 0.7, route="quad") == pytest.approx(closed, rel=1e-5)
    assert induced_density(gamma_sub, -0.7) == pytest.approx(closed)


def test_induced_density_undefined_at_zero(gamma_sub):
    with pytest.raises(ValueError):
        induced_density(gamma_sub, 0.0)


@pytest.mark.parametrize("x", [1.0, 0.1, 0.013, -0.05])
def test_induced_density_compound_poisson_small_jumps(x):
    cp = SubordinatorSpec(CompoundPoissonFamily.from_config(rate=2.0, dist="expon"))
    # nu(s) = 2 exp(-s) gives sqrt(2) exp(-sqrt(2) |x|)
    expected = math.sqrt(2.0) * math.exp(-math.sqrt(2.0) * abs(x))
    assert induced_density(cp, x) == pytest.approx(expected, rel=1e-6)


def test_characteristic_exponent_brownian_and_atoms(brownian, symmetric_atoms):
    assert characteristic_exponent(brownian, 2.0) == pytest.approx(-2.0)
    for mu in (0.5, 1.0, 3.0):
        assert characteristic_exponent(symmetric_atoms, mu) == pytest.approx(math.cos(mu) - 1.0)
    assert characteristic_exponent(brownian, 0.0) == 0j


def test_characteristic_exponent_subordinated_laplace_route(gamma_sub):
    triplet = LevyTriplet.subordinated(gamma_sub)
    psi = characteristic_exponent(triplet, 1.0, route="laplace")
    assert psi.real == pytest.approx(-math.log1p(0.5))
    assert psi.imag == pytest.approx(0.0)


@pytest.mark.parametrize("mu", [0.5, 1.0, 2.5])
def test_characteristic_exponent_compound_poisson_routes_agree(mu):
    triplet = LevyTriplet.subordinated(SubordinatorSpec(CompoundPoissonFamily.from_config(rate=2.0, dist="expon")))
    direct = characteristic_exponent(triplet, mu)
    via_laplace = characteristic_exponent(triplet, mu, route="laplace")
    assert via_laplace.real == pytest.approx(-2.0 * (1.0 - 1.0 / (1.0 + 0.5 * mu * mu)))
    assert direct.real == pytest.approx(via_laplace.real, rel=1e-5)
    assert direct.imag == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("pi", [
    LevyMeasureSpec.from_atoms([(1.0, 1.0), (-0.5, 0.3)]),
    LevyMeasureSpec.from_density(lambda x: np.where(np.asarray(x) > 0, 1.0, 0.5) * np.exp(-np.abs(x)) / np.abs(x) ** 0.5),
])
def test_characteristic_exponent_conjugate_symmetry(pi):
    triplet = LevyTriplet(diffusion_a=0.5, drift_b=0.3, levy_measure=pi)
    assert not triplet.symmetric
    for mu in (0.7, 2.0):
        plus = characteristic_exponent(triplet, mu)
        minus = characteristic_exponent(triplet, -mu)
        assert abs(plus.imag) > 1e-3
        assert minus == pytest.approx(plus.conjugate(), rel=1e-6, abs=1e-10)


# --- moments ---------------------------------------------------------------------

def test_nu_moment_gamma_closed_form():
    sub = SubordinatorSpec(GammaFamily(c=2.0, rate=1.5))
    res = nu_moment(sub, 1.0)
    assert res.finite
    assert res.value == pytest.approx(2.0 / 1.5)
    assert nu_moment(sub, 0.5).value == pytest.approx(2.0 * gamma_fn(0.5) / 1.5 ** 0.5)


def test_nu_moment_stable_diverges_at_and_above_index():
    sub = SubordinatorSpec(StableFamily(index=0.7, scale=1.0))
    assert not nu_moment(sub, 1.0).finite
    assert not nu_moment(sub, 0.7).finite
    small = nu_moment(sub, 0.5)
    assert small.finite and not small.origin_finite
    assert small.truncated_at is not None


def test_nu_moment_compound_poisson():
    sub = SubordinatorSpec(CompoundPoissonFamily.from_config(rate=2.0, dist="expon"))
    assert nu_moment(sub, 1.0).value == pytest.approx(2.0)
    assert nu_moment(sub, 2.0).value == pytest.approx(4.0)


def test_nu_moment_needs_positive_order(gamma_sub):
    with pytest.raises(ValueError):
        nu_moment(gamma_sub, 0.0)


def test_pi_abs_moment_routes(brownian, symmetric_atoms, gamma_sub):
    assert pi_abs_moment(brownian, 2.0).value == 0.0
    assert pi_abs_moment(symmetric_atoms, 3.0).value == pytest.approx(1.0)
    sub2 = LevyTriplet.subordinated(SubordinatorSpec(GammaFamily(c=2.0, rate=4.0)))
    assert pi_abs_moment(sub2, 2.0).value == pytest.approx(0.5)
    stable = LevyTriplet.subordinated(SubordinatorSpec(StableFamily(0.7, 1.0)))
    assert not pi_abs_moment(stable, 2.0).finite
    with pytest.raises(ValueError):
        pi_abs_moment(brownian, 0.5)


def test_conditions_C_D_and_quadratic_characteristic():
    gam = SubordinatorSpec(GammaFamily(c=2.0, rate=1.5), drift=0.5)
    cd = check_conditions_C_D(gam)
    assert cd.C and cd.D
    assert cd.EL1 == pytest.approx(0.5 + 2.0 / 1.5)
    assert quadratic_characteristic(gam, 2.0) == pytest.approx(2.0 * (0.5 + 2.0 / 1.5))

    stab = SubordinatorSpec(StableFamily(index=0.7, scale=1.0))
    cd = check_conditions_C_D(stab)
    assert cd.C and not cd.D and cd.EL1 is None
    with pytest.raises(PreconditionError) as exc:
        quadratic_characteristic(stab, 1.0)
    assert exc.value.flag == "D"


def test_stable_fractional_moment_formula():
    sub = SubordinatorSpec(StableFamily(index=0.7, scale=1.0))
    expected = gamma_fn(1.0 - 0.3 / 0.7) / gamma_fn(0.7)
    assert stable_fractional_moment(sub, 1.0, 0.3) == pytest.approx(expected)
    assert stable_fractional_moment(sub, 1.0, 0.8) == math.inf
    with pytest.raises(ValueError):
        stable_fractional_moment(SubordinatorSpec(GammaFamily(1.0, 1.0)), 1.0, 0.3)


# --- sampling --------------------------------------------------------------------

def test_positive_stable_laplace_transform():
    rng = np.random.default_rng(3)
    draws = positive_stable(0.6, 100_000, rng)
    assert np.all(draws > 0)
    assert float(np.mean(np.exp(-draws))) == pytest.approx(math.exp(-1.0), abs=0.01)


def test_subordinator_paths_start_at_zero_and_never_decrease(gamma_sub):
    grid = Grid.over(1.0, 64)
    path = sample_subordinator(SubordinatorSpec(GammaFamily(1.0, 1.0), drift=0.5), grid, seed=5)
    assert path.values[0] == 0.0
    assert np.all(np.diff(path.values) >= 0.0)
    assert path.values[-1] >= 0.5 - 1e-12


def test_driver_paths_are_reproducible(brownian):
    grid = Grid.over(1.0, 32)
    a = sample_driver(brownian, grid, seed=9, path_index=3)
    b = sample_driver(brownian, grid, seed=9, path_index=3)
    c = sample_driver(brownian, grid, seed=9, path_index=4)
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)
    assert a.values[0] == 0.0


def test_ensemble_does_not_depend_on_thread_count(gamma_sub):
    grid = Grid.over(1.0, 16)
    one = sample_ensemble(gamma_sub, grid, seed=1, n_paths=12, threads=1)
    many = sample_ensemble(gamma_sub, grid, seed=1, n_paths=12, threads=4)
    assert one.shape == (12, 17)
    assert np.array_equal(one, many)


def test_ensemble_argument_checks(brownian, gamma_sub):
    grid = Grid.over(1.0, 8)
    with pytest.raises(ValueError):
        sample_ensemble(brownian, grid, seed=0, n_paths=0)
    with pytest.raises(ValueError):
        sample_ensemble(brownian, grid, seed=0, n_paths=2, what="subordinator")
    with pytest.raises(ValueError):
        sample_ensemble(gamma_sub, grid, seed=0, n_paths=2, what="levels")


def test_atom_driver_variance(symmetric_atoms):
    grid = Grid.over(1.0, 8)
    ens = sample_ensemble(symmetric_atoms, grid, seed=2, n_paths=20_000)
    # total jump intensity 1, jumps of size 1: Var Z_1 = 1
    assert float(np.mean(ens[:, -1])) == pytest.approx(0.0, abs=0.05)
    assert float(np.var(ens[:, -1])) == pytest.approx(1.0, abs=0.06)


def test_subordinated_triplet_keeps_drift_and_extra_gaussian_part(gamma_sub):
    grid = Grid.over(1.0, 16)
    measure = LevyMeasureSpec.subordinated(gamma_sub)
    plain = sample_driver(LevyTriplet.subordinated(gamma_sub), grid, seed=3)
    drifted = sample_driver(LevyTriplet(drift_b=0.5, levy_measure=measure), grid, seed=3)
    assert np.allclose(drifted.values - plain.values, 0.5 * grid.times)

    ens = sample_ensemble(LevyTriplet(diffusion_a=1.0, levy_measure=measure), grid, seed=4, n_paths=20_000)
    # Var W(L_1) = E L_1 = 1 for Gamma(1, 1), plus the extra unit Gaussian
    assert float(np.var(ens[:, -1])) == pytest.approx(2.0, abs=0.1)


def test_subordinated_triplet_below_subordinator_drift_rejected():
    sub = SubordinatorSpec(GammaFamily(1.0, 1.0), drift=0.3)
    with pytest.raises(ValueError, match="below the subordinator drift"):
        sample_driver(LevyTriplet(levy_measure=LevyMeasureSpec.subordinated(sub)), Grid.over(1.0, 8), seed=0)
