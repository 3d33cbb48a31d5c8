import math

import numpy as np
import pytest

from config import settings
from domain import Grid, GridPath
from domain.estimators import fit_loglog
from domain.levy_noise import sample_driver
from domain.volterra import (
    VolterraKernel,
    build_ensemble,
    build_path,
    eval_kernel,
    fbm_covariance,
    fbm_exact,
    holder_exponent_estimate,
    increment_decomposition,
    kernel_from_config,
    kernel_matrix,
)


def test_molchan_golosov_is_one_at_half():
    k = VolterraKernel.molchan_golosov(0.5)
    assert np.allclose(k.row(1.0, [0.1, 0.5, 0.9]), 1.0)
    assert k.annotations["bound"] == 1.0


def test_row_vanishes_outside_the_triangle(mg_kernel):
    row = mg_kernel.row(0.5, [0.2, 0.5, 0.7])
    assert row[0] > 0.0
    assert row[1] == 0.0 and row[2] == 0.0


def test_eval_kernel_domain(mg_kernel):
    with pytest.raises(ValueError):
        eval_kernel(mg_kernel, 0.5, 0.5)
    assert eval_kernel(mg_kernel, 1.0, 0.3) > 0.0


@pytest.mark.parametrize("H", [0.55, 0.7, 0.9])
@pytest.mark.parametrize("t,s", [(1.0, 0.05), (1.0, 0.3), (1.0, 0.8), (0.4, 0.1), (2.0, 1.9)])
def test_example_one_matches_molchan_golosov_above_half(H, t, s):
    mg = VolterraKernel.molchan_golosov(H)
    ex = VolterraKernel.example_one(H)
    assert eval_kernel(ex, t, s) == pytest.approx(eval_kernel(mg, t, s), rel=1e-5)


def test_kernel_matrix_is_strictly_lower_triangular(mg_kernel):
    grid = Grid.over(1.0, 16)
    G = kernel_matrix(mg_kernel, grid)
    assert G.shape == (17, 16)
    assert np.all(np.triu(G[:16]) == 0.0)
    assert not G.flags.writeable


def test_molchan_golosov_reproduces_fbm_covariance():
    H = 0.7
    grid = Grid.over(1.0, 512)
    G = kernel_matrix(VolterraKernel.molchan_golosov(H), grid)
    idx = [128, 256, 512]
    t = grid.times[idx]
    approx = G[idx] @ G[idx].T * grid.dt
    exact = fbm_covariance(t[:, None], t[None, :], H)
    assert np.allclose(approx, exact, rtol=3e-2)


def test_constant_kernel_path_is_the_driver(brownian):
    grid = Grid.over(1.0, 32)
    Z = sample_driver(brownian, grid, seed=4)
    Y = build_path(VolterraKernel.constant(1.0), Z)
    assert np.allclose(Y.values, Z.values)
    assert Y.kernel_meta == {"family": "constant", "c": 1.0}
    assert Y.driver_meta["seed"] == 4


def test_build_path_needs_zero_start(mg_kernel):
    Z = GridPath(t0=0.5, dt=0.1, values=np.zeros(6))
    with pytest.raises(ValueError):
        build_path(mg_kernel, Z)


def test_increment_decomposition_adds_up(mg_kernel, brownian):
    grid = Grid.over(1.0, 64)
    Z = sample_driver(brownian, grid, seed=8)
    Y = build_path(mg_kernel, Z).values
    parts = increment_decomposition(mg_kernel, Z, 20, 50)
    assert parts.total == pytest.approx(Y[50] - Y[20], abs=1e-12)
    with pytest.raises(IndexError):
        increment_decomposition(mg_kernel, Z, 50, 20)


def test_build_ensemble_matches_single_paths(mg_kernel, brownian):
    grid = Grid.over(1.0, 32)
    Y, Z = build_ensemble(mg_kernel, brownian, grid, seed=12, n_paths=3)
    assert Y.shape == Z.shape == (3, 33)
    for i in range(3):
        single = build_path(mg_kernel, sample_driver(brownian, grid, seed=12, path_index=i))
        assert np.allclose(Y[i], single.values)


def test_build_path_ignores_driver_after_t(mg_kernel, brownian):
    grid = Grid.over(1.0, 64)
    Z = sample_driver(brownian, grid, seed=3)
    m = 40
    bumped = Z.values.copy()
    bumped[m + 1:] += np.linspace(1.0, 5.0, grid.n - m)
    Y = build_path(mg_kernel, Z).values
    Y_bumped = build_path(mg_kernel, GridPath.on(grid, bumped)).values
    assert np.array_equal(Y[:m + 1], Y_bumped[:m + 1])
    assert not np.allclose(Y[m + 1:], Y_bumped[m + 1:])


def test_build_path_is_linear_in_the_driver(mg_kernel, brownian):
    grid = Grid.over(1.0, 64)
    Z1 = sample_driver(brownian, grid, seed=5)
    Z2 = sample_driver(brownian, grid, seed=6)
    both = build_path(mg_kernel, Z1 + Z2).values
    parts = build_path(mg_kernel, Z1).values + build_path(mg_kernel, Z2).values
    assert np.allclose(both, parts, rtol=1e-12, atol=1e-12)


def test_paths_converge_under_grid_refinement(mg_kernel, brownian):
    fine = Grid.over(1.0, 1024)
    _, Z = build_ensemble(mg_kernel, brownian, fine, seed=21, n_paths=200)
    dts, errors = [], []
    for n in (64, 128, 256, 512):
        coarse, finer = Grid.over(1.0, n), Grid.over(1.0, 2 * n)
        Yc = np.array([build_path(mg_kernel, GridPath.on(coarse, z[:: fine.n // n])).values for z in Z])
        Yf = np.array([build_path(mg_kernel, GridPath.on(finer, z[:: fine.n // (2 * n)])).values for z in Z])
        dts.append(coarse.dt)
        errors.append(math.sqrt(np.mean((Yf[:, ::2] - Yc) ** 2)))
    assert fit_loglog(dts, errors).slope >= 0.4


def test_rows_on_demand_above_cache_limit(mg_kernel, brownian, monkeypatch):
    grid = Grid.over(1.0, 32)
    Y_cached, Z_cached = build_ensemble(mg_kernel, brownian, grid, seed=9, n_paths=4)
    monkeypatch.setenv("LEVY_ROW_CACHE_MAX_N", "16")
    settings.cache_clear()
    with pytest.raises(ValueError, match="row_cache_max_n"):
        kernel_matrix(mg_kernel, grid)
    Y_rows, Z_rows = build_ensemble(mg_kernel, brownian, grid, seed=9, n_paths=4)
    assert np.array_equal(Z_rows, Z_cached)
    assert np.allclose(Y_rows, Y_cached, rtol=1e-12, atol=1e-14)
    single = build_path(mg_kernel, GridPath.on(grid, Z_rows[1])).values
    assert np.allclose(single, Y_rows[1], rtol=1e-12, atol=1e-14)


def test_fbm_exact_shape_and_holder_slope():
    grid = Grid.over(1.0, 256)
    paths = fbm_exact(0.7, grid, seed=1, n_paths=200)
    assert paths.shape == (200, 257)
    assert np.all(paths[:, 0] == 0.0)
    assert np.array_equal(paths, fbm_exact(0.7, grid, seed=1, n_paths=200))
    fit = holder_exponent_estimate(paths, dt=grid.dt)
    assert fit.slope == pytest.approx(0.7, abs=0.05)


def test_fbm_exact_argument_checks():
    with pytest.raises(ValueError):
        fbm_exact(1.2, Grid.over(1.0, 8), seed=0)
    with pytest.raises(ValueError):
        fbm_exact(0.7, Grid(0.5, 0.1, 8), seed=0)


def test_holder_estimate_needs_dt_for_arrays():
    with pytest.raises(ValueError):
        holder_exponent_estimate(np.zeros((2, 65)))


def test_kernel_from_config_and_validation():
    assert kernel_from_config({"family": "molchan_golosov", "H": 0.3}).H == 0.3
    assert kernel_from_config({"family": "constant"}).as_dict() == {"family": "constant", "c": 1.0}
    assert kernel_from_config({"family": "power", "exponent": 0.5}).annotations["half_holder"] == 0.5
    with pytest.raises(ValueError):
        kernel_from_config({"family": "triangle"})
    with pytest.raises(ValueError):
        VolterraKernel.example_one(0.4)
    with pytest.raises(ValueError):
        VolterraKernel.power(-1.5)


def test_kernels_are_hashable_cache_keys():
    assert hash(VolterraKernel.molchan_golosov(0.7)) == hash(VolterraKernel.molchan_golosov(0.7))
    assert VolterraKernel.molchan_golosov(0.7).label == "molchan_golosov(H=0.7)"
