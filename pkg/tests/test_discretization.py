import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from axiharm import _accel, kernels
from axiharm.discretization import Discretization, Grid, TailMap, fd_jet
from axiharm.rods import RodConfig

from conftest import GAPS


@pytest.fixture(scope="module")
def small_disc(two_gap):
    rods, _, seed = two_gap
    grid = Grid.build(rods, 12.0, 0.5, 1.2, min_gap_cells=4)
    disc = Discretization(grid, seed, 1)
    rng = np.random.default_rng(3)
    x = disc.initial()
    x = x + np.where(disc.free, 0.05 * rng.normal(size=x.shape), 0.0)
    return disc, x


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 1.0), st.floats(5.0, 200.0), st.floats(1.0, 1.4))
def test_tail_map_hits_ends_and_is_c1(h0, length, q):
    tm = TailMap(2.0, 2.0 + length, h0, q)
    x = tm.nodes()
    assert x[0] == 2.0 and x[-1] == 2.0 + length
    d = np.diff(x)
    assert np.all(d > 0)
    # x'(0) = h0 and cells grow by the constant ratio e^kappa
    k = tm.kappa
    assert d[0] == pytest.approx(h0 * (np.expm1(k) / k if k else 1.0), rel=1e-9)
    assert np.allclose(d[1:-1] / d[:-2], np.exp(k), rtol=1e-9)


def test_tail_map_refinement_is_nested():
    tm = TailMap(0.0, 50.0, 0.25, 1.15)
    coarse, fine = tm.nodes(0), tm.nodes(2)
    assert np.allclose(fine[::4], coarse, rtol=0, atol=1e-12)


def test_grid_puts_endpoints_on_lines_and_refines_nested():
    rods = RodConfig(GAPS[3])
    g = Grid.build(rods, 40.0, 0.25, 1.15, min_gap_cells=4)
    for e in rods.endpoints:
        assert np.any(g.z == e)
    f = g.refined(1)
    assert f.z.size == 2 * g.z.size - 1
    assert np.allclose(f.z[::2], g.z, rtol=0, atol=1e-12)
    assert np.allclose(f.rho[::2], g.rho, rtol=0, atol=1e-12)
    assert f.h == g.h / 2


def test_grid_rejects_bad_layouts():
    rods = RodConfig(GAPS[2])
    with pytest.raises(ValueError, match="enclose"):
        Grid.build(rods, 2.0, 0.25)
    with pytest.raises(ValueError, match="cells"):
        Grid.build(rods, 20.0, 1.0, min_gap_cells=8)
    with pytest.raises(ValueError, match="endpoint"):
        Grid(rods, np.linspace(0, 5, 11), np.linspace(-5.2, 5.2, 9), 5.0)


def test_node_volumes_sum_to_cylinder():
    rods = RodConfig(GAPS[1])
    g = Grid.build(rods, 10.0, 0.25, 1.2)
    total = g.node_volumes().sum()
    assert total == pytest.approx(np.pi * g.rho[-1] ** 2 * (g.z[-1] - g.z[0]), rel=1e-12)


def test_fd_jet_exact_on_quadratics():
    rods = RodConfig(GAPS[1])
    g = Grid.build(rods, 10.0, 0.25, 1.2)
    f = g.RHO ** 2 + 3 * g.Z ** 2 - g.Z
    fr, fz, lap = fd_jet(g, f)
    inner = (slice(1, -1), slice(1, -1))
    assert np.allclose(fr[inner], 2 * g.RHO[inner], atol=1e-10)
    assert np.allclose(fz[inner], 6 * g.Z[inner] - 1, atol=1e-10)
    assert np.allclose(lap[:-1, 1:-1], 4 + 6, atol=1e-9)


def test_fd_jet_laplacian_converges_at_second_order():
    rods = RodConfig(GAPS[1])
    errs = []
    for h in (0.2, 0.1, 0.05):
        g = Grid.build(rods, 6.0, h, 1.0, min_gap_cells=1)
        r2 = g.RHO ** 2 + g.Z ** 2
        f = np.exp(-r2 / 4)
        exact = (r2 / 4 - 1.5) * f
        lap = fd_jet(g, f)[2]
        sel = (g.RHO <= 2.0) & (np.abs(g.Z) <= 2.0)
        errs.append(np.max(np.abs(lap - exact)[sel]))
    orders = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(np.abs(orders - 2.0) < 0.15)


@pytest.mark.parametrize("name", ["edge_energy", "gradient", "edge_hessian"])
def test_numba_and_numpy_kernels_agree(small_disc, name):
    if not _accel.NUMBA_AVAILABLE:
        pytest.skip("numba not installed")
    disc, x = small_disc
    fn = getattr(kernels, name)
    args = (disc.flat(x), disc.ea, disc.eb, disc.wU, disc.kA, disc.kB)
    a, b = fn(*args, use_numba=True), fn(*args, use_numba=False)
    assert np.max(np.abs(a - b)) <= 1e-13 * np.max(np.abs(b))


def test_gradient_matches_energy_differences(small_disc):
    disc, x = small_disc
    G = disc.free_vector(disc.gradient(x))
    rng = np.random.default_rng(11)
    d = rng.normal(size=disc.n_dof)
    eps = 1e-6
    fd = (disc.energy(disc.apply_step(x, d, eps)) - disc.energy(disc.apply_step(x, d, -eps))) / (2 * eps)
    assert fd == pytest.approx(G @ d, rel=1e-6)


def test_hessian_matches_gradient_differences(small_disc):
    disc, x = small_disc
    H = disc.hessian(x)
    rng = np.random.default_rng(12)
    d = rng.normal(size=disc.n_dof)
    eps = 1e-6
    gp = disc.free_vector(disc.gradient(disc.apply_step(x, d, eps)))
    gm = disc.free_vector(disc.gradient(disc.apply_step(x, d, -eps)))
    fd = (gp - gm) / (2 * eps)
    assert np.max(np.abs(H @ d - fd)) <= 1e-5 * np.max(np.abs(fd))
    assert abs(H - H.T).max() <= 1e-12 * abs(H).max()


def test_edge_coefficients_finite_and_positive(small_disc):
    disc, _ = small_disc
    assert np.all(disc.wU > 0)
    assert np.all(disc.kA >= 0) and np.all(disc.kB >= 0)
    assert np.all(np.isfinite(disc.kA)) and np.all(np.isfinite(disc.kB))


def test_boundary_values_are_imposed(small_disc):
    disc, x = small_disc
    y = disc.impose(x + 1.0)
    fixed = disc.fixed & disc.grid.inside[None]
    assert np.array_equal(y[fixed], disc.boundary_values[fixed])


@pytest.mark.parametrize("flag,expected", [("1", "numpy"), ("0", "numba")])
def test_backend_switch_from_environment(flag, expected):
    if expected == "numba" and not _accel.NUMBA_AVAILABLE:
        pytest.skip("numba not installed")
    env = dict(os.environ, AXIHARM_DISABLE_NUMBA=flag)
    out = subprocess.run([sys.executable, "-c", "import axiharm; print(axiharm.backend())"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == expected
