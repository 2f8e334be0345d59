import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import IntegrationWarning, quad

from axiharm.errors import DomainError
from axiharm.rods import RodConfig, SingularMapSpec, gap_potential, singular_map

from conftest import GAPS


def axisym_laplacian(f, rho, z, h):
    return ((f(rho + h, z) - 2 * f(rho, z) + f(rho - h, z)) / h ** 2
            + (f(rho + h, z) - f(rho - h, z)) / (2 * h * rho)
            + (f(rho, z + h) - 2 * f(rho, z) + f(rho, z - h)) / h ** 2)


def u0_on_gap_by_quadrature(gaps, z, rho=1e-7):
    """``-log rho`` minus the potential of density 1/2 on every gap, integrated numerically."""
    total = -np.log(rho)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IntegrationWarning)
        for a, b in gaps:
            pts = [z] if a < z < b else None
            val, _ = quad(lambda s: 1 / np.hypot(rho, z - s), a, b, points=pts,
                          epsabs=1e-14, epsrel=1e-14, limit=400)
            total -= 0.5 * val
    return total


def test_rejects_overlapping_and_empty_gaps():
    with pytest.raises(ValueError, match="overlap"):
        RodConfig([(-1.0, 1.0), (0.5, 2.0)])
    with pytest.raises(ValueError, match="a < b"):
        RodConfig([(1.0, -1.0)])
    with pytest.raises(ValueError):
        RodConfig([])


def test_components_and_lengths():
    rods = RodConfig(GAPS[2])
    assert rods.N == 2
    assert rods.components == [(-np.inf, -3.0), (-1.0, 1.0), (3.0, np.inf)]
    assert rods.bounded_components == [1]
    assert rods.diameter == 6.0
    assert rods.min_length == 2.0


@pytest.mark.parametrize("N", [1, 2, 3])
def test_u0_is_harmonic_at_second_order(N):
    rods = RodConfig(GAPS[N])
    rho = np.array([0.5, 1.0, 2.0, 0.7, 3.0])
    z = np.array([0.3, 2.0, -1.5, -2.0, 5.0])
    res = [np.max(np.abs(axisym_laplacian(rods.u0, rho, z, h))) for h in (0.05, 0.025)]
    assert abs(np.log2(res[0] / res[1]) - 2.0) < 0.2


@pytest.mark.parametrize("N", [1, 2, 3])
def test_u0_plus_log_rho_vanishes_at_infinity(N):
    rods = RodConfig(GAPS[N])
    th = np.linspace(0.05, np.pi - 0.05, 9)
    r = 1e6
    assert np.max(np.abs(rods.u0_plus_log_rho(r * np.sin(th), r * np.cos(th)))) < 1e-5


@pytest.mark.parametrize("N", [1, 2, 3])
def test_gap_limit_matches_quadrature(N):
    rods = RodConfig(GAPS[N])
    zs = [a + (b - a) * f for a, b in GAPS[N] for f in (0.1, 0.5, 0.83)]
    got = rods.gap_limit(np.array(zs))
    ref = np.array([u0_on_gap_by_quadrature(GAPS[N], z) for z in zs])
    assert np.max(np.abs(got - ref)) < 1e-8


def test_gap_limit_outside_gap_raises():
    rods = RodConfig(GAPS[1])
    with pytest.raises(DomainError):
        rods.gap_limit(np.array([2.0]))


def test_u0_refuses_sigma_but_not_gaps():
    rods = RodConfig(GAPS[1])
    with pytest.raises(DomainError):
        rods.u0(np.array([0.0]), np.array([2.0]))
    assert np.isfinite(rods.u0(np.array([0.0]), np.array([0.0])))[0]


def test_gradient_matches_differences():
    rods = RodConfig(GAPS[2])
    rho, z, h = np.array([0.6, 1.7]), np.array([-2.1, 0.4]), 1e-6
    gr, gz = rods.grad_u0(rho, z)
    assert np.allclose(gr, (rods.u0(rho + h, z) - rods.u0(rho - h, z)) / (2 * h), rtol=1e-7)
    assert np.allclose(gz, (rods.u0(rho, z + h) - rods.u0(rho, z - h)) / (2 * h), rtol=1e-7)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.0, 6.0), st.floats(-6.0, 6.0))
def test_distance_to_sigma_is_min_over_components(rho, z):
    rods = RodConfig(GAPS[2])
    d = rods.dist_to_sigma(np.array([rho]), np.array([z]))[0]
    ref = min(np.hypot(rho, max(lo - z, z - hi, 0.0)) for lo, hi in rods.components)
    assert d == pytest.approx(ref, abs=1e-12)


def test_gap_potential_is_stable_below_segment():
    # naive log((z-a+r_a)/(z-b+r_b)) cancels catastrophically far below the segment
    z = np.array([-1e7])
    v = gap_potential(-1.0, 1.0, np.array([1e-3]), z)
    assert v[0] == pytest.approx(0.5 * np.log((1e7 + 1) / (1e7 - 1)), rel=1e-9)


def test_spec_validates_shapes_and_chi():
    with pytest.raises(ValueError):
        SingularMapSpec(np.zeros(3), np.zeros((2, 1)))
    with pytest.raises(ValueError, match="allow_chi"):
        SingularMapSpec(np.zeros(2), np.zeros((2, 1)), np.ones((2, 1)))
    spec = SingularMapSpec(np.zeros(2), np.zeros((2, 1)), np.ones((2, 1)), allow_chi=True)
    assert spec.k == 1


def test_singular_map_lies_on_one_geodesic():
    rods = RodConfig(GAPS[2])
    spec = SingularMapSpec(np.array([0.3, -0.2, 0.5]), np.array([[0.2], [-0.4], [0.1]]))
    p = singular_map(rods, spec, 1, np.array([0.5, 2.0]), np.array([0.0, 1.0]))
    assert np.allclose(p.v, -0.2)
    assert np.allclose(p.psi, -0.4)
    assert np.allclose(p.u, rods.u0(np.array([0.5, 2.0]), np.array([0.0, 1.0])))
