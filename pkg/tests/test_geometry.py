import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from axiharm.geometry import (GaugeIsometry, MapJet, TargetPoint, TargetTangent, distance,
                              distance_packed, gauge_normalize, geodesic_bvp, inner_packed,
                              metric_matrix_packed, raise_index_packed, tension, tension_packed)
from axiharm.validation import random_jets, tension_relative_gap

coords = st.floats(-1.5, 1.5, allow_nan=False)


@pytest.mark.parametrize("k", [0, 1, 2, 4])
def test_tension_routes_agree_on_random_jets(k, rng):
    gap = tension_relative_gap(*random_jets(rng, k, 1000))
    assert gap.max() < 1e-10


@pytest.mark.parametrize("k", [0, 1, 3])
def test_constant_map_has_zero_tension(k, rng):
    x = rng.normal(size=(2 * k + 2, 5))
    t = tension_packed(x, np.zeros((3,) + x.shape), np.zeros_like(x))
    assert np.array_equal(t, np.zeros_like(x))


@pytest.mark.parametrize("k", [0, 2])
def test_geodesic_image_map_tension_is_laplacian_of_u(k, rng):
    # (u, const, const, const): a map into one geodesic
    x = rng.normal(size=(2 * k + 2, 7))
    grad = np.zeros((3,) + x.shape)
    grad[:, 0] = rng.normal(size=(3, 7))
    lap = np.zeros_like(x)
    lap[0] = rng.normal(size=7)
    t = tension_packed(x, grad, lap)
    assert np.array_equal(t[0], lap[0])
    assert np.array_equal(t[1:], np.zeros_like(t[1:]))


def test_dataclass_tension_matches_packed(rng):
    x, grad, lap = random_jets(rng, 1, 4)
    jet = MapJet(TargetPoint.from_packed(x), grad, lap)
    assert np.allclose(tension(jet).packed, tension_packed(x, grad, lap), rtol=0, atol=1e-14)


def test_target_point_rejects_mismatched_gauge_fields():
    with pytest.raises(ValueError):
        TargetPoint(0.0, 0.0, np.zeros(2), np.zeros(1))
    with pytest.raises(ValueError):
        TargetPoint(np.nan, 0.0, np.zeros(1), np.zeros(1))


def test_raise_index_inverts_metric(rng):
    x = rng.uniform(-1, 1, size=(6, 9))
    cov = rng.normal(size=(6, 9))
    up = raise_index_packed(x, cov)
    G = metric_matrix_packed(x)
    assert np.allclose(np.einsum("ab...,b...->a...", G, up), cov, atol=1e-10)


@settings(max_examples=60, deadline=None)
@given(st.lists(coords, min_size=12, max_size=12))
def test_distance_is_a_metric(vals):
    v = np.array(vals)
    x, y, z = v[:4, None], v[4:8, None], v[8:12, None]
    dxy = distance_packed(x, y)[0]
    assert dxy >= 0
    assert distance_packed(x, x)[0] == 0
    assert np.isclose(dxy, distance_packed(y, x)[0], rtol=1e-12, atol=1e-14)
    assert dxy <= distance_packed(x, z)[0] + distance_packed(z, y)[0] + 1e-9


def test_distance_along_u_is_coordinate_difference():
    x = np.array([[0.3], [0.1], [0.2], [-0.5]])
    y = x.copy()
    y[0] = -1.2
    assert np.isclose(distance_packed(x, y)[0], 1.5, rtol=0, atol=1e-14)


def test_distance_matches_geodesic_length():
    p = TargetPoint.from_packed(np.array([0.2, -0.3, 0.4, 0.1]))
    q = TargetPoint.from_packed(np.array([-0.5, 0.6, -0.2, 0.3]))
    length, _ = geodesic_bvp(p, q)
    assert abs(length - float(distance(p, q))) < 1e-8


def test_distance_first_order_matches_metric(rng):
    x = rng.uniform(-1, 1, size=(4, 1))
    X = rng.normal(size=(4, 1))
    eps = 1e-6
    d = distance_packed(x, x + eps * X)[0]
    assert np.isclose(d, eps * np.sqrt(inner_packed(x, X, X)[0]), rtol=1e-5)


@settings(max_examples=40, deadline=None)
@given(st.lists(coords, min_size=11, max_size=11))
def test_gauge_isometry_preserves_distance(vals):
    v = np.array(vals)
    iso = GaugeIsometry(v[8:9], v[9:10], v[10])
    x, y = v[:4, None], v[4:8, None]
    d0 = distance_packed(x, y)[0]
    d1 = distance_packed(iso.apply_packed(x), iso.apply_packed(y))[0]
    assert np.isclose(d0, d1, rtol=1e-9, atol=1e-9)


def test_gauge_isometry_group_laws(rng):
    f = GaugeIsometry(rng.normal(size=2), rng.normal(size=2), 0.4)
    g = GaugeIsometry(rng.normal(size=2), rng.normal(size=2), -1.1)
    x = rng.normal(size=(6, 3))
    assert np.allclose(f.compose(g).apply_packed(x), f.apply_packed(g.apply_packed(x)))
    assert np.allclose(f.inverse().apply_packed(f.apply_packed(x)), x)
    assert GaugeIsometry.identity(2).is_identity()


def test_gauge_isometry_preserves_tension_norm(rng):
    # a Heisenberg shift is an isometry, so it maps harmonic maps to harmonic maps
    x, grad, lap = random_jets(rng, 1, 20)
    iso = GaugeIsometry(np.array([0.3]), np.array([-0.7]), 0.2)
    y = iso.apply_packed(x)
    # the shift is affine in (v, chi, psi), so jets transform by its linear part
    gy = np.stack([iso.apply_packed(x + grad[d]) - y for d in range(3)])
    ly = iso.apply_packed(x + lap) - y
    tx, ty = tension_packed(x, grad, lap), tension_packed(y, gy, ly)
    nx = np.sqrt(inner_packed(x, tx, tx))
    ny = np.sqrt(inner_packed(y, ty, ty))
    assert np.allclose(nx, ny, rtol=1e-10)


def test_gauge_normalize_zeroes_first_component():
    pts = [TargetPoint(0.0, 0.7, np.array([0.2]), np.array([-0.3])),
           TargetPoint(0.0, -0.1, np.array([0.5]), np.array([0.4]))]
    iso, out = gauge_normalize(pts)
    assert out[0].v == pytest.approx(0.0, abs=1e-15)
    assert out[0].psi[0] == pytest.approx(0.0, abs=1e-15)
    assert out[0].chi[0] == pytest.approx(0.2)
    back = iso.inverse().apply(out[1])
    assert np.allclose(back.packed, pts[1].packed)


def test_tangent_shape_checked():
    p = TargetPoint(0.0, 0.0, np.zeros(1), np.zeros(1))
    with pytest.raises(ValueError):
        TargetTangent.from_packed(np.zeros(3), p)
    with pytest.raises(ValueError):
        TargetTangent(0.0, 0.0, np.zeros(2), np.zeros(2), p)
