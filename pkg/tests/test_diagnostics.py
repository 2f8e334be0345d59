import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from axiharm.diagnostics import (BoundReport, check_dist_subharmonic, check_max_principle,
                                 comparison_nu, comparison_nu_prime, decay_at_infinity,
                                 distance_field, run_diagnostics, step3_inequality_check,
                                 uniformity_across_R)
from axiharm.discretization import Grid
from axiharm.oracles import KerrNewmanOracle
from axiharm.seed import measured_constant
from axiharm.solver import SolveParams, solve_on_ball


@pytest.fixture(scope="module")
def solved(two_gap):
    rods, _, seed = two_gap
    grid = Grid.build(rods, 24.0, 0.5, 1.15, min_gap_cells=4)
    state, _ = solve_on_ball(seed, rods, grid, SolveParams(tol=1e-9))
    return state


@pytest.fixture(scope="module")
def c_seed(two_gap):
    return measured_constant(two_gap[2], polish=4)


def test_nu_at_origin_is_minus_one():
    assert comparison_nu(0.0) == pytest.approx(-1.0, abs=1e-10)


@pytest.mark.parametrize("r", [0.3, 1.0, 2.5, 8.0])
def test_nu_solves_radial_poisson_equation(r):
    h = 1e-3
    nu = comparison_nu(np.array([r - h, r, r + h]))
    d1 = (nu[2] - nu[0]) / (2 * h)
    d2 = (nu[2] - 2 * nu[1] + nu[0]) / h ** 2
    assert d1 == pytest.approx(comparison_nu_prime(r), rel=1e-6)
    assert d2 + 2 * d1 / r == pytest.approx((1 + r * r) ** -1.5, rel=1e-4)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 50.0), st.floats(0.0, 50.0))
def test_nu_is_increasing_and_negative(a, b):
    lo, hi = sorted((a, b))
    # quadrature rounding is ~1e-16
    assert comparison_nu(lo) <= comparison_nu(hi) + 1e-13
    assert comparison_nu(hi) < 0


@pytest.mark.parametrize("t", [0.0099999, 0.0100001])
def test_nu_prime_branches_match_closed_form_at_switch(t):
    closed = (np.arcsinh(t) - t / np.sqrt(1 + t * t)) / t ** 2
    assert comparison_nu_prime(t) == pytest.approx(closed, rel=1e-9)


def test_nu_rejects_negative_radius():
    with pytest.raises(ValueError):
        comparison_nu(-0.1)
    with pytest.raises(ValueError):
        comparison_nu(np.inf)


def test_max_principle_bound_holds(two_gap, solved, c_seed):
    fld = distance_field(solved, two_gap[2])
    rep = check_max_principle(fld, c_seed)
    assert rep.passed
    assert rep.sigma_max <= rep.bound
    assert rep.nu_at_R == pytest.approx(comparison_nu(solved.grid.R))


def test_max_principle_detects_a_too_small_constant(two_gap, solved):
    fld = distance_field(solved, two_gap[2])
    assert not check_max_principle(fld, 1e-6 * fld.sigma_max).bound_pass


def test_distance_to_seed_is_subharmonic_up_to_tension(two_gap, solved):
    rep = check_dist_subharmonic(solved, two_gap[2])
    assert rep.n_nodes > 0
    assert rep.passed


def test_distance_of_state_to_itself_has_no_violations(solved):
    rep = check_dist_subharmonic(solved, solved)
    assert rep.n_violations == 0


def test_step3_factor_one_inequality_holds_for_k1(solved):
    rep = step3_inequality_check(solved)
    assert rep.subharmonic_fraction < 0.01
    assert rep.q_fraction == 0.0


def test_step3_is_an_identity_for_k0():
    o = KerrNewmanOracle(1.0, 0.5, 0.0)
    grid = Grid.build(o.rods, 8.0, 0.125, 1.2, min_gap_cells=4)
    state, rep = solve_on_ball(o, o.rods, grid, SolveParams(tol=1e-9))
    assert rep.converged
    s3 = step3_inequality_check(state)
    assert s3.passed
    assert s3.two_q_fraction == 0.0


def test_decay_envelope_on_solution(two_gap, solved, c_seed):
    rep = decay_at_infinity(solved, two_gap[2], c_seed)
    assert rep.envelope_pass
    assert rep.sigma.shape == (7, 48)


def test_run_diagnostics_bundles_reports(two_gap, solved, c_seed):
    out = run_diagnostics(solved, two_gap[2], c_seed).to_dict()
    assert set(out) >= {"bound", "subharmonic", "step3", "passed"}


def _bound(R, s):
    return BoundReport(R, s, 1.0, 1.0, -0.1, 0.0, 1.0, 1e-6, True, True)


def test_uniformity_needs_three_radii():
    with pytest.raises(ValueError, match="three"):
        uniformity_across_R([_bound(8, 0.1), _bound(16, 0.1)])


def test_uniformity_flags_growth_only():
    assert uniformity_across_R([_bound(R, 0.1) for R in (8, 16, 32)]).passed
    assert uniformity_across_R([_bound(R, 0.1 + 1e-12 * R) for R in (8, 16, 32, 64)]).passed
    assert not uniformity_across_R([_bound(R, 0.01 * R) for R in (8, 16, 32)]).no_growth
    assert not uniformity_across_R([_bound(R, 2.0) for R in (8, 16, 32)]).bounded
