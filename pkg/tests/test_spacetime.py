import numpy as np
import pytest

from axiharm.discretization import Grid
from axiharm.oracles import KerrNewmanOracle
from axiharm.rods import RodConfig, SingularMapSpec
from axiharm.seed import build_seed
from axiharm.solver import FieldState, SolveParams, solve_on_ball
from axiharm.spacetime import (OUTER_FRACTION, assemble_metric, conical_deficit, default_tube,
                               reconstruct, twist_form)
from axiharm.spacetime import _equator_node, _top_axis_node

from conftest import GAPS


def exact_state(oracle, grid):
    return FieldState(grid, oracle.fields(grid.RHO, grid.Z), oracle.k)


def regular_region(grid):
    rods = grid.rods
    return (grid.inside & (rods.dist_to_sigma(grid.RHO, grid.Z) >= default_tube(rods))
            & (np.hypot(grid.RHO, grid.Z) <= OUTER_FRACTION * grid.R))


@pytest.fixture(scope="module")
def kn_levels():
    o = KerrNewmanOracle(1.0, 0.5, 0.4)
    base = Grid.build(o.rods, 8.0, 0.25, 1.2, min_gap_cells=4)
    return o, [reconstruct(exact_state(o, base.refined(lev))) for lev in (0, 1)]


def chi_seed():
    rods = RodConfig(GAPS[2])
    spec = SingularMapSpec(np.array([0.3, -0.2, 0.5]), np.array([[0.2], [-0.4], [0.1]]),
                           np.array([[0.4], [-0.3], [0.2]]), allow_chi=True)
    return build_seed(rods, spec)


@pytest.fixture(scope="module")
def chi_state():
    seed = chi_seed()
    base = Grid.build(seed.rods, 24.0, 0.5, 1.15, min_gap_cells=4)
    out = []
    for lev in (0, 1):
        state, rep = solve_on_ball(seed, seed.rods, base.refined(lev), SolveParams(tol=1e-9))
        assert rep.converged
        out.append(state)
    return out


def test_metric_functions_converge_to_closed_form(kn_levels):
    o, fields = kn_levels
    errs = []
    for f in fields:
        g = f.grid
        sel = regular_region(g)
        W = o.w(g.RHO, g.Z)
        W = W - W.ravel()[_top_axis_node(g)]
        errs.append([np.max(np.abs(f.w.values - W)[sel]),
                     np.max(np.abs(f.lam.values - o.lam(g.RHO, g.Z))[sel])])
    errs = np.array(errs)
    assert np.all(errs[1] < 0.6 * errs[0])
    assert errs[1].max() < 3e-3


def test_theta_matches_closed_form_up_to_a_constant(kn_levels):
    o, fields = kn_levels
    spreads = []
    for f in fields:
        g = f.grid
        sel = regular_region(g)
        T = o.theta(g.RHO, g.Z)
        d = (f.theta[0].values - (T - T.ravel()[_equator_node(g)]))[sel]
        spreads.append(np.ptp(d))
    assert spreads[1] < 0.6 * spreads[0]


def test_determinant_identity_and_signature(kn_levels):
    f = kn_levels[1][1]
    m = assemble_metric(f)
    assert m.det_identity_error() < 1e-12
    assert m.signature_ok()
    assert m.A_t.shape == m.A_phi.shape == (1, m.rho.size)


def test_single_black_hole_has_no_bounded_components(kn_levels):
    rep = conical_deficit(kn_levels[1][1])
    assert rep.bounded == []
    assert len(rep.unbounded) == 2
    assert all(e.regular for e in rep.unbounded)


def test_two_black_holes_need_a_strut(chi_state):
    rep = conical_deficit(reconstruct(chi_state[1]))
    assert [e.component for e in rep.bounded] == [1]
    assert abs(rep.bounded[0].b) > 1e-2
    assert all(abs(e.b) < 1e-3 for e in rep.unbounded)


def test_reduction_twist_closes_and_converse_does_not(chi_state):
    red = [reconstruct(s, "reduction").w.report.residual for s in chi_state]
    con = [reconstruct(s, "converse").w.report.residual for s in chi_state]
    assert red[1] < 0.5 * red[0]
    assert con[1] > 0.5 * con[0]
    assert con[1] > 10 * red[1]


def test_two_trees_agree_within_loop_sum(chi_state):
    f = reconstruct(chi_state[1])
    for rep in f.closedness().values():
        assert rep["path_independent"]


def test_seed_is_visibly_not_closed(chi_state):
    g = chi_state[0].grid
    seed_state = FieldState(g, chi_seed().fields(g.RHO, g.Z), 1)
    assert reconstruct(seed_state).w.report.residual > 20 * reconstruct(chi_state[0]).w.report.residual


def test_twist_convention_validated(chi_state):
    with pytest.raises(ValueError, match="convention"):
        twist_form(chi_state[0], "hodge")


def test_warnings_collected_above_threshold(chi_state):
    f = reconstruct(chi_state[0], warn_above=1e-12)
    assert any(w.startswith("w:") for w in f.warnings)
    assert reconstruct(chi_state[0], warn_above=1.0).warnings == []


def test_k0_metric_has_empty_gauge_potential():
    o = KerrNewmanOracle(1.0, 0.5, 0.0)
    g = Grid.build(o.rods, 8.0, 0.25, 1.2, min_gap_cells=4)
    m = assemble_metric(reconstruct(exact_state(o, g)))
    assert m.A_t.shape == (0, m.rho.size)
