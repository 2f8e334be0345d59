"""Analytic-oracle suites run by ``axiharm validate``.

Each suite returns a :class:`SuiteResult`; the command passes iff all do.
Randomness is drawn from fixed seeds so repeated runs are identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .discretization import Grid
from .geometry import (TargetPoint, christoffel_tension_packed, distance_packed, geodesic_bvp,
                       tension_packed)
from .oracles import KerrNewmanOracle, fd_tension
from .rods import RodConfig, SingularMapSpec
from .seed import build_seed
from .solver import SolveParams, exhaust, solve_on_ball


@dataclass
class SuiteResult:
    name: str
    passed: bool
    metrics: dict = field(default_factory=dict)

    def to_dict(self):
        return {"name": self.name, "passed": bool(self.passed), "metrics": self.metrics}


def random_jets(rng, k: int, n: int, spread: float = 1.0):
    """``n`` random packed jets ``(x, grad, lap)`` of maps from R^3 into H^{k+1}_C."""
    m = 2 * k + 2
    x = rng.uniform(-spread, spread, size=(m, n))
    grad = rng.normal(size=(3, m, n))
    lap = rng.normal(size=(m, n))
    return x, grad, lap


def tension_relative_gap(x, grad, lap):
    """Per-jet ``max |closed form - Christoffel route|`` over the larger of the two."""
    a = tension_packed(x, grad, lap)
    b = christoffel_tension_packed(x, grad, lap)
    scale = np.maximum(np.max(np.abs(a), axis=0), np.max(np.abs(b), axis=0))
    return np.max(np.abs(a - b), axis=0) / np.maximum(scale, 1e-300)


def tension_suite(ks=(0, 1, 2, 4), n_jets: int = 1000, tol: float = 1e-10, seed: int = 0) -> SuiteResult:
    rng = np.random.default_rng(seed)
    worst = {}
    for k in ks:
        worst[str(k)] = float(np.max(tension_relative_gap(*random_jets(rng, k, n_jets))))
    return SuiteResult("tension", max(worst.values()) <= tol,
                       {"max_relative_gap": worst, "n_jets": n_jets, "tol": tol})


def distance_suite(ks=(0, 1, 2), n_pairs: int = 4, tol: float = 1e-6, seed: int = 1) -> SuiteResult:
    """Closed-form distance against the length of a collocated geodesic."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for k in ks:
        m = 2 * k + 2
        for _ in range(n_pairs):
            x = rng.uniform(-0.6, 0.6, size=m)
            y = rng.uniform(-0.6, 0.6, size=m)
            d = float(distance_packed(x[:, None], y[:, None])[0])
            length, _ = geodesic_bvp(TargetPoint.from_packed(x), TargetPoint.from_packed(y))
            worst = max(worst, abs(length - d) / max(d, 1e-12))
    return SuiteResult("distance", worst <= tol, {"max_relative_gap": worst, "tol": tol})


def schwarzschild_suite(h: float = 0.25, tol: float = 1e-8) -> SuiteResult:
    """Zero constants on one gap: the solution is the singular map itself."""
    rods = RodConfig([(-1.0, 1.0)])
    seed = build_seed(rods, SingularMapSpec.zeros(1, 0))
    params = SolveParams(tol=1e-10, h=h, R_schedule=(8.0, 16.0, 32.0))
    runs, _ = exhaust(seed, rods, params)
    sup_u = [float(np.max(np.abs(s.u_reg[s.grid.inside]))) for _, s, _ in runs]
    sup_v = [float(np.max(np.abs(s.v[s.grid.inside]))) for _, s, _ in runs]
    ok = all(r.converged for _, _, r in runs) and max(sup_u) <= tol and max(sup_v) <= tol
    return SuiteResult("schwarzschild", ok, {"R": [R for R, _, _ in runs], "sup_u_reg": sup_u, "sup_v": sup_v})


def kerr_suite(a: float = 0.5, R: float = 8.0, h: float = 0.2, levels=(1, 2), min_order: float = 1.6) -> SuiteResult:
    """Certify the Kerr map, then recover it from its own boundary data."""
    o = KerrNewmanOracle(1.0, a, 0.0)
    rho = np.array([0.7, 1.3, 2.0, 0.4])
    z = np.array([0.4, -1.5, 2.5, 1.2])
    t1, t2 = fd_tension(o, rho, z, 1e-2), fd_tension(o, rho, z, 5e-3)
    cert = float(np.min(np.log2(t1 / t2)))
    base = Grid.build(o.rods, R, h, 1.15, min_gap_cells=4)
    errs = []
    for lev in levels:
        g = base.refined(lev)
        st, rep = solve_on_ball(o, o.rods, g, SolveParams(tol=1e-10))
        if not rep.converged:
            return SuiteResult("kerr", False, {"message": f"solve did not converge at level {lev}"})
        diff = np.abs(st.x - o.fields(g.RHO, g.Z))[:, g.inside]
        errs.append(diff.max(axis=1))
    orders = np.log2(errs[0] / errs[1]) / (levels[1] - levels[0])
    ok = abs(cert - 2.0) <= 0.2 and bool(np.all(orders >= min_order))
    return SuiteResult("kerr", ok, {"certification_order": cert, "sup_errors": [e.tolist() for e in errs],
                                    "orders": orders.tolist(), "min_order": min_order})


SUITES = {
    "tension": tension_suite,
    "distance": distance_suite,
    "schwarzschild": schwarzschild_suite,
    "kerr": kerr_suite,
}


def run_suites(names=None):
    names = list(SUITES) if names is None else list(names)
    return [SUITES[n]() for n in names]
