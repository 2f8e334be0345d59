"""Numerical checks of the analytic estimates behind a solve.

The solved map ``phi`` and the seed ``phi~`` are compared through
``sigma = sqrt(1 + dist(phi, phi~)^2) - 1``.  With ``c`` the measured
constant in ``||tau(phi~)|| <= c (1 + r^2)^{-3/2}`` and ``nu`` the radial
solution of ``Delta nu = (1 + r^2)^{-3/2}`` in R^3 vanishing at infinity,
the function ``sigma + c nu`` is subharmonic, which gives

* ``sigma + c nu <= c nu(R)`` on the ball of radius ``R``,
* ``sigma <= c`` since ``nu(0) = -1``,
* ``sigma <= -c nu`` for the limit map.

Each check reports a violation measure instead of a bare boolean so that
discretization slack is visible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import RegularGridInterpolator

from .discretization import Grid, fd_jet
from .solver import FieldState, discrete_euler_lagrange, sigma_field

N_DIM = 3
VIOLATION_LIMIT = 0.01


# ---------------------------------------------------------------------------
# comparison function


def _bracket(t):
    """``asinh t - t / sqrt(1 + t^2)``, i.e. ``int_0^t s^2 (1 + s^2)^{-3/2} ds``."""
    if t < 1e-2:
        t2 = t * t
        return t * t2 * (1.0 / 3.0 - 0.3 * t2 + (15.0 / 56.0) * t2 * t2)
    return np.arcsinh(t) - t / np.sqrt(1.0 + t * t)


def _nu_prime(t):
    return _bracket(t) / (t * t) if t > 0 else 0.0


def _nu_scalar(r):
    a = quad(_nu_prime, r, r + 1.0, epsabs=1e-13, epsrel=1e-12, limit=200)[0]
    b = quad(_nu_prime, r + 1.0, np.inf, epsabs=1e-13, epsrel=1e-12, limit=400)[0]
    return -(a + b)


def comparison_nu(r):
    """Radial solution of ``Delta nu = (1 + r^2)^{-3/2}`` in R^3 with ``nu -> 0``.

    Integrating the radial Laplacian once gives ``r^2 nu' = asinh r -
    r / sqrt(1 + r^2)``; ``nu`` is minus the tail integral of ``nu'``,
    computed by adaptive quadrature.  ``nu(0) = -1``.
    """
    r = np.asarray(r, dtype=float)
    if np.any(r < 0) or np.any(~np.isfinite(r)):
        raise ValueError("comparison_nu needs finite r >= 0")
    out = np.vectorize(_nu_scalar, otypes=[float])(r)
    return out if out.ndim else float(out)


def comparison_nu_prime(r):
    r = np.asarray(r, dtype=float)
    out = np.vectorize(_nu_prime, otypes=[float])(r)
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# distance field


@dataclass
class DistanceField:
    """``sigma = sqrt(1 + d^2) - 1`` and ``d = dist(phi, phi~)`` on a grid."""

    grid: Grid
    sigma: np.ndarray
    rho_dist: np.ndarray

    @property
    def radius(self):
        return np.hypot(self.grid.RHO, self.grid.Z)

    @property
    def sigma_max(self):
        return float(np.max(self.sigma[self.grid.inside]))


def distance_field(state: FieldState, seed) -> DistanceField:
    sigma, d = sigma_field(state, seed)
    return DistanceField(state.grid, sigma, d)


def _interior(grid: Grid):
    ins = grid.inside & ~grid.dirichlet
    ins[:, 0] = False
    ins[:, -1] = False
    ins[-1] = False
    return ins


def _local_h(grid: Grid):
    """Largest adjacent spacing at each node."""
    def widths(x):
        d = np.diff(x)
        return np.maximum(np.concatenate([[d[0]], d]), np.concatenate([d, [d[-1]]]))
    return np.maximum(widths(grid.rho)[:, None], widths(grid.z)[None, :])


# ---------------------------------------------------------------------------
# maximum principle and the R-independent bound


@dataclass
class BoundReport:
    """Checks of ``sigma + c nu <= c nu(R)`` and ``sigma <= c / (n - 2)``."""

    R: float
    sigma_max: float
    c_measured: float
    bound: float
    nu_at_R: float
    maxprinc_excess: float
    maxprinc_fraction: float
    tol: float
    bound_pass: bool
    maxprinc_pass: bool

    @property
    def passed(self):
        return self.bound_pass and self.maxprinc_pass

    def to_dict(self):
        return {
            "R": float(self.R),
            "sigma_max": float(self.sigma_max),
            "c_measured": float(self.c_measured),
            "bound": float(self.bound),
            "nu_at_R": float(self.nu_at_R),
            "maxprinc_excess": float(self.maxprinc_excess),
            "maxprinc_fraction": float(self.maxprinc_fraction),
            "tol": float(self.tol),
            "bound_pass": self.bound_pass,
            "maxprinc_pass": self.maxprinc_pass,
        }


def _nu_on_nodes(r):
    """``nu`` at many radii: quadrature on a sorted sample, then interpolation."""
    r = np.asarray(r, dtype=float)
    if r.size <= 64:
        return comparison_nu(r)
    lo, hi = float(r.min()), float(r.max())
    knots = np.unique(np.concatenate([np.linspace(lo, hi, 257), np.geomspace(max(lo, 1e-3), hi, 129)]))
    vals = comparison_nu(knots)
    return np.interp(r, knots, vals)


def check_max_principle(fld: DistanceField, c_measured: float, R: float | None = None,
                        tol: float = 1e-6) -> BoundReport:
    """Pointwise ``sigma + c nu(r) <= c nu(R) + tol`` and ``sigma_max <= c / (n - 2) + tol``.

    The pointwise inequality passes when it holds on at least 99% of the
    inside nodes.
    """
    g = fld.grid
    R = g.R if R is None else float(R)
    ins = g.inside
    r = fld.radius[ins]
    nu = _nu_on_nodes(r)
    nuR = comparison_nu(R)
    lhs = fld.sigma[ins] + c_measured * nu
    excess = lhs - c_measured * nuR
    frac = float(np.mean(excess <= tol))
    smax = fld.sigma_max
    bound = c_measured / (N_DIM - 2)
    return BoundReport(R, smax, c_measured, bound, nuR, float(excess.max()), frac, tol,
                       bool(smax <= bound + tol), bool(frac >= 1.0 - VIOLATION_LIMIT))


@dataclass
class UniformityVerdict:
    radii: list
    sigma_max: list
    bound: float
    slope: float
    slope_stderr: float
    bounded: bool
    no_growth: bool

    @property
    def passed(self):
        return self.bounded and self.no_growth

    def to_dict(self):
        return {"radii": [float(r) for r in self.radii], "sigma_max": [float(s) for s in self.sigma_max],
                "bound": float(self.bound), "slope": float(self.slope),
                "slope_stderr": float(self.slope_stderr), "bounded": self.bounded,
                "no_growth": self.no_growth}


def uniformity_across_R(reports, tol: float = 1e-6) -> UniformityVerdict:
    """``sigma_max(R)`` stays under one bound and shows no upward trend.

    The trend is the least-squares slope of ``sigma_max`` against ``R``;
    it passes when ``slope <= 2 * stderr`` (with a floor at ``tol`` per unit
    radius so exact zeros pass).
    """
    if len(reports) < 3:
        raise ValueError("uniformity needs at least three radii")
    R = np.array([rep.R for rep in reports], dtype=float)
    s = np.array([rep.sigma_max for rep in reports], dtype=float)
    bound = max(rep.bound for rep in reports)
    A = np.column_stack([np.ones_like(R), R])
    coef, *_ = np.linalg.lstsq(A, s, rcond=None)
    resid = s - A @ coef
    dof = R.size - 2
    s2 = float(resid @ resid) / dof
    cov = s2 * np.linalg.inv(A.T @ A)
    slope, err = float(coef[1]), float(np.sqrt(max(cov[1, 1], 0.0)))
    return UniformityVerdict(R.tolist(), s.tolist(), bound, slope, err,
                             bool(np.all(s <= bound + tol)),
                             bool(slope <= 2 * err + tol / max(R.max() - R.min(), 1.0)))


# ---------------------------------------------------------------------------
# subharmonicity of the distance


@dataclass
class SubharmonicReport:
    """``Delta sqrt(1 + d^2) >= -(||tau_A|| + ||tau_B||)`` with ``O(h^2)`` slack."""

    n_nodes: int
    n_violations: int
    worst: float
    slack_factor: float

    @property
    def violation_fraction(self):
        return self.n_violations / self.n_nodes if self.n_nodes else 0.0

    @property
    def passed(self):
        return self.violation_fraction < VIOLATION_LIMIT

    def to_dict(self):
        return {"n_nodes": self.n_nodes, "n_violations": self.n_violations,
                "violation_fraction": self.violation_fraction, "worst": float(self.worst),
                "slack_factor": float(self.slack_factor), "passed": self.passed}


def _packed_and_tension(obj, grid: Grid, k: int):
    """Grid values ``(U, v, chi, psi)`` and the tension norm of a state or a seed."""
    if isinstance(obj, FieldState):
        if obj.grid is not grid and obj.grid.shape != grid.shape:
            raise ValueError("states live on different grids")
        return obj.x, discrete_euler_lagrange(obj, None)[1]
    x = np.asarray(obj.fields(grid.RHO, grid.Z), dtype=float)
    norm = np.zeros(grid.shape)
    sel = _interior(grid) & ~grid.sigma_nodes
    norm[sel] = obj.tension_norm(grid.RHO[sel], grid.Z[sel])
    return x, norm


def check_dist_subharmonic(a, b, grid: Grid | None = None, slack_factor: float = 1.0) -> SubharmonicReport:
    """Test the distance inequality between two maps on one grid.

    ``a`` and ``b`` are solved states or seeds (anything with ``fields``
    and ``tension_norm``); at least one must be a state unless ``grid`` is
    given.  A node violates when ``Delta f + ||tau_a|| + ||tau_b||`` is
    below ``-slack_factor * h^2 * (1 + |Delta f|)`` with ``h`` the local
    spacing and ``f = sqrt(1 + d^2)``.
    """
    if grid is None:
        grid = a.grid if isinstance(a, FieldState) else b.grid
    k = a.k if isinstance(a, FieldState) else b.k
    xa, ta = _packed_and_tension(a, grid, k)
    xb, tb = _packed_and_tension(b, grid, k)

    class _Ref:
        def fields(self, rho, z):
            return xb

    probe = FieldState(grid, xa, k)
    _, d = sigma_field(probe, _Ref())
    f = np.sqrt(1.0 + d * d)
    lap = fd_jet(grid, f)[2]
    sel = _interior(grid) & ~grid.sigma_nodes
    lhs = lap + ta + tb
    slack = slack_factor * _local_h(grid) ** 2 * (1.0 + np.abs(lap))
    bad = sel & (lhs < -slack)
    worst = float(np.min(np.where(sel, lhs + slack, np.inf))) if sel.any() else 0.0
    return SubharmonicReport(int(sel.sum()), int(bad.sum()), min(worst, 0.0), slack_factor)


# ---------------------------------------------------------------------------
# decay at infinity


@dataclass
class DecayAtInfinity:
    """``sigma`` along rays against the envelope ``-c nu(r)``."""

    c_measured: float
    angles: np.ndarray
    radii: np.ndarray
    sigma: np.ndarray           # (n_angles, n_radii)
    envelope: np.ndarray        # (n_radii,)
    envelope_fraction: float
    tail_exponent: float
    tol: float

    @property
    def envelope_pass(self):
        return self.envelope_fraction >= 1.0 - VIOLATION_LIMIT

    @property
    def tail_pass(self):
        return bool(self.tail_exponent <= -1.0 + 0.2)

    @property
    def passed(self):
        return self.envelope_pass and self.tail_pass

    def to_columns(self):
        cols = {"r": self.radii, "envelope": self.envelope}
        for i, t in enumerate(self.angles):
            cols[f"sigma_theta{i}"] = self.sigma[i]
        return cols

    def to_dict(self):
        return {"c_measured": float(self.c_measured), "angles": [float(t) for t in self.angles],
                "envelope_fraction": float(self.envelope_fraction),
                "tail_exponent": float(self.tail_exponent), "tol": float(self.tol),
                "envelope_pass": self.envelope_pass, "tail_pass": self.tail_pass}


def decay_at_infinity(state: FieldState, seed, c_measured: float, n_rays: int = 7,
                      n_radii: int = 48, tol: float = 1e-6) -> DecayAtInfinity:
    """Sample ``sigma`` on rays over ``r in [R/4, 3R/4]``.

    Checks ``sigma <= -c nu(r) + tol`` (at least 99% of samples) and fits
    the log-log slope of the per-radius maximum of ``sigma``, which should
    be at most ``-0.8`` when ``sigma`` decays like ``nu ~ -1/r``.
    """
    fld = distance_field(state, seed)
    g = state.grid
    R = g.R
    angles = np.linspace(0.0, np.pi, n_rays + 2)[1:-1]
    radii = np.linspace(R / 4, 3 * R / 4, n_radii)
    interp = RegularGridInterpolator((g.rho, g.z), fld.sigma, method="linear")
    T, Rr = np.meshgrid(angles, radii, indexing="ij")
    pts = np.stack([Rr * np.sin(T), Rr * np.cos(T)], axis=-1)
    sig = interp(pts)
    env = -c_measured * comparison_nu(radii)
    frac = float(np.mean(sig <= env[None, :] + tol))
    top = sig.max(axis=0)
    pos = top > max(tol, 1e-14)
    if pos.sum() >= 3:
        slope = float(np.polyfit(np.log(radii[pos]), np.log(top[pos]), 1)[0])
    else:
        slope = -np.inf
    return DecayAtInfinity(c_measured, angles, radii, sig, env, frac, slope, tol)


# ---------------------------------------------------------------------------
# the inequality used to bound the energy on compact sets


@dataclass
class Step3Report:
    """``2 Q(grad v) <= Delta(u - u0)`` and ``Delta(u - u0) >= 0`` node by node.

    ``Q`` is the quadratic form of the target metric applied to the
    gradients of ``(v, chi, psi)``.  On a harmonic map ``Delta u = 2 e^{4u}
    |Theta|^2 + e^{2u} (|grad chi|^2 + |grad psi|^2)``, so ``Q <= Delta(u -
    u0) <= 2 Q``: the factor-2 inequality is an identity when ``k = 0`` and
    fails wherever ``chi`` or ``psi`` vary.  ``q_fraction`` reports the
    factor-1 inequality, which holds for every ``k``.
    """

    n_nodes: int
    subharmonic_violations: int
    two_q_violations: int
    q_violations: int
    identity_residual: float
    slack_factor: float

    @property
    def subharmonic_fraction(self):
        return self.subharmonic_violations / self.n_nodes if self.n_nodes else 0.0

    @property
    def two_q_fraction(self):
        return self.two_q_violations / self.n_nodes if self.n_nodes else 0.0

    @property
    def q_fraction(self):
        return self.q_violations / self.n_nodes if self.n_nodes else 0.0

    @property
    def passed(self):
        return self.subharmonic_fraction < VIOLATION_LIMIT and self.two_q_fraction < VIOLATION_LIMIT

    def to_dict(self):
        return {"n_nodes": self.n_nodes,
                "subharmonic_fraction": self.subharmonic_fraction,
                "two_q_fraction": self.two_q_fraction,
                "q_fraction": self.q_fraction,
                "identity_residual": float(self.identity_residual),
                "slack_factor": float(self.slack_factor),
                "passed": self.passed}


def step3_inequality_check(state: FieldState, slack_factor: float = 1.0, tube: float = 0.0) -> Step3Report:
    """Evaluate both inequalities node by node with ``O(h^2)`` slack.

    On a harmonic map ``Delta U - 2 e^{4u} |Theta|^2 - e^{2u} |grad(chi,
    psi)|^2`` vanishes, so its finite-difference value is the local
    truncation error; the slack is the larger of that and
    ``slack_factor * h^2 * |Delta U|``.  Nodes closer than ``tube`` to Sigma are skipped.
    """
    g = state.grid
    k = state.k
    fr, fz, lap = fd_jet(g, state.x)
    sel = _interior(g) & ~g.sigma_nodes
    if tube > 0:
        sel &= g.rods.dist_to_sigma(g.RHO, g.Z) >= tube
    u = np.where(sel, state.u(), 0.0)
    chi, psi = state.chi, state.psi
    th_r = fr[1] + np.sum(chi * fr[2 + k:] - psi * fr[2:2 + k], axis=0)
    th_z = fz[1] + np.sum(chi * fz[2 + k:] - psi * fz[2:2 + k], axis=0)
    twist = np.exp(4 * u) * (th_r ** 2 + th_z ** 2)
    gauge = np.exp(2 * u) * np.sum(fr[2:] ** 2 + fz[2:] ** 2, axis=0)
    Q = twist + gauge
    lapU = lap[0]
    ident = np.abs(lapU - 2 * twist - gauge)
    slack = np.maximum(slack_factor * _local_h(g) ** 2 * np.abs(lapU), ident)
    n = int(sel.sum())
    sub = int(np.sum(sel & (lapU < -slack)))
    two = int(np.sum(sel & (2 * Q > lapU + slack)))
    one = int(np.sum(sel & (Q > lapU + slack)))
    return Step3Report(n, sub, two, one, float(ident[sel].max()) if n else 0.0, slack_factor)


@dataclass
class DiagnosticsSummary:
    """All checks for one converged state."""

    bound: BoundReport
    subharmonic: SubharmonicReport
    step3: Step3Report
    extra: dict = field(default_factory=dict)

    @property
    def passed(self):
        return self.bound.passed and self.subharmonic.passed and self.step3.passed

    def to_dict(self):
        out = {"bound": self.bound.to_dict(), "subharmonic": self.subharmonic.to_dict(),
               "step3": self.step3.to_dict(), "passed": self.passed}
        out.update(self.extra)
        return out


def run_diagnostics(state: FieldState, seed, c_measured: float) -> DiagnosticsSummary:
    fld = distance_field(state, seed)
    return DiagnosticsSummary(check_max_principle(fld, c_measured),
                              check_dist_subharmonic(state, seed),
                              step3_inequality_check(state))
