"""Energy minimization on balls and the exhaustion ``R -> infinity``.

The boundary-value problem on ``B_R`` is solved by minimizing the discrete
renormalized energy of :class:`~axiharm.discretization.Discretization`:
damped Newton steps (sparse LU, Levenberg shift when the Hessian is not a
descent direction, Armijo backtracking on the energy), with red-black block
Gauss-Seidel as a fallback.  Convergence is measured by the largest tension
norm of the discrete Euler-Lagrange residual.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import RegularGridInterpolator
from scipy.sparse.linalg import splu

from .discretization import Discretization, Grid, default_core, fd_jet
from .errors import SolverError
from .geometry import distance_packed, inner_packed, norm_packed, tension_packed

log = logging.getLogger(__name__)

EPS = np.finfo(float).eps


@dataclass
class SolveParams:
    """Knobs of a solve and of the exhaustion schedule.

    ``h`` is the core grid spacing, ``grading`` the nominal growth factor of
    cells outside the core, ``refine`` the number of nested refinements
    applied on top and ``min_gap_cells`` the coarsest allowed resolution of
    a gap.  ``R_schedule`` defaults to ``(8, 16, 32)`` times the rod
    configuration's diameter.
    """

    tol: float = 1e-8
    max_iters: int = 80
    armijo: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 40
    patience: int = 10
    method: str = "newton"          # "newton" or "gauss-seidel"
    gs_max_sweeps: int = 20000
    R_schedule: tuple = ()
    h: float = 0.25
    grading: float = 1.1
    refine: int = 0
    min_gap_cells: int = 8

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.method not in ("newton", "gauss-seidel"):
            raise ValueError(f"unknown method {self.method!r}")
        sched = tuple(float(r) for r in self.R_schedule)
        if any(b <= a for a, b in zip(sched, sched[1:])):
            raise ValueError("R_schedule must be strictly increasing")
        if self.h <= 0 or self.grading < 1 or self.refine < 0 or self.min_gap_cells < 1:
            raise ValueError("need h > 0, grading >= 1, refine >= 0, min_gap_cells >= 1")
        self.R_schedule = sched

    def schedule(self, rods):
        if self.R_schedule:
            return self.R_schedule
        L = rods.diameter
        return (8 * L, 16 * L, 32 * L)


@dataclass
class FieldState:
    """Discrete fields ``(U, v, chi, psi)`` with ``U = u - u0`` on a grid."""

    grid: Grid
    x: np.ndarray
    k: int
    iterations: int = 0
    converged: bool = False
    residual: float = np.inf

    @property
    def R(self):
        return self.grid.R

    @property
    def u_reg(self):
        return self.x[0]

    @property
    def v(self):
        return self.x[1]

    @property
    def chi(self):
        return self.x[2:2 + self.k]

    @property
    def psi(self):
        return self.x[2 + self.k:]

    def u(self):
        """``u = U + u0``; ``+inf`` on Sigma nodes."""
        g = self.grid
        out = np.full(g.shape, np.inf)
        off = ~g.sigma_nodes
        out[off] = self.x[0][off] + g.rods.u0(g.RHO[off], g.Z[off])
        return out

    def points(self):
        """Packed target points at non-Sigma nodes (Sigma nodes get ``u = 0``)."""
        p = self.x.copy()
        u = self.u()
        p[0] = np.where(np.isfinite(u), u, 0.0)
        return p

    def copy(self):
        return FieldState(self.grid, self.x.copy(), self.k, self.iterations, self.converged, self.residual)


@dataclass
class SolveReport:
    R: float
    grid: dict
    method: str
    converged: bool = False
    iterations: int = 0
    energy_history: list = field(default_factory=list)
    residual_history: list = field(default_factory=list)
    step_lengths: list = field(default_factory=list)
    shifts: list = field(default_factory=list)
    fallback_used: bool = False
    message: str = ""
    sigma_max: float = float("nan")
    seconds: float = 0.0

    @property
    def final_residual(self):
        return self.residual_history[-1] if self.residual_history else float("nan")

    def energy_monotone(self, rel=1e-12):
        e = np.asarray(self.energy_history)
        return bool(np.all(np.diff(e) <= rel * np.maximum(np.abs(e[:-1]), 1e-300)))

    def to_dict(self):
        return {
            "R": self.R,
            "grid": self.grid,
            "method": self.method,
            "converged": self.converged,
            "iterations": self.iterations,
            "energy_history": [float(e) for e in self.energy_history],
            "residual_history": [float(r) for r in self.residual_history],
            "fallback_used": self.fallback_used,
            "message": self.message,
            "sigma_max": float(self.sigma_max),
        }


# ---------------------------------------------------------------------------
# energies and residuals on states


def discretize(state_or_grid, data, k=None) -> Discretization:
    grid = state_or_grid.grid if isinstance(state_or_grid, FieldState) else state_or_grid
    kk = state_or_grid.k if isinstance(state_or_grid, FieldState) else k
    return Discretization(grid, data, kk)


def discrete_energy(state: FieldState, data, rule: str = "edge", disc: Discretization | None = None) -> float:
    """Renormalized energy of ``state``.

    ``rule="edge"`` is the solver's own finite-volume sum.  ``rule="cell"``
    is an independent quadrature: gradients from the four corners of each
    fully inside cell, the integrand evaluated at the cell centre with the
    exact ``u0`` there.
    """
    if not np.all(np.isfinite(state.x[:, state.grid.inside])):
        raise ValueError("state has non-finite entries")
    if rule == "edge":
        disc = disc or discretize(state, data)
        return disc.energy(state.x)
    if rule != "cell":
        raise ValueError(f"unknown quadrature rule {rule!r}")
    g = state.grid
    x = state.x
    ins = g.inside
    cell = ins[:-1, :-1] & ins[1:, :-1] & ins[:-1, 1:] & ins[1:, 1:]
    dr = np.diff(g.rho)[:, None]
    dz = np.diff(g.z)[None, :]
    rc = 0.5 * (g.rho[:-1] + g.rho[1:])[:, None] * np.ones_like(dz)
    zc = 0.5 * (g.z[:-1] + g.z[1:])[None, :] * np.ones_like(dr)
    c00, c10, c01, c11 = x[:, :-1, :-1], x[:, 1:, :-1], x[:, :-1, 1:], x[:, 1:, 1:]
    mid = 0.25 * (c00 + c10 + c01 + c11)
    grad_r = 0.5 * ((c10 - c00) + (c11 - c01)) / dr
    grad_z = 0.5 * ((c01 - c00) + (c11 - c10)) / dz
    u0 = g.rods.u0(rc, zc)
    pts = mid.copy()
    pts[0] = mid[0] + u0
    # the first row of the gradients is grad U, which is what the renormalized energy uses
    dens = sum(inner_packed(pts, gr, gr) for gr in (grad_r, grad_z))
    weight = 2 * np.pi * rc * dr * dz
    return float(np.sum(np.where(cell, dens * weight, 0.0)))


def discrete_euler_lagrange(state: FieldState, data):
    """Pointwise tension from central differences through the closed-form operator.

    Returns ``(tau, norm)`` on interior off-axis nodes and gap-axis nodes
    (zero elsewhere).  ``u = U + u0`` with the exact gradient of ``u0`` and
    ``Delta u0 = 0``.  Derivatives use three-point formulas on the
    nonuniform grid; on the axis inside gaps the Laplacian is
    ``2 f_rr + f_zz`` (even reflection).
    """
    g = state.grid
    x = state.x
    rods = g.rods
    tau = np.zeros_like(x)
    norm = np.zeros(g.shape)
    interior = g.inside & ~g.dirichlet
    interior[:, 0] = False
    interior[:, -1] = False
    interior[-1] = False
    fr, fz, lap = fd_jet(g, x)
    sel = interior & ~g.sigma_nodes
    R_, Z_ = g.RHO[sel], g.Z[sel]
    pts = x[:, sel].copy()
    pts[0] += rods.u0(R_, Z_)
    gu = rods.grad_u0(R_, Z_)
    grad = np.stack([fr[:, sel], fz[:, sel]])
    grad[0, 0] += gu[0]
    grad[1, 0] += gu[1]
    L = lap[:, sel]
    t = tension_packed(pts, grad, L)
    tau[:, sel] = t
    norm[sel] = norm_packed(pts, t)
    return tau, norm


def sigma_field(state: FieldState, data):
    """``sqrt(1 + dist^2) - 1`` between the state and ``data`` on inside nodes.

    On Sigma nodes both maps share ``(v, chi, psi)`` and ``u = +inf``; the
    distance there is the limit ``|U_state - U_data|``.
    """
    g = state.grid
    ref = np.asarray(data.fields(g.RHO, g.Z), dtype=float)
    d = np.zeros(g.shape)
    off = g.inside & ~g.sigma_nodes
    u0 = g.rods.u0(g.RHO[off], g.Z[off])
    p = state.x[:, off].copy()
    q = ref[:, off].copy()
    p[0] += u0
    q[0] += u0
    d[off] = distance_packed(p, q)
    sig = g.inside & g.sigma_nodes
    d[sig] = np.abs(state.x[0][sig] - ref[0][sig])
    return np.sqrt(1 + d * d) - 1, d


# ---------------------------------------------------------------------------
# solvers


def _scaled_solve(H, g, shift=0.0):
    d = H.diagonal()
    s = np.where(d > 0, 1.0 / np.sqrt(np.where(d > 0, d, 1.0)), 1.0)
    S = sp.diags(s)
    Hs = (S @ H @ S).tocsc()
    if shift:
        Hs = Hs + shift * sp.identity(Hs.shape[0], format="csc")
    lu = splu(Hs, permc_spec="MMD_AT_PLUS_A")
    y = lu.solve(-(s * g))
    return s * y


def _newton(disc: Discretization, x, params: SolveParams, report: SolveReport):
    F = disc.energy(x)
    G = disc.gradient(x)
    res = disc.residual(x, G)
    report.energy_history.append(F)
    report.residual_history.append(res)
    best = res
    stall = 0
    for it in range(params.max_iters):
        if res <= params.tol:
            report.converged = True
            break
        g = disc.free_vector(G)
        H = disc.hessian(x)
        shift = 0.0
        for _ in range(12):
            try:
                d = _scaled_solve(H, g, shift)
            except RuntimeError:
                d = None
            if d is not None and np.all(np.isfinite(d)) and g @ d < 0:
                break
            shift = 1e-6 if shift == 0 else shift * 10
        else:
            report.message = "no descent direction"
            return x, False
        slope = float(g @ d)
        t = 1.0
        slack = 64 * EPS * max(abs(F), 1e-300)
        accepted = False
        for _ in range(params.max_backtracks):
            y = disc.apply_step(x, d, t)
            Fy = disc.energy(y)
            if np.isfinite(Fy) and (Fy <= F + params.armijo * t * slope or (Fy <= F + slack and t == 1.0)):
                accepted = True
                break
            t *= params.backtrack
        if not accepted:
            report.message = "line search failed"
            return x, False
        x = y
        F = Fy
        G = disc.gradient(x)
        res = disc.residual(x, G)
        if not (np.isfinite(res) and np.all(np.isfinite(x))):
            raise SolverError("non-finite values during Newton iteration", report)
        report.energy_history.append(F)
        report.residual_history.append(res)
        report.step_lengths.append(t)
        report.shifts.append(shift)
        report.iterations += 1
        if res < best:
            best = res
            stall = 0
        else:
            stall += 1
            if res > 1e6 * max(best, params.tol):
                report.message = "residual diverging"
                raise SolverError(f"Newton diverged (residual {res:.3e}, best {best:.3e})", report)
            if stall > params.patience:
                # the residual of a near-solution is rounding noise amplified by 1/volume
                report.message = f"residual stalled at {best:.3e} (rounding floor above tol)"
                return x, False
        log.debug("newton it=%d F=%.12e res=%.3e t=%.3g shift=%.1e", it, F, res, t, shift)
    report.converged = res <= params.tol
    return x, report.converged


def _gauss_seidel(disc: Discretization, x, params: SolveParams, report: SolveReport, sweeps=None):
    """Red-black block relaxation: per-node Newton with local backtracking."""
    grid = disc.grid
    m = disc.m
    n = grid.n_nodes
    ii, jj = np.meshgrid(np.arange(grid.shape[0]), np.arange(grid.shape[1]), indexing="ij")
    color = ((ii + jj) % 2).ravel()
    free = disc.flat(disc.free)                           # (m, n)
    any_free = free.any(axis=0)
    ea, eb = disc.ea, disc.eb
    F = disc.energy(x)
    sweeps = params.gs_max_sweeps if sweeps is None else sweeps
    res = disc.residual(x)
    for sweep in range(sweeps):
        for c in (0, 1):
            nodes = np.nonzero(any_free & (color == c))[0]
            if nodes.size == 0:
                continue
            G = disc.flat(disc.gradient(x))
            blocks = disc.node_blocks(x)[nodes]
            fm = free[:, nodes].T                         # (nn, m)
            gl = np.where(fm, G[:, nodes].T, 0.0)
            mask2 = fm[:, :, None] & fm[:, None, :]
            blocks = np.where(mask2, blocks, 0.0)
            blocks[:, np.arange(m), np.arange(m)] += np.where(fm, 0.0, 1.0)
            try:
                step = -np.linalg.solve(blocks, gl[:, :, None])[:, :, 0]
            except np.linalg.LinAlgError:
                step = -gl / np.maximum(np.abs(np.diagonal(blocks, axis1=1, axis2=2)), 1e-300)
            bad = np.sum(step * gl, axis=1) >= 0
            step[bad] = -gl[bad] / np.maximum(np.abs(np.diagonal(blocks, axis1=1, axis2=2))[bad], 1e-300)
            e_old = _node_energy(disc, x, n)
            tvec = np.ones(nodes.size)
            pending = np.ones(nodes.size, dtype=bool)
            xf = disc.flat(x)
            base = xf[:, nodes].copy()
            for _ in range(30):
                trial = x.copy()
                tf = disc.flat(trial)
                tf[:, nodes] = base + (tvec * pending)[None] * step.T
                e_new = _node_energy(disc, trial, n)
                ok = e_new[nodes] <= e_old[nodes] + 64 * EPS * np.abs(e_old[nodes])
                done = pending & ok
                xf[:, nodes[done]] = tf[:, nodes[done]]
                pending &= ~ok
                if not pending.any():
                    break
                tvec[pending] *= 0.5
            x = xf.reshape(x.shape)
        Fn = disc.energy(x)
        report.energy_history.append(Fn)
        res = disc.residual(x)
        report.residual_history.append(res)
        report.iterations += 1
        if not np.isfinite(res):
            raise SolverError("non-finite values during relaxation", report)
        if res <= params.tol:
            report.converged = True
            break
        F = Fn
    del ea, eb, F
    return x, report.converged


def _node_energy(disc, x, n):
    e = disc.edge_energies(x)
    return np.bincount(disc.ea, weights=e, minlength=n) + np.bincount(disc.eb, weights=e, minlength=n)


def solve_on_ball(data, rods, grid: Grid, params: SolveParams | None = None, init: FieldState | None = None,
                  k: int | None = None):
    """Minimize the energy on ``grid`` with Dirichlet data from ``data``.

    ``data`` is a seed map or any object with ``fields(rho, z)`` returning
    packed ``(U, v, chi, psi)``; its values are imposed on the outer
    boundary and, for ``(v, chi, psi)``, on the axis nodes of Sigma.
    Returns ``(state, report)``; raises :class:`SolverError` on divergence.
    """
    params = params or SolveParams()
    k = data.k if k is None else k
    if rods != grid.rods:
        raise ValueError("grid was built for different rods")
    t0 = time.perf_counter()
    disc = Discretization(grid, data, k)
    x = disc.initial(None if init is None else _transfer(init, grid, data))
    report = SolveReport(R=grid.R, grid=grid.describe(), method=params.method)
    if params.method == "newton":
        x, ok = _newton(disc, x, params, report)
        if not ok and not report.converged and not report.message.startswith("residual stalled"):
            report.fallback_used = True
            log.info("Newton stopped (%s); continuing with Gauss-Seidel", report.message)
            x, ok = _gauss_seidel(disc, x, params, report, sweeps=min(params.gs_max_sweeps, 200))
    else:
        x, ok = _gauss_seidel(disc, x, params, report)
    disc.impose(x)
    res = disc.residual(x)
    state = FieldState(grid, x, k, report.iterations, res <= params.tol, res)
    report.converged = state.converged
    report.sigma_max = float(np.max(sigma_field(state, data)[0]))
    report.seconds = time.perf_counter() - t0
    if not report.converged and not report.message:
        report.message = "iteration budget exhausted"
    return state, report


def _transfer(init: FieldState | np.ndarray, grid: Grid, data):
    """Interpolate a state onto ``grid``; outside its disk use ``data``."""
    if isinstance(init, np.ndarray):
        return init
    if init.grid is grid or (init.grid.shape == grid.shape and np.array_equal(init.grid.rho, grid.rho)
                             and np.array_equal(init.grid.z, grid.z)):
        return init.x
    base = np.asarray(data.fields(grid.RHO, grid.Z), dtype=float)
    old = init.grid
    src = np.where(old.inside[None], init.x, np.asarray(data.fields(old.RHO, old.Z), dtype=float))
    pts = np.stack([grid.RHO, grid.Z], axis=-1)
    within = (grid.RHO <= old.rho[-1]) & (np.abs(grid.Z) <= old.z[-1]) & \
        (grid.RHO ** 2 + grid.Z ** 2 <= old.R ** 2)
    out = base.copy()
    for c in range(src.shape[0]):
        f = RegularGridInterpolator((old.rho, old.z), src[c], method="linear", bounds_error=False, fill_value=None)
        out[c][within] = f(pts[within])
    return out


def solve_nested(data, rods, grid: Grid, levels: int, params: SolveParams | None = None, init=None, k=None):
    """Solve on ``grid``, then on each refinement, warm-starting each level."""
    params = params or SolveParams()
    state, report = solve_on_ball(data, rods, grid, params, init, k)
    reports = [report]
    for lev in range(1, levels + 1):
        g = grid.refined(lev)
        state, report = solve_on_ball(data, rods, g, params, state, k)
        reports.append(report)
    return state, reports


def probe_points(grid: Grid, radius: float):
    """Off-axis grid nodes within ``radius`` (shared by grids with the same core)."""
    sel = grid.inside & (grid.RHO > 0) & (grid.RHO ** 2 + grid.Z ** 2 <= radius ** 2)
    return grid.RHO[sel], grid.Z[sel]


def _values_at(state: FieldState, rho, z):
    g = state.grid
    out = np.empty((state.x.shape[0], rho.size))
    ir = np.searchsorted(g.rho, rho)
    iz = np.searchsorted(g.z, z)
    exact = (ir < g.rho.size) & (iz < g.z.size)
    exact &= np.isclose(g.rho[np.minimum(ir, g.rho.size - 1)], rho, rtol=0, atol=1e-12)
    exact &= np.isclose(g.z[np.minimum(iz, g.z.size - 1)], z, rtol=0, atol=1e-12)
    if np.all(exact):
        return state.x[:, ir, iz]
    for c in range(out.shape[0]):
        f = RegularGridInterpolator((g.rho, g.z), state.x[c], method="linear")
        out[c] = f(np.stack([rho, z], axis=-1))
    return out


def cauchy_difference(s1: FieldState, s2: FieldState, rho, z):
    """``max dist(s1, s2)`` over probe points (off the axis)."""
    rods = s1.grid.rods
    a = _values_at(s1, rho, z)
    b = _values_at(s2, rho, z)
    u0 = rods.u0(rho, z)
    a[0] += u0
    b[0] += u0
    return float(np.max(distance_packed(a, b)))


def exhaust(data, rods, params: SolveParams | None = None, probe_radius: float | None = None, k=None):
    """Solve on the balls of ``params.schedule`` with warm starts.

    Returns ``(runs, cauchy)`` where ``runs`` is a list of
    ``(R, state, report)`` and ``cauchy[i]`` is the largest distance between
    consecutive solutions over the probe ball.
    """
    params = params or SolveParams()
    sched = params.schedule(rods)
    runs = []
    prev = None
    for R in sched:
        grid = Grid.build(rods, R, params.h, params.grading,
                          min_gap_cells=params.min_gap_cells).refined(params.refine)
        state, report = solve_on_ball(data, rods, grid, params, prev, k)
        runs.append((R, state, report))
        prev = state
    r0 = probe_radius if probe_radius is not None else min(sched[0] / 2, _core_of(runs[0][1].grid))
    rho, z = probe_points(runs[0][1].grid, r0)
    cauchy = [cauchy_difference(runs[i][1], runs[i + 1][1], rho, z) for i in range(len(runs) - 1)]
    return runs, cauchy


def _core_of(grid: Grid):
    return default_core(grid.rods)
