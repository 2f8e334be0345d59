"""Spacetime reconstruction from a solved harmonic map.

Given ``phi = (u, v, chi, psi)`` on the meridian half-plane, the twist form
``omega = 2 (dv + chi.dpsi - psi.dchi)`` and the one-forms

    dw      = e^{4u} i_xi * omega         = rho e^{4u} (omega_rho dz - omega_z drho)
    dlambda = du + kappa
    dtheta  = e^{2u} i_xi * dpsi - w dchi = rho e^{2u} (psi_rho dz - psi_z drho) - w dchi

(``xi = d/dphi``, flat Hodge star on ``d rho^2 + dz^2 + rho^2 dphi^2``) are
closed exactly when the map is harmonic.  They are assembled pointwise from
finite differences and integrated with the trapezoid rule along two
different spanning trees of the grid; the loop integrals around grid
plaquettes measure how far the forms are from closed.

Fields are handled through ``ubar = u + log rho`` (bounded near Sigma), and
``rho``-derivatives are taken as ``2 rho d/ds`` with ``s = rho^2``: smooth
axisymmetric fields are smooth in ``s``, so the near-axis behaviour that
the ``e^{4u} ~ rho^-4`` weights amplify is resolved to second order.

The metric is

    ds^2 = -rho^2 e^{2u} dt^2 + e^{-2u} (dphi - w dt)^2 + e^{2 lambda} (drho^2 + dz^2),
    A    = -(chi dphi + theta dt).

Normalizations: ``w = 0`` and ``lambda + ubar = 0`` at the top axis node of
the outer boundary; ``theta = 0`` at the outer equatorial node.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .discretization import Grid

log = logging.getLogger(__name__)

TWIST_CONVENTIONS = {"reduction": -1.0, "converse": +1.0}


# ---------------------------------------------------------------------------
# finite differences on the masked grid


def _d1(x, f, mask):
    """Derivative along the last axis with three-point Lagrange stencils.

    Central where both neighbours are inside ``mask``, otherwise one-sided
    on two neighbours of the same side; two-point as a last resort, zero for
    isolated nodes.  ``x`` are the node coordinates along that axis.
    """
    n = x.size
    out = np.zeros(np.broadcast_shapes(f.shape, mask.shape))
    okm = np.zeros(mask.shape, dtype=bool)
    okp = np.zeros(mask.shape, dtype=bool)
    okm2 = np.zeros(mask.shape, dtype=bool)
    okp2 = np.zeros(mask.shape, dtype=bool)
    okm[..., 1:] = mask[..., :-1]
    okp[..., :-1] = mask[..., 1:]
    okm2[..., 2:] = mask[..., :-2] & mask[..., 1:-1]
    okp2[..., :-2] = mask[..., 2:] & mask[..., 1:-1]

    def shifted(a, k):
        out = np.zeros_like(a)
        if k > 0:
            out[..., :-k] = a[..., k:]
        else:
            out[..., -k:] = a[..., :k]
        return out

    def lagrange(ka, kb):
        # f'(x0) from nodes x0, x_{+ka}, x_{+kb}
        idx = np.arange(n)
        xa = x[np.clip(idx + ka, 0, n - 1)]
        xb = x[np.clip(idx + kb, 0, n - 1)]
        with np.errstate(divide="ignore", invalid="ignore"):
            c0 = 1.0 / (x - xa) + 1.0 / (x - xb)
            ca = (x - xb) / ((xa - x) * (xa - xb))
            cb = (x - xa) / ((xb - x) * (xb - xa))
        return c0 * f + ca * shifted(f, ka) + cb * shifted(f, kb)

    def two(ka):
        idx = np.arange(n)
        xa = x[np.clip(idx + ka, 0, n - 1)]
        with np.errstate(divide="ignore", invalid="ignore"):
            return (shifted(f, ka) - f) / (xa - x)

    central = okm & okp
    fwd = ~central & okp2
    bwd = ~central & ~fwd & okm2
    fwd1 = ~central & ~fwd & ~bwd & okp
    bwd1 = ~central & ~fwd & ~bwd & ~fwd1 & okm
    with np.errstate(invalid="ignore"):
        out = np.where(central, lagrange(-1, 1), out)
        out = np.where(fwd, lagrange(1, 2), out)
        out = np.where(bwd, lagrange(-1, -2), out)
        out = np.where(fwd1, two(1), out)
        out = np.where(bwd1, two(-1), out)
    return np.where(mask, out, 0.0)


def grid_derivatives(grid: Grid, f):
    """``(f_s, f_z)`` of fields ``f[..., nr, nz]`` with ``s = rho^2``."""
    ins = grid.inside
    s = grid.rho ** 2
    fs = np.moveaxis(_d1(s, np.moveaxis(f, -2, -1), ins.T), -1, -2)
    fz = _d1(grid.z, f, ins)
    return fs, fz


# ---------------------------------------------------------------------------
# pointwise forms


@dataclass
class _Pieces:
    """Derivatives and weights shared by all forms."""

    grid: Grid
    k: int
    U: np.ndarray
    C: np.ndarray
    P: np.ndarray
    ubar: np.ndarray
    ubar_r: np.ndarray
    ubar_z: np.ndarray
    u_z_axis: np.ndarray
    Cs: np.ndarray
    Cz: np.ndarray
    Ps: np.ndarray
    Pz: np.ndarray
    om_s: np.ndarray
    om_z: np.ndarray
    sig_axis: np.ndarray
    gap_axis: np.ndarray
    bad: np.ndarray


def _pieces(state, twist_convention="reduction") -> _Pieces:
    if twist_convention not in TWIST_CONVENTIONS:
        raise ValueError(f"unknown twist convention {twist_convention!r}")
    sgn = TWIST_CONVENTIONS[twist_convention]
    g = state.grid
    rods = g.rods
    k = state.k
    x = state.x
    RHO, Z = g.RHO, g.Z
    fs, fz = grid_derivatives(g, x)
    ub0 = rods.u0_plus_log_rho(RHO, Z)
    gr, gz = rods.grad_u0_plus_log_rho(RHO, Z)
    axis = RHO == 0
    endpoint = axis & np.isin(Z, rods.endpoints)
    sig_axis = axis & g.sigma_nodes & ~endpoint
    gap_axis = axis & ~g.sigma_nodes
    ubar = x[0] + ub0
    with np.errstate(invalid="ignore"):
        ubar_r = 2 * RHO * fs[0] + np.where(axis, 0.0, gr)
    ubar_z = fz[0] + np.where(gap_axis, 0.0, gz)
    u_z_axis = np.zeros(g.shape)
    if gap_axis.any():
        u_z_axis[gap_axis] = fz[0][gap_axis] + rods.grad_u0(RHO[gap_axis], Z[gap_axis])[1]
    C, P = x[2:2 + k], x[2 + k:]
    Cs, Cz = fs[2:2 + k], fz[2:2 + k]
    Ps, Pz = fs[2 + k:], fz[2 + k:]
    th_s = fs[1] + np.sum(C * Ps, axis=0) + sgn * np.sum(P * Cs, axis=0)
    th_z = fz[1] + np.sum(C * Pz, axis=0) + sgn * np.sum(P * Cz, axis=0)
    bad = endpoint | ~g.inside
    return _Pieces(g, k, x[0], C, P, ubar, ubar_r, ubar_z, u_z_axis, Cs, Cz, Ps, Pz,
                   2 * th_s, 2 * th_z, sig_axis, gap_axis, bad)


def _extrapolate_axis(grid: Grid, F, rows=(1, 2, 3)):
    """Quadratic extrapolation in ``s = rho^2`` from ``rows`` to ``rho = 0``."""
    s = grid.rho[list(rows)] ** 2
    out = np.zeros(F.shape[-1])
    for a, sa in zip(rows, s):
        w = 1.0
        for sb in s:
            if sb != sa:
                w *= (0.0 - sb) / (sa - sb)
        out = out + w * F[a]
    return out


def twist_form(state, twist_convention: str = "reduction"):
    """Nodal ``(omega_rho, omega_z)``.

    ``twist_convention="reduction"`` is ``2 (dv + chi.dpsi - psi.dchi)``;
    ``"converse"`` flips the sign of the ``psi.dchi`` term.
    """
    p = _pieces(state, twist_convention)
    om = np.stack([2 * p.grid.RHO * p.om_s, p.om_z])
    om[:, p.bad] = np.nan
    return om


def _w_form(p: _Pieces):
    g = p.grid
    RHO = g.RHO
    off = RHO > 0
    E4 = np.exp(4 * p.ubar)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        Fr = np.where(off, -E4 * p.om_z / RHO ** 3, 0.0)
        Fz = np.where(off, 2 * E4 * p.om_s / RHO ** 2, 0.0)
    Fz[0] = np.where(p.sig_axis[0], _extrapolate_axis(g, Fz), 0.0)
    return _finalize(p, Fr, Fz)


def _lambda_form(p: _Pieces):
    g = p.grid
    RHO = g.RHO
    off = RHO > 0
    E4 = np.exp(4 * p.ubar)
    E2 = np.exp(2 * p.ubar)
    ur, uz = p.ubar_r, p.ubar_z
    om_r = 2 * RHO * p.om_s
    Cr, Pr = 2 * RHO * p.Cs, 2 * RHO * p.Ps
    S_rr = np.sum(Cr * Cr - p.Cz * p.Cz, axis=0) + np.sum(Pr * Pr - p.Pz * p.Pz, axis=0)
    S_rz = np.sum(Cr * p.Cz, axis=0) + np.sum(Pr * p.Pz, axis=0)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        Fr = -ur + RHO * (ur * ur - uz * uz) + 0.25 * E4 * (om_r ** 2 - p.om_z ** 2) / RHO ** 3 + E2 * S_rr / RHO
        Fz = -uz + 2 * RHO * ur * uz + 0.5 * E4 * om_r * p.om_z / RHO ** 3 + 2 * E2 * S_rz / RHO
    Fr = np.where(off, Fr, 0.0)
    Fz = np.where(off, Fz, 0.0)
    Fz[0] = np.where(p.sig_axis[0], -uz[0], np.where(p.gap_axis[0], p.u_z_axis[0], 0.0))
    return _finalize(p, Fr, Fz)


def _theta_form(p: _Pieces, w, a: int):
    g = p.grid
    RHO = g.RHO
    off = RHO > 0
    E2 = np.exp(2 * p.ubar)
    Cr = 2 * RHO * p.Cs[a]
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        Fr = np.where(off, -E2 * p.Pz[a] / RHO - w * Cr, 0.0)
        Fz = np.where(p.gap_axis, 0.0, 2 * E2 * p.Ps[a]) - w * p.Cz[a]
    return _finalize(p, Fr, Fz)


def _finalize(p: _Pieces, Fr, Fz):
    F = np.stack([Fr, Fz])
    F[:, p.bad] = np.nan
    return F


# ---------------------------------------------------------------------------
# integration along spanning trees


def path_trees(grid: Grid):
    """Two spanning trees of the inside nodes, as parent arrays on flat indices.

    ``"boundary"``: along the outer staircase from the equatorial boundary
    node, then along each row inward to the axis.  ``"spine"``: along the
    column at ``rho ~ R/2``, then along rows both ways; rows beyond the
    spine's reach hang off the staircase as before.  Both reach the axis
    only at the ends of rows, so the singular endpoints are leaves.
    """
    ins = grid.inside
    nr, nz = grid.shape
    idx = np.arange(nr * nz).reshape(nr, nz)
    imax = np.array([np.max(np.nonzero(ins[:, j])[0]) if ins[:, j].any() else -1 for j in range(nz)])
    j_eq = int(np.argmin(np.abs(grid.z) - 1e-9 * imax))
    toward_eq = np.where(np.arange(nz) > j_eq, -1, 1)

    def staircase_tree():
        par = np.full((nr, nz), -1, dtype=np.int64)
        for j in range(nz):
            if imax[j] < 0:
                continue
            i = np.arange(imax[j])
            par[i, j] = idx[i + 1, j]
            if j != j_eq:
                par[imax[j], j] = idx[imax[j], j + toward_eq[j]]
        root = idx[imax[j_eq], j_eq]
        par[imax[j_eq], j_eq] = root
        return par, root

    parA, rootA = staircase_tree()
    parB, _ = staircase_tree()
    i_s = int(np.argmin(np.abs(grid.rho - 0.5 * grid.R)))
    i_s = min(i_s, imax[j_eq])
    spine_rows = np.nonzero(imax >= i_s)[0]
    for j in spine_rows:
        i = np.arange(i_s)
        parB[i, j] = idx[i + 1, j]
        i = np.arange(i_s + 1, imax[j] + 1)
        parB[i, j] = idx[i - 1, j]
        parB[i_s, j] = idx[i_s, j + toward_eq[j]] if j != j_eq else idx[i_s, j]
    rootB = idx[i_s, j_eq]
    return {"boundary": (parA.ravel(), rootA), "spine": (parB.ravel(), rootB)}


def integrate_tree(grid: Grid, F, parent, root):
    """Trapezoid integral of the form ``F = (F_rho, F_z)`` from ``root``."""
    n = grid.n_nodes
    Fr, Fz = F[0].ravel(), F[1].ravel()
    RHO, Z = grid.RHO.ravel(), grid.Z.ravel()
    valid = parent >= 0
    par = np.where(valid, parent, root)
    inc = np.zeros(n)
    v = np.nonzero(valid)[0]
    pv = par[v]
    dr = RHO[v] - RHO[pv]
    dz = Z[v] - Z[pv]
    inc[v] = 0.5 * (Fr[v] + Fr[pv]) * dr + 0.5 * (Fz[v] + Fz[pv]) * dz
    inc[root] = 0.0
    par[root] = root
    # pointer jumping: val[i] = sum of increments from i up to (excluding) anc[i]
    val = inc
    anc = par
    while np.any(anc != root):
        val = val + val[anc]
        anc = anc[anc]
    out = np.where(valid, val, np.nan)
    return out.reshape(grid.shape)


def plaquette_loops(grid: Grid, F):
    """Trapezoid loop integrals of ``F`` around each grid cell and cell areas."""
    Fr, Fz = F
    dr = np.diff(grid.rho)[:, None]
    dz = np.diff(grid.z)[None, :]
    bottom = 0.5 * (Fr[:-1, :-1] + Fr[1:, :-1]) * dr
    top = 0.5 * (Fr[:-1, 1:] + Fr[1:, 1:]) * dr
    left = 0.5 * (Fz[:-1, :-1] + Fz[:-1, 1:]) * dz
    right = 0.5 * (Fz[1:, :-1] + Fz[1:, 1:]) * dz
    ins = grid.inside
    cell = ins[:-1, :-1] & ins[1:, :-1] & ins[:-1, 1:] & ins[1:, 1:]
    loop = np.where(cell, bottom + right - top - left, np.nan)
    return loop, dr * dz


@dataclass
class ClosednessReport:
    """Closedness of one form and agreement of its two tree integrals.

    ``residual`` is ``max |loop| / area`` over cells at distance at least
    ``tube`` from Sigma and within ``OUTER_FRACTION * R`` of the origin (the
    staircase boundary has reentrant corners); ``residual_all`` includes every cell with finite
    values; ``loop_l1`` sums ``|loop|`` over all such cells, which bounds
    the difference of integrals along any two paths.
    """

    name: str
    residual: float
    residual_all: float
    loop_l1: float
    path_difference: float
    tube: float

    @property
    def path_independent(self):
        return bool(self.path_difference <= 10 * self.loop_l1 + 1e-12)

    def to_dict(self):
        return {
            "name": self.name,
            "residual": float(self.residual),
            "residual_all": float(self.residual_all),
            "loop_l1": float(self.loop_l1),
            "path_difference": float(self.path_difference),
            "path_independent": self.path_independent,
            "tube": float(self.tube),
        }


def default_tube(rods) -> float:
    return 0.5 * rods.min_length


OUTER_FRACTION = 0.75


def closedness(grid: Grid, F, tube: float | None = None):
    """``(max |loop|/area in the regular region, same over all cells, sum |loop|)``."""
    tube = default_tube(grid.rods) if tube is None else tube
    loop, area = plaquette_loops(grid, F)
    rc = 0.5 * (grid.rho[:-1] + grid.rho[1:])[:, None]
    zc = 0.5 * (grid.z[:-1] + grid.z[1:])[None, :]
    far = grid.rods.dist_to_sigma(rc * np.ones_like(zc), zc * np.ones_like(rc)) >= tube
    far &= np.hypot(rc, zc) <= OUTER_FRACTION * grid.R
    dens = np.abs(loop) / area
    fin = np.isfinite(dens)
    away = dens[fin & far]
    return (float(away.max()) if away.size else 0.0, float(dens[fin].max()) if fin.any() else 0.0,
            float(np.sum(np.abs(loop[fin]))))


@dataclass
class IntegratedField:
    values: np.ndarray
    alternate: np.ndarray
    form: np.ndarray
    report: ClosednessReport


def _integrate(p: _Pieces, F, name, base, target=0.0, tube=None, warn_above=None):
    grid = p.grid
    trees = path_trees(grid)
    vals = {}
    for key, (par, root) in trees.items():
        f = integrate_tree(grid, F, par, root)
        f = f - f.ravel()[base] + (target if np.ndim(target) == 0 else target)
        vals[key] = f
    a, b = vals["boundary"], vals["spine"]
    diff = np.abs(a - b)
    fin = np.isfinite(diff)
    res, res_all, l1 = closedness(grid, F, tube)
    rep = ClosednessReport(name, res, res_all, l1, float(diff[fin].max()) if fin.any() else 0.0,
                           default_tube(grid.rods) if tube is None else tube)
    if warn_above is not None and res > warn_above:
        log.warning("d%s is not closed to %.1e (residual %.3e): state not harmonic enough", name, warn_above, res)
    return IntegratedField(a, b, F, rep)


def _top_axis_node(grid: Grid):
    ins = grid.inside
    j = int(np.max(np.nonzero(ins[0])[0]))
    return int(np.ravel_multi_index((0, j), grid.shape))


def _equator_node(grid: Grid):
    ins = grid.inside
    imax = np.array([np.max(np.nonzero(ins[:, j])[0]) if ins[:, j].any() else -1 for j in range(grid.shape[1])])
    j = int(np.argmin(np.abs(grid.z) - 1e-9 * imax))
    return int(np.ravel_multi_index((imax[j], j), grid.shape))


def integrate_w(state, omega=None, twist_convention: str = "reduction", tube=None, warn_above=None):
    """``w`` with ``w = 0`` at the top axis node of the outer boundary.

    ``omega`` is accepted for interface symmetry; the form is rebuilt from
    the state so that its near-axis limit can be taken in ``s = rho^2``.
    """
    p = _pieces(state, twist_convention)
    F = _w_form(p)
    return _integrate(p, F, "w", _top_axis_node(p.grid), 0.0, tube, warn_above)


def integrate_lambda(state, omega=None, twist_convention: str = "reduction", tube=None, warn_above=None):
    """``lambda`` normalized so that ``lambda + ubar = 0`` at the top axis node.

    On the unbounded axis components ``lambda + ubar`` is constant and tends
    to 0 at infinity, so this pins the normalization without the
    ``O(M/R)`` offset that ``lambda = 0`` at a finite boundary would carry.
    """
    p = _pieces(state, twist_convention)
    F = _lambda_form(p)
    base = _top_axis_node(p.grid)
    return _integrate(p, F, "lambda", base, -float(p.ubar.ravel()[base]), tube, warn_above)


def integrate_theta(state, w, twist_convention: str = "reduction", tube=None, warn_above=None):
    """Per gauge index ``theta_a`` with ``theta = 0`` at the outer equatorial node."""
    p = _pieces(state, twist_convention)
    wv = w.values if isinstance(w, IntegratedField) else np.asarray(w)
    base = _equator_node(p.grid)
    out = []
    for a in range(p.k):
        F = _theta_form(p, wv, a)
        out.append(_integrate(p, F, f"theta[{a}]", base, 0.0, tube, warn_above))
    return out


# ---------------------------------------------------------------------------
# assembled fields, metric, conical singularities


@dataclass
class SpacetimeFields:
    grid: Grid
    k: int
    w: IntegratedField
    lam: IntegratedField
    theta: list
    omega: np.ndarray
    u: np.ndarray
    ubar: np.ndarray
    chi: np.ndarray
    twist_convention: str = "reduction"
    warnings: list = field(default_factory=list)

    @property
    def gamma(self):
        """``lambda + ubar``; constant on each axis component."""
        return self.lam.values + self.ubar

    def closedness(self):
        reps = [self.w.report, self.lam.report] + [t.report for t in self.theta]
        return {r.name: r.to_dict() for r in reps}


def reconstruct(state, twist_convention: str = "reduction", tube=None, warn_above=None) -> SpacetimeFields:
    p = _pieces(state, twist_convention)
    g = state.grid
    w = _integrate(p, _w_form(p), "w", _top_axis_node(g), 0.0, tube, warn_above)
    base = _top_axis_node(g)
    lam = _integrate(p, _lambda_form(p), "lambda", base, -float(p.ubar.ravel()[base]), tube, warn_above)
    eq = _equator_node(g)
    theta = [_integrate(p, _theta_form(p, w.values, a), f"theta[{a}]", eq, 0.0, tube, warn_above)
             for a in range(p.k)]
    warnings = []
    if warn_above is not None:
        warnings = [f"{r.name}: closedness residual {r.residual:.3e}" for r in
                    [w.report, lam.report] + [t.report for t in theta] if r.residual > warn_above]
    om = np.stack([2 * g.RHO * p.om_s, p.om_z])
    om[:, p.bad] = np.nan
    return SpacetimeFields(g, p.k, w, lam, theta, om, state.u(), p.ubar, p.C, twist_convention, warnings)


@dataclass
class MetricSample:
    rho: np.ndarray
    z: np.ndarray
    g_tt: np.ndarray
    g_tphi: np.ndarray
    g_phiphi: np.ndarray
    g_rhorho: np.ndarray
    A_t: np.ndarray
    A_phi: np.ndarray

    @property
    def det_tphi(self):
        return self.g_tt * self.g_phiphi - self.g_tphi ** 2

    def det_identity_error(self):
        """Max of ``|det + rho^2|`` relative to the size of the cancelling terms."""
        scale = np.abs(self.g_tt * self.g_phiphi) + self.g_tphi ** 2
        err = np.abs(self.det_tphi + self.rho ** 2) / np.where(scale > 0, scale, 1.0)
        return float(err.max()) if err.size else 0.0

    def signature_ok(self):
        off = self.rho > 0
        return bool(np.all(self.g_phiphi[off] > 0) and np.all(self.g_rhorho > 0)
                    and np.all(self.det_tphi[off] < 0))

    def to_columns(self):
        cols = {"rho": self.rho, "z": self.z, "g_tt": self.g_tt, "g_tphi": self.g_tphi,
                "g_phiphi": self.g_phiphi, "g_rhorho": self.g_rhorho}
        for a in range(self.A_t.shape[0]):
            cols[f"A_t[{a}]"] = self.A_t[a]
            cols[f"A_phi[{a}]"] = self.A_phi[a]
        return cols


def assemble_metric(fields: SpacetimeFields, mask=None) -> MetricSample:
    """Metric coefficients and gauge potential at off-Sigma inside nodes.

    With ``g_tt = -rho^2 e^{2u} + e^{-2u} w^2`` and ``g_tphi = -e^{-2u} w``
    the ``(t, phi)`` determinant is ``-rho^2`` up to rounding.
    """
    g = fields.grid
    sel = g.inside & ~g.sigma_nodes & np.isfinite(fields.lam.values) & np.isfinite(fields.w.values)
    if mask is not None:
        sel &= mask
    rho, z = g.RHO[sel], g.Z[sel]
    u = fields.u[sel]
    w = fields.w.values[sel]
    e2u = np.exp(2 * u)
    gpp = np.exp(-2 * u)
    g_tt = -rho ** 2 * e2u + gpp * w * w
    g_tphi = -gpp * w
    g_rr = np.exp(2 * fields.lam.values[sel])
    k = fields.k
    n = rho.size
    A_t = np.array([-t.values[sel] for t in fields.theta]).reshape(k, n)
    A_phi = np.array([-fields.chi[a][sel] for a in range(k)]).reshape(k, n)
    return MetricSample(rho, z, g_tt, g_tphi, gpp, g_rr, A_t, A_phi)


@dataclass
class ConicalEntry:
    component: int
    lo: float
    hi: float
    bounded: bool
    b: float
    spread: float
    n_nodes: int
    regular: bool

    def to_dict(self):
        return {"component": self.component, "lo": float(self.lo), "hi": float(self.hi),
                "bounded": self.bounded, "b": float(self.b), "spread": float(self.spread),
                "n_nodes": self.n_nodes, "regular": self.regular}


@dataclass
class ConicalReport:
    """Axis regularity ``b_j = lim (lambda + u + log rho)`` per component.

    The metric near the axis is ``e^{2 lambda} drho^2 + rho^2 e^{-2 ubar} dphi^2``,
    which is free of a conical singularity iff ``b_j = 0``.  ``b_j != 0`` on
    a bounded component is the strut holding the black holes apart.
    """

    entries: list
    tol: float = 1e-3

    @property
    def bounded(self):
        return [e for e in self.entries if e.bounded]

    @property
    def unbounded(self):
        return [e for e in self.entries if not e.bounded]

    def to_dict(self):
        return {"tol": self.tol, "bounded": [e.to_dict() for e in self.bounded],
                "unbounded": [e.to_dict() for e in self.unbounded]}


def conical_deficit(fields: SpacetimeFields, tol: float = 1e-3, margin: float | None = None) -> ConicalReport:
    """Extrapolate ``lambda + ubar`` to the axis on each component of Sigma.

    Per axis node the values on rows 1-3 are extrapolated quadratically in
    ``rho^2``; ``b_j`` is their median over nodes farther than ``margin``
    from the endpoints and inside the core half of the ball.
    """
    g = fields.grid
    rods = g.rods
    margin = default_tube(rods) if margin is None else margin
    gam = fields.gamma
    b_axis = _extrapolate_axis(g, gam)
    entries = []
    for j, (lo, hi) in enumerate(rods.components):
        zz = g.z
        sel = (zz >= lo + margin) & (zz <= hi - margin) & g.inside[0] & (np.abs(zz) <= 0.5 * g.R)
        sel &= np.isfinite(b_axis)
        vals = b_axis[sel]
        bounded = bool(np.isfinite(lo) and np.isfinite(hi))
        if vals.size == 0:
            b, spread = float("nan"), float("nan")
        else:
            b, spread = float(np.median(vals)), float(vals.max() - vals.min())
        entries.append(ConicalEntry(j, lo, hi, bounded, b, spread, int(vals.size),
                                    bool(np.isfinite(b) and abs(b) < tol)))
    return ConicalReport(entries, tol)
