"""Grids on the meridian half-disk and the finite-volume energy on them.

Nodes sit on a tensor grid ``rho_0 = 0 < rho_1 < ... <= R`` by
``-R <= z_0 < ... <= R``; nodes with ``rho^2 + z^2 > R^2`` are masked out.
Every gap endpoint is a grid line.  Spacing is uniform (per segment between
endpoints) inside a core box that depends only on the rods, then stretches
exponentially out to ``R`` along a C^1 map of a uniform index.  Refinement
evaluates the same map at half-indices, so refined grids are nested and
stay smooth, which keeps discretization errors smooth from node to node.

The unknowns at a node are ``(U, v, chi, psi)`` with ``U = u - u0``.  The
energy is a sum of edge terms (see :mod:`axiharm.kernels`) whose
coefficients integrate ``2 pi rho e^{4 u0}`` and ``2 pi rho e^{2 u0}``
across the edge's dual face.  In the first ``AXIS_BAND`` rows above Sigma
the factor ``rho^{-3}`` (resp. ``rho^{-1}``) is integrated exactly, so the
coefficients stay finite up to the axis; everywhere else a midpoint rule is
used.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.optimize import brentq

from . import kernels
from .errors import DomainError
from .geometry import norm_packed, raise_index_packed
from .rods import RodConfig

TWO_PI = 2.0 * np.pi
# rows next to the axis that use the exact rho-power rule over Sigma; farther
# out one quadrature rule serves every edge, so discretization errors stay
# smooth across the grid lines through gap endpoints
AXIS_BAND = 2


def _uniform(a, b, h):
    n = max(1, int(np.ceil((b - a) / h - 1e-9)))
    return np.linspace(a, b, n + 1)


class TailMap:
    """Smooth stretching ``x(t) = a + h0 (e^{kappa t} - 1) / kappa`` for ``t in [0, n]``.

    ``x'(0) = h0`` matches the adjacent uniform spacing, so the mesh is
    C^1 across the core edge; refinement evaluates the map at fractional
    indices, which keeps refined meshes smooth and nested.
    """

    def __init__(self, a, b, h0, q):
        self.a, self.b, self.h0 = float(a), float(b), float(h0)
        L = self.b - self.a
        if q > 1.0:
            T = np.log1p(L * np.log(q) / h0) / np.log(q)
        else:
            T = L / h0
        self.n = max(1, int(np.floor(T + 1e-9)))

        def excess(kappa):
            return self._span(kappa, self.n) - L

        if abs(excess(0.0)) < 1e-14 * L:
            self.kappa = 0.0
        else:
            lo, hi = -1.0, 1.0
            # an overflowing span is +inf, which still brackets the root
            with np.errstate(over="ignore"):
                while excess(lo) > 0:
                    lo *= 2.0
                while excess(hi) < 0:
                    hi *= 2.0
                self.kappa = brentq(excess, lo, hi, xtol=1e-15, rtol=1e-15)

    def _span(self, kappa, t):
        if abs(kappa) < 1e-14:
            return self.h0 * t
        return self.h0 * np.expm1(kappa * t) / kappa

    def nodes(self, levels=0):
        t = np.arange(self.n * 2 ** levels + 1) / 2 ** levels
        x = self.a + self._span(self.kappa, t)
        x[0], x[-1] = self.a, self.b
        return x


def _refine_nodes(x, levels):
    for _ in range(levels):
        mid = 0.5 * (x[:-1] + x[1:])
        y = np.empty(2 * x.size - 1)
        y[0::2] = x
        y[1::2] = mid
        x = y
    return x


def default_core(rods: RodConfig) -> float:
    """Half-width of the uniform core box; depends only on the rods."""
    return 1.5 * rods.outer_extent + rods.min_length


class Grid:
    """Masked tensor grid over the half-disk of radius ``R``."""

    def __init__(self, rods: RodConfig, rho, z, R: float, h: float | None = None):
        self.rods = rods
        self.rho = np.asarray(rho, dtype=float)
        self.z = np.asarray(z, dtype=float)
        self.R = float(R)
        self.h = float(h) if h is not None else float(np.min(np.diff(self.z)))
        if self.rho[0] != 0.0 or np.any(np.diff(self.rho) <= 0) or np.any(np.diff(self.z) <= 0):
            raise ValueError("grid lines must be strictly increasing with rho_0 = 0")
        for e in rods.endpoints:
            if not np.any(self.z == e):
                raise ValueError(f"gap endpoint {e} is not a grid line")
        self.shape = (self.rho.size, self.z.size)
        self.RHO, self.Z = np.meshgrid(self.rho, self.z, indexing="ij")
        self.inside = self.RHO ** 2 + self.Z ** 2 <= self.R ** 2 * (1 + 1e-12)
        self.sigma_axis = rods.on_sigma(np.zeros_like(self.z), self.z)
        self.gap_axis = ~self.sigma_axis
        self.sigma_nodes = np.zeros(self.shape, dtype=bool)
        self.sigma_nodes[0] = self.sigma_axis
        self.dirichlet = self._boundary()

    def _boundary(self):
        ins = self.inside
        nb = np.zeros(self.shape, dtype=bool)
        nb[:-1] |= ~ins[1:]
        nb[-1] = True
        nb[1:] |= ~ins[:-1]
        nb[:, :-1] |= ~ins[:, 1:]
        nb[:, -1] = True
        nb[:, 1:] |= ~ins[:, :-1]
        nb[:, 0] = True
        return ins & nb

    @classmethod
    def build(cls, rods: RodConfig, R: float, h: float, grading: float = 1.1,
              core: float | None = None, min_gap_cells: int = 8) -> "Grid":
        """Core box of spacing ``h`` (endpoints on grid lines), stretched smoothly to ``R``."""
        Zc = default_core(rods) if core is None else float(core)
        if R <= rods.outer_extent:
            raise ValueError(f"R = {R} does not enclose the rods (max |endpoint| = {rods.outer_extent})")
        Zc = min(Zc, R)
        breaks = [-Zc] + [e for e in rods.endpoints] + [Zc]
        zc = [_uniform(breaks[i], breaks[i + 1], h) for i in range(len(breaks) - 1)]
        zcore = np.unique(np.concatenate(zc))
        rcore = _uniform(0.0, Zc, h)
        tails = None
        if R > Zc * (1 + 1e-12):
            tails = (TailMap(Zc, R, zcore[-1] - zcore[-2], grading),
                     TailMap(Zc, R, rcore[-1] - rcore[-2], grading))
        grid = cls._assemble(rods, R, h, zcore, rcore, tails, 0)
        cells = grid.cells_per_gap()
        if min(cells) < min_gap_cells:
            raise ValueError(f"grid resolves a gap with only {min(cells)} cells (need >= {min_gap_cells}); "
                             f"decrease h")
        return grid

    @classmethod
    def _assemble(cls, rods, R, h, zcore, rcore, tails, levels):
        zc, rc = _refine_nodes(zcore, levels), _refine_nodes(rcore, levels)
        if tails is None:
            z, rho = zc, rc
        else:
            zt, rt = tails[0].nodes(levels), tails[1].nodes(levels)
            z = np.concatenate([-zt[::-1], zc[1:-1], zt])
            rho = np.concatenate([rc[:-1], rt])
        grid = cls(rods, rho, z, R, h / 2 ** levels)
        grid._layout = (h, zcore, rcore, tails, levels)
        return grid

    def refined(self, levels: int = 1) -> "Grid":
        """Nested refinement: every cell is split ``2**levels`` times along the mesh map."""
        if levels <= 0:
            return self
        layout = getattr(self, "_layout", None)
        if layout is None:
            return Grid(self.rods, _refine_nodes(self.rho, levels), _refine_nodes(self.z, levels),
                        self.R, self.h / 2 ** levels)
        h, zcore, rcore, tails, lev = layout
        return Grid._assemble(self.rods, self.R, h, zcore, rcore, tails, lev + levels)

    def cells_per_gap(self):
        return [int(np.sum((self.z > a) & (self.z <= b))) for a, b in self.rods.gaps]

    @property
    def n_nodes(self):
        return self.rho.size * self.z.size

    def describe(self):
        return {
            "R": self.R,
            "h": self.h,
            "n_rho": int(self.rho.size),
            "n_z": int(self.z.size),
            "n_inside": int(self.inside.sum()),
        }

    def dual_widths(self, x):
        """Dual cell edges ``x_{i -/+ 1/2}`` (clipped at the ends)."""
        mid = 0.5 * (x[:-1] + x[1:])
        lo = np.concatenate([[x[0]], mid])
        hi = np.concatenate([mid, [x[-1]]])
        return lo, hi

    def node_volumes(self):
        """``2 pi int int rho`` over each node's dual cell."""
        rlo, rhi = self.dual_widths(self.rho)
        zlo, zhi = self.dual_widths(self.z)
        return TWO_PI * 0.5 * (rhi ** 2 - rlo ** 2)[:, None] * (zhi - zlo)[None, :]


def fd_jet(grid: Grid, x):
    """Three-point gradient and axisymmetric Laplacian on the nonuniform grid.

    ``x`` has the grid shape in its last two axes.  Returns ``(f_rho, f_z,
    lap)``; rows and columns without both neighbours are zero, except the
    axis row, where ``f_rho = 0`` and ``lap = 2 f_rhorho + f_zz`` (even
    reflection).
    """
    x = np.asarray(x, dtype=float)
    rho, z = grid.rho, grid.z
    fz = np.zeros_like(x)
    fzz = np.zeros_like(x)
    hm, hp = np.diff(z)[:-1], np.diff(z)[1:]
    fz[..., 1:-1] = (-hp / (hm * (hm + hp))) * x[..., :-2] + ((hp - hm) / (hm * hp)) * x[..., 1:-1] \
        + (hm / (hp * (hm + hp))) * x[..., 2:]
    fzz[..., 1:-1] = (2 / (hm * (hm + hp))) * x[..., :-2] - (2 / (hm * hp)) * x[..., 1:-1] \
        + (2 / (hp * (hm + hp))) * x[..., 2:]
    hm, hp = np.diff(rho)[:-1, None], np.diff(rho)[1:, None]
    fr = np.zeros_like(x)
    frr = np.zeros_like(x)
    fr[..., 1:-1, :] = (-hp / (hm * (hm + hp))) * x[..., :-2, :] + ((hp - hm) / (hm * hp)) * x[..., 1:-1, :] \
        + (hm / (hp * (hm + hp))) * x[..., 2:, :]
    frr[..., 1:-1, :] = (2 / (hm * (hm + hp))) * x[..., :-2, :] - (2 / (hm * hp)) * x[..., 1:-1, :] \
        + (2 / (hp * (hm + hp))) * x[..., 2:, :]
    lap = np.zeros_like(x)
    lap[..., 1:, :] = frr[..., 1:, :] + fr[..., 1:, :] / rho[1:, None] + fzz[..., 1:, :]
    lap[..., 0, :] = 4 * (x[..., 1, :] - x[..., 0, :]) / rho[1] ** 2 + fzz[..., 0, :]
    return fr, fz, lap


class Discretization:
    """Edge list, energy coefficients and boundary data for one grid.

    ``data`` provides the Dirichlet/clamp values through
    ``data.fields(rho, z)`` returning packed ``(U, v, chi, psi)``.
    """

    def __init__(self, grid: Grid, data, k: int):
        self.grid = grid
        self.data = data
        self.k = k
        self.m = 2 * k + 2
        rods = grid.rods
        nr, nz = grid.shape
        idx = np.arange(nr * nz).reshape(nr, nz)
        ins = grid.inside
        self.node_index = idx

        # -- edges ---------------------------------------------------------
        rmask = ins[:-1] & ins[1:]
        zmask = ins[:, :-1] & ins[:, 1:]
        ri, rj = np.nonzero(rmask)
        zi, zj = np.nonzero(zmask)
        self.ea = np.concatenate([idx[ri, rj], idx[zi, zj]]).astype(np.int64)
        self.eb = np.concatenate([idx[ri + 1, rj], idx[zi, zj + 1]]).astype(np.int64)
        self.n_rho_edges = ri.size

        rho, z = grid.rho, grid.z
        rlo, rhi = grid.dual_widths(rho)
        zlo, zhi = grid.dual_widths(z)
        dzd = zhi - zlo

        # rho-edges
        r0, r1 = rho[ri], rho[ri + 1]
        rm = 0.5 * (r0 + r1)
        dr = r1 - r0
        zz = z[rj]
        wU_r = TWO_PI * dzd[rj] * rm / dr
        kA_r = np.empty(ri.size)
        kB_r = np.empty(ri.size)
        s = grid.sigma_axis[rj] & (ri < AXIS_BAND)
        ub = rods.u0_plus_log_rho(rm[s], zz[s])
        kA_r[s] = TWO_PI * dzd[rj][s] * np.exp(4 * ub) * 4.0 / (r1[s] ** 4 - r0[s] ** 4)
        kB_r[s] = TWO_PI * dzd[rj][s] * np.exp(2 * ub) * 2.0 / (r1[s] ** 2 - r0[s] ** 2)
        g = ~s
        u0m = rods.u0(rm[g], zz[g])
        kA_r[g] = TWO_PI * dzd[rj][g] * rm[g] * np.exp(4 * u0m) / dr[g]
        kB_r[g] = TWO_PI * dzd[rj][g] * rm[g] * np.exp(2 * u0m) / dr[g]

        # z-edges
        z0, z1 = z[zj], z[zj + 1]
        zm = 0.5 * (z0 + z1)
        dz = z1 - z0
        rr = rho[zi]
        lo, hi = rlo[zi], rhi[zi]
        int_rho = 0.5 * (hi ** 2 - lo ** 2)
        wU_z = TWO_PI * int_rho / dz
        in_gap = rods.in_gap(zm) >= 0
        kA_z = np.zeros(zi.size)
        kB_z = np.zeros(zi.size)
        # midpoint rule wherever u0 is regular on the edge
        g = in_gap | (zi >= AXIS_BAND)
        u0m = rods.u0(rr[g], zm[g])
        kA_z[g] = TWO_PI * int_rho[g] * np.exp(4 * u0m) / dz[g]
        kB_z[g] = TWO_PI * int_rho[g] * np.exp(2 * u0m) / dz[g]
        # next to Sigma: u0 = ubar0 - log rho, integrate the rho power exactly
        s = (~g) & (zi > 0)
        ub = rods.u0_plus_log_rho(rr[s], zm[s])
        kA_z[s] = TWO_PI * 0.5 * (lo[s] ** -2 - hi[s] ** -2) * np.exp(4 * ub) / dz[s]
        kB_z[s] = TWO_PI * np.log(hi[s] / lo[s]) * np.exp(2 * ub) / dz[s]
        # (zi == 0) & Sigma: both ends clamped, coefficients stay 0

        self.wU = np.concatenate([wU_r, wU_z])
        self.kA = np.concatenate([kA_r, kA_z])
        self.kB = np.concatenate([kB_r, kB_z])
        if not (np.all(np.isfinite(self.kA)) and np.all(np.isfinite(self.kB))):
            raise DomainError("non-finite edge coefficient; is an endpoint off the grid?")

        # -- unknowns ------------------------------------------------------
        m = self.m
        fixed = np.zeros((m,) + grid.shape, dtype=bool)
        fixed[:, grid.dirichlet] = True
        fixed[1:, grid.sigma_nodes & ins] = True
        self.fixed = fixed
        self.free = (~fixed) & ins[None]
        self.volumes = grid.node_volumes()
        RHO, Z = grid.RHO, grid.Z
        self.boundary_values = np.asarray(data.fields(RHO, Z), dtype=float)
        if self.boundary_values.shape != (m,) + grid.shape:
            raise ValueError("boundary data has the wrong shape")
        off = ~grid.sigma_nodes
        self.u0 = np.full(grid.shape, np.inf)
        self.u0[off] = rods.u0(RHO[off], Z[off])

        free_flat = self.free.reshape(m, -1)
        self.dof = np.full(free_flat.shape, -1, dtype=np.int64)
        self.n_dof = int(free_flat.sum())
        self.dof[free_flat] = np.arange(self.n_dof)
        self._pattern = None

    # -- state helpers -----------------------------------------------------

    def initial(self, init=None):
        """Full field array with boundary/clamp values imposed."""
        x = self.boundary_values.copy() if init is None else np.array(init, dtype=float, copy=True)
        self.impose(x)
        return x

    def impose(self, x):
        fixed = self.fixed
        x[fixed] = self.boundary_values[fixed]
        outside = ~self.grid.inside
        x[:, outside] = self.boundary_values[:, outside]
        return x

    def flat(self, x):
        return x.reshape(self.m, -1)

    # -- energy and derivatives ----------------------------------------------

    def edge_energies(self, x):
        return kernels.edge_energy(self.flat(x), self.ea, self.eb, self.wU, self.kA, self.kB)

    def energy(self, x) -> float:
        e = self.edge_energies(x)
        return float(np.sum(e))

    def gradient(self, x):
        G = kernels.gradient(self.flat(x), self.ea, self.eb, self.wU, self.kA, self.kB)
        return G.reshape(x.shape)

    def free_vector(self, G):
        return self.flat(G)[self.flat(self.free)]

    def euler_lagrange(self, x, G=None):
        """Covariant residual ``-dF/dx / (2 V)`` on free components, zero elsewhere."""
        if G is None:
            G = self.gradient(x)
        EL = np.where(self.free, -0.5 * G / self.volumes[None], 0.0)
        return EL

    def tension_field(self, x, G=None):
        """Residual raised to a tangent vector and its norm at every node.

        Sigma nodes only carry the ``U`` component, whose norm is ``|EL_u|``.
        """
        EL = self.euler_lagrange(x, G)
        pts = x.copy()
        sig = self.grid.sigma_nodes
        pts[0] = np.where(sig, 0.0, x[0] + np.where(sig, 0.0, self.u0))
        tau = raise_index_packed(pts, EL)
        norm = norm_packed(pts, tau)
        norm = np.where(sig, np.abs(EL[0]), norm)
        norm = np.where(self.grid.inside & ~self.grid.dirichlet, norm, 0.0)
        return tau, norm

    def residual(self, x, G=None) -> float:
        return float(np.max(self.tension_field(x, G)[1]))

    # -- Hessian -----------------------------------------------------------

    def _build_pattern(self):
        m = self.m
        E = self.ea.size
        dof = self.dof
        loc = np.concatenate([dof[:, self.ea].T, dof[:, self.eb].T], axis=1)   # (E, 2m)
        rows = np.repeat(loc[:, :, None], 2 * m, axis=2)
        cols = np.repeat(loc[:, None, :], 2 * m, axis=1)
        valid = (rows >= 0) & (cols >= 0)
        r = rows[valid]
        c = cols[valid]
        key = c.astype(np.int64) * self.n_dof + r
        ukey, slot = np.unique(key, return_inverse=True)
        ucol = ukey // self.n_dof
        urow = ukey % self.n_dof
        indptr = np.searchsorted(ucol, np.arange(self.n_dof + 1))
        self._pattern = (valid.reshape(E, -1), slot.astype(np.int64), urow, indptr, ukey.size)

    def hessian(self, x):
        """Sparse Hessian of the energy on the free unknowns (CSC)."""
        if self._pattern is None:
            self._build_pattern()
        valid, slot, urow, indptr, nnz = self._pattern
        Hloc = kernels.edge_hessian(self.flat(x), self.ea, self.eb, self.wU, self.kA, self.kB)
        vals = Hloc.reshape(Hloc.shape[0], -1)[valid]
        data = np.bincount(slot, weights=vals, minlength=nnz)
        return sp.csc_matrix((data, urow, indptr), shape=(self.n_dof, self.n_dof))

    def node_blocks(self, x):
        """Diagonal ``m x m`` Hessian blocks per node, shape ``(n, m, m)``."""
        m = self.m
        Hloc = kernels.edge_hessian(self.flat(x), self.ea, self.eb, self.wU, self.kA, self.kB)
        n = self.grid.n_nodes
        out = np.zeros((n, m, m))
        np.add.at(out, self.ea, Hloc[:, :m, :m])
        np.add.at(out, self.eb, Hloc[:, m:, m:])
        return out

    def apply_step(self, x, d, t=1.0):
        y = x.copy()
        yf = self.flat(y)
        yf[self.flat(self.free)] += t * d
        return y
