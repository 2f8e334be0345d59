"""The approximately harmonic seed map and its tension decay.

The seed keeps ``u = u0`` and interpolates the constants ``(v_j, chi_j,
psi_j)`` of the Sigma components:

* in a tube around each component the constants are copied exactly,
* far out (``r >= R_star``) the fields depend on the polar angle only and
  move from the top component's constants (theta = 0) to the bottom one's
  (theta = pi) through a quintic smoothstep confined to
  ``[theta_margin, pi - theta_margin]``,
* in between, C^2 bumps glue the two.

Every field is evaluated together with its exact gradient and flat
axisymmetric Laplacian through the small :class:`Jet` algebra below, so the
tension is computed without any finite differencing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .geometry import MapJet, TargetPoint, norm_packed, tension_packed
from .rods import DomainError, RodConfig, SingularMapSpec


class Jet:
    """Value, gradient ``(d_rho, d_z)`` and Laplacian of a scalar field."""

    __slots__ = ("val", "grad", "lap")

    def __init__(self, val, grad, lap):
        self.val = val
        self.grad = grad
        self.lap = lap

    @classmethod
    def const(cls, c, shape):
        z = np.zeros(shape)
        return cls(np.full(shape, float(c)), np.stack([z, z]), z.copy())

    def __add__(self, other):
        if isinstance(other, Jet):
            return Jet(self.val + other.val, self.grad + other.grad, self.lap + other.lap)
        return Jet(self.val + other, self.grad, self.lap)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.val, -self.grad, -self.lap)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Jet):
            return Jet(self.val * other.val,
                       self.val * other.grad + other.val * self.grad,
                       self.val * other.lap + other.val * self.lap
                       + 2 * np.sum(self.grad * other.grad, axis=0))
        return Jet(self.val * other, self.grad * other, self.lap * other)

    __rmul__ = __mul__

    def compose(self, f, df, d2f):
        """Jet of ``f(self)`` given ``f, f', f''`` evaluated at ``self.val``."""
        # a flat f kills the derivatives even where self's are undefined (r at the origin)
        with np.errstate(invalid="ignore"):
            g2 = np.sum(self.grad * self.grad, axis=0)
            grad = np.where(df == 0, 0.0, df * self.grad)
            lap = np.where((df == 0) & (d2f == 0), 0.0, d2f * g2 + df * self.lap)
        return Jet(f, grad, lap)


def smoothstep(t):
    """Quintic ``6t^5 - 15t^4 + 10t^3`` clamped to [0, 1], with derivatives."""
    t = np.clip(t, 0.0, 1.0)
    s = t * t * t * (t * (6 * t - 15) + 10)
    ds = 30 * t * t * (1 - t) ** 2
    d2s = 60 * t * (1 - t) * (1 - 2 * t)
    return s, ds, d2s


def _step(x: Jet, lo: float, width: float) -> Jet:
    """``S((x - lo) / width)`` as a jet."""
    s, ds, d2s = smoothstep((x.val - lo) / width)
    return x.compose(s, ds / width, d2s / width ** 2)


def _coord_jets(rho, z):
    shape = rho.shape
    zero = np.zeros(shape)
    one = np.ones(shape)
    r = np.hypot(rho, z)
    rho_j = Jet(rho, np.stack([one, zero]), np.where(rho > 0, 1.0 / np.where(rho > 0, rho, 1.0), 0.0))
    z_j = Jet(z, np.stack([zero, one]), zero.copy())
    with np.errstate(divide="ignore", invalid="ignore"):
        r_j = Jet(r, np.stack([rho / r, z / r]), 2.0 / r)
        r2 = r * r
        th = np.arctan2(rho, z)
        th_lap = np.where(rho > 0, z / (np.where(rho > 0, rho, 1.0) * r2), 0.0)
        th_j = Jet(th, np.stack([z / r2, -rho / r2]), th_lap)
    return rho_j, z_j, r_j, th_j


@dataclass(frozen=True)
class SeedConfig:
    """Geometry of the seed interpolation.

    ``None`` entries are filled from the rods by :meth:`resolved`:
    ``R_star = 4 * max|endpoint|`` (at least 2), ``theta_margin = pi/8`` and
    ``bump_width = min gap/rod length / 4``.
    """

    R_star: float | None = None
    theta_margin: float = np.pi / 8
    bump_width: float | None = None
    profile_order: int = 5

    def resolved(self, rods: RodConfig) -> "SeedConfig":
        w = self.bump_width if self.bump_width is not None else rods.min_length / 4
        R = self.R_star if self.R_star is not None else max(4 * rods.outer_extent, rods.outer_extent + 8 * w, 2.0)
        cfg = SeedConfig(float(R), float(self.theta_margin), float(w), self.profile_order)
        cfg.validate(rods)
        return cfg

    def validate(self, rods: RodConfig):
        if self.profile_order != 5:
            raise ValueError("only the quintic profile (profile_order=5) is implemented")
        if not 0 < self.theta_margin < np.pi / 2:
            raise ValueError(f"theta_margin must lie in (0, pi/2), got {self.theta_margin}")
        w = self.bump_width
        if w is None or w <= 0:
            raise ValueError("bump_width must be positive")
        if 4 * w > rods.min_length + 1e-12:
            raise ValueError(f"bump_width {w} too large: tubes of neighbouring components overlap "
                             f"(need 4*bump_width <= {rods.min_length})")
        if self.R_star is None or self.R_star <= rods.outer_extent + 2 * w:
            raise ValueError(f"R_star must exceed max|endpoint| + 2*bump_width = {rods.outer_extent + 2 * w}")
        if 2 * w > self.R_star * np.sin(self.theta_margin):
            raise ValueError("bump_width too large for the angular margin at R_star")


class SeedMap:
    """The seed map for given rods and constants.

    Implements the boundary-data interface used by the solver:
    ``fields(rho, z)`` returns packed ``(u - u0, v, chi, psi)`` and
    ``jet(rho, z)`` returns the packed point, gradient and Laplacian.
    """

    def __init__(self, rods: RodConfig, spec: SingularMapSpec, cfg: SeedConfig | None = None):
        spec.check_rods(rods)
        self.rods = rods
        self.spec = spec
        self.cfg = (cfg or SeedConfig()).resolved(rods)
        self.k = spec.k
        self.m = 2 * spec.k + 2
        self.constants = spec.constant_matrix()          # (N+1, 2k+1)
        self.angular_scale = 1.0

    def with_angular_scale(self, scale: float) -> "SeedMap":
        """Copy whose angular transition is ``scale`` times steeper.

        The transition interval shrinks about the equator; used to study how
        the tension constant reacts to profile derivatives.
        """
        other = SeedMap(self.rods, self.spec, self.cfg)
        other.angular_scale = float(scale)
        return other

    # -- weights -----------------------------------------------------------

    def _weights(self, rho, z):
        """Jets ``W_j`` with ``F = sum_j W_j C_j``; ``W_j == 1`` exactly in tube j."""
        cfg = self.cfg
        w = cfg.bump_width
        shape = rho.shape
        rho_j, z_j, r_j, th_j = _coord_jets(rho, z)
        half = cfg.R_star / 2
        eta = 1.0 - _step(r_j, half, half)
        width = (np.pi - 2 * cfg.theta_margin) / self.angular_scale
        h = _step(th_j, np.pi / 2 - width / 2, width)
        e_top = (1.0 - eta) * (1.0 - h) + eta * 0.5
        e_bot = (1.0 - eta) * h + eta * 0.5
        b_rho = 1.0 - _step(rho_j, w, w)
        betas = []
        for lo, hi in self.rods.components:
            bz = Jet.const(1.0, shape)
            if np.isfinite(lo):
                bz = bz * (1.0 - _step(lo - z_j, w, w))
            if np.isfinite(hi):
                bz = bz * (1.0 - _step(z_j - hi, w, w))
            betas.append(b_rho * bz)
        total = betas[0]
        for bj in betas[1:]:
            total = total + bj
        rest = 1.0 - total
        weights = [bj for bj in betas]
        weights[0] = weights[0] + rest * e_bot
        weights[-1] = weights[-1] + rest * e_top
        # exact copies inside the tubes
        for j, bj in enumerate(betas):
            inside = bj.val == 1.0
            if np.any(inside):
                for i, wj in enumerate(weights):
                    val = 1.0 if i == j else 0.0
                    wj.val = np.where(inside, val, wj.val)
                    wj.grad = np.where(inside, 0.0, wj.grad)
                    wj.lap = np.where(inside, 0.0, wj.lap)
        return weights

    # -- evaluation --------------------------------------------------------

    def fields(self, rho, z):
        """Packed ``(u - u0, v, chi, psi)``; the first row is identically zero."""
        rho, z = np.broadcast_arrays(np.asarray(rho, dtype=float), np.asarray(z, dtype=float))
        weights = self._weights(rho, z)
        out = np.zeros((self.m,) + rho.shape)
        for j, wj in enumerate(weights):
            out[1:] += self.constants[j].reshape((-1,) + (1,) * rho.ndim) * wj.val
        # bitwise copies where one weight is exactly one
        for j, wj in enumerate(weights):
            mask = wj.val == 1.0
            if np.any(mask):
                out[1:, mask] = self.constants[j][:, None]
        return out

    def fields_jet(self, rho, z):
        """``(values, grad, lap)`` of ``(v, chi, psi)``, shapes (2k+1,...), (2, 2k+1, ...)."""
        rho, z = np.broadcast_arrays(np.asarray(rho, dtype=float), np.asarray(z, dtype=float))
        weights = self._weights(rho, z)
        n = 2 * self.k + 1
        val = np.zeros((n,) + rho.shape)
        grad = np.zeros((2, n) + rho.shape)
        lap = np.zeros((n,) + rho.shape)
        ex = (1,) * rho.ndim
        for j, wj in enumerate(weights):
            c = self.constants[j].reshape((n,) + ex)
            val += c * wj.val
            grad += c[None] * wj.grad[:, None]
            lap += c * wj.lap
        for j, wj in enumerate(weights):
            mask = wj.val == 1.0
            if np.any(mask):
                val[:, mask] = self.constants[j][:, None]
        return val, grad, lap

    def jet(self, rho, z):
        """Packed ``(point, grad, lap)`` of the seed (off Sigma)."""
        rho, z = np.broadcast_arrays(np.asarray(rho, dtype=float), np.asarray(z, dtype=float))
        if np.any(self.rods.on_sigma(rho, z)):
            raise DomainError("seed jet requested on Sigma")
        u = self.rods.u0(rho, z)
        gu = np.stack(self.rods.grad_u0(rho, z))
        val, grad, lap = self.fields_jet(rho, z)
        x = np.concatenate([u[None], val], axis=0)
        g = np.concatenate([gu[:, None], grad], axis=1)
        L = np.concatenate([np.zeros((1,) + rho.shape), lap], axis=0)
        return x, g, L

    def map_jet(self, rho, z) -> MapJet:
        x, g, L = self.jet(rho, z)
        return MapJet(TargetPoint.from_packed(x), g, L)

    def __call__(self, rho, z) -> TargetPoint:
        x = self.fields(rho, z)
        x[0] += self.rods.u0(*np.broadcast_arrays(np.asarray(rho, float), np.asarray(z, float)))
        return TargetPoint.from_packed(x)

    def tension_norm(self, rho, z):
        x, g, L = self.jet(rho, z)
        return norm_packed(x, tension_packed(x, g, L))

    def component_constants(self, j):
        return self.constants[j]


def build_seed(rods: RodConfig, spec: SingularMapSpec, cfg: SeedConfig | None = None) -> SeedMap:
    return SeedMap(rods, spec, cfg)


@dataclass
class DecayReport:
    """Fit of ``log ||tau||`` against ``log(1 + r^2)``.

    ``slope`` is the asymptotic exponent of ``(1 + r^2)``, estimated with a
    ``1/r`` correction term (the seed's tension approaches its power law
    like ``r^p (1 + c/r)``); ``raw_slope`` is the plain two-parameter fit
    over the same samples.  ``r_exponent = 2 * slope`` is the power of
    ``r``.  ``constant`` is the smallest ``c`` with
    ``||tau|| <= c (1 + r^2)^slope`` on the samples and ``c_measured`` is
    ``sup ||tau|| (1 + r^2)^{3/2}``.
    """

    slope: float
    slope_stderr: float
    raw_slope: float
    r_exponent: float
    constant: float
    c_measured: float
    radii: list
    angles: list
    norms: list
    sup_norm_per_radius: list

    def to_dict(self):
        return {
            "slope": self.slope,
            "slope_stderr": self.slope_stderr,
            "raw_slope": self.raw_slope,
            "r_exponent": self.r_exponent,
            "constant": self.constant,
            "c_measured": self.c_measured,
            "radii": list(map(float, self.radii)),
            "sup_norm_per_radius": list(map(float, self.sup_norm_per_radius)),
        }


def _fit_decay(radii, sup):
    x = np.log1p(radii ** 2)
    y = np.log(sup)
    raw = float(np.polyfit(x, y, 1)[0])
    if radii.size < 4:
        return raw, np.nan, raw
    X = np.column_stack([np.ones_like(x), x, 1.0 / np.sqrt(1 + radii ** 2)])
    coef, res, *_ = np.linalg.lstsq(X, y, rcond=None)
    dof = radii.size - 3
    resid = y - X @ coef
    s2 = float(resid @ resid) / dof if dof > 0 else 0.0
    cov = s2 * np.linalg.inv(X.T @ X)
    return float(coef[1]), float(np.sqrt(max(cov[1, 1], 0.0))), raw


def seed_tension_report(seed: SeedMap, radii, angles) -> DecayReport:
    """Sample ``||tau(seed)||`` on an ``(r, theta)`` grid and fit its decay.

    The fit uses the per-radius supremum over the angles, so the slope
    describes the envelope rather than an angular average.
    """
    radii = np.asarray(radii, dtype=float)
    angles = np.asarray(angles, dtype=float)
    if np.any(radii <= seed.cfg.R_star):
        raise ValueError("decay radii must lie beyond R_star")
    if np.any((angles <= 0) | (angles >= np.pi)):
        raise DomainError("angles 0 and pi lie on Sigma")
    R, T = np.meshgrid(radii, angles, indexing="ij")
    norms = seed.tension_norm(R * np.sin(T), R * np.cos(T))
    sup = norms.max(axis=1)
    c_meas = float(np.max(norms * (1 + R ** 2) ** 1.5))
    if np.all(sup == 0):
        return DecayReport(-np.inf, 0.0, -np.inf, -np.inf, 0.0, 0.0, radii.tolist(), angles.tolist(),
                           norms.tolist(), sup.tolist())
    good = sup > 0
    slope, err, raw = _fit_decay(radii[good], sup[good])
    constant = float(np.max(norms / (1 + R ** 2) ** slope))
    return DecayReport(slope, err, raw, 2 * slope, constant, c_meas, radii.tolist(), angles.tolist(),
                       norms.tolist(), sup.tolist())


def measured_constant(seed: SeedMap, rho=None, z=None, extra_radii=None, n_angles=64,
                      box_samples=(400, 800), polish=12) -> float:
    """``sup ||tau(seed)|| (1 + r^2)^{3/2}`` off Sigma.

    The supremum is searched on a dense box covering the transition shell
    ``r <= 1.25 R_star``, on optional extra nodes ``(rho, z)`` and far rays
    ``extra_radii``; the best ``polish`` samples are then refined by a local
    maximization.  The result does not depend on any solver grid.
    """
    rods = seed.rods
    Rs = seed.cfg.R_star
    w = seed.cfg.bump_width

    def weighted(r_, z_):
        r_, z_ = np.broadcast_arrays(np.asarray(r_, dtype=float), np.asarray(z_, dtype=float))
        out = np.zeros(r_.shape)
        ok = ~rods.on_sigma(r_, z_) & (r_ >= 0)
        if np.any(ok):
            out[ok] = seed.tension_norm(r_[ok], z_[ok]) * (1 + r_[ok] ** 2 + z_[ok] ** 2) ** 1.5
        return out

    nr, nz = box_samples
    rr = np.unique(np.concatenate([np.linspace(0.0, 1.25 * Rs, nr), np.linspace(0.5 * w, 2.5 * w, nr // 4)]))
    zz = np.linspace(-1.25 * Rs, 1.25 * Rs, nz)
    RR, ZZ = np.meshgrid(rr, zz, indexing="ij")
    pr, pz, pv = [RR.ravel()], [ZZ.ravel()], [weighted(RR, ZZ).ravel()]
    if rho is not None:
        r_ = np.asarray(rho, dtype=float).ravel()
        z_ = np.asarray(z, dtype=float).ravel()
        pr.append(r_)
        pz.append(z_)
        pv.append(weighted(r_, z_))
    if extra_radii is not None:
        th = np.linspace(0, np.pi, n_angles + 2)[1:-1]
        R, T = np.meshgrid(np.asarray(extra_radii, dtype=float), th, indexing="ij")
        pr.append((R * np.sin(T)).ravel())
        pz.append((R * np.cos(T)).ravel())
        pv.append(weighted(R * np.sin(T), R * np.cos(T)).ravel())
    pr, pz, pv = np.concatenate(pr), np.concatenate(pz), np.concatenate(pv)
    best = float(pv.max()) if pv.size else 0.0
    if best <= 0 or polish <= 0:
        return best
    for i in np.argsort(pv)[::-1][:polish]:
        res = minimize(lambda p: -float(weighted(abs(p[0]), p[1])), [pr[i], pz[i]], method="Nelder-Mead",
                       options={"xatol": 1e-8, "fatol": 1e-10 * best, "maxiter": 400})
        best = max(best, -float(res.fun))
    return best
