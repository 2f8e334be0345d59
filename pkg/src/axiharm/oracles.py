"""Closed-form single-black-hole solutions used as test oracles.

The Kerr-Newman family written as harmonic maps in Weyl coordinates.  With
``sigma = sqrt(M^2 - a^2 - Q^2)`` the horizon is the gap ``(-sigma, sigma)``
and Boyer-Lindquist coordinates follow from

    r = M + (r_+ + r_-)/2,   c = cos(theta) = (r_+ - r_-) / (2 sigma),

``r_pm = sqrt(rho^2 + (z -+ sigma)^2)``.  The map is

    u   = -1/2 log g_phiphi
    chi = -Q r a s^2 / Sigma
    psi = -Q c (r^2 + a^2) / Sigma
    v   = -a [M a^2 c (c-1)^2 - M r^2 (c^3 - 3c + 2) + Q^2 r c (c^2-1)] / Sigma - 2 a M

with ``s^2 = 1 - c^2``, ``Sigma = r^2 + a^2 c^2``.  These are certified by
their tension residual and by the reconstructed metric functions

    w = a (2 M r - Q^2) / ((r^2 + a^2)^2 - Delta a^2 s^2),
    theta = Q r / Sigma,
    e^{2 lambda} = Sigma / ((r - M)^2 - sigma^2 c^2).

Each oracle implements the boundary-data interface of the solver
(``rods``, ``k``, ``spec``, ``fields``).
"""

from __future__ import annotations

import numpy as np

from .rods import RodConfig, SingularMapSpec


class KerrNewmanOracle:
    """Kerr-Newman data; ``k = 1`` if charged (or forced), else ``k = 0``."""

    def __init__(self, M: float = 1.0, a: float = 0.0, Q: float = 0.0, k: int | None = None):
        self.M, self.a, self.Q = float(M), float(a), float(Q)
        s2 = M * M - a * a - Q * Q
        if not s2 > 0:
            raise ValueError("need M^2 > a^2 + Q^2 (non-extremal)")
        self.sigma = float(np.sqrt(s2))
        self.k = (1 if Q != 0 else 0) if k is None else int(k)
        if self.k == 0 and Q != 0:
            raise ValueError("a charged solution needs k = 1")
        if self.k not in (0, 1):
            raise ValueError("Kerr-Newman data exists for k in {0, 1}")
        self.m = 2 * self.k + 2
        self.rods = RodConfig([(-self.sigma, self.sigma)])
        bot = self._axis_constants(-1.0)
        top = self._axis_constants(1.0)
        v = np.array([bot[0], top[0]])
        psi = np.array([[bot[2]], [top[2]]]) if self.k else np.zeros((2, 0))
        self.spec = SingularMapSpec(v, psi)

    # -- Boyer-Lindquist ---------------------------------------------------

    def bl(self, rho, z):
        """``(r, c, s^2, Delta)`` without cancellation near the axis.

        With ``S = r_+ + r_-``: ``c = -2 z / S`` and
        ``(S^2 - 4 sigma^2)(S^2 - 4 z^2) = 4 rho^2 S^2``; the larger factor
        is computed directly and the other from the product.
        """
        rho, z = np.broadcast_arrays(np.asarray(rho, dtype=float), np.asarray(z, dtype=float))
        sg = self.sigma
        S = np.hypot(rho, z - sg) + np.hypot(rho, z + sg)
        d1 = S * S - 4 * sg * sg
        d2 = S * S - 4 * z * z
        prod = 4 * rho * rho * S * S
        with np.errstate(divide="ignore", invalid="ignore"):
            d1s = np.where(d1 >= d2, d1, prod / d2)
            d2s = np.where(d1 >= d2, prod / d1, d2)
        d1s = np.where(np.isfinite(d1s), d1s, 0.0)
        d2s = np.where(np.isfinite(d2s), d2s, 0.0)
        r = self.M + 0.5 * S
        c = np.clip(-2 * z / S, -1.0, 1.0)
        s2 = d2s / (S * S)
        D = 0.25 * d1s
        return r, c, s2, D

    def _potentials(self, r, c, s2=None):
        M, a, Q = self.M, self.a, self.Q
        s2 = 1 - c * c if s2 is None else s2
        Sig = r * r + a * a * c * c
        raw = a * (M * a * a * c * (c - 1) ** 2 - M * r * r * (c ** 3 - 3 * c + 2) + Q * Q * r * c * (c * c - 1)) / Sig
        v = -(raw + 2 * a * M)
        chi = -Q * r * a * s2 / Sig
        psi = -Q * c * (r * r + a * a) / Sig
        return v, chi, psi

    def _axis_constants(self, sign):
        # far up (z > 0) the axis has c = -1 in this convention, and vice versa
        r = np.array(1e3)
        v, chi, psi = self._potentials(r, np.array(-sign))
        return float(v), float(chi), float(psi)

    def u(self, rho, z):
        """``u = -1/2 log g_phiphi`` (``+inf`` on Sigma)."""
        r, c, s2, D = self.bl(rho, z)
        return -0.5 * np.log(self._gpp(r, c, s2, D))

    def _gpp(self, r, c, s2, D):
        a = self.a
        Sig = r * r + a * a * c * c
        return ((r * r + a * a) ** 2 - D * a * a * s2) * s2 / Sig

    def u_plus_log_rho(self, rho, z):
        """``u + log rho`` in a form that stays finite on Sigma."""
        rho, z = np.broadcast_arrays(np.asarray(rho, dtype=float), np.asarray(z, dtype=float))
        r, c, s2, D = self.bl(rho, z)
        a, M, Q = self.a, self.M, self.Q
        out = np.empty(rho.shape)
        off = rho > 0
        s2 = s2[off]
        rr = r[off]
        Sig = rr * rr + a * a * c[off] ** 2
        D = D[off]
        ratio = (rr * rr + a * a + a * a * s2 * (2 * M * rr - Q * Q) / Sig) / D
        out[off] = -0.5 * np.log(ratio)
        ax = ~off
        za = np.abs(z[ax])
        with np.errstate(divide="ignore"):
            # on the axis Delta = (|z| - sigma)(|z| + sigma), r = M + |z|
            out[ax] = -0.5 * np.log((M + za) ** 2 + a * a) + 0.5 * np.log((za - self.sigma) * (za + self.sigma))
        return out

    def fields(self, rho, z):
        """Packed ``(u - u0, v, chi, psi)``, finite everywhere including Sigma."""
        rho, z = np.broadcast_arrays(np.asarray(rho, dtype=float), np.asarray(z, dtype=float))
        r, c, s2, _ = self.bl(rho, z)
        v, chi, psi = self._potentials(r, c, s2)
        U = np.empty(rho.shape)
        on_axis = rho == 0
        off = ~on_axis
        U[off] = self.u_plus_log_rho(rho[off], z[off]) - self.rods.u0_plus_log_rho(rho[off], z[off])
        za = np.abs(z[on_axis])
        gap = za < self.sigma
        Ua = np.empty(za.shape)
        # Sigma axis: closed-form limit, exact at the endpoints as well
        Ua[~gap] = np.log((za[~gap] + self.sigma) / np.hypot(self.M + za[~gap], self.a))
        zg = z[on_axis][gap]
        Ua[gap] = self.u(np.zeros_like(zg), zg) - self.rods.u0(np.zeros_like(zg), zg)
        U[on_axis] = Ua
        # exact constants on the axis away from the gap
        sig_ax = on_axis & (np.abs(z) >= self.sigma)
        top = sig_ax & (z > 0)
        bot = sig_ax & (z < 0)
        v = np.where(top, self.spec.v[1], np.where(bot, self.spec.v[0], v))
        parts = [U[None], v[None]]
        if self.k:
            chi = np.where(sig_ax, 0.0, chi)
            psi = np.where(top, self.spec.psi[1, 0], np.where(bot, self.spec.psi[0, 0], psi))
            parts += [chi[None], psi[None]]
        return np.concatenate(parts, axis=0)

    def point(self, rho, z):
        """Packed target point (off Sigma)."""
        x = self.fields(rho, z)
        x[0] += self.rods.u0(rho, z)
        return x

    # -- metric functions --------------------------------------------------

    def w(self, rho, z):
        r, c, s2, D = self.bl(rho, z)
        a = self.a
        return a * (2 * self.M * r - self.Q ** 2) / ((r * r + a * a) ** 2 - D * a * a * s2)

    def theta(self, rho, z):
        r, c, _, _ = self.bl(rho, z)
        return self.Q * r / (r * r + self.a ** 2 * c * c)

    def exp2lambda(self, rho, z):
        r, c, s2, D = self.bl(rho, z)
        Sig = r * r + self.a ** 2 * c * c
        # (r - M)^2 - sigma^2 c^2 = Delta + sigma^2 s^2; infinite at the gap endpoints
        with np.errstate(divide="ignore"):
            return Sig / (D + self.sigma ** 2 * s2)

    def lam(self, rho, z):
        return 0.5 * np.log(self.exp2lambda(rho, z))


def schwarzschild(M: float = 1.0) -> KerrNewmanOracle:
    return KerrNewmanOracle(M, 0.0, 0.0)


def fd_tension(oracle, rho, z, h):
    """Tension norm of the oracle from centred differences of step ``h``.

    Certification of a closed-form map: the result must vanish like ``h^2``.
    """
    from .geometry import norm_packed, tension_packed

    f = oracle.point
    x0 = f(rho, z)
    xr = (f(rho + h, z) - f(rho - h, z)) / (2 * h)
    xz = (f(rho, z + h) - f(rho, z - h)) / (2 * h)
    lap = (f(rho + h, z) + f(rho - h, z) + f(rho, z + h) + f(rho, z - h) - 4 * x0) / h ** 2 + xr / rho
    t = tension_packed(x0, np.stack([xr, xz]), lap)
    return norm_packed(x0, t)
