"""Pointwise geometry of complex hyperbolic space in Busemann coordinates.

A point is ``p = (u, v, chi, psi)`` with ``chi, psi`` in R^k and the metric

    ds^2 = du^2 + e^{4u} (dv + chi.dpsi - psi.dchi)^2 + e^{2u} (|dchi|^2 + |dpsi|^2).

``k = 0`` is the real hyperbolic plane of curvature -4 (the vacuum Ernst
target).  Everything here is vectorized over arbitrary trailing batch
shapes.  Internally a point is a *packed* array of shape ``(m, ...)`` with
rows ``[u, v, chi_1..chi_k, psi_1..psi_k]``, ``m = 2k + 2``; the dataclasses
are thin validated wrappers around that layout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_bvp


@dataclass(frozen=True)
class HyperbolicModel:
    """The target H^{k+1}_C; ``k`` Abelian gauge fields, real dimension ``m``."""

    k: int

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 0:
            raise ValueError(f"k must be a nonnegative integer, got {self.k!r}")

    @property
    def m(self) -> int:
        return 2 * self.k + 2

    @property
    def chi_slice(self) -> slice:
        return slice(2, 2 + self.k)

    @property
    def psi_slice(self) -> slice:
        return slice(2 + self.k, 2 + 2 * self.k)


@dataclass(frozen=True)
class TargetPoint:
    """A point (or batch of points) of H^{k+1}_C.

    ``chi`` and ``psi`` carry the gauge index first: shape ``(k, *batch)``.
    """

    u: np.ndarray
    v: np.ndarray
    chi: np.ndarray
    psi: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        v = np.asarray(self.v, dtype=float)
        chi = np.asarray(self.chi, dtype=float)
        psi = np.asarray(self.psi, dtype=float)
        if chi.shape != psi.shape:
            raise ValueError(f"chi and psi shapes differ: {chi.shape} vs {psi.shape}")
        if chi.ndim == 0:
            raise ValueError("chi/psi need a leading gauge axis of length k")
        try:
            u, v = np.broadcast_arrays(u, v)
        except ValueError as exc:
            raise ValueError("u and v must broadcast") from exc
        if chi.shape[1:] != u.shape and chi.shape[0] > 0:
            chi = np.broadcast_to(chi, chi.shape[:1] + u.shape) if chi.shape[1:] == () else chi
            psi = np.broadcast_to(psi, psi.shape[:1] + u.shape) if psi.shape[1:] == () else psi
            if chi.shape[1:] != u.shape:
                raise ValueError(f"gauge fields have batch shape {chi.shape[1:]}, expected {u.shape}")
        if chi.shape[0] == 0:
            chi = np.zeros((0,) + u.shape)
            psi = np.zeros((0,) + u.shape)
        for name, arr in (("u", u), ("v", v), ("chi", chi), ("psi", psi)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite entries in {name}")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "chi", chi)
        object.__setattr__(self, "psi", psi)

    @property
    def k(self) -> int:
        return self.chi.shape[0]

    @property
    def shape(self):
        return self.u.shape

    @property
    def packed(self) -> np.ndarray:
        return np.concatenate([self.u[None], self.v[None], self.chi, self.psi], axis=0)

    @classmethod
    def from_packed(cls, x) -> "TargetPoint":
        x = np.asarray(x, dtype=float)
        k = (x.shape[0] - 2) // 2
        if x.shape[0] != 2 * k + 2:
            raise ValueError(f"packed leading dimension must be even and >= 2, got {x.shape[0]}")
        return cls(x[0], x[1], x[2:2 + k], x[2 + k:])


@dataclass(frozen=True)
class TargetTangent:
    """Tangent vector(s) at ``base``; same packing as :class:`TargetPoint`."""

    du: np.ndarray
    dv: np.ndarray
    dchi: np.ndarray
    dpsi: np.ndarray
    base: TargetPoint

    def __post_init__(self):
        k = self.base.k
        dchi = np.asarray(self.dchi, dtype=float)
        dpsi = np.asarray(self.dpsi, dtype=float)
        if k == 0:
            dchi = np.zeros((0,) + self.base.shape)
            dpsi = np.zeros((0,) + self.base.shape)
        elif dchi.shape[:1] != (k,) or dpsi.shape[:1] != (k,):
            raise ValueError(f"tangent gauge components must have length k={k}")
        du = np.broadcast_to(np.asarray(self.du, dtype=float), self.base.shape)
        dv = np.broadcast_to(np.asarray(self.dv, dtype=float), self.base.shape)
        object.__setattr__(self, "du", du)
        object.__setattr__(self, "dv", dv)
        object.__setattr__(self, "dchi", np.broadcast_to(dchi, (k,) + self.base.shape))
        object.__setattr__(self, "dpsi", np.broadcast_to(dpsi, (k,) + self.base.shape))

    @property
    def packed(self) -> np.ndarray:
        return np.concatenate([self.du[None], self.dv[None], self.dchi, self.dpsi], axis=0)

    @classmethod
    def from_packed(cls, X, base: TargetPoint) -> "TargetTangent":
        X = np.asarray(X, dtype=float)
        k = base.k
        if X.shape[0] != 2 * k + 2:
            raise ValueError(f"tangent has {X.shape[0]} components, target dimension is {2 * k + 2}")
        return cls(X[0], X[1], X[2:2 + k], X[2 + k:], base)


@dataclass(frozen=True)
class MapJet:
    """First derivatives and flat axisymmetric Laplacian of a map at points.

    ``grad`` has shape ``(d, m, *batch)`` (ambient direction first, usually
    ``d = 2`` for ``(rho, z)``); ``lap`` has shape ``(m, *batch)`` and holds
    ``f_rr + f_r / rho + f_zz`` of every component.
    """

    point: TargetPoint
    grad: np.ndarray
    lap: np.ndarray = field(default=None)

    def __post_init__(self):
        m = 2 * self.point.k + 2
        grad = np.asarray(self.grad, dtype=float)
        if grad.ndim < 2 or grad.shape[1] != m:
            raise ValueError(f"grad must have shape (d, {m}, ...), got {grad.shape}")
        lap = np.zeros((m,) + self.point.shape) if self.lap is None else np.asarray(self.lap, dtype=float)
        if lap.shape[0] != m:
            raise ValueError(f"lap must have leading dimension {m}, got {lap.shape}")
        object.__setattr__(self, "grad", grad)
        object.__setattr__(self, "lap", lap)


# ---------------------------------------------------------------------------
# packed-array kernels


def _split(x):
    k = (x.shape[0] - 2) // 2
    return x[0], x[1], x[2:2 + k], x[2 + k:]


def inner_packed(x, X, Y):
    """Metric inner product of packed tangents ``X, Y`` at packed points ``x``."""
    u, _, chi, psi = _split(x)
    du1, dv1, dc1, dp1 = _split(X)
    du2, dv2, dc2, dp2 = _split(Y)
    t1 = dv1 + np.sum(chi * dp1, axis=0) - np.sum(psi * dc1, axis=0)
    t2 = dv2 + np.sum(chi * dp2, axis=0) - np.sum(psi * dc2, axis=0)
    return (du1 * du2 + np.exp(4 * u) * t1 * t2
            + np.exp(2 * u) * (np.sum(dc1 * dc2, axis=0) + np.sum(dp1 * dp2, axis=0)))


def twist_packed(x, grad):
    """``Theta = grad v + chi . grad psi - psi . grad chi`` per ambient direction."""
    _, _, chi, psi = _split(x)
    _, gv, gc, gp = _split(np.moveaxis(grad, 1, 0))
    return gv + np.sum(chi[:, None] * gp, axis=0) - np.sum(psi[:, None] * gc, axis=0)


def tension_packed(x, grad, lap):
    """Tension field of a map from its jet, closed form.

    The formula is the Euler-Lagrange operator of the energy above, raised
    with the inverse metric; it agrees with the Christoffel-symbol route in
    :func:`christoffel_tension_packed`.
    """
    u, _, chi, psi = _split(x)
    gu, gv, gc, gp = _split(np.moveaxis(grad, 1, 0))   # gu: (d, ...), gc: (k, d, ...)
    lu, lv, lc, lp = _split(lap)
    A = np.exp(4 * u)
    B = np.exp(2 * u)
    theta = twist_packed(x, grad)                          # (d, ...)
    gc_th = np.sum(gc * theta[None], axis=1)               # (k, ...)
    gp_th = np.sum(gp * theta[None], axis=1)
    gc_gu = np.sum(gc * gu[None], axis=1)
    gp_gu = np.sum(gp * gu[None], axis=1)
    tu = (lu - 2 * A * np.sum(theta * theta, axis=0)
          - B * (np.sum(gc * gc, axis=(0, 1)) + np.sum(gp * gp, axis=(0, 1))))
    tc = lc + 2 * gc_gu - 2 * B * gp_th
    tp = lp + 2 * gp_gu + 2 * B * gc_th
    cross = np.sum(chi[:, None] * gp - psi[:, None] * gc, axis=0)   # (d, ...)
    sym = np.sum(chi[:, None] * gc + psi[:, None] * gp, axis=0)
    tv = (lv + 4 * np.sum(gv * gu, axis=0) + 2 * np.sum(cross * gu, axis=0)
          - 2 * B * np.sum(sym * theta, axis=0))
    return np.concatenate([tu[None], tv[None], tc, tp], axis=0)


def metric_matrix_packed(x):
    """Metric coefficients ``G_ab`` with shape ``(m, m, ...)``."""
    u, _, chi, psi = _split(x)
    k = chi.shape[0]
    m = 2 * k + 2
    a = np.zeros((m,) + u.shape)
    a[1] = 1.0
    a[2:2 + k] = -psi
    a[2 + k:] = chi
    G = np.exp(4 * u) * a[:, None] * a[None, :]
    G[0, 0] += 1.0
    idx = np.arange(2, m)
    G[idx, idx] += np.exp(2 * u)
    return G


def metric_derivatives_packed(x):
    """``dG[c, a, b] = d G_ab / d x^c``, exact in closed form."""
    u, _, chi, psi = _split(x)
    k = chi.shape[0]
    m = 2 * k + 2
    A = np.exp(4 * u)
    B = np.exp(2 * u)
    a = np.zeros((m,) + u.shape)
    a[1] = 1.0
    a[2:2 + k] = -psi
    a[2 + k:] = chi
    dG = np.zeros((m, m, m) + u.shape)
    dG[0] = 4 * A * a[:, None] * a[None, :]
    idx = np.arange(2, m)
    dG[0, idx, idx] += 2 * B
    for i in range(k):
        # the slot of a holding chi_i is psi-indexed and vice versa
        e = np.zeros((m,) + u.shape)
        e[2 + k + i] = 1.0
        dG[2 + i] = A * (e[:, None] * a[None, :] + a[:, None] * e[None, :])
        e = np.zeros((m,) + u.shape)
        e[2 + i] = 1.0
        dG[2 + k + i] = -A * (e[:, None] * a[None, :] + a[:, None] * e[None, :])
    return dG


def christoffel_packed(x):
    """Christoffel symbols ``Gamma[a, b, c]`` from the metric coefficients."""
    G = metric_matrix_packed(x)
    dG = metric_derivatives_packed(x)
    batch = x.shape[1:]
    Gm = np.moveaxis(G.reshape(G.shape[:2] + (-1,)), -1, 0)
    Ginv = np.moveaxis(np.linalg.inv(Gm), 0, -1).reshape(G.shape)
    # lowered symbol [d, b, c] = 1/2 (d_b G_dc + d_c G_db - d_d G_bc)
    low = 0.5 * (np.swapaxes(dG, 0, 1) + np.transpose(dG, (1, 2, 0) + tuple(range(3, 3 + len(batch)))) - dG)
    return np.einsum("ad...,dbc...->abc...", Ginv, low)


def christoffel_tension_packed(x, grad, lap):
    Gam = christoffel_packed(x)
    return lap + np.einsum("abc...,jb...,jc...->a...", Gam, grad, grad)


def raise_index_packed(x, cov):
    """Solve ``G tau = cov`` using the block structure of the metric."""
    u, _, chi, psi = _split(x)
    cu, cv, cc, cp = _split(cov)
    A = np.exp(4 * u)
    B = np.exp(2 * u)
    s = cv / A
    tc = (cc + psi * cv) / B
    tp = (cp - chi * cv) / B
    tv = s + np.sum(psi * tc, axis=0) - np.sum(chi * tp, axis=0)
    return np.concatenate([cu[None], tv[None], tc, tp], axis=0)


def norm_packed(x, X):
    return np.sqrt(np.maximum(inner_packed(x, X, X), 0.0))


def distance_packed(x, y):
    """Geodesic distance between packed point arrays.

    Uses the lift of horospherical coordinates ``(zeta = chi + i psi,
    2 v, e^{-2u})`` to C^{k+2} with a Hermitian form of signature
    (k+1, 1).  Written as ``sinh^2 d`` as a sum of nonnegative terms, so it
    is exact near the diagonal.
    """
    u1, v1, c1, s1 = _split(x)
    u2, v2, c2, s2 = _split(y)
    dz2 = np.sum((c1 - c2) ** 2, axis=0) + np.sum((s1 - s2) ** 2, axis=0)
    heis = v1 - v2 + np.sum(s1 * c2, axis=0) - np.sum(c1 * s2, axis=0)
    e2 = np.exp(2 * (u1 + u2))
    with np.errstate(invalid="ignore"):
        horiz = np.where(dz2 > 0, e2 * dz2 * dz2 / 4 + dz2 * (np.exp(2 * u1) + np.exp(2 * u2)) / 2, 0.0)
        vert = np.where(heis != 0, e2 * heis * heis, 0.0)
    sh2 = np.sinh(u1 - u2) ** 2 + horiz + vert
    return np.arcsinh(np.sqrt(sh2))


# ---------------------------------------------------------------------------
# public API on dataclasses


def _check_tangent(p: TargetPoint, X: TargetTangent):
    if X.base.k != p.k:
        raise ValueError(f"tangent of H^{X.base.k + 1}_C used at a point of H^{p.k + 1}_C")


def metric_inner(p: TargetPoint, X: TargetTangent, Y: TargetTangent):
    """``du_X du_Y`` plus the polarized quadratic form at ``p``."""
    _check_tangent(p, X)
    _check_tangent(p, Y)
    return inner_packed(p.packed, X.packed, Y.packed)


def energy_density(jet: MapJet):
    """``|d phi|^2``: the sum over ambient directions of ``<d_j phi, d_j phi>``."""
    x = jet.point.packed
    return sum(inner_packed(x, g, g) for g in jet.grad)


def tension(jet: MapJet) -> TargetTangent:
    return TargetTangent.from_packed(tension_packed(jet.point.packed, jet.grad, jet.lap), jet.point)


def christoffel_tension(jet: MapJet) -> TargetTangent:
    """Tension computed as ``lap phi^a + Gamma^a_bc d phi^b . d phi^c``.

    Independent of :func:`tension`: the symbols come from differentiating
    the metric matrix and inverting it numerically.
    """
    return TargetTangent.from_packed(christoffel_tension_packed(jet.point.packed, jet.grad, jet.lap), jet.point)


def tension_norm(p: TargetPoint, tau: TargetTangent):
    _check_tangent(p, tau)
    return norm_packed(p.packed, tau.packed)


def distance(p: TargetPoint, q: TargetPoint):
    if p.k != q.k:
        raise ValueError("points live in different targets")
    return distance_packed(p.packed, q.packed)


# ---------------------------------------------------------------------------
# gauge isometries


@dataclass(frozen=True)
class GaugeIsometry:
    """Heisenberg translation of the target.

    Acts by ``chi -> chi + a``, ``psi -> psi + b`` and
    ``v -> v + c + b.chi - a.psi``, which leaves
    ``dv + chi.dpsi - psi.dchi`` and hence the metric unchanged.
    """

    a: np.ndarray
    b: np.ndarray
    c: float

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.a, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        if a.shape != b.shape or a.ndim != 1:
            raise ValueError("isometry shifts a and b must be vectors of equal length")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", float(self.c))

    @classmethod
    def identity(cls, k: int) -> "GaugeIsometry":
        return cls(np.zeros(k), np.zeros(k), 0.0)

    @property
    def k(self) -> int:
        return self.a.shape[0]

    def apply_packed(self, x):
        x = np.array(x, dtype=float, copy=True)
        k = self.k
        if x.shape[0] != 2 * k + 2:
            raise ValueError("isometry and point have different k")
        shape = (k,) + (1,) * (x.ndim - 1)
        a, b = self.a.reshape(shape), self.b.reshape(shape)
        chi, psi = x[2:2 + k].copy(), x[2 + k:].copy()
        x[1] = x[1] + self.c + np.sum(b * chi, axis=0) - np.sum(a * psi, axis=0)
        x[2:2 + k] = chi + a
        x[2 + k:] = psi + b
        return x

    def apply(self, p: TargetPoint) -> TargetPoint:
        return TargetPoint.from_packed(self.apply_packed(p.packed))

    def inverse(self) -> "GaugeIsometry":
        return GaugeIsometry(-self.a, -self.b, -self.c)

    def compose(self, other: "GaugeIsometry") -> "GaugeIsometry":
        """``self o other``."""
        return GaugeIsometry(self.a + other.a, self.b + other.b,
                             self.c + other.c + self.b @ other.a - self.a @ other.b)

    def is_identity(self) -> bool:
        return not (np.any(self.a) or np.any(self.b) or self.c)


def gauge_normalize(constants):
    """Isometry moving the first constant's ``(v, psi)`` to zero.

    ``constants`` is a sequence of :class:`TargetPoint` (or a batched one);
    ``chi`` is left untouched.  Returns ``(isometry, normalized points)``.
    """
    if isinstance(constants, TargetPoint):
        pts = [TargetPoint.from_packed(constants.packed[:, i]) for i in range(constants.shape[0])]
    else:
        pts = list(constants)
    if not pts:
        raise ValueError("need at least one constant")
    first = pts[0]
    k = first.k
    v0 = float(np.asarray(first.v).reshape(()))
    chi0 = np.asarray(first.chi).reshape(k)
    psi0 = np.asarray(first.psi).reshape(k)
    b = -psi0
    c = -v0 - b @ chi0
    iso = GaugeIsometry(np.zeros(k), b, c)
    if iso.is_identity():
        iso = GaugeIsometry.identity(k)
    return iso, [iso.apply(p) for p in pts]


# ---------------------------------------------------------------------------
# geodesic boundary-value oracle


def geodesic_bvp(p: TargetPoint, q: TargetPoint, n_nodes: int = 64, tol: float = 1e-10):
    """Length of the geodesic from ``p`` to ``q`` found by collocation.

    Solves ``x'' + Gamma(x)(x', x') = 0`` on ``[0, 1]`` with the Christoffel
    symbols of :func:`christoffel_packed`.  Returns ``(length, solution)``;
    raises ``RuntimeError`` if the collocation solver fails.
    """
    x0 = np.asarray(p.packed, dtype=float).reshape(-1)
    x1 = np.asarray(q.packed, dtype=float).reshape(-1)
    m = x0.size
    t = np.linspace(0.0, 1.0, n_nodes)

    def rhs(_, y):
        x, xd = y[:m], y[m:]
        Gam = christoffel_packed(x)
        acc = -np.einsum("abc...,b...,c...->a...", Gam, xd, xd)
        return np.concatenate([xd, acc])

    def bc(ya, yb):
        return np.concatenate([ya[:m] - x0, yb[:m] - x1])

    y0 = np.empty((2 * m, n_nodes))
    y0[:m] = x0[:, None] + (x1 - x0)[:, None] * t
    y0[m:] = (x1 - x0)[:, None]
    sol = solve_bvp(rhs, bc, t, y0, tol=tol, max_nodes=200000)
    if not sol.success:
        raise RuntimeError(f"geodesic collocation failed: {sol.message}")
    ts = np.linspace(0.0, 1.0, 2001)
    y = sol.sol(ts)
    speed = norm_packed(y[:m], y[m:])
    # constant-speed parametrization: Simpson on the speed profile
    from scipy.integrate import simpson
    return float(simpson(speed, x=ts)), sol
