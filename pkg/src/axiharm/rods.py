"""Axis rod structure, the regularized line-charge potential u0, and the
singular maps built from it.

The axis is split into ``N`` open gaps ``(a_j, b_j)`` (horizon rods) and
``N + 1`` closed components of the singular set Sigma.  Components are
indexed bottom to top: component 0 is ``z <= a_1``, component ``j`` is
``[b_j, a_{j+1}]`` and component ``N`` is ``z >= b_N``.

u0 is the potential of charge density 1/2 on Sigma, regularized so that
``u0 + log rho -> 0`` at infinity:

    u0 = -log rho - sum_j gap_potential(a_j, b_j, .)

All functions are vectorized over ``rho`` and ``z`` arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .geometry import TargetPoint


@dataclass(frozen=True)
class AxisPoint:
    """Point(s) of the meridian half-plane ``rho >= 0``."""

    rho: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        rho, z = np.broadcast_arrays(np.asarray(self.rho, dtype=float), np.asarray(self.z, dtype=float))
        if np.any(rho < 0):
            raise DomainError("rho must be nonnegative")
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "z", z)

    @property
    def r(self):
        return np.hypot(self.rho, self.z)


def _as_point(x, z=None) -> AxisPoint:
    if isinstance(x, AxisPoint):
        return x
    return AxisPoint(x, z)


@dataclass(frozen=True)
class RodConfig:
    """Sorted disjoint gaps ``(a_j, b_j)`` on the axis."""

    gaps: tuple

    def __post_init__(self):
        gaps = tuple((float(a), float(b)) for a, b in self.gaps)
        if len(gaps) == 0:
            raise ValueError("need at least one gap (N >= 1)")
        for j, (a, b) in enumerate(gaps):
            if not (np.isfinite(a) and np.isfinite(b)):
                raise ValueError(f"gap {j} has non-finite endpoints")
            if not a < b:
                raise ValueError(f"gap {j} = ({a}, {b}) must satisfy a < b")
            if j and not gaps[j - 1][1] < a:
                raise ValueError(f"gaps {j - 1} and {j} overlap or are not strictly ordered: "
                                 f"{gaps[j - 1]} vs {(a, b)}")
        object.__setattr__(self, "gaps", gaps)

    @property
    def N(self) -> int:
        return len(self.gaps)

    @property
    def a(self) -> np.ndarray:
        return np.array([g[0] for g in self.gaps])

    @property
    def b(self) -> np.ndarray:
        return np.array([g[1] for g in self.gaps])

    @property
    def endpoints(self) -> np.ndarray:
        return np.array([e for g in self.gaps for e in g])

    @property
    def components(self):
        """``(lo, hi)`` of each Sigma component, bottom to top, with infinities."""
        ends = [-np.inf] + [e for g in self.gaps for e in g] + [np.inf]
        return [(ends[2 * j], ends[2 * j + 1]) for j in range(self.N + 1)]

    @property
    def bounded_components(self):
        return list(range(1, self.N))

    @property
    def diameter(self) -> float:
        return self.gaps[-1][1] - self.gaps[0][0]

    @property
    def outer_extent(self) -> float:
        return float(np.max(np.abs(self.endpoints)))

    @property
    def min_length(self) -> float:
        """Shortest gap or bounded component."""
        lengths = [b - a for a, b in self.gaps]
        lengths += [self.gaps[j + 1][0] - self.gaps[j][1] for j in range(self.N - 1)]
        return min(lengths)

    def in_gap(self, z):
        """Index of the open gap containing ``z`` on the axis, else -1."""
        z = np.asarray(z, dtype=float)
        out = np.full(z.shape, -1, dtype=int)
        for j, (a, b) in enumerate(self.gaps):
            out[(z > a) & (z < b)] = j
        return out

    def component_of(self, z):
        """Index of the Sigma component containing axis height ``z``, -1 in gaps."""
        z = np.asarray(z, dtype=float)
        out = np.full(z.shape, -1, dtype=int)
        for j, (lo, hi) in enumerate(self.components):
            out[(z >= lo) & (z <= hi)] = j
        return out

    def on_sigma(self, rho, z):
        rho, z = np.broadcast_arrays(np.asarray(rho, dtype=float), np.asarray(z, dtype=float))
        return (rho == 0) & (self.in_gap(z) < 0)

    # -- potential ---------------------------------------------------------

    def _log_terms(self, rho, z):
        """Regular pieces of u0: returns ``(count, S)`` with
        ``u0 = -(1 - count) log rho - S / 2``.

        ``count`` is the number of gaps with ``a < z <= b`` and
        ``S = sum_j [L(z - a_j) - L(z - b_j)]`` where ``L(s) = log(s + r)``
        for ``s > 0`` and ``-log(r + |s|)`` otherwise.  The dropped
        ``2 log rho`` of the second branch is what ``count`` accounts for.
        """
        count = np.zeros(np.shape(rho))
        S = np.zeros(np.shape(rho))
        for a, b in self.gaps:
            count += (z > a) & (z <= b)
            S += _ltilde(rho, z - a) - _ltilde(rho, z - b)
        return count, S

    def u0(self, rho, z):
        rho, z = np.broadcast_arrays(np.asarray(rho, dtype=float), np.asarray(z, dtype=float))
        if np.any(self.on_sigma(rho, z)):
            raise DomainError("u0 is infinite on Sigma")
        count, S = self._log_terms(rho, z)
        c = 1.0 - count
        with np.errstate(divide="ignore"):
            lr = np.where(c != 0, np.log(np.where(rho > 0, rho, 1.0)), 0.0)
        return -c * lr - 0.5 * S

    def u0_plus_log_rho(self, rho, z):
        """``u0 + log rho``: bounded near Sigma, ``-inf`` on the gaps' axis."""
        rho, z = np.broadcast_arrays(np.asarray(rho, dtype=float), np.asarray(z, dtype=float))
        count, S = self._log_terms(rho, z)
        with np.errstate(divide="ignore", invalid="ignore"):
            lr = np.log(rho)
            out = np.where(count != 0, count * lr, 0.0) - 0.5 * S
        return out

    def grad_u0(self, rho, z):
        """Exact ``(d u0/d rho, d u0/d z)``."""
        rho, z = np.broadcast_arrays(np.asarray(rho, dtype=float), np.asarray(z, dtype=float))
        if np.any(self.on_sigma(rho, z)):
            raise DomainError("grad u0 is infinite on Sigma")
        count, _ = self._log_terms(rho, z)
        c = 1.0 - count
        gr = np.zeros(rho.shape)
        gz = np.zeros(rho.shape)
        for a, b in self.gaps:
            ra, rb = np.hypot(rho, z - a), np.hypot(rho, z - b)
            gr -= 0.5 * (_ltilde_drho(rho, z - a, ra) - _ltilde_drho(rho, z - b, rb))
            gz -= 0.5 * (1.0 / ra - 1.0 / rb)
        with np.errstate(divide="ignore", invalid="ignore"):
            gr = gr - np.where(c != 0, c / np.where(rho > 0, rho, 1.0), 0.0)
        return gr, gz

    def grad_u0_plus_log_rho(self, rho, z):
        """Gradient of the bounded part ``u0 + log rho`` (finite on Sigma)."""
        rho, z = np.broadcast_arrays(np.asarray(rho, dtype=float), np.asarray(z, dtype=float))
        count, _ = self._log_terms(rho, z)
        gr = np.zeros(rho.shape)
        gz = np.zeros(rho.shape)
        # gap endpoints are singular points of the gradient
        with np.errstate(divide="ignore", invalid="ignore"):
            for a, b in self.gaps:
                ra, rb = np.hypot(rho, z - a), np.hypot(rho, z - b)
                gr -= 0.5 * (_ltilde_drho(rho, z - a, ra) - _ltilde_drho(rho, z - b, rb))
                gz -= 0.5 * (1.0 / ra - 1.0 / rb)
            gr = gr + np.where(count != 0, count / rho, 0.0)
        return gr, gz

    def dist_to_sigma(self, rho, z):
        rho, z = np.broadcast_arrays(np.asarray(rho, dtype=float), np.asarray(z, dtype=float))
        best = np.full(rho.shape, np.inf)
        for lo, hi in self.components:
            dz = np.maximum(np.maximum(lo - z, z - hi), 0.0)
            best = np.minimum(best, np.hypot(rho, dz))
        return best

    def gap_limit(self, z):
        """Value of u0 on the axis inside a gap (finite)."""
        z = np.asarray(z, dtype=float)
        if np.any(self.in_gap(z) < 0):
            raise DomainError("gap_limit requires axis heights inside a gap")
        return self.u0(np.zeros_like(z), z)


def _ltilde(rho, s):
    r = np.hypot(rho, s)
    with np.errstate(divide="ignore"):
        return np.where(s > 0, np.log(np.where(s > 0, s + r, 1.0)), -np.log(r + np.abs(s)))


def _ltilde_drho(rho, s, r):
    with np.errstate(divide="ignore", invalid="ignore"):
        d = rho / (r * (r + np.abs(s)))
    d = np.where(rho == 0, 0.0, d)
    return np.where(s > 0, d, -d)


# ---------------------------------------------------------------------------
# public operations


def gap_potential(a: float, b: float, x, z=None):
    """Newtonian potential of density 1/2 on the axis segment ``[a, b]``.

    ``(1/2) log((z - a + r_a) / (z - b + r_b))``, evaluated without
    cancellation below the segment.
    """
    if not a < b:
        raise ValueError("gap_potential needs a < b")
    x = _as_point(x, z)
    rho, zz = x.rho, x.z
    if np.any((rho == 0) & (zz >= a) & (zz <= b)):
        raise DomainError("gap_potential diverges on the segment itself")
    sa, sb = zz - a, zz - b
    out = 0.5 * (_ltilde(rho, sa) - _ltilde(rho, sb))
    # a < z <= b: the second branch of L dropped 2 log rho for the b term only
    inside = (sa > 0) & (sb <= 0)
    with np.errstate(divide="ignore"):
        out = np.where(inside, out + np.log(np.where(inside, rho, 1.0)), out)
    return out


def axis_potential_u0(rods: RodConfig, x, z=None):
    x = _as_point(x, z)
    return rods.u0(x.rho, x.z)


def grad_u0(rods: RodConfig, x, z=None):
    x = _as_point(x, z)
    return rods.grad_u0(x.rho, x.z)


def dist_to_sigma(rods: RodConfig, x, z=None):
    x = _as_point(x, z)
    return rods.dist_to_sigma(x.rho, x.z)


@dataclass(frozen=True)
class SingularMapSpec:
    """Constants ``(v_j, chi_j, psi_j)`` on each Sigma component.

    ``v`` has shape ``(N+1,)``, ``psi`` and ``chi`` ``(N+1, k)``.  ``chi``
    must be zero unless ``allow_chi`` is set.
    """

    v: np.ndarray
    psi: np.ndarray
    chi: np.ndarray = field(default=None)
    allow_chi: bool = False

    def __post_init__(self):
        v = np.atleast_1d(np.asarray(self.v, dtype=float))
        psi = np.asarray(self.psi, dtype=float)
        if v.ndim != 1:
            raise ValueError("v must be a vector with one entry per component")
        if psi.ndim == 1 and psi.size == 0:
            psi = np.zeros((v.size, 0))
        if psi.ndim != 2 or psi.shape[0] != v.size:
            raise ValueError(f"psi must have shape (N+1, k) = ({v.size}, k), got {psi.shape}")
        chi = np.zeros_like(psi) if self.chi is None else np.asarray(self.chi, dtype=float)
        if chi.shape != psi.shape:
            raise ValueError(f"chi shape {chi.shape} does not match psi shape {psi.shape}")
        if np.any(chi != 0) and not self.allow_chi:
            raise ValueError("nonzero chi_j requires allow_chi=True")
        for name, arr in (("v", v), ("psi", psi), ("chi", chi)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite {name}")
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "chi", chi)

    @property
    def k(self) -> int:
        return self.psi.shape[1]

    @property
    def n_components(self) -> int:
        return self.v.size

    def constants(self, j: int) -> np.ndarray:
        """Packed ``(v, chi, psi)`` of component ``j`` (length ``2k + 1``)."""
        if not 0 <= j < self.n_components:
            raise IndexError(f"component index {j} out of range")
        return np.concatenate([[self.v[j]], self.chi[j], self.psi[j]])

    def constant_matrix(self) -> np.ndarray:
        """``(N+1, 2k+1)`` array of packed constants."""
        return np.stack([self.constants(j) for j in range(self.n_components)])

    def check_rods(self, rods: RodConfig):
        if self.n_components != rods.N + 1:
            raise ValueError(f"{self.n_components} constant sets given for {rods.N + 1} Sigma components")

    @classmethod
    def zeros(cls, N: int, k: int) -> "SingularMapSpec":
        return cls(np.zeros(N + 1), np.zeros((N + 1, k)))

    def transformed(self, iso) -> "SingularMapSpec":
        """Constants moved by a :class:`~axiharm.geometry.GaugeIsometry`."""
        k = self.k
        x = np.zeros((2 * k + 2, self.n_components))
        x[1] = self.v
        x[2:2 + k] = self.chi.T
        x[2 + k:] = self.psi.T
        y = iso.apply_packed(x)
        return SingularMapSpec(y[1], y[2 + k:].T, y[2:2 + k].T, allow_chi=True)


def singular_map(rods: RodConfig, spec: SingularMapSpec, j: int, x, z=None) -> TargetPoint:
    """``phi_j = (u0, v_j, chi_j, psi_j)``, a map into a single geodesic."""
    spec.check_rods(rods)
    x = _as_point(x, z)
    c = spec.constants(j)
    k = spec.k
    u = rods.u0(x.rho, x.z)
    shape = (k,) + (1,) * u.ndim
    ones = np.ones_like(u)
    return TargetPoint(u, c[0] * ones, c[1:1 + k].reshape(shape) * ones, c[1 + k:].reshape(shape) * ones)
