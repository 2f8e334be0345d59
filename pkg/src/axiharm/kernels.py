"""Edge kernels of the discrete renormalized energy.

The energy is a sum over grid edges ``e = (a, b)`` of

    q_e = wU dU^2 + kA e^{4 Ubar} T^2 + kB e^{2 Ubar} S

with ``U = u - u0``, ``Ubar`` the edge average of ``U``,
``T = dV + Cm . dP - Pm . dC`` (midpoint chi/psi) and
``S = |dC|^2 + |dP|^2``.  The coefficients ``wU, kA, kB`` carry the
quadrature weights and the ``e^{4 u0}, e^{2 u0}`` factors (see
:mod:`axiharm.discretization`).

Three quantities are needed: per-edge energies, the gradient scattered to
nodes, and the per-edge ``2m x 2m`` Hessian blocks.  Each has a numba loop
and a vectorized numpy twin; :data:`axiharm._accel.USE_NUMBA` picks one.
Fields are passed flat as ``X[m, n_nodes]``; local variables of an edge are
ordered ``[node a components, node b components]``.
"""

import numpy as np

from . import _accel
from ._accel import njit


# ---------------------------------------------------------------------------
# numpy versions


def _local_np(X, ea, eb, kA, kB):
    m = X.shape[0]
    k = (m - 2) // 2
    xa = X[:, ea]
    xb = X[:, eb]
    dU = xb[0] - xa[0]
    Ubar = 0.5 * (xa[0] + xb[0])
    A = kA * np.exp(4 * Ubar)
    B = kB * np.exp(2 * Ubar)
    Ca, Cb = xa[2:2 + k], xb[2:2 + k]
    Pa, Pb = xa[2 + k:], xb[2 + k:]
    dC, dP = Cb - Ca, Pb - Pa
    Cm, Pm = 0.5 * (Ca + Cb), 0.5 * (Pa + Pb)
    T = xb[1] - xa[1] + np.sum(Cm * dP, axis=0) - np.sum(Pm * dC, axis=0)
    S = np.sum(dC * dC, axis=0) + np.sum(dP * dP, axis=0)
    return m, k, dU, A, B, T, S, dC, dP, Cm, Pm


def edge_energy_np(X, ea, eb, wU, kA, kB):
    _, _, dU, A, B, T, S, *_ = _local_np(X, ea, eb, kA, kB)
    return wU * dU * dU + A * T * T + B * S


def _pieces_np(X, ea, eb, kA, kB):
    """Local gradients of T, S, Ubar, dU as ``(2m, E)`` arrays."""
    m, k, dU, A, B, T, S, dC, dP, Cm, Pm = _local_np(X, ea, eb, kA, kB)
    E = ea.size
    gT = np.zeros((2 * m, E))
    gS = np.zeros((2 * m, E))
    gT[1] = -1.0
    gT[m + 1] = 1.0
    if k:
        gT[2:2 + k] = 0.5 * dP + Pm
        gT[m + 2:m + 2 + k] = 0.5 * dP - Pm
        gT[2 + k:2 + 2 * k] = -Cm - 0.5 * dC
        gT[m + 2 + k:] = Cm - 0.5 * dC
        gS[2:2 + k] = -2 * dC
        gS[m + 2:m + 2 + k] = 2 * dC
        gS[2 + k:2 + 2 * k] = -2 * dP
        gS[m + 2 + k:] = 2 * dP
    return m, k, dU, A, B, T, S, gT, gS


def edge_gradient_local_np(X, ea, eb, wU, kA, kB):
    m, k, dU, A, B, T, S, gT, gS = _pieces_np(X, ea, eb, kA, kB)
    g = 2 * A * T * gT + B * gS
    ubar = 0.5 * (4 * A * T * T + 2 * B * S)
    g[0] += -2 * wU * dU + ubar
    g[m] += 2 * wU * dU + ubar
    return g


def gradient_np(X, ea, eb, wU, kA, kB):
    m, n = X.shape
    g = edge_gradient_local_np(X, ea, eb, wU, kA, kB)
    G = np.zeros((m, n))
    for c in range(m):
        G[c] += np.bincount(ea, weights=g[c], minlength=n)
        G[c] += np.bincount(eb, weights=g[m + c], minlength=n)
    return G


def edge_hessian_np(X, ea, eb, wU, kA, kB):
    """Per-edge Hessian blocks, shape ``(E, 2m, 2m)``."""
    m, k, dU, A, B, T, S, gT, gS = _pieces_np(X, ea, eb, kA, kB)
    E = ea.size
    H = 2 * A[:, None, None] * np.einsum("ie,je->eij", gT, gT)
    mixed = 8 * A * T * gT + 2 * B * gS                      # (2m, E), pairs with grad Ubar
    uu = 16 * A * T * T + 4 * B * S
    # grad Ubar = 1/2 (e_0 + e_m); grad dU = e_m - e_0
    for col in (0, m):
        H[:, :, col] += 0.5 * mixed.T
        H[:, col, :] += 0.5 * mixed.T
    for r in (0, m):
        for c in (0, m):
            H[:, r, c] += 0.25 * uu
    w2 = 2 * wU
    H[:, 0, 0] += w2
    H[:, m, m] += w2
    H[:, 0, m] -= w2
    H[:, m, 0] -= w2
    if k:
        at = 2 * A * T
        idx = np.arange(k)
        ca, cb = 2 + idx, m + 2 + idx
        pa, pb = 2 + k + idx, m + 2 + k + idx
        H[:, ca, pb] += at[:, None]
        H[:, pb, ca] += at[:, None]
        H[:, cb, pa] -= at[:, None]
        H[:, pa, cb] -= at[:, None]
        b2 = 2 * B[:, None]
        for lo, hi in ((ca, cb), (pa, pb)):
            H[:, lo, lo] += b2
            H[:, hi, hi] += b2
            H[:, lo, hi] -= b2
            H[:, hi, lo] -= b2
    return H


# ---------------------------------------------------------------------------
# numba versions


@njit
def _edge_scalars_nb(X, a, b, kA, kB, k):
    Ua = X[0, a]
    Ub = X[0, b]
    Ubar = 0.5 * (Ua + Ub)
    A = kA * np.exp(4.0 * Ubar)
    B = kB * np.exp(2.0 * Ubar)
    T = X[1, b] - X[1, a]
    S = 0.0
    for i in range(k):
        ca = X[2 + i, a]
        cb = X[2 + i, b]
        pa = X[2 + k + i, a]
        pb = X[2 + k + i, b]
        dc = cb - ca
        dp = pb - pa
        T += 0.5 * (ca + cb) * dp - 0.5 * (pa + pb) * dc
        S += dc * dc + dp * dp
    return Ub - Ua, A, B, T, S


@njit
def edge_energy_nb(X, ea, eb, wU, kA, kB):
    m = X.shape[0]
    k = (m - 2) // 2
    E = ea.shape[0]
    out = np.empty(E)
    for e in range(E):
        dU, A, B, T, S = _edge_scalars_nb(X, ea[e], eb[e], kA[e], kB[e], k)
        out[e] = wU[e] * dU * dU + A * T * T + B * S
    return out


@njit
def _fill_local_nb(X, a, b, k, m, gT, gS):
    for i in range(2 * m):
        gT[i] = 0.0
        gS[i] = 0.0
    gT[1] = -1.0
    gT[m + 1] = 1.0
    for i in range(k):
        ca = X[2 + i, a]
        cb = X[2 + i, b]
        pa = X[2 + k + i, a]
        pb = X[2 + k + i, b]
        dc = cb - ca
        dp = pb - pa
        cm = 0.5 * (ca + cb)
        pm = 0.5 * (pa + pb)
        gT[2 + i] = 0.5 * dp + pm
        gT[m + 2 + i] = 0.5 * dp - pm
        gT[2 + k + i] = -cm - 0.5 * dc
        gT[m + 2 + k + i] = cm - 0.5 * dc
        gS[2 + i] = -2.0 * dc
        gS[m + 2 + i] = 2.0 * dc
        gS[2 + k + i] = -2.0 * dp
        gS[m + 2 + k + i] = 2.0 * dp


@njit
def gradient_nb(X, ea, eb, wU, kA, kB):
    m, n = X.shape
    k = (m - 2) // 2
    G = np.zeros((m, n))
    gT = np.empty(2 * m)
    gS = np.empty(2 * m)
    for e in range(ea.shape[0]):
        a = ea[e]
        b = eb[e]
        dU, A, B, T, S = _edge_scalars_nb(X, a, b, kA[e], kB[e], k)
        _fill_local_nb(X, a, b, k, m, gT, gS)
        ubar = 0.5 * (4.0 * A * T * T + 2.0 * B * S)
        for c in range(m):
            G[c, a] += 2.0 * A * T * gT[c] + B * gS[c]
            G[c, b] += 2.0 * A * T * gT[m + c] + B * gS[m + c]
        G[0, a] += -2.0 * wU[e] * dU + ubar
        G[0, b] += 2.0 * wU[e] * dU + ubar
    return G


@njit
def edge_hessian_nb(X, ea, eb, wU, kA, kB):
    m = X.shape[0]
    k = (m - 2) // 2
    E = ea.shape[0]
    n2 = 2 * m
    H = np.zeros((E, n2, n2))
    gT = np.empty(n2)
    gS = np.empty(n2)
    mixed = np.empty(n2)
    for e in range(E):
        a = ea[e]
        b = eb[e]
        dU, A, B, T, S = _edge_scalars_nb(X, a, b, kA[e], kB[e], k)
        _fill_local_nb(X, a, b, k, m, gT, gS)
        for i in range(n2):
            mixed[i] = 8.0 * A * T * gT[i] + 2.0 * B * gS[i]
            for j in range(n2):
                H[e, i, j] = 2.0 * A * gT[i] * gT[j]
        for i in range(n2):
            H[e, i, 0] += 0.5 * mixed[i]
            H[e, i, m] += 0.5 * mixed[i]
            H[e, 0, i] += 0.5 * mixed[i]
            H[e, m, i] += 0.5 * mixed[i]
        uu = 0.25 * (16.0 * A * T * T + 4.0 * B * S)
        w2 = 2.0 * wU[e]
        H[e, 0, 0] += uu + w2
        H[e, m, m] += uu + w2
        H[e, 0, m] += uu - w2
        H[e, m, 0] += uu - w2
        at = 2.0 * A * T
        b2 = 2.0 * B
        for i in range(k):
            ca = 2 + i
            cb = m + 2 + i
            pa = 2 + k + i
            pb = m + 2 + k + i
            H[e, ca, pb] += at
            H[e, pb, ca] += at
            H[e, cb, pa] -= at
            H[e, pa, cb] -= at
            H[e, ca, ca] += b2
            H[e, cb, cb] += b2
            H[e, ca, cb] -= b2
            H[e, cb, ca] -= b2
            H[e, pa, pa] += b2
            H[e, pb, pb] += b2
            H[e, pa, pb] -= b2
            H[e, pb, pa] -= b2
    return H


# ---------------------------------------------------------------------------
# dispatch


def edge_energy(X, ea, eb, wU, kA, kB, use_numba=None):
    if _accel.USE_NUMBA if use_numba is None else use_numba:
        return edge_energy_nb(X, ea, eb, wU, kA, kB)
    return edge_energy_np(X, ea, eb, wU, kA, kB)


def gradient(X, ea, eb, wU, kA, kB, use_numba=None):
    if _accel.USE_NUMBA if use_numba is None else use_numba:
        return gradient_nb(X, ea, eb, wU, kA, kB)
    return gradient_np(X, ea, eb, wU, kA, kB)


def edge_hessian(X, ea, eb, wU, kA, kB, use_numba=None):
    if _accel.USE_NUMBA if use_numba is None else use_numba:
        return edge_hessian_nb(X, ea, eb, wU, kA, kB)
    return edge_hessian_np(X, ea, eb, wU, kA, kB)
