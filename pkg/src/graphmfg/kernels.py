"""Edge-loop kernels used by the integrator and its reverse pass.

Every kernel exists twice: a numba ``@njit`` loop and a vectorised numpy
twin.  The numba path is used when numba imports cleanly and the
environment variable ``GRAPHMFG_DISABLE_NUMBA`` is unset (or ``0``).  Both
paths compute the same quantities to rounding; ``tests/test_kernels.py``
cross-checks them and ``benchmarks/bench_kernels.py`` times them.

Edge arrays follow the canonical orientation of :class:`graphmfg.graph.Graph`:
``src[e] < dst[e]`` and ``w[e] > 0``.  Conventions, with ``d_e = s[src] - s[dst]``
and ``theta_e = (rho[src] + rho[dst]) / 2``:

* ``edge_energy``  = sum_e w_e d_e^2 theta_e          (the rho-weighted norm <grad S, grad S>_rho)
* ``continuity``   : out_i = sum_{j in N(i)} w_ij (s_j - s_i) theta_ij
* ``hj_quadratic`` : out_i = 1/4 sum_{j in N(i)} w_ij (s_i - s_j)^2
"""

from __future__ import annotations

import os

import numpy as np

_DISABLED = os.environ.get("GRAPHMFG_DISABLE_NUMBA", "0") not in ("", "0", "false", "False")

try:  # pragma: no cover - exercised implicitly by whichever path is active
    if _DISABLED:
        raise ImportError("numba disabled by GRAPHMFG_DISABLE_NUMBA")
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f


BACKEND = "numba" if HAVE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# numpy twins


def _np_edge_energy(rho, s, src, dst, w):
    d = s[src] - s[dst]
    return float(np.sum(w * d * d * (0.5 * (rho[src] + rho[dst]))))


def _np_edge_energy_vjp(g, rho, s, src, dst, w):
    n = rho.shape[0]
    d = s[src] - s[dst]
    theta = 0.5 * (rho[src] + rho[dst])
    ge = 2.0 * g * w * d * theta
    gs = np.bincount(src, ge, n) - np.bincount(dst, ge, n)
    gr_e = 0.5 * g * w * d * d
    grho = np.bincount(src, gr_e, n) + np.bincount(dst, gr_e, n)
    return grho, gs


def _np_continuity(rho, s, src, dst, w):
    n = rho.shape[0]
    flux = w * (s[dst] - s[src]) * (0.5 * (rho[src] + rho[dst]))
    return np.bincount(src, flux, n) - np.bincount(dst, flux, n)


def _np_continuity_vjp(g, rho, s, src, dst, w):
    n = rho.shape[0]
    gf = g[src] - g[dst]
    theta = 0.5 * (rho[src] + rho[dst])
    a = gf * w * theta
    gs = np.bincount(dst, a, n) - np.bincount(src, a, n)
    b = 0.5 * gf * w * (s[dst] - s[src])
    grho = np.bincount(src, b, n) + np.bincount(dst, b, n)
    return grho, gs


def _np_hj_quadratic(s, src, dst, w):
    n = s.shape[0]
    d = s[src] - s[dst]
    q = 0.25 * w * d * d
    return np.bincount(src, q, n) + np.bincount(dst, q, n)


def _np_hj_quadratic_vjp(g, s, src, dst, w):
    n = s.shape[0]
    d = s[src] - s[dst]
    a = 0.5 * w * d * (g[src] + g[dst])
    return np.bincount(src, a, n) - np.bincount(dst, a, n)


def _np_scatter_add(values, idx, n):
    if values.ndim == 1:
        return np.bincount(idx, values, n)
    out = np.zeros((n,) + values.shape[1:], dtype=values.dtype)
    np.add.at(out, idx, values)
    return out


# ---------------------------------------------------------------------------
# numba loops


@njit(cache=True)
def _nb_edge_energy(rho, s, src, dst, w):
    total = 0.0
    for e in range(src.shape[0]):
        i = src[e]
        j = dst[e]
        d = s[i] - s[j]
        total += w[e] * d * d * 0.5 * (rho[i] + rho[j])
    return total


@njit(cache=True)
def _nb_edge_energy_vjp(g, rho, s, src, dst, w):
    n = rho.shape[0]
    grho = np.zeros(n)
    gs = np.zeros(n)
    for e in range(src.shape[0]):
        i = src[e]
        j = dst[e]
        d = s[i] - s[j]
        ge = 2.0 * g * w[e] * d * 0.5 * (rho[i] + rho[j])
        gs[i] += ge
        gs[j] -= ge
        gr = 0.5 * g * w[e] * d * d
        grho[i] += gr
        grho[j] += gr
    return grho, gs


@njit(cache=True)
def _nb_continuity(rho, s, src, dst, w):
    out = np.zeros(rho.shape[0])
    for e in range(src.shape[0]):
        i = src[e]
        j = dst[e]
        flux = w[e] * (s[j] - s[i]) * 0.5 * (rho[i] + rho[j])
        out[i] += flux
        out[j] -= flux
    return out


@njit(cache=True)
def _nb_continuity_vjp(g, rho, s, src, dst, w):
    n = rho.shape[0]
    grho = np.zeros(n)
    gs = np.zeros(n)
    for e in range(src.shape[0]):
        i = src[e]
        j = dst[e]
        gf = g[i] - g[j]
        a = gf * w[e] * 0.5 * (rho[i] + rho[j])
        gs[j] += a
        gs[i] -= a
        b = 0.5 * gf * w[e] * (s[j] - s[i])
        grho[i] += b
        grho[j] += b
    return grho, gs


@njit(cache=True)
def _nb_hj_quadratic(s, src, dst, w):
    out = np.zeros(s.shape[0])
    for e in range(src.shape[0]):
        i = src[e]
        j = dst[e]
        d = s[i] - s[j]
        q = 0.25 * w[e] * d * d
        out[i] += q
        out[j] += q
    return out


@njit(cache=True)
def _nb_hj_quadratic_vjp(g, s, src, dst, w):
    gs = np.zeros(s.shape[0])
    for e in range(src.shape[0]):
        i = src[e]
        j = dst[e]
        a = 0.5 * w[e] * (s[i] - s[j]) * (g[i] + g[j])
        gs[i] += a
        gs[j] -= a
    return gs


@njit(cache=True)
def _nb_scatter_add_1d(values, idx, n):
    out = np.zeros(n)
    for k in range(idx.shape[0]):
        out[idx[k]] += values[k]
    return out


@njit(cache=True)
def _nb_scatter_add_2d(values, idx, n):
    out = np.zeros((n, values.shape[1]))
    for k in range(idx.shape[0]):
        r = idx[k]
        for c in range(values.shape[1]):
            out[r, c] += values[k, c]
    return out


def _nb_scatter_add(values, idx, n):
    if values.ndim == 1:
        return _nb_scatter_add_1d(values, idx, n)
    if values.ndim == 2:
        return _nb_scatter_add_2d(np.ascontiguousarray(values), idx, n)
    return _np_scatter_add(values, idx, n)


NUMPY_KERNELS = {
    "edge_energy": _np_edge_energy,
    "edge_energy_vjp": _np_edge_energy_vjp,
    "continuity": _np_continuity,
    "continuity_vjp": _np_continuity_vjp,
    "hj_quadratic": _np_hj_quadratic,
    "hj_quadratic_vjp": _np_hj_quadratic_vjp,
    "scatter_add": _np_scatter_add,
}

NUMBA_KERNELS = {
    "edge_energy": _nb_edge_energy,
    "edge_energy_vjp": _nb_edge_energy_vjp,
    "continuity": _nb_continuity,
    "continuity_vjp": _nb_continuity_vjp,
    "hj_quadratic": _nb_hj_quadratic,
    "hj_quadratic_vjp": _nb_hj_quadratic_vjp,
    "scatter_add": _nb_scatter_add,
}

_ACTIVE = NUMBA_KERNELS if HAVE_NUMBA else NUMPY_KERNELS

edge_energy = _ACTIVE["edge_energy"]
edge_energy_vjp = _ACTIVE["edge_energy_vjp"]
continuity = _ACTIVE["continuity"]
continuity_vjp = _ACTIVE["continuity_vjp"]
hj_quadratic = _ACTIVE["hj_quadratic"]
hj_quadratic_vjp = _ACTIVE["hj_quadratic_vjp"]
scatter_add = _ACTIVE["scatter_add"]
