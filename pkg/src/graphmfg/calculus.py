"""Discrete calculus on a weighted graph.

Edge fields are arrays with one entry per canonical edge ``(src[e], dst[e])``
with ``src < dst``; the value on the reversed orientation is the negation.

The three fused operators at the bottom (:func:`dirichlet_energy`,
:func:`continuity_rhs`, :func:`hj_quadratic`) run on the edge kernels and
record a single tape node each when given :class:`~graphmfg.autodiff.Variable`
input.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from . import kernels
from .graph import Graph


class AverageWeighting:
    """theta_ij(rho) = (rho_i + rho_j) / 2."""

    name = "average"

    def __call__(self, rho_i, rho_j):
        return 0.5 * (rho_i + rho_j)

    def partial_first(self, rho_i, rho_j):
        return 0.5


THETA = AverageWeighting()


def theta(rho, i: int, j: int, graph: Graph, weighting=THETA) -> tuple[float, float]:
    """theta_ij(rho) and its partial derivative with respect to rho_i."""
    if not graph.has_edge(i, j):
        raise ValueError(f"({i}, {j}) is not an edge")
    rho = np.asarray(rho)
    return float(weighting(rho[i], rho[j])), float(weighting.partial_first(rho[i], rho[j]))


def theta_edges(rho, graph: Graph):
    return 0.5 * (ad.gather(rho, graph.src) + ad.gather(rho, graph.dst))


def graph_gradient(s, graph: Graph):
    """(grad S)_ij = sqrt(w_ij) (S_i - S_j) on canonical edges."""
    return np.sqrt(graph.w) * (ad.gather(s, graph.src) - ad.gather(s, graph.dst))


def velocity(s, graph: Graph):
    """Equilibrium velocity v_ij = sqrt(w_ij) (S_j - S_i), i.e. minus the graph gradient."""
    return -graph_gradient(s, graph)


def graph_divergence(rho, v, graph: Graph) -> np.ndarray:
    """div(rho v)_i = -sum_{j in N(i)} sqrt(w_ij) v_ij theta_ij(rho)."""
    rho = np.asarray(rho, dtype=np.float64)
    flux = np.sqrt(graph.w) * np.asarray(v) * theta_edges(rho, graph)
    return kernels.scatter_add(flux, graph.dst, graph.n) - kernels.scatter_add(flux, graph.src, graph.n)


def inner_product(v, u, rho, graph: Graph) -> float:
    """<v, u>_rho = 1/2 sum over both orientations = sum_e v_e u_e theta_e."""
    return float(np.sum(np.asarray(v) * np.asarray(u) * theta_edges(np.asarray(rho), graph)))


def kinetic_energy(v, rho, graph: Graph) -> float:
    return 0.5 * inner_product(v, v, rho, graph)


def integration_by_parts_check(rho, v, xi, graph: Graph) -> tuple[float, float]:
    """Both sides of -sum_i div(rho v)_i xi_i = <grad xi, v>_rho."""
    lhs = -float(np.dot(graph_divergence(rho, v, graph), np.asarray(xi)))
    rhs = inner_product(graph_gradient(np.asarray(xi, dtype=np.float64), graph), v, rho, graph)
    return lhs, rhs


# ---------------------------------------------------------------------------
# fused operators used by the integrator


def dirichlet_energy(rho, s, graph: Graph):
    """<grad S, grad S>_rho = sum_e w_e (S_i - S_j)^2 theta_e(rho)."""
    rv, sv = ad.value(rho), ad.value(s)
    out = kernels.edge_energy(rv, sv, graph.src, graph.dst, graph.w)
    return ad.custom(
        (rho, s),
        out,
        lambda g: kernels.edge_energy_vjp(float(g), rv, sv, graph.src, graph.dst, graph.w),
    )


def continuity_rhs(rho, s, graph: Graph):
    """d rho_i / dt = sum_{j in N(i)} w_ij (S_j - S_i) theta_ij(rho)."""
    rv, sv = ad.value(rho), ad.value(s)
    out = kernels.continuity(rv, sv, graph.src, graph.dst, graph.w)
    return ad.custom(
        (rho, s),
        out,
        lambda g: kernels.continuity_vjp(np.ascontiguousarray(g), rv, sv, graph.src, graph.dst, graph.w),
    )


def hj_quadratic(s, graph: Graph):
    """1/2 sum_{j in N(i)} w_ij (S_i - S_j)^2 * d theta_ij / d rho_i, with the partial = 1/2."""
    sv = ad.value(s)
    out = kernels.hj_quadratic(sv, graph.src, graph.dst, graph.w)
    return ad.custom(
        (s,),
        out,
        lambda g: (kernels.hj_quadratic_vjp(np.ascontiguousarray(g), sv, graph.src, graph.dst, graph.w),),
    )
