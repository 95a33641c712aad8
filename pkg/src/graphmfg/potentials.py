"""Running-cost functionals and terminal energies with their first variations.

Every functional returns ``(value, first_variation)``.  Inputs may be numpy
arrays or tape variables; logs always see ``max(rho, DENSITY_FLOOR)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .calculus import theta_edges
from .graph import Graph

DENSITY_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class PotentialSpec:
    """Weights and data of the cost functional.

    ``kernel`` is one of ``"none"``, ``"gaussian"``, ``"coulomb"`` or
    ``"matrix"`` (explicit symmetric ``W_matrix``).  ``terminal`` is ``"L1"``
    or ``"KL"`` against ``target``.
    """

    lambda_K: float = 0.5
    lambda_V: float = 0.0
    V: np.ndarray | None = None
    lambda_W: float = 0.0
    kernel: str = "none"
    coulomb_c: float = 0.5
    W_matrix: np.ndarray | None = None
    lambda_B: float = 0.0
    lambda_I: float = 0.0
    terminal: str = "L1"
    lambda_G: float = 0.0
    target: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("lambda_K", "lambda_V", "lambda_W", "lambda_B", "lambda_I", "lambda_G"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.kernel not in ("none", "gaussian", "coulomb", "matrix"):
            raise ValueError(f"unknown interaction kernel {self.kernel!r}")
        if self.terminal not in ("L1", "KL"):
            raise ValueError(f"unknown terminal energy {self.terminal!r}")
        if self.kernel == "coulomb" and self.coulomb_c <= 0:
            raise ValueError("coulomb offset c must be positive")
        if self.W_matrix is not None:
            W = np.asarray(self.W_matrix, dtype=np.float64)
            if W.ndim != 2 or W.shape[0] != W.shape[1] or not np.allclose(W, W.T, rtol=0, atol=1e-12):
                raise ValueError("interaction matrix must be square and symmetric")
            object.__setattr__(self, "W_matrix", W)
        if self.target is not None:
            t = np.asarray(self.target, dtype=np.float64)
            if np.any(t < 0) or abs(t.sum() - 1.0) > 1e-12:
                raise ValueError("terminal target must be a probability vector")
            object.__setattr__(self, "target", t)
        if self.V is not None:
            object.__setattr__(self, "V", np.asarray(self.V, dtype=np.float64))

    def bind(self, graph: Graph) -> "PotentialSpec":
        """Materialise the interaction matrix for ``graph`` if it is kernel-defined."""
        if self.lambda_W > 0 and self.kernel in ("gaussian", "coulomb") and self.W_matrix is None:
            return replace(self, W_matrix=interaction_kernel(self.kernel, graph.coords, self.coulomb_c))
        return self


def interaction_kernel(kind: str, coords: np.ndarray, c: float = 0.5) -> np.ndarray:
    """Dense kernel matrix: gaussian exp(-|x-y|^2/2) or coulomb 1/(|x-y|^2 + c)."""
    sq = np.sum(coords**2, axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * coords @ coords.T, 0.0)
    np.fill_diagonal(d2, 0.0)
    if kind == "gaussian":
        return np.exp(-0.5 * d2)
    if kind == "coulomb":
        return 1.0 / (d2 + c)
    raise ValueError(f"unknown kernel {kind!r}")


def landscape_potential(coords, height=50.0, radius=0.5, center=(0.5, 0.5), eta=5.0) -> np.ndarray:
    """Smoothed bump height * (1 + tanh(eta (R - |x - c|))) / 2 at every node."""
    r = np.linalg.norm(np.asarray(coords) - np.asarray(center), axis=1)
    return height * 0.5 * (1.0 + np.tanh(eta * (radius - r)))


def _floor_log(rho):
    return ad.log(ad.maximum(rho, DENSITY_FLOOR))


def linear_potential(rho, V):
    V = np.asarray(V, dtype=np.float64)
    return ad.dot(V, rho), V


def interaction_potential(rho, kernel, coords=None, c: float = 0.5):
    """W(rho) = 1/2 rho^T K rho with variation K rho.  ``kernel`` is a matrix or a kind name."""
    K = interaction_kernel(kernel, coords, c) if isinstance(kernel, str) else np.asarray(kernel)
    Kr = ad.matmul(K, rho)
    return 0.5 * ad.dot(rho, Kr), Kr


def entropy(rho):
    """sum rho log rho, variation log rho + 1."""
    logr = _floor_log(rho)
    return ad.sum_(rho * logr), logr + 1.0


def fisher_information(rho, graph: Graph):
    """1/2 sum_e w_e (log rho_i - log rho_j)^2 theta_e, with its closed-form variation."""
    rho_f = ad.maximum(rho, DENSITY_FLOOR)
    logr = ad.log(rho_f)
    L = ad.gather(logr, graph.src) - ad.gather(logr, graph.dst)
    th = theta_edges(rho, graph)
    L2 = L * L
    value = 0.5 * ad.sum_(graph.w * L2 * th)
    quarter = 0.25 * graph.w * L2
    wLth = graph.w * L * th
    at_src = wLth / ad.gather(rho_f, graph.src) + quarter
    at_dst = quarter - wLth / ad.gather(rho_f, graph.dst)
    var = ad.scatter_add(at_src, graph.src, graph.n) + ad.scatter_add(at_dst, graph.dst, graph.n)
    return value, var


def terminal_energy(rho_T, spec: PotentialSpec):
    """Unweighted terminal energy against ``spec.target`` and its (sub)gradient."""
    mu = spec.target
    if mu is None:
        raise ValueError("terminal energy needs a target density")
    if spec.terminal == "L1":
        diff = rho_T - mu
        return ad.sum_(ad.abs_(diff)), np.sign(ad.value(diff))
    log_ratio = _floor_log(rho_T) - np.log(np.maximum(mu, DENSITY_FLOOR))
    return ad.sum_(rho_T * log_ratio), log_ratio + 1.0


def running_cost_terms(rho, spec: PotentialSpec, graph: Graph):
    """Unweighted value of each active term plus the weighted variation f.

    Returns ``(terms, f)`` where ``terms`` maps ``linear``/``interaction``/
    ``entropy``/``fisher`` to values.
    """
    terms = {}
    f = 0.0
    if spec.lambda_V > 0:
        terms["linear"], var = linear_potential(rho, spec.V)
        f = f + spec.lambda_V * var
    if spec.lambda_W > 0:
        K = spec.W_matrix if spec.W_matrix is not None else spec.kernel
        terms["interaction"], var = interaction_potential(rho, K, graph.coords, spec.coulomb_c)
        f = f + spec.lambda_W * var
    if spec.lambda_B > 0:
        terms["entropy"], var = entropy(rho)
        f = f + spec.lambda_B * var
    if spec.lambda_I > 0:
        terms["fisher"], var = fisher_information(rho, graph)
        f = f + spec.lambda_I * var
    return terms, f


TERM_WEIGHTS = {"linear": "lambda_V", "interaction": "lambda_W", "entropy": "lambda_B", "fisher": "lambda_I"}


def running_cost(rho, spec: PotentialSpec, graph: Graph):
    """F(rho) = lambda_V V + lambda_W W + lambda_B B + lambda_I I and f = dF/drho."""
    terms, f = running_cost_terms(rho, spec, graph)
    value = 0.0
    for name, v in terms.items():
        value = value + getattr(spec, TERM_WEIGHTS[name]) * v
    if isinstance(f, float):
        f = np.zeros(graph.n)
    return value, f
