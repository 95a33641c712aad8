"""Node densities on a graph and simple state containers."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .graph import Graph

SIMPLEX_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class DensityState:
    """A probability vector over the nodes (nonnegative, summing to 1)."""

    rho: np.ndarray

    def __post_init__(self):
        rho = np.array(self.rho, dtype=np.float64).ravel()
        if rho.size == 0:
            raise ValueError("empty density")
        if np.any(rho < 0):
            raise ValueError(f"negative density entry {rho.min():.3e}")
        if abs(rho.sum() - 1.0) > SIMPLEX_TOL:
            raise ValueError(f"density mass {rho.sum():.15f} is not 1")
        rho.setflags(write=False)
        object.__setattr__(self, "rho", rho)

    def __array__(self, dtype=None, copy=None):
        return self.rho if dtype is None else self.rho.astype(dtype)

    def __len__(self):
        return self.rho.size

    @classmethod
    def normalized(cls, weights) -> "DensityState":
        weights = np.asarray(weights, dtype=np.float64)
        rho = weights / weights.sum()
        # push the rounding residue onto the largest entry
        rho[np.argmax(rho)] += 1.0 - rho.sum()
        return cls(rho)

    def center(self, graph: Graph) -> np.ndarray:
        """Density-weighted mean of node coordinates."""
        return self.rho @ graph.coords


@dataclass(frozen=True, eq=False)
class ValueState:
    s: np.ndarray

    def __post_init__(self):
        s = np.array(self.s, dtype=np.float64).ravel()
        if not np.all(np.isfinite(s)):
            raise ValueError("value function has non-finite entries")
        s.setflags(write=False)
        object.__setattr__(self, "s", s)

    def __array__(self, dtype=None, copy=None):
        return self.s if dtype is None else self.s.astype(dtype)


def _gaussian_log(coords, mean, cov_scale):
    d = coords - np.asarray(mean, dtype=np.float64)
    return -np.einsum("ij,ij->i", d, d) / (2.0 * cov_scale)


def gaussian_density(graph: Graph, mean, cov_scale: float) -> DensityState:
    """Isotropic Gaussian N(mean, cov_scale * I) evaluated at nodes, normalised."""
    if cov_scale <= 0:
        raise ValueError("cov_scale must be positive")
    logp = _gaussian_log(graph.coords, mean, cov_scale)
    return DensityState.normalized(np.exp(logp - logp.max()))


def gaussian_mixture_density(graph: Graph, means, cov_scale: float) -> DensityState:
    """Equal-weight mixture of isotropic Gaussians sharing ``cov_scale``."""
    means = np.atleast_2d(np.asarray(means, dtype=np.float64))
    if means.shape[0] < 1:
        raise ValueError("mixture needs at least one component")
    if cov_scale <= 0:
        raise ValueError("cov_scale must be positive")
    norm = 1.0 / (2.0 * math.pi * cov_scale)
    total = np.zeros(graph.n)
    for m in means:
        total += norm * np.exp(_gaussian_log(graph.coords, m, cov_scale))
    return DensityState.normalized(total / means.shape[0])


def circle_means(k: int, radius: float, center=(0.0, 0.0)) -> np.ndarray:
    """``k`` points ``center + radius * (sin t_i, cos t_i)`` with ``t_i = 2 pi i / k``, i = 1..k."""
    t = 2.0 * math.pi * np.arange(1, k + 1) / k
    return np.asarray(center, dtype=np.float64) + radius * np.column_stack([np.sin(t), np.cos(t)])


def laplacian_density(graph: Graph, a, b) -> DensityState:
    """exp(-a0 |x0 - b0| - a1 |x1 - b1|) at the nodes, normalised."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if np.any(a <= 0):
        raise ValueError("laplacian rates must be positive")
    logp = -np.abs(graph.coords - b) @ a
    return DensityState.normalized(np.exp(logp - logp.max()))


def write_density_csv(path, graph: Graph, values) -> None:
    """Rows ``node_id,x,y,value``."""
    values = np.asarray(values, dtype=np.float64)
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["node_id", "x", "y", "value"])
        for i, ((x, y), v) in enumerate(zip(graph.coords.tolist(), values.tolist())):
            out.writerow([i, repr(x), repr(y), repr(v)])


def read_density_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = np.zeros(len(rows))
    for r in rows:
        out[int(r["node_id"])] = float(r["value"])
    return out
