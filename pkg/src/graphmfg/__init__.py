"""Discrete potential mean-field games on weighted graphs, solved through the
initial value of the Hamilton-Jacobi equation."""

from .graph import DomainShape, Graph, GraphConstructionError, build_lattice, build_random_inhomogeneous, build_triangular
from .measures import DensityState, ValueState, gaussian_density, gaussian_mixture_density, laplacian_density
from .potentials import PotentialSpec
from .dynamics import IntegrationBlowup, Trajectory, integrate, pathwise_cost, value_and_grad

__version__ = "0.1.0"

__all__ = [
    "DensityState", "DomainShape", "Graph", "GraphConstructionError", "IntegrationBlowup",
    "PotentialSpec", "Trajectory", "ValueState", "build_lattice", "build_random_inhomogeneous",
    "build_triangular", "gaussian_density", "gaussian_mixture_density", "integrate",
    "laplacian_density", "pathwise_cost", "value_and_grad",
]
