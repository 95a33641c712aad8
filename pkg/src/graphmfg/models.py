"""Parameterisations of the initial value function S0.

* ``mlp``: node coordinates -> 16 -> 16 -> 1 with tanh (337 parameters).
* ``sage``: linear 2 -> 16 embedding, three mean-aggregation layers
  ``relu(W_l [h_i || mean_{j in N(i)} h_j] + b_l)`` with W_l of shape 16x32, then
  ``W_out tanh(h) + b_out`` (1649 parameters).
* ``direct``: one free value per node.

Forwards accept numpy parameters or tape variables.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from .graph import Graph

HIDDEN = 16
SAGE_LAYERS = 3

SHAPES = {
    "mlp": {
        "W1": (HIDDEN, 2), "b1": (HIDDEN,),
        "W2": (HIDDEN, HIDDEN), "b2": (HIDDEN,),
        "W_out": (1, HIDDEN), "b_out": (1,),
    },
    "sage": {
        "W_embed": (HIDDEN, 2), "b_embed": (HIDDEN,),
        **{k: v for l in range(1, SAGE_LAYERS + 1)
           for k, v in ((f"W{l}", (HIDDEN, 2 * HIDDEN)), (f"b{l}", (HIDDEN,)))},
        "W_out": (1, HIDDEN), "b_out": (1,),
    },
}

MODEL_KINDS = ("mlp", "sage", "direct")


def param_shapes(kind: str, n_nodes: int | None = None) -> dict[str, tuple]:
    if kind == "direct":
        if n_nodes is None:
            raise ValueError("direct parameterisation needs the node count")
        return {"s0": (n_nodes,)}
    try:
        return SHAPES[kind]
    except KeyError:
        raise ValueError(f"unknown model kind {kind!r}") from None


def count_params(params) -> int:
    return int(sum(np.size(ad.value(p)) for p in params.values()))


INIT_SCHEMES = ("glorot", "fan_in", "zero_out")


def init_params(kind: str, seed: int, n_nodes: int | None = None, scheme: str = "glorot") -> dict[str, np.ndarray]:
    """Seeded initial parameters; ``direct`` starts at zero.

    ``glorot``: weights uniform in +-sqrt(6 / (fan_in + fan_out)), biases 0.
    ``fan_in``: weights and biases uniform in +-1/sqrt(fan_in), a smaller
    output scale that keeps the forward Hamilton-Jacobi step finite on coarse
    graphs over long horizons.
    ``zero_out``: ``glorot`` with the output layer zeroed, so S0 starts constant.
    """
    if scheme not in INIT_SCHEMES:
        raise ValueError(f"unknown init scheme {scheme!r}")
    rng = np.random.default_rng(seed)
    shapes = param_shapes(kind, n_nodes)
    if kind == "direct":
        return {name: np.zeros(shape) for name, shape in shapes.items()}
    params = {}
    fan_in = None
    for name, shape in shapes.items():
        if len(shape) == 2:
            fan_out, fan_in = shape
            if scheme == "fan_in":
                bound = 1.0 / np.sqrt(fan_in)
            else:
                bound = np.sqrt(6.0 / (fan_in + fan_out))
            params[name] = rng.uniform(-bound, bound, size=shape)
            if scheme == "zero_out" and name == "W_out":
                params[name][:] = 0.0
        elif scheme != "fan_in":
            params[name] = np.zeros(shape)
        else:
            params[name] = rng.uniform(-1.0 / np.sqrt(fan_in), 1.0 / np.sqrt(fan_in), size=shape)
    return params


def _dense(x, W, b):
    return ad.matmul(x, ad.transpose(W)) + b


def mlp_forward(params, coords: np.ndarray):
    h = ad.tanh(_dense(coords, params["W1"], params["b1"]))
    h = ad.tanh(_dense(h, params["W2"], params["b2"]))
    return ad.reshape(_dense(h, params["W_out"], params["b_out"]), (-1,))


def mean_aggregator(graph: Graph) -> sp.csr_matrix:
    """Row-normalised adjacency: (A h)_i = mean of h_j over N(i)."""
    heads, tails = graph.directed_pairs
    deg = graph.degree.astype(np.float64)
    if np.any(deg == 0):
        raise ValueError("mean aggregation undefined on an isolated node")
    return sp.csr_matrix((1.0 / deg[heads], (heads, tails)), shape=(graph.n, graph.n))


def _spmm(A, x):
    AT = A.T.tocsr()
    return ad.custom((x,), A @ ad.value(x), lambda g: (AT @ g,))


def sage_forward(params, graph: Graph, aggregator: sp.csr_matrix | None = None):
    A = mean_aggregator(graph) if aggregator is None else aggregator
    h = _dense(graph.coords, params["W_embed"], params["b_embed"])
    for l in range(1, SAGE_LAYERS + 1):
        h = ad.relu(_dense(ad.concat([h, _spmm(A, h)], axis=1), params[f"W{l}"], params[f"b{l}"]))
    return ad.reshape(_dense(ad.tanh(h), params["W_out"], params["b_out"]), (-1,))


class Model:
    """Binds a parameterisation kind to a graph."""

    def __init__(self, kind: str, graph: Graph):
        if kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {kind!r}")
        self.kind = kind
        self.graph = graph
        self._agg = mean_aggregator(graph) if kind == "sage" else None

    def init(self, seed: int, scheme: str = "glorot") -> dict[str, np.ndarray]:
        return init_params(self.kind, seed, self.graph.n, scheme)

    def __call__(self, params):
        if self.kind == "mlp":
            return mlp_forward(params, self.graph.coords)
        if self.kind == "sage":
            return sage_forward(params, self.graph, self._agg)
        return params["s0"] + 0.0


def save_params(path, kind: str, seed: int, params: dict[str, np.ndarray]) -> None:
    """Header line (JSON: kind, seed, ordered shapes) then one value per line."""
    header = {"kind": kind, "seed": seed, "shapes": [[k, list(np.shape(v))] for k, v in params.items()]}
    flat = np.concatenate([np.ravel(v) for v in params.values()])
    lines = ["# " + json.dumps(header)] + [repr(float(x)) for x in flat]
    Path(path).write_text("\n".join(lines) + "\n")


def load_params(path) -> tuple[str, int, dict[str, np.ndarray]]:
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("# "):
        raise ValueError(f"{path}: missing parameter header")
    header = json.loads(lines[0][2:])
    flat = np.array([float(x) for x in lines[1:] if x.strip()])
    params, pos = {}, 0
    for name, shape in header["shapes"]:
        size = int(np.prod(shape)) if shape else 1
        params[name] = flat[pos : pos + size].reshape(shape)
        pos += size
    if pos != flat.size:
        raise ValueError(f"{path}: {flat.size} values for {pos} parameters")
    return header["kind"], header["seed"], params
