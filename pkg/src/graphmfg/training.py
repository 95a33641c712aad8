"""Outer training loop over the parameters of S0, warm start, and the
per-node baseline."""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .calculus import graph_gradient
from .dynamics import IntegrationBlowup, Trajectory, pathwise_cost, value_and_grad
from .graph import Graph
from .measures import DensityState
from .models import INIT_SCHEMES, Model
from .potentials import PotentialSpec, terminal_energy

OPTIMIZERS = ("adam", "gd")
WARMSTART_LOSSES = ("mse", "alg2")


@dataclass(frozen=True)
class WarmStartConfig:
    enabled: bool = False
    alpha: float = 0.6
    epochs: int = 3000
    lr: float = 1e-3
    loss: str = "mse"

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("warm-start alpha must lie in [0, 1]")
        if self.lr <= 0:
            raise ValueError("warm-start lr must be positive")
        if self.epochs < 0:
            raise ValueError("warm-start epochs must be nonnegative")
        if self.loss not in WARMSTART_LOSSES:
            raise ValueError(f"warm-start loss must be one of {WARMSTART_LOSSES}")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 3000
    lr: float = 1e-3
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    init: str = "zero_out"
    window: int = 100
    quadrature: str = "left"
    checkpoint_every: int | None = None
    warm_start: WarmStartConfig = field(default_factory=WarmStartConfig)

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}")
        if self.init not in INIT_SCHEMES:
            raise ValueError(f"init must be one of {INIT_SCHEMES}")
        if not 1 <= self.window <= self.epochs:
            raise ValueError("window must satisfy 1 <= window <= epochs")


class TrainingAborted(RuntimeError):
    """Raised when the integration blows up or the loss goes non-finite."""

    def __init__(self, epoch: int, reason: str, report: "TrainReport"):
        super().__init__(f"training aborted at epoch {epoch}: {reason}")
        self.epoch = epoch
        self.report = report

    @property
    def last_metrics(self) -> dict | None:
        return self.report.epochs[-1] if self.report.epochs else None


class Adam:
    def __init__(self, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        out = {}
        for k, p in params.items():
            g = grads[k]
            m = self.m[k] = self.b1 * self.m.get(k, 0.0) + (1.0 - self.b1) * g
            v = self.v[k] = self.b2 * self.v.get(k, 0.0) + (1.0 - self.b2) * g * g
            out[k] = p - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return out


class GradientDescent:
    def __init__(self, lr):
        self.lr = lr

    def step(self, params, grads):
        return {k: p - self.lr * grads[k] for k, p in params.items()}


def make_optimizer(name: str, lr: float, config: TrainConfig | None = None):
    if name == "gd":
        return GradientDescent(lr)
    if name == "adam":
        c = config or TrainConfig()
        return Adam(lr, c.beta1, c.beta2, c.eps)
    raise ValueError(f"unknown optimizer {name!r}")


@dataclass
class TrainReport:
    """Per-epoch history plus summary statistics.

    ``epochs[k]`` holds the cost breakdown evaluated with the parameters in
    force at the start of epoch k (before its update).
    """

    model: str
    n_nodes: int
    epochs: list[dict] = field(default_factory=list)
    best_epoch: int = -1
    best_loss: float = math.inf
    best_params: dict[str, np.ndarray] | None = None
    window: int = 100
    wall_clock: float = 0.0
    warm_start_losses: list[float] = field(default_factory=list)
    final_params: dict[str, np.ndarray] | None = None

    @property
    def losses(self) -> np.ndarray:
        return np.array([e["total"] for e in self.epochs])

    def trailing(self, key: str) -> float:
        tail = self.epochs[-self.window:]
        return float(np.mean([e[key] for e in tail])) if tail else math.nan

    def trailing_potentials(self) -> dict[str, float]:
        tail = self.epochs[-self.window:]
        names = tail[0]["potentials"].keys() if tail else ()
        return {k: float(np.mean([e["potentials"][k] for e in tail])) for k in names}

    def summary(self) -> dict:
        best = self.epochs[self.best_epoch] if self.best_epoch >= 0 else {}
        n = self.n_nodes
        kin, term = self.trailing("kinetic"), self.trailing("terminal")
        return {
            "model": self.model,
            "n_nodes": n,
            "epochs_run": len(self.epochs),
            "window": self.window,
            "trailing_kinetic": kin,
            "trailing_terminal": term,
            "trailing_potentials": self.trailing_potentials(),
            "trailing_kinetic_node_avg": kin / n,
            "trailing_terminal_node_avg": term / n,
            "best_epoch": self.best_epoch,
            "best_loss": self.best_loss,
            "best_kinetic": best.get("kinetic", math.nan),
            "best_terminal": best.get("terminal", math.nan),
            "best_kinetic_node_avg": best.get("kinetic", math.nan) / n,
            "best_terminal_node_avg": best.get("terminal", math.nan) / n,
            "final_loss": self.epochs[-1]["total"] if self.epochs else math.nan,
            "wall_clock": self.wall_clock,
        }

    def to_json(self) -> dict:
        return {
            "summary": self.summary(),
            "epochs": self.epochs,
            "warm_start_losses": self.warm_start_losses,
        }

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=1, sort_keys=True)


def _epoch_record(loss: float, traj: Trajectory, spec: PotentialSpec, quadrature: str) -> dict:
    cost = pathwise_cost(traj, spec, quadrature)
    rec = cost.as_dict()
    rec["loss"] = loss
    rec["min_rho"] = traj.min_rho()
    rec["mass_drift"] = traj.mass_drift()
    return rec


def _finite(params) -> bool:
    return all(np.all(np.isfinite(p)) for p in params.values())


def _squares_finite(grads) -> bool:
    # adam squares the gradient; an overflow there silently zeroes every later step
    with np.errstate(over="ignore", invalid="ignore"):
        return all(np.isfinite(np.sum(g * g)) for g in grads.values())


def loss_and_grads(model: Model, params, mu0, spec: PotentialSpec, dt: float, M: int,
                   quadrature: str = "left", checkpoint_every: int | None = None):
    """Loss, parameter gradients and trajectory for one forward/backward pass."""
    tape = ad.Tape()
    pv = {k: tape.variable(v) for k, v in params.items()}
    s0 = model(pv)
    roll = value_and_grad(ad.value(s0), mu0, spec, model.graph, dt, M, quadrature, checkpoint_every)
    if isinstance(s0, ad.Variable):
        grads = dict(zip(pv, tape.gradient(s0, list(pv.values()), seed=roll.grad_s0)))
    else:
        grads = {k: np.zeros_like(v) for k, v in params.items()}
    return roll.loss, grads, roll.trajectory


def _descend(model, params, mu0, spec, dt, M, config: TrainConfig, report: TrainReport, optimizer):
    t0 = time.perf_counter()
    for k in range(config.epochs):
        try:
            loss, grads, traj = loss_and_grads(
                model, params, mu0, spec, dt, M, config.quadrature, config.checkpoint_every
            )
        except IntegrationBlowup as exc:
            report.wall_clock = time.perf_counter() - t0
            raise TrainingAborted(k, str(exc), report) from exc
        if not math.isfinite(loss):
            report.wall_clock = time.perf_counter() - t0
            raise TrainingAborted(k, "non-finite loss", report)
        if not _squares_finite(grads):
            report.wall_clock = time.perf_counter() - t0
            raise TrainingAborted(k, "gradient overflow", report)
        rec = _epoch_record(loss, traj, spec, config.quadrature)
        report.epochs.append(rec)
        if loss < report.best_loss:
            report.best_loss, report.best_epoch = loss, k
            report.best_params = {n: v.copy() for n, v in params.items()}
        params = optimizer.step(params, grads)
        if not _finite(params):
            report.wall_clock = time.perf_counter() - t0
            raise TrainingAborted(k, "non-finite parameters after update", report)
    report.final_params = params
    report.wall_clock = time.perf_counter() - t0
    return report


def _check_horizon(dt, M):
    if dt <= 0 or M < 1:
        raise ValueError("need dt > 0 and M >= 1")


def train(graph: Graph, mu0, spec: PotentialSpec, model: Model | str, config: TrainConfig,
          dt: float, M: int, init_params=None, mu_T=None) -> TrainReport:
    """Minimise the discrete cost over the parameters of ``model``.

    ``init_params`` overrides the seeded initialisation.  When
    ``config.warm_start.enabled`` the parameters are first fitted to the
    heuristic transport field toward ``mu_T`` (defaults to ``spec.target``).
    """
    _check_horizon(dt, M)
    if isinstance(model, str):
        model = Model(model, graph)
    spec = spec.bind(graph)
    mu0 = np.asarray(mu0, dtype=np.float64)
    params = model.init(config.seed, config.init) if init_params is None else {k: np.array(v, dtype=np.float64) for k, v in init_params.items()}
    report = TrainReport(model.kind, graph.n, window=config.window)
    if config.warm_start.enabled:
        target = spec.target if mu_T is None else np.asarray(mu_T)
        if target is None:
            raise ValueError("warm start needs a target density")
        params, report.warm_start_losses = warm_start(
            graph, mu0, target, model, config.warm_start.alpha, config, params=params
        )
    optimizer = make_optimizer(config.optimizer, config.lr, config)
    return _descend(model, params, mu0, spec, dt, M, config, report, optimizer)


def train_direct(graph: Graph, mu0, spec: PotentialSpec, config: TrainConfig, dt: float, M: int,
                 s0_init=None) -> TrainReport:
    """Same loop with one free parameter per node."""
    init = None if s0_init is None else {"s0": np.asarray(s0_init, dtype=np.float64)}
    return train(graph, mu0, spec, Model("direct", graph), config, dt, M, init_params=init)


def warm_start_target(graph: Graph, mu0, muT, alpha: float) -> np.ndarray:
    """Edge field alpha grad P1 + (1 - alpha) grad P2.

    P1 = -d . X with d the displacement between the density centres, and
    P2 = mu0 - muT.  Both are low on the target side, so the induced
    velocity moves mass toward muT.
    """
    mu0 = np.asarray(mu0, dtype=np.float64)
    muT = np.asarray(muT, dtype=np.float64)
    d = DensityState(muT).center(graph) - DensityState(mu0).center(graph)
    P1 = -(graph.coords @ d)
    P2 = mu0 - muT
    return alpha * graph_gradient(P1, graph) + (1.0 - alpha) * graph_gradient(P2, graph)


def warm_start_loss(s0, target: np.ndarray, graph: Graph, kind: str = "mse"):
    diff = graph_gradient(s0, graph) - target
    sq = ad.sum_(diff * diff)
    if kind == "mse":
        return sq / float(graph.m)
    # literal (1/n) sqrt(||.||_2)
    return ad.power(ad.power(sq, 0.5), 0.5) / float(graph.n)


def warm_start(graph: Graph, mu0, muT, model: Model | str, alpha: float, config: TrainConfig,
               params=None) -> tuple[dict[str, np.ndarray], list[float]]:
    """Fit grad S0 to the heuristic transport field; returns (params, losses)."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    if isinstance(model, str):
        model = Model(model, graph)
    ws = config.warm_start
    target = warm_start_target(graph, mu0, muT, alpha)
    params = model.init(config.seed, config.init) if params is None else dict(params)
    optimizer = make_optimizer(config.optimizer, ws.lr, config)
    losses = []
    for _ in range(ws.epochs):
        tape = ad.Tape()
        pv = {k: tape.variable(v) for k, v in params.items()}
        loss = warm_start_loss(model(pv), target, graph, ws.loss)
        losses.append(float(ad.value(loss)))
        grads = dict(zip(pv, tape.gradient(loss, list(pv.values()))))
        params = optimizer.step(params, grads)
    return params, losses


def terminal_residual(traj: Trajectory, spec: PotentialSpec) -> dict[str, float]:
    """Distance of S(T) from lambda_G g(rho(T)), relative to |S(T)|_inf.

    ``shifted`` removes the best constant first (the midrange, which
    minimises the sup norm), since the dynamics fix S only up to a constant.
    """
    s_T = traj.s[-1]
    _, g = terminal_energy(traj.rho[-1], spec)
    r = s_T - spec.lambda_G * np.asarray(g)
    scale = float(np.max(np.abs(s_T)))
    raw = float(np.max(np.abs(r)))
    shifted = 0.5 * float(np.max(r) - np.min(r))
    return {
        "residual_inf": raw,
        "relative": raw / scale if scale > 0 else math.inf,
        "relative_shifted": shifted / scale if scale > 0 else math.inf,
        "s_T_inf": scale,
    }


def config_dict(config: TrainConfig) -> dict:
    return asdict(config)
