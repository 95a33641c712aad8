"""Forward Hamilton-Jacobi / continuity system and its explicit Euler unrolling.

State convention: mass moves from high to low ``S`` (edge velocity
``v_ij = sqrt(w_ij) (S_j - S_i)`` is the inflow rate into ``i``).

    d rho_i / dt =  sum_j w_ij (S_j - S_i) theta_ij(rho)
    d S_i   / dt =  1/2 sum_j w_ij (S_i - S_j)^2 d theta_ij / d rho_i  -  f_i(rho)

Both updates of one Euler step read the step-m state.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .calculus import continuity_rhs, dirichlet_energy, hj_quadratic
from .graph import Graph
from .potentials import (
    DENSITY_FLOOR,
    TERM_WEIGHTS,
    PotentialSpec,
    running_cost_terms,
    terminal_energy,
)

QUADRATURES = ("left", "alg1")


class IntegrationBlowup(FloatingPointError):
    def __init__(self, step: int, what: str = "state"):
        super().__init__(f"non-finite {what} at integration step {step}")
        self.step = step


def ce_rhs(rho, s, graph: Graph):
    return continuity_rhs(rho, s, graph)


def hj_rhs(rho, s, f, graph: Graph):
    """dS/dt; ``rho`` enters only through ``f`` for the average weighting."""
    return hj_quadratic(s, graph) - f


def euler_step(rho, s, spec: PotentialSpec, graph: Graph, dt: float, step: int = 0):
    if dt <= 0:
        raise ValueError("dt must be positive")
    _, f = running_cost_terms(rho, spec.bind(graph), graph)
    s_next = s + dt * hj_rhs(rho, s, f, graph)
    rho_next = rho + dt * ce_rhs(rho, s, graph)
    if not (np.all(np.isfinite(ad.value(s_next))) and np.all(np.isfinite(ad.value(rho_next)))):
        raise IntegrationBlowup(step)
    return rho_next, s_next


@dataclass
class Trajectory:
    """States m = 0..M and per-step energies.

    ``kinetic[m]`` is K = 1/2 <v, v>_rho at step m; ``terms[name][m]`` are the
    unweighted running-cost terms; ``running[m]`` is the weighted F.
    """

    rho: np.ndarray
    s: np.ndarray
    kinetic: np.ndarray
    running: np.ndarray
    terms: dict[str, np.ndarray]
    dt: float

    @property
    def M(self) -> int:
        return self.rho.shape[0] - 1

    @property
    def T(self) -> float:
        return self.M * self.dt

    @property
    def states(self):
        return list(zip(self.rho, self.s))

    def mass_drift(self) -> float:
        return float(np.max(np.abs(self.rho.sum(axis=1) - 1.0)))

    def min_rho(self) -> float:
        return float(self.rho.min())

    def floored_entries(self) -> int:
        return int(np.count_nonzero(self.rho < DENSITY_FLOOR))

    def write_csv(self, path) -> None:
        """Rows ``m,t,node_id,rho,S``."""
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["m", "t", "node_id", "rho", "S"])
            for m in range(self.M + 1):
                t = repr(m * self.dt)
                for i, (r, s) in enumerate(zip(self.rho[m].tolist(), self.s[m].tolist())):
                    out.writerow([m, t, i, repr(r), repr(s)])


@dataclass
class CostBreakdown:
    """Discretised cost.  ``*_term`` entries are weighted and sum to ``total``;
    ``kinetic``, ``potentials`` and ``terminal`` are the raw quantities."""

    total: float
    kinetic_term: float
    potential_terms: dict[str, float]
    terminal_term: float
    kinetic: float
    potentials: dict[str, float]
    terminal: float
    extra: dict = field(default_factory=dict)

    def components(self) -> list[float]:
        return [self.kinetic_term, *self.potential_terms.values(), self.terminal_term]

    def as_dict(self) -> dict:
        return {
            "total": self.total,
            "kinetic_term": self.kinetic_term,
            "potential_terms": dict(self.potential_terms),
            "terminal_term": self.terminal_term,
            "kinetic": self.kinetic,
            "potentials": dict(self.potentials),
            "terminal": self.terminal,
        }


def _steps_in_loss(M: int, quadrature: str) -> range:
    if quadrature not in QUADRATURES:
        raise ValueError(f"quadrature must be one of {QUADRATURES}")
    return range(M + 1) if quadrature == "alg1" else range(M)


def _unroll(rho, s, spec, graph, dt, m_start, m_stop, M, quadrature, record, loss=0.0):
    """Advance from step ``m_start`` to ``m_stop`` accumulating the loss.

    Works on numpy arrays or tape variables.  At ``m_stop == M`` the terminal
    energy (and, for ``alg1``, the step-M running term) is added.
    ``record`` receives ``(m, rho, s, kinetic, terms)`` for each visited step.
    """
    in_loss = _steps_in_loss(M, quadrature)
    for m in range(m_start, m_stop + 1):
        at_end = m == m_stop
        # a segment's end state belongs to the next segment
        if at_end and (m < M or (quadrature != "alg1" and record is None)):
            break
        energy = dirichlet_energy(rho, s, graph)
        terms, f = running_cost_terms(rho, spec, graph)
        if record is not None:
            record(m, ad.value(rho), ad.value(s), 0.5 * float(ad.value(energy)),
                   {k: float(ad.value(v)) for k, v in terms.items()})
        if m in in_loss:
            step_cost = spec.lambda_K * energy if spec.lambda_K else 0.0
            for name, v in terms.items():
                step_cost = step_cost + getattr(spec, TERM_WEIGHTS[name]) * v
            loss = loss + dt * step_cost
        if at_end:
            break
        s_next = s + dt * (hj_quadratic(s, graph) - f)
        rho = rho + dt * continuity_rhs(rho, s, graph)
        s = s_next
        if not (np.all(np.isfinite(ad.value(s))) and np.all(np.isfinite(ad.value(rho)))):
            raise IntegrationBlowup(m + 1)
    if m_stop == M and spec.lambda_G > 0:
        g_val, _ = terminal_energy(rho, spec)
        loss = loss + spec.lambda_G * g_val
    return rho, s, loss


class _Recorder:
    def __init__(self, n, M):
        self.rho = np.empty((M + 1, n))
        self.s = np.empty((M + 1, n))
        self.kinetic = np.empty(M + 1)
        self.terms: dict[str, np.ndarray] = {}
        self.M = M

    def __call__(self, m, rho, s, kin, terms):
        self.rho[m] = rho
        self.s[m] = s
        self.kinetic[m] = kin
        for k, v in terms.items():
            self.terms.setdefault(k, np.empty(self.M + 1))[m] = v

    def trajectory(self, spec, dt) -> Trajectory:
        running = np.zeros(self.M + 1)
        for name, vals in self.terms.items():
            running += getattr(spec, TERM_WEIGHTS[name]) * vals
        return Trajectory(self.rho, self.s, self.kinetic, running, self.terms, dt)


def integrate(s0, mu0, spec: PotentialSpec, graph: Graph, dt: float, M: int) -> Trajectory:
    """Explicit Euler unroll of M steps from (mu0, s0)."""
    if M < 1:
        raise ValueError("M must be >= 1")
    if dt <= 0:
        raise ValueError("dt must be positive")
    spec = spec.bind(graph)
    rec = _Recorder(graph.n, M)
    rho0 = np.array(mu0, dtype=np.float64)
    s0 = np.array(s0, dtype=np.float64)
    _unroll(rho0, s0, spec, graph, dt, 0, M, M, "left", rec)
    return rec.trajectory(spec, dt)


def pathwise_cost(traj: Trajectory, spec: PotentialSpec, quadrature: str = "left") -> CostBreakdown:
    """Discrete cost of a recorded trajectory.

    ``left`` sums steps 0..M-1 (time measure exactly T); ``alg1`` sums 0..M.
    """
    steps = list(_steps_in_loss(traj.M, quadrature))
    dt = traj.dt
    kinetic = float(np.sum(traj.kinetic[steps]) * dt)
    potentials = {k: float(np.sum(v[steps]) * dt) for k, v in traj.terms.items()}
    potential_terms = {k: getattr(spec, TERM_WEIGHTS[k]) * v for k, v in potentials.items()}
    if spec.target is not None:
        g_val, _ = terminal_energy(traj.rho[-1], spec)
        terminal = float(g_val)
    else:
        terminal = 0.0
    kinetic_term = 2.0 * spec.lambda_K * kinetic
    terminal_term = spec.lambda_G * terminal
    total = kinetic_term + sum(potential_terms.values()) + terminal_term
    return CostBreakdown(total, kinetic_term, potential_terms, terminal_term, kinetic, potentials, terminal)


@dataclass
class Rollout:
    loss: float
    grad_s0: np.ndarray
    trajectory: Trajectory
    peak_floats: int


def value_and_grad(
    s0, mu0, spec: PotentialSpec, graph: Graph, dt: float, M: int,
    quadrature: str = "left", checkpoint_every: int | None = None,
) -> Rollout:
    """Loss J2 and dJ2/dS0 by reverse mode through the unrolled integration.

    With ``checkpoint_every = k < M`` only every k-th state is kept during the
    forward pass; each segment is re-run on a fresh tape in the reverse pass.
    """
    spec = spec.bind(graph)
    s0 = np.array(s0, dtype=np.float64)
    rho0 = np.array(mu0, dtype=np.float64)
    rec = _Recorder(graph.n, M)
    if checkpoint_every is not None and checkpoint_every < 1:
        raise ValueError("checkpoint_every must be >= 1")
    if checkpoint_every is None or checkpoint_every >= M:
        tape = ad.Tape()
        s_var = tape.variable(s0)
        _, _, loss = _unroll(tape.variable(rho0), s_var, spec, graph, dt, 0, M, M, quadrature, rec)
        if not isinstance(loss, ad.Variable):
            return Rollout(float(loss), np.zeros_like(s0), rec.trajectory(spec, dt), tape.stored_floats)
        (g,) = tape.gradient(loss, [s_var])
        return Rollout(float(loss.value), g, rec.trajectory(spec, dt), tape.stored_floats)

    k = checkpoint_every
    bounds = list(range(0, M, k)) + [M]
    _, _, loss = _unroll(rho0, s0, spec, graph, dt, 0, M, M, quadrature, rec)
    # checkpoints are rows of the recorded trajectory; count them as retained
    checkpoint_floats = 2 * graph.n * (len(bounds) - 1)
    peak = 0
    g_rho = np.zeros(graph.n)
    g_s = np.zeros(graph.n)
    for a, b in reversed(list(zip(bounds[:-1], bounds[1:]))):
        tape = ad.Tape()
        r_var = tape.variable(rec.rho[a])
        s_var = tape.variable(rec.s[a])
        r_end, s_end, seg_loss = _unroll(r_var, s_var, spec, graph, dt, a, b, M, quadrature, None)
        total = seg_loss + ad.dot(g_rho, r_end) + ad.dot(g_s, s_end)
        g_rho, g_s = tape.gradient(total, [r_var, s_var])
        peak = max(peak, tape.stored_floats)
    return Rollout(float(loss), g_s, rec.trajectory(spec, dt), peak + checkpoint_floats)


def metrics_record(traj: Trajectory, cost: CostBreakdown) -> dict:
    return {
        "kinetic": cost.kinetic,
        "potentials": dict(cost.potentials),
        "terminal": cost.terminal,
        "min_rho": traj.min_rho(),
        "mass_drift": traj.mass_drift(),
        "floored_entries": traj.floored_entries(),
    }


def write_metrics(path, traj: Trajectory, cost: CostBreakdown, **extra) -> dict:
    rec = metrics_record(traj, cost)
    rec.update(extra)
    with open(path, "w") as fh:
        json.dump(rec, fh, indent=2, sort_keys=True)
    return rec
