"""INI scenario files.

Sections: ``[graph]``, ``[mu0]``, ``[muT]``, ``[potentials]``, ``[dynamics]``,
``[training]``, ``[output]``.  Vectors are whitespace-separated numbers;
lists of holes are separated by ``;``.  Unknown sections or keys are errors.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .graph import DomainShape, Graph, build_lattice, build_random_inhomogeneous, build_triangular
from .measures import circle_means, gaussian_density, gaussian_mixture_density, laplacian_density
from .potentials import PotentialSpec, landscape_potential
from .training import TrainConfig, WarmStartConfig

HORIZON_TOL = 1e-12


class ConfigError(ValueError):
    pass


_KEYS = {
    "graph": {
        "kind", "rows", "cols", "spacing", "offset", "n", "degree_min", "degree_max", "seed", "path",
        "shape", "bounds", "radius", "center", "rect_holes", "disk_holes", "grid_bounds",
    },
    "mu0": {"kind", "mean", "cov_scale", "means", "components", "circle_radius", "circle_center", "a", "b"},
    "potentials": {
        "lambda_K", "lambda_V", "V", "V_height", "V_radius", "V_center", "V_eta",
        "lambda_W", "kernel", "coulomb_c", "lambda_B", "lambda_I", "terminal", "lambda_G",
    },
    "dynamics": {"T", "dt", "M"},
    "training": {
        "model", "epochs", "lr", "optimizer", "seed", "init", "window", "quadrature", "checkpoint_every",
        "warm_start", "warm_alpha", "warm_epochs", "warm_lr", "warmstart_loss",
    },
    "output": {"dir", "snapshot_times"},
}
_KEYS["muT"] = _KEYS["mu0"]
REQUIRED_SECTIONS = ("graph", "mu0", "dynamics")


class _Section:
    """Typed accessors that name the offending key on failure."""

    def __init__(self, name: str, items: dict[str, str]):
        self.name = name
        self.items = items

    def _err(self, key, msg):
        return ConfigError(f"[{self.name}] {key}: {msg}")

    def has(self, key):
        return key in self.items

    def str(self, key, default=None, choices=None):
        if key not in self.items:
            if default is None:
                raise self._err(key, "missing")
            return default
        v = self.items[key].strip()
        if choices is not None and v not in choices:
            raise self._err(key, f"{v!r} not one of {sorted(choices)}")
        return v

    def float(self, key, default=None):
        if key not in self.items:
            if default is None:
                raise self._err(key, "missing")
            return default
        try:
            return float(self.items[key])
        except ValueError:
            raise self._err(key, f"not a number: {self.items[key]!r}") from None

    def int(self, key, default=None):
        if key not in self.items:
            if default is None:
                raise self._err(key, "missing")
            return default
        try:
            return int(self.items[key])
        except ValueError:
            raise self._err(key, f"not an integer: {self.items[key]!r}") from None

    def bool(self, key, default=False):
        if key not in self.items:
            return default
        v = self.items[key].strip().lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off"):
            return False
        raise self._err(key, f"not a boolean: {self.items[key]!r}")

    def vec(self, key, length=None, default=None):
        if key not in self.items:
            if default is None:
                raise self._err(key, "missing")
            return np.asarray(default, dtype=np.float64)
        try:
            v = np.array([float(x) for x in self.items[key].replace(",", " ").split()])
        except ValueError:
            raise self._err(key, f"not a vector: {self.items[key]!r}") from None
        if length is not None and v.size != length:
            raise self._err(key, f"expected {length} numbers, got {v.size}")
        return v

    def vec_list(self, key, length):
        if key not in self.items or not self.items[key].strip():
            return []
        out = []
        for chunk in self.items[key].split(";"):
            if chunk.strip():
                try:
                    v = [float(x) for x in chunk.replace(",", " ").split()]
                except ValueError:
                    raise self._err(key, f"not numeric: {chunk!r}") from None
                if len(v) != length:
                    raise self._err(key, f"each entry needs {length} numbers: {chunk!r}")
                out.append(tuple(v))
        return out


@dataclass
class Scenario:
    graph: Graph
    mu0: np.ndarray
    muT: np.ndarray | None
    spec: PotentialSpec


@dataclass
class ScenarioConfig:
    path: Path
    sections: dict[str, dict[str, str]]
    T: float
    dt: float
    M: int
    model: str
    train: TrainConfig
    out_dir: str | None
    snapshot_times: list[float] = field(default_factory=list)

    @property
    def name(self) -> str:
        return self.path.stem

    def section(self, name) -> _Section:
        return _Section(name, self.sections.get(name, {}))

    def build(self) -> Scenario:
        base = self.path.parent
        graph = _build_graph(self.section("graph"), base)
        mu0 = _build_density(self.section("mu0"), graph)
        muT = _build_density(self.section("muT"), graph) if "muT" in self.sections else None
        spec = _build_spec(self.section("potentials"), graph, muT)
        return Scenario(graph, mu0, muT, spec)

    def resolved(self) -> str:
        """Canonical INI text of the fully resolved configuration."""
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        for name, items in self.sections.items():
            cp[name] = dict(items)
        d = cp["dynamics"]
        d["T"], d["dt"], d["M"] = repr(self.T), repr(self.dt), str(self.M)
        t = self.train
        cp["training"] = {
            "model": self.model, "epochs": str(t.epochs), "lr": repr(t.lr), "optimizer": t.optimizer,
            "seed": str(t.seed), "init": t.init, "window": str(t.window), "quadrature": t.quadrature,
            "checkpoint_every": "" if t.checkpoint_every is None else str(t.checkpoint_every),
            "warm_start": str(t.warm_start.enabled).lower(), "warm_alpha": repr(t.warm_start.alpha),
            "warm_epochs": str(t.warm_start.epochs), "warm_lr": repr(t.warm_start.lr),
            "warmstart_loss": t.warm_start.loss,
        }
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()


def _shape(sec: _Section) -> DomainShape:
    kind = sec.str("shape", "square", {"square", "disk", "disk_with_holes"})
    if kind == "square":
        lo, hi = sec.vec("bounds", 2, (-3.0, 3.0))
        return DomainShape.square(lo, hi)
    radius = sec.float("radius")
    center = tuple(sec.vec("center", 2, (0.0, 0.0)))
    if kind == "disk":
        return DomainShape.disk(radius, center)
    return DomainShape.disk_with_holes(
        radius, sec.vec_list("rect_holes", 4), sec.vec_list("disk_holes", 3), center
    )


def _build_graph(sec: _Section, base: Path) -> Graph:
    kind = sec.str("kind", choices={"lattice", "triangular", "random", "file"})
    try:
        if kind == "file":
            p = Path(sec.str("path"))
            return Graph.load(p if p.is_absolute() else base / p)
        shape = _shape(sec)
        if kind == "lattice":
            gb = None
            if sec.has("grid_bounds"):
                gb = sec.vec("grid_bounds")
                if gb.size == 2:
                    gb = np.array([gb[0], gb[1], gb[0], gb[1]])
                elif gb.size != 4:
                    raise ConfigError("[graph] grid_bounds: expected 2 or 4 numbers")
            return build_lattice(sec.int("rows"), sec.int("cols"), shape, grid_bounds=gb)
        if kind == "triangular":
            return build_triangular(sec.float("spacing"), shape, tuple(sec.vec("offset", 2, (0.0, 0.0))))
        return build_random_inhomogeneous(
            sec.int("n"), sec.int("degree_min"), sec.int("degree_max"), shape, sec.int("seed", 0)
        )
    except ConfigError:
        raise
    except (ValueError, OSError) as exc:
        raise ConfigError(f"[graph] {exc}") from exc


def _build_density(sec: _Section, graph: Graph) -> np.ndarray:
    kind = sec.str("kind", choices={"gaussian", "mixture", "laplacian"})
    try:
        if kind == "gaussian":
            return gaussian_density(graph, sec.vec("mean", 2), sec.float("cov_scale")).rho
        if kind == "laplacian":
            return laplacian_density(graph, sec.vec("a", 2), sec.vec("b", 2)).rho
        if sec.has("means"):
            means = np.array(sec.vec_list("means", 2))
        else:
            means = circle_means(sec.int("components"), sec.float("circle_radius"),
                                 tuple(sec.vec("circle_center", 2, (0.0, 0.0))))
        return gaussian_mixture_density(graph, means, sec.float("cov_scale")).rho
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"[{sec.name}] {exc}") from exc


def _build_spec(sec: _Section, graph: Graph, muT) -> PotentialSpec:
    lambda_V = sec.float("lambda_V", 0.0)
    V = None
    if lambda_V > 0:
        kind = sec.str("V", "landscape", {"landscape"})
        if kind == "landscape":
            V = landscape_potential(
                graph.coords, sec.float("V_height", 50.0), sec.float("V_radius", 0.5),
                tuple(sec.vec("V_center", 2, (0.5, 0.5))), sec.float("V_eta", 5.0),
            )
    lambda_G = sec.float("lambda_G", 0.0)
    if lambda_G > 0 and muT is None:
        raise ConfigError("[potentials] lambda_G: a [muT] section is required")
    try:
        return PotentialSpec(
            lambda_K=sec.float("lambda_K", 0.5),
            lambda_V=lambda_V, V=V,
            lambda_W=sec.float("lambda_W", 0.0),
            kernel=sec.str("kernel", "none", {"none", "gaussian", "coulomb"}),
            coulomb_c=sec.float("coulomb_c", 0.5),
            lambda_B=sec.float("lambda_B", 0.0),
            lambda_I=sec.float("lambda_I", 0.0),
            terminal=sec.str("terminal", "L1", {"L1", "KL"}),
            lambda_G=lambda_G,
            target=muT,
        ).bind(graph)
    except ValueError as exc:
        raise ConfigError(f"[potentials] {exc}") from exc


def _horizon(sec: _Section) -> tuple[float, float, int]:
    dt = sec.float("dt")
    if dt <= 0:
        raise ConfigError("[dynamics] dt: must be positive")
    if sec.has("M"):
        M = sec.int("M")
        T = sec.float("T", M * dt)
    else:
        T = sec.float("T")
        M = int(round(T / dt))
    if M < 1:
        raise ConfigError("[dynamics] M: must be >= 1")
    if abs(T - M * dt) > HORIZON_TOL:
        raise ConfigError(f"[dynamics] T: T={T!r} differs from M*dt={M * dt!r}")
    return T, dt, M


def _train_config(sec: _Section, overrides: dict) -> tuple[str, TrainConfig]:
    model = overrides.get("model") or sec.str("model", "mlp", {"mlp", "sage", "direct"})
    epochs = sec.int("epochs", 3000)
    ce = sec.items.get("checkpoint_every", "").strip()
    try:
        ws = WarmStartConfig(
            enabled=sec.bool("warm_start", False),
            alpha=sec.float("warm_alpha", 0.6),
            epochs=sec.int("warm_epochs", 3000),
            lr=sec.float("warm_lr", 1e-3),
            loss=sec.str("warmstart_loss", "mse"),
        )
        cfg = TrainConfig(
            epochs=epochs,
            lr=sec.float("lr", 1e-3),
            optimizer=overrides.get("optimizer") or sec.str("optimizer", "adam"),
            seed=overrides["seed"] if overrides.get("seed") is not None else sec.int("seed", 0),
            init=sec.str("init", "zero_out"),
            window=sec.int("window", min(100, epochs)),
            quadrature=overrides.get("quadrature") or sec.str("quadrature", "left", {"left", "alg1"}),
            checkpoint_every=int(ce) if ce else None,
            warm_start=ws,
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"[training] {exc}") from exc
    return model, cfg


def load_config(path, **overrides) -> ScenarioConfig:
    """Parse and validate a scenario file.  ``overrides`` may set ``seed``,
    ``optimizer``, ``quadrature`` and ``model``."""
    path = Path(path)
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    sections = {name: dict(cp[name]) for name in cp.sections()}
    for name, items in sections.items():
        if name not in _KEYS:
            raise ConfigError(f"unknown section [{name}]")
        for key in items:
            if key not in _KEYS[name]:
                raise ConfigError(f"[{name}] {key}: unknown key")
    for name in REQUIRED_SECTIONS:
        if name not in sections:
            raise ConfigError(f"missing section [{name}]")
    T, dt, M = _horizon(_Section("dynamics", sections["dynamics"]))
    model, train = _train_config(_Section("training", sections.get("training", {})), overrides)
    out = _Section("output", sections.get("output", {}))
    snaps = list(out.vec("snapshot_times", default=(0.0, T / 2, T)))
    for t in snaps:
        if not 0 <= t <= T + HORIZON_TOL:
            raise ConfigError(f"[output] snapshot_times: {t} outside [0, {T}]")
    return ScenarioConfig(path, sections, T, dt, M, model, train, out.items.get("dir"), snaps)
