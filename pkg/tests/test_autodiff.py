import numpy as np
import pytest

from graphmfg import PotentialSpec, build_lattice, gaussian_density
from graphmfg import autodiff as ad
from graphmfg.calculus import continuity_rhs, dirichlet_energy, hj_quadratic
from graphmfg.models import Model
from graphmfg.potentials import entropy, fisher_information, interaction_potential, terminal_energy
from graphmfg.training import loss_and_grads

from conftest import interior_density

RNG = np.random.default_rng(0)
H = 1e-6


def check_op(fn, *inputs, rel=1e-7, seed=0):
    """Compare a random-projection reverse gradient with central differences."""
    rng = np.random.default_rng(seed)
    tape = ad.Tape()
    xs = [tape.variable(x) for x in inputs]
    out = fn(*xs)
    proj = rng.normal(size=np.shape(ad.value(out)))
    loss = ad.sum_(out * proj)
    grads = tape.gradient(loss, xs)

    def scalar(vals):
        return float(np.sum(np.asarray(fn(*vals)) * proj))

    for k, x in enumerate(inputs):
        x = np.asarray(x, dtype=float)
        fd = np.zeros_like(x)
        for idx in np.ndindex(x.shape):
            e = np.zeros_like(x)
            e[idx] = H
            up = [np.asarray(v, dtype=float) for v in inputs]
            dn = [np.asarray(v, dtype=float) for v in inputs]
            up[k], dn[k] = x + e, x - e
            fd[idx] = (scalar(up) - scalar(dn)) / (2 * H)
        scale = max(np.max(np.abs(fd)), 1e-8)
        assert np.max(np.abs(grads[k] - fd)) / scale < rel, f"input {k}"


A = RNG.normal(size=(3, 4))
B = RNG.normal(size=(3, 4))
C = RNG.normal(size=(4, 2))
P = RNG.random((3, 4)) + 0.5
IDX = np.array([0, 2, 2, 1, 0])

UNARY = {
    "neg": lambda a: -a,
    "exp": ad.exp,
    "log": lambda a: ad.log(a),
    "tanh": ad.tanh,
    "relu": ad.relu,
    "abs": ad.abs_,
    "maximum": lambda a: ad.maximum(a, 0.1),
    "power": lambda a: ad.power(a, 1.5),
    "sum": ad.sum_,
    "reshape": lambda a: ad.reshape(a, (4, 3)),
    "transpose": ad.transpose,
    "gather": lambda a: ad.gather(a, IDX),
    "scatter_add": lambda a: ad.scatter_add(a, np.array([1, 1, 0]), 3),
    "rsub": lambda a: 2.0 - a,
    "rdiv": lambda a: 1.0 / a,
    "broadcast_add": lambda a: a + np.arange(4.0),
}


@pytest.mark.parametrize("name", list(UNARY))
def test_unary_ops(name):
    check_op(UNARY[name], P)


BINARY = {
    "add": (lambda a, b: a + b, A, B),
    "sub": (lambda a, b: a - b, A, B),
    "mul": (lambda a, b: a * b, A, B),
    "div": (lambda a, b: a / b, A, P),
    "matmul": (ad.matmul, A, C),
    "dot": (ad.dot, A[0], B[0]),
    "concat": (lambda a, b: ad.concat([a, b], axis=1), A, B),
    "broadcast_mul": (lambda a, b: a * b, A, B[0:1]),
}


@pytest.mark.parametrize("name", list(BINARY))
def test_binary_ops(name):
    fn, a, b = BINARY[name]
    check_op(fn, a, b)


def test_fused_graph_ops():
    g = build_lattice(4, 4)
    rho = interior_density(np.random.default_rng(1), g.n)
    s = np.random.default_rng(2).normal(size=g.n)
    check_op(lambda r, x: dirichlet_energy(r, x, g), rho, s)
    check_op(lambda r, x: continuity_rhs(r, x, g), rho, s)
    check_op(lambda x: hj_quadratic(x, g), s)


def test_potentials_on_tape():
    g = build_lattice(4, 4)
    rho = interior_density(np.random.default_rng(3), g.n)
    tgt = interior_density(np.random.default_rng(4), g.n)
    check_op(lambda r: entropy(r)[0], rho, rel=1e-6)
    check_op(lambda r: fisher_information(r, g)[0], rho, rel=1e-6)
    check_op(lambda r: interaction_potential(r, "gaussian", g.coords)[0], rho)
    check_op(lambda r: terminal_energy(r, PotentialSpec(terminal="KL", target=tgt))[0], rho, rel=1e-6)


def test_hand_values():
    tape = ad.Tape()
    x = tape.variable(3.0)
    (g,) = tape.gradient(x * x, [x])
    assert g == 6.0
    tape = ad.Tape()
    z = tape.variable(0.0)
    (g,) = tape.gradient(ad.tanh(z), [z])
    assert g == 1.0
    tape = ad.Tape()
    z = tape.variable(np.zeros(3))
    assert not np.any(tape.gradient(ad.sum_(ad.relu(z) + ad.abs_(z)), [z])[0])


def test_unused_input_gets_zero():
    tape = ad.Tape()
    x, y = tape.variable(np.ones(2)), tape.variable(np.ones(3))
    gx, gy = tape.gradient(ad.sum_(x * 2.0), [x, y])
    np.testing.assert_array_equal(gx, [2.0, 2.0])
    np.testing.assert_array_equal(gy, np.zeros(3))


def test_foreign_tape():
    t1, t2 = ad.Tape(), ad.Tape()
    a, b = t1.variable(1.0), t2.variable(2.0)
    with pytest.raises(ad.TapeError):
        a + b
    with pytest.raises(ad.TapeError):
        t1.gradient(a * 2.0, [b])
    with pytest.raises(ad.TapeError):
        t2.backward(a)
    with pytest.raises(ad.TapeError):
        t1.backward(t1.variable(np.ones(3)))


def test_linearity_and_determinism():
    rng = np.random.default_rng(5)
    x0 = rng.normal(size=6)

    def grad(fn):
        tape = ad.Tape()
        x = tape.variable(x0)
        return tape.gradient(fn(x), [x])[0]

    f = lambda x: ad.sum_(ad.tanh(x) * x)
    h = lambda x: ad.sum_(ad.exp(x * 0.3))
    combo = grad(lambda x: f(x) * 2.0 + h(x) * -0.5)
    np.testing.assert_allclose(combo, 2.0 * grad(f) - 0.5 * grad(h), rtol=1e-14)
    assert np.array_equal(grad(f), grad(f))


def test_plain_numpy_passthrough():
    assert isinstance(ad.tanh(np.zeros(2)), np.ndarray)
    assert ad.value(ad.sum_(np.ones(3))) == 3.0


def test_keystone_mlp_end_to_end():
    """Gradient of the full loss with respect to every MLP parameter."""
    g = build_lattice(11, 11)
    mu0 = gaussian_density(g, (-1.0, -1.0), 0.5).rho
    target = gaussian_density(g, (1.0, 1.0), 0.5).rho
    spec = PotentialSpec(lambda_K=0.5, lambda_B=0.01, lambda_W=0.1, kernel="gaussian",
                         terminal="KL", target=target, lambda_G=5.0).bind(g)
    model = Model("mlp", g)
    rng = np.random.default_rng(7)
    params = {k: 0.3 * rng.normal(size=v.shape) for k, v in model.init(7).items()}
    dt, M = 0.1, 10
    loss, grads, _ = loss_and_grads(model, params, mu0, spec, dt, M)

    def f(p):
        return loss_and_grads(model, p, mu0, spec, dt, M)[0]

    worst = 0.0
    for name, p in params.items():
        for idx in np.ndindex(p.shape):
            up = {k: v.copy() for k, v in params.items()}
            dn = {k: v.copy() for k, v in params.items()}
            up[name][idx] += H
            dn[name][idx] -= H
            fd = (f(up) - f(dn)) / (2 * H)
            worst = max(worst, abs(grads[name][idx] - fd) / max(abs(fd), 1e-3))
    assert worst < 1e-5
