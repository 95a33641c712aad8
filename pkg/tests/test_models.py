import numpy as np
import pytest

from graphmfg import DomainShape, Graph, build_lattice, build_random_inhomogeneous
from graphmfg import autodiff as ad
from graphmfg.models import (
    Model, count_params, init_params, load_params, mean_aggregator, param_shapes, save_params,
)

G = build_lattice(6, 6)


def test_parameter_counts():
    assert count_params(init_params("mlp", 0)) == 337
    assert count_params(init_params("sage", 0)) == 1649
    assert count_params(init_params("direct", 0, 36)) == 36
    with pytest.raises(ValueError):
        param_shapes("direct")
    with pytest.raises(ValueError):
        Model("gcn", G)


@pytest.mark.parametrize("kind", ["mlp", "sage", "direct"])
def test_zero_params_give_zero(kind):
    m = Model(kind, G)
    zeros = {k: np.zeros_like(v) for k, v in m.init(0).items()}
    out = m(zeros)
    assert out.shape == (G.n,) and not np.any(out)


@pytest.mark.parametrize("kind", ["mlp", "sage"])
def test_seeded_init(kind):
    a, b, c = (init_params(kind, s) for s in (3, 3, 4))
    assert all(np.array_equal(a[k], b[k]) for k in a)
    assert any(not np.array_equal(a[k], c[k]) for k in a)
    for name, v in a.items():
        if v.ndim == 2:
            fo, fi = v.shape
            assert np.max(np.abs(v)) <= np.sqrt(6 / (fi + fo))
        else:
            assert not v.any()


def test_init_schemes():
    z = init_params("mlp", 1, scheme="zero_out")
    assert not z["W_out"].any() and z["W1"].any()
    np.testing.assert_array_equal(Model("mlp", G)(z), np.zeros(G.n))
    f = init_params("mlp", 1, scheme="fan_in")
    assert np.max(np.abs(f["W2"])) <= 0.25 and np.max(np.abs(f["b2"])) <= 0.25 and f["b1"].any()
    with pytest.raises(ValueError):
        init_params("mlp", 1, scheme="he")


def test_sage_permutation_equivariance():
    g = build_random_inhomogeneous(60, 3, 6, DomainShape.disk(3.0), seed=2)
    perm = np.random.default_rng(0).permutation(g.n)
    inv = np.argsort(perm)
    h = Graph(g.coords[perm], inv[g.src], inv[g.dst], g.w)
    rng = np.random.default_rng(1)
    params = {k: rng.normal(size=v.shape) for k, v in init_params("sage", 0).items()}
    np.testing.assert_allclose(Model("sage", h)(params), Model("sage", g)(params)[perm], rtol=1e-12, atol=1e-14)


def test_sage_three_hop_locality():
    g = build_lattice(15, 15)
    rng = np.random.default_rng(3)
    params = {k: rng.normal(size=v.shape) for k, v in init_params("sage", 0).items()}
    centre = 7 * 15 + 7
    hops = np.full(g.n, -1)
    hops[centre] = 0
    frontier = [centre]
    while frontier:
        nxt = []
        for i in frontier:
            for j in g.neighbors(i):
                if hops[j] < 0:
                    hops[j] = hops[i] + 1
                    nxt.append(int(j))
        frontier = nxt
    base = Model("sage", g)(params)
    for far, changes in ((4, False), (3, True)):
        j = int(np.flatnonzero(hops == far)[0])
        coords = g.coords.copy()
        coords[j] += 0.37
        out = Model("sage", Graph(coords, g.src, g.dst, g.w))(params)
        assert (out[centre] != base[centre]) == changes


def test_mean_aggregator():
    A = mean_aggregator(G)
    np.testing.assert_allclose(np.asarray(A.sum(axis=1)).ravel(), 1.0)


def test_sage_gradient_random_biases():
    g = build_lattice(5, 5)
    m = Model("sage", g)
    rng = np.random.default_rng(4)
    params = {k: rng.normal(scale=0.5, size=v.shape) for k, v in init_params("sage", 0).items()}
    proj = rng.normal(size=g.n)
    tape = ad.Tape()
    pv = {k: tape.variable(v) for k, v in params.items()}
    grads = dict(zip(pv, tape.gradient(ad.dot(m(pv), proj), list(pv.values()))))
    h = 1e-6
    for name in ("W_embed", "b2", "W3", "W_out"):
        for idx in list(np.ndindex(params[name].shape))[:12]:
            up = {k: v.copy() for k, v in params.items()}
            dn = {k: v.copy() for k, v in params.items()}
            up[name][idx] += h
            dn[name][idx] -= h
            fd = (m(up) @ proj - m(dn) @ proj) / (2 * h)
            assert grads[name][idx] == pytest.approx(fd, rel=1e-5, abs=1e-7)


@pytest.mark.parametrize("kind", ["mlp", "sage", "direct"])
def test_checkpoint_round_trip(tmp_path, kind):
    rng = np.random.default_rng(5)
    params = {k: rng.normal(size=v.shape) for k, v in init_params(kind, 0, G.n).items()}
    save_params(tmp_path / "ck.txt", kind, 11, params)
    k2, seed, loaded = load_params(tmp_path / "ck.txt")
    assert (k2, seed) == (kind, 11) and list(loaded) == list(params)
    for k in params:
        np.testing.assert_array_equal(loaded[k], params[k])
    np.testing.assert_array_equal(Model(kind, G)(loaded), Model(kind, G)(params))


def test_checkpoint_corrupt(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("1.0\n2.0\n")
    with pytest.raises(ValueError):
        load_params(p)
    save_params(p, "direct", 0, {"s0": np.ones(3)})
    p.write_text(p.read_text() + "4.0\n")
    with pytest.raises(ValueError):
        load_params(p)
