from collections import deque

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from graphmfg import DomainShape, Graph, GraphConstructionError, build_lattice, build_random_inhomogeneous, build_triangular

DISK3 = DomainShape.disk(3.0)
TRI_OFFSET = (0.072, 0.10392304845413264)


def bfs_reach(graph, start=0):
    seen = {start}
    q = deque([start])
    while q:
        i = q.popleft()
        for j in graph.neighbors(i):
            if int(j) not in seen:
                seen.add(int(j))
                q.append(int(j))
    return len(seen)


def assert_valid(graph):
    assert np.all(graph.src < graph.dst)
    assert np.all(graph.w > 0)
    for i in range(graph.n):
        for j in graph.neighbors(i):
            assert i in graph.neighbors(int(j))
            assert graph.weight(i, int(j)) == graph.weight(int(j), i)
    assert bfs_reach(graph) == graph.n


@pytest.mark.parametrize("rows,cols", [(31, 31), (2, 2), (41, 41), (3, 7)])
def test_lattice_counts(rows, cols):
    g = build_lattice(rows, cols, DomainShape.square(-3, 3))
    assert g.n == rows * cols
    assert g.m == rows * (cols - 1) + cols * (rows - 1)
    assert np.all(g.w == 1.0)
    assert g.coords[:, 0].min() == -3 and g.coords[:, 0].max() == 3


def test_lattice_rejects_tiny():
    with pytest.raises(GraphConstructionError):
        build_lattice(1, 5)


def test_lattice_clipped_counts():
    assert (lambda g: (g.n, g.m))(build_lattice(31, 31, DISK3)) == (697, 1336)
    g = build_lattice(25, 25, DISK3, grid_bounds=(-2.88, 2.88, -2.88, 2.88))
    assert (g.n, g.m) == (489, 928)
    assert_valid(g)


def test_triangular_calibrated_disk():
    g = build_triangular(0.24, DISK3, TRI_OFFSET)
    assert (g.n, g.m) == (563, 1604)
    assert g.degree.max() == 6
    assert_valid(g)


def test_triangular_calibrated_holes():
    shape = DomainShape.disk_with_holes(3.0, rect_holes=[(-3, -1.5, -1, 1)], disk_holes=[(0, 0, 0.8)])
    g = build_triangular(0.24, shape, TRI_OFFSET)
    assert (g.n, g.m) == (463, 1272)
    assert not shape.contains(np.array([[0.0, 0.0], [-2.0, 0.0]])).any()
    assert_valid(g)


def test_triangular_coarse_disk():
    g = build_triangular(0.2864, DISK3, (0.1432, 0.0))
    assert (g.n, g.m) == (396, 1115)


def test_triangular_unit_edges():
    g = build_triangular(0.5, DomainShape.square(-2, 2))
    lengths = np.linalg.norm(g.coords[g.src] - g.coords[g.dst], axis=1)
    np.testing.assert_allclose(lengths, 0.5, rtol=1e-12)


def test_triangular_empty_shape():
    with pytest.raises(GraphConstructionError):
        build_triangular(1.0, DomainShape.disk(0.1), offset=(0.5, 0.5))
    with pytest.raises(GraphConstructionError):
        build_triangular(-1.0, DISK3)


@pytest.mark.parametrize("n,dmin,dmax", [(2000, 6, 10), (1000, 3, 8)])
def test_random_degrees(n, dmin, dmax):
    g = build_random_inhomogeneous(n, dmin, dmax, DISK3, seed=3)
    assert g.n == n
    assert g.degree.min() >= dmin
    # connectivity repair adds at most one edge per repaired component to each side
    excess = np.clip(g.degree - dmax, 0, None)
    assert excess.sum() <= 2 * max(1, n // 100)
    assert_valid(g)
    assert np.all(DISK3.contains(g.coords))


def test_random_deterministic():
    a = build_random_inhomogeneous(300, 3, 6, DISK3, seed=11)
    b = build_random_inhomogeneous(300, 3, 6, DISK3, seed=11)
    c = build_random_inhomogeneous(300, 3, 6, DISK3, seed=12)
    assert np.array_equal(a.coords, b.coords) and np.array_equal(a.src, b.src)
    assert not np.array_equal(a.coords, c.coords)


@pytest.mark.parametrize("args", [(5, 10, 12), (50, 0, 3), (50, 5, 4)])
def test_random_infeasible(args):
    with pytest.raises(GraphConstructionError):
        build_random_inhomogeneous(*args, DISK3, seed=0)


def test_graph_rejects_bad_edges():
    xy = np.zeros((3, 2))
    with pytest.raises(GraphConstructionError, match="self-loop"):
        Graph(xy, [0, 1], [0, 2], [1.0, 1.0])
    with pytest.raises(GraphConstructionError, match="duplicate"):
        Graph(xy, [0, 1, 1], [1, 0, 2], [1.0, 1.0, 1.0])
    with pytest.raises(GraphConstructionError, match="positive"):
        Graph(xy, [0, 1], [1, 2], [1.0, 0.0])


def test_disconnected_names_component_size():
    xy = np.zeros((5, 2))
    with pytest.raises(GraphConstructionError, match="size 2"):
        Graph(xy, [0, 1, 3], [1, 2, 4], [1.0, 1.0, 1.0])


def test_canonical_orientation_and_immutability():
    g = Graph(np.zeros((3, 2)), [2, 1], [1, 0], [2.0, 3.0])
    assert g.edges == [(0, 1), (1, 2)]
    assert g.weight(2, 1) == 2.0
    with pytest.raises(ValueError):
        g.coords[0, 0] = 1.0


def test_text_roundtrip(tmp_path):
    g = build_triangular(0.5, DomainShape.disk(2.0), (0.1, 0.2))
    p = tmp_path / "g.txt"
    g.save(p)
    first = p.read_text().splitlines()[0]
    assert first == f"{g.n} {g.m}"
    h = Graph.load(p)
    assert np.array_equal(g.coords, h.coords)
    assert np.array_equal(g.src, h.src) and np.array_equal(g.dst, h.dst) and np.array_equal(g.w, h.w)


def test_domain_shape_validation():
    with pytest.raises(GraphConstructionError):
        DomainShape.disk_with_holes(1.0, rect_holes=[(5, 6, 5, 6)])
    with pytest.raises(GraphConstructionError):
        DomainShape.disk(0.0)
    s = DomainShape.disk_with_holes(2.0, disk_holes=[(0, 0, 0.5)])
    assert list(s.contains(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]]))) == [False, True, False]


@given(st.integers(2, 9), st.integers(2, 9))
def test_lattice_edge_formula_property(r, c):
    g = build_lattice(r, c)
    assert g.m == r * (c - 1) + c * (r - 1)
    assert g.degree.sum() == 2 * g.m
