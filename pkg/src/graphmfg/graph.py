"""Weighted undirected graphs embedded in the plane, and their builders."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree


class GraphConstructionError(ValueError):
    pass


@dataclass(frozen=True)
class DomainShape:
    """Planar region used to clip node sets.

    ``kind`` is ``"square"`` (axis-aligned box ``bounds``), ``"disk"`` (open disk
    of ``radius`` around ``center``) or ``"disk_with_holes"`` (a disk minus
    closed rectangles ``(xmin, xmax, ymin, ymax)`` and open disks
    ``(cx, cy, r)``).
    """

    kind: str
    bounds: tuple[float, float, float, float] = (-3.0, 3.0, -3.0, 3.0)
    radius: float = 1.0
    center: tuple[float, float] = (0.0, 0.0)
    rect_holes: tuple[tuple[float, float, float, float], ...] = ()
    disk_holes: tuple[tuple[float, float, float], ...] = ()

    def __post_init__(self):
        if self.kind not in ("square", "disk", "disk_with_holes"):
            raise GraphConstructionError(f"unknown domain kind {self.kind!r}")
        if self.kind == "square":
            x0, x1, y0, y1 = self.bounds
            if not (x1 > x0 and y1 > y0):
                raise GraphConstructionError(f"degenerate bounds {self.bounds}")
        elif self.radius <= 0:
            raise GraphConstructionError("disk radius must be positive")
        if self.kind == "disk_with_holes":
            cx, cy = self.center
            r = self.radius
            # a hole must at least touch the outer disk to mean anything
            for x0, x1, y0, y1 in self.rect_holes:
                px = min(max(cx, x0), x1)
                py = min(max(cy, y0), y1)
                if math.hypot(px - cx, py - cy) >= r:
                    raise GraphConstructionError(f"rectangle hole {(x0, x1, y0, y1)} lies outside the disk")
            for hx, hy, hr in self.disk_holes:
                if math.hypot(hx - cx, hy - cy) - hr >= r:
                    raise GraphConstructionError(f"disk hole {(hx, hy, hr)} lies outside the disk")

    @classmethod
    def square(cls, lo: float = -3.0, hi: float = 3.0) -> "DomainShape":
        return cls("square", bounds=(lo, hi, lo, hi))

    @classmethod
    def disk(cls, radius: float, center=(0.0, 0.0)) -> "DomainShape":
        return cls("disk", radius=radius, center=tuple(center))

    @classmethod
    def disk_with_holes(cls, radius, rect_holes=(), disk_holes=(), center=(0.0, 0.0)) -> "DomainShape":
        return cls(
            "disk_with_holes",
            radius=radius,
            center=tuple(center),
            rect_holes=tuple(tuple(map(float, r)) for r in rect_holes),
            disk_holes=tuple(tuple(map(float, d)) for d in disk_holes),
        )

    def bounding_box(self) -> tuple[float, float, float, float]:
        if self.kind == "square":
            return self.bounds
        cx, cy = self.center
        r = self.radius
        return (cx - r, cx + r, cy - r, cy + r)

    def contains(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        x, y = pts[:, 0], pts[:, 1]
        if self.kind == "square":
            x0, x1, y0, y1 = self.bounds
            return (x >= x0) & (x <= x1) & (y >= y0) & (y <= y1)
        cx, cy = self.center
        inside = (x - cx) ** 2 + (y - cy) ** 2 < self.radius**2
        for x0, x1, y0, y1 in self.rect_holes:
            inside &= ~((x >= x0) & (x <= x1) & (y >= y0) & (y <= y1))
        for hx, hy, hr in self.disk_holes:
            inside &= (x - hx) ** 2 + (y - hy) ** 2 >= hr**2
        return inside


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected weighted graph with canonical edges ``src[e] < dst[e]``."""

    coords: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    w: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        coords = np.ascontiguousarray(self.coords, dtype=np.float64).reshape(-1, 2)
        src = np.ascontiguousarray(self.src, dtype=np.int64)
        dst = np.ascontiguousarray(self.dst, dtype=np.int64)
        w = np.ascontiguousarray(self.w, dtype=np.float64)
        n = coords.shape[0]
        if n == 0:
            raise GraphConstructionError("graph has no nodes")
        if not (src.shape == dst.shape == w.shape):
            raise GraphConstructionError("edge arrays differ in length")
        if np.any(src == dst):
            raise GraphConstructionError("self-loops are not allowed")
        lo, hi = np.minimum(src, dst), np.maximum(src, dst)
        order = np.lexsort((hi, lo))
        src, dst, w = lo[order], hi[order], w[order]
        if src.size and (src.min() < 0 or dst.max() >= n):
            raise GraphConstructionError("edge endpoint out of range")
        if src.size > 1 and np.any((np.diff(src) == 0) & (np.diff(dst) == 0)):
            raise GraphConstructionError("duplicate edges")
        if np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise GraphConstructionError("edge weights must be positive and finite")
        for arr in (coords, src, dst, w):
            arr.setflags(write=False)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "src", src)
        object.__setattr__(self, "dst", dst)
        object.__setattr__(self, "w", w)
        sizes = component_sizes(n, src, dst)
        if len(sizes) > 1:
            raise GraphConstructionError(
                f"graph is disconnected: {len(sizes)} components, "
                f"orphaned component of size {min(sizes)} (largest {max(sizes)})"
            )

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    @property
    def m(self) -> int:
        return self.src.shape[0]

    @property
    def edges(self) -> list[tuple[int, int]]:
        return list(zip(self.src.tolist(), self.dst.tolist()))

    @cached_property
    def degree(self) -> np.ndarray:
        return np.bincount(self.src, minlength=self.n) + np.bincount(self.dst, minlength=self.n)

    @cached_property
    def adjacency(self) -> list[np.ndarray]:
        """Sorted neighbour list N(i) for every node."""
        heads, tails = self.directed_pairs
        order = np.lexsort((tails, heads))
        heads, tails = heads[order], tails[order]
        splits = np.cumsum(self.degree)[:-1]
        return np.split(tails, splits)

    @cached_property
    def directed_pairs(self) -> tuple[np.ndarray, np.ndarray]:
        """Both orientations of every edge, as (i, j) arrays of length 2m."""
        return np.concatenate([self.src, self.dst]), np.concatenate([self.dst, self.src])

    @cached_property
    def edge_index(self) -> dict[tuple[int, int], int]:
        return {(i, j): e for e, (i, j) in enumerate(self.edges)}

    def neighbors(self, i: int) -> np.ndarray:
        return self.adjacency[i]

    def has_edge(self, i: int, j: int) -> bool:
        return (min(i, j), max(i, j)) in self.edge_index

    def weight(self, i: int, j: int) -> float:
        return float(self.w[self.edge_index[(min(i, j), max(i, j))]])

    def to_text(self) -> str:
        lines = [f"{self.n} {self.m}"]
        lines += [f"{i} {x!r} {y!r}" for i, (x, y) in enumerate(self.coords.tolist())]
        lines += [f"{i} {j} {wt!r}" for i, j, wt in zip(self.src.tolist(), self.dst.tolist(), self.w.tolist())]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Graph":
        rows = [ln.split() for ln in text.strip().splitlines() if ln.strip()]
        n, m = int(rows[0][0]), int(rows[0][1])
        if len(rows) != 1 + n + m:
            raise GraphConstructionError(f"expected {1 + n + m} lines, found {len(rows)}")
        coords = np.zeros((n, 2))
        for r in rows[1 : n + 1]:
            coords[int(r[0])] = float(r[1]), float(r[2])
        e = np.array([[float(v) for v in r] for r in rows[n + 1 :]]).reshape(m, 3)
        return cls(coords, e[:, 0].astype(np.int64), e[:, 1].astype(np.int64), e[:, 2])

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path) -> "Graph":
        return cls.from_text(Path(path).read_text())


def component_sizes(n: int, src: np.ndarray, dst: np.ndarray) -> list[int]:
    adj = coo_matrix((np.ones(src.size), (src, dst)), shape=(n, n))
    ncomp, labels = connected_components(adj, directed=False)
    return np.bincount(labels, minlength=ncomp).tolist()


def _clip(coords, src, dst, keep, meta) -> Graph:
    if not keep.any():
        raise GraphConstructionError("no nodes fall inside the domain")
    new_id = np.full(keep.size, -1, dtype=np.int64)
    new_id[keep] = np.arange(int(keep.sum()))
    ok = keep[src] & keep[dst]
    s, d = new_id[src[ok]], new_id[dst[ok]]
    return Graph(coords[keep], s, d, np.ones(s.size), meta=meta)


def build_lattice(rows: int, cols: int, shape: DomainShape | None = None, grid_bounds=None) -> Graph:
    """Regular 4-neighbour grid spread uniformly over the shape's bounding box
    (or ``grid_bounds = (xmin, xmax, ymin, ymax)``), keeping nodes inside the
    shape and edges whose endpoints both survive."""
    if rows < 2 or cols < 2:
        raise GraphConstructionError("lattice needs rows, cols >= 2")
    shape = shape or DomainShape.square()
    x0, x1, y0, y1 = grid_bounds if grid_bounds is not None else shape.bounding_box()
    xs = np.linspace(x0, x1, cols)
    ys = np.linspace(y0, y1, rows)
    gx, gy = np.meshgrid(xs, ys)
    coords = np.column_stack([gx.ravel(), gy.ravel()])
    ids = np.arange(rows * cols).reshape(rows, cols)
    src = np.concatenate([ids[:, :-1].ravel(), ids[:-1, :].ravel()])
    dst = np.concatenate([ids[:, 1:].ravel(), ids[1:, :].ravel()])
    keep = shape.contains(coords)
    return _clip(coords, src, dst, keep, {"builder": "lattice", "rows": rows, "cols": cols})


def build_triangular(spacing: float, shape: DomainShape, offset=(0.0, 0.0)) -> Graph:
    """Equilateral triangular lattice (one node at ``center + offset``) clipped to
    ``shape``; each node links to its up-to-6 surviving neighbours."""
    if spacing <= 0:
        raise GraphConstructionError("spacing must be positive")
    x0, x1, y0, y1 = shape.bounding_box()
    ox, oy = offset
    hy = spacing * math.sqrt(3.0) / 2.0
    j_lo = math.floor((y0 - oy) / hy) - 1
    j_hi = math.ceil((y1 - oy) / hy) + 1
    span = (x1 - x0) + abs(ox) + (j_hi - j_lo) * spacing
    i_lo = math.floor((x0 - ox - span) / spacing) - 1
    i_hi = math.ceil((x1 - ox + span) / spacing) + 1
    ii, jj = np.meshgrid(np.arange(i_lo, i_hi + 1), np.arange(j_lo, j_hi + 1))
    ii, jj = ii.ravel(), jj.ravel()
    x = ox + (ii + 0.5 * jj) * spacing
    y = oy + jj * hy
    coords = np.column_stack([x, y])
    inside = shape.contains(coords)
    coords, ii, jj = coords[inside], ii[inside], jj[inside]
    if coords.shape[0] == 0:
        raise GraphConstructionError("no nodes fall inside the domain")
    lookup = {(a, b): k for k, (a, b) in enumerate(zip(ii.tolist(), jj.tolist()))}
    src, dst = [], []
    for k, (a, b) in enumerate(zip(ii.tolist(), jj.tolist())):
        for da, db in ((1, 0), (0, 1), (-1, 1)):
            other = lookup.get((a + da, b + db))
            if other is not None:
                src.append(k)
                dst.append(other)
    keep = np.ones(coords.shape[0], dtype=bool)
    meta = {"builder": "triangular", "spacing": spacing}
    return _clip(coords, np.array(src, dtype=np.int64), np.array(dst, dtype=np.int64), keep, meta)


def sample_in_shape(n: int, shape: DomainShape, rng: np.random.Generator) -> np.ndarray:
    x0, x1, y0, y1 = shape.bounding_box()
    out = np.empty((0, 2))
    while out.shape[0] < n:
        batch = rng.uniform((x0, y0), (x1, y1), size=(2 * (n - out.shape[0]) + 16, 2))
        out = np.vstack([out, batch[shape.contains(batch)]])
    return out[:n]


def build_random_inhomogeneous(
    n: int, degree_min: int, degree_max: int, shape: DomainShape, seed: int = 0
) -> Graph:
    """Random geometric graph with node degrees drawn from [degree_min, degree_max].

    Points are sampled uniformly in ``shape``.  Each node draws a target degree
    and links to its nearest nodes that still have spare capacity; nodes left
    below ``degree_min`` are topped up from a wider search; finally each
    non-main component is joined to the rest by its shortest outgoing edge.
    """
    if degree_min < 1 or degree_max < degree_min:
        raise GraphConstructionError("need 1 <= degree_min <= degree_max")
    if n <= degree_max:
        raise GraphConstructionError(f"degree_max={degree_max} infeasible with n={n} nodes")
    rng = np.random.default_rng(seed)
    pts = sample_in_shape(n, shape, rng)
    target = rng.integers(degree_min, degree_max + 1, size=n)
    tree = cKDTree(pts)
    deg = np.zeros(n, dtype=np.int64)
    edges: set[tuple[int, int]] = set()

    def link(i, j):
        edges.add((min(i, j), max(i, j)))
        deg[i] += 1
        deg[j] += 1

    k = min(n, 4 * degree_max + 1)
    _, nbrs = tree.query(pts, k=k)
    for i in rng.permutation(n):
        for j in nbrs[i, 1:]:
            if deg[i] >= target[i]:
                break
            if deg[j] < target[j] and (min(i, j), max(i, j)) not in edges:
                link(i, int(j))

    # top up stragglers, allowing partners up to degree_max
    for i in np.flatnonzero(deg < degree_min):
        kk = k
        while deg[i] < degree_min:
            _, cand = tree.query(pts[i], k=min(n, kk))
            for j in np.atleast_1d(cand)[1:]:
                if deg[i] >= degree_min:
                    break
                if deg[j] < degree_max and (min(i, j), max(i, j)) not in edges:
                    link(int(i), int(j))
            if kk >= n:
                break
            kk *= 2
        if deg[i] < degree_min:
            raise GraphConstructionError(f"cannot reach degree_min={degree_min} at node {i}")

    src = np.array([e[0] for e in sorted(edges)], dtype=np.int64)
    dst = np.array([e[1] for e in sorted(edges)], dtype=np.int64)
    adj = coo_matrix((np.ones(src.size), (src, dst)), shape=(n, n))
    ncomp, labels = connected_components(adj, directed=False)
    if ncomp > 1:
        main = np.argmax(np.bincount(labels))
        for c in range(ncomp):
            if c == main:
                continue
            members = np.flatnonzero(labels == c)
            others = np.flatnonzero(labels != c)
            dist, which = cKDTree(pts[others]).query(pts[members])
            a = int(members[np.argmin(dist)])
            b = int(others[which[np.argmin(dist)]])
            link(a, b)
            labels[labels == c] = labels[b]
        src = np.array([e[0] for e in sorted(edges)], dtype=np.int64)
        dst = np.array([e[1] for e in sorted(edges)], dtype=np.int64)
    meta = {"builder": "random", "seed": seed, "degree_min": degree_min, "degree_max": degree_max}
    return Graph(pts, src, dst, np.ones(src.size), meta=meta)
