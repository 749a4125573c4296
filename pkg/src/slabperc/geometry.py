"""Finite windows of the slab Z^2 x {0..k}.

Vertices are addressed either as :class:`Vertex` triples or by a dense integer
index (row-major over x, y, z).  Edges carry stable integer ids: the position
of ``(vertex, positive direction)`` in row-major order, directions ordered
+x, +y, +z.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, NamedTuple, Sequence

import numpy as np


class GeometryError(ValueError):
    """Raised for out-of-window vertices, malformed regions and similar."""


class Vertex(NamedTuple):
    x: int
    y: int
    z: int


# +x, +y, +z, then the negative directions; this is also the neighbor order
DIRECTIONS = ((1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1))


def vertex_key(v: Sequence[int]) -> tuple[int, int, int, int]:
    """Sort key realising the vertex order: squared norm, then coordinates."""
    x, y, z = v
    return (x * x + y * y + z * z, x, y, z)


def vertex_less(a: Sequence[int], b: Sequence[int]) -> bool:
    return vertex_key(a) < vertex_key(b)


def adjacent(a: Sequence[int], b: Sequence[int]) -> bool:
    return sum(abs(i - j) for i, j in zip(a, b)) == 1


@dataclass(frozen=True)
class SlabGeometry:
    """The slab of thickness ``k`` restricted to ``[x0, x1] x [y0, y1]``."""

    k: int
    x0: int
    x1: int
    y0: int
    y1: int

    def __post_init__(self):
        if self.k < 0:
            raise GeometryError(f"thickness must be nonnegative, got {self.k}")
        if self.x1 < self.x0 or self.y1 < self.y0:
            raise GeometryError("empty window")

    @classmethod
    def box(cls, k: int, n: int, center: tuple[int, int] = (0, 0)) -> "SlabGeometry":
        cx, cy = center
        return cls(k, cx - n, cx + n, cy - n, cy + n)

    @classmethod
    def rectangle(cls, k: int, m: int, n: int) -> "SlabGeometry":
        """Window ``[0, m] x [0, n]`` used for the crossing probability f(m, n)."""
        return cls(k, 0, m, 0, n)

    @property
    def window(self) -> tuple[int, int, int, int]:
        return (self.x0, self.x1, self.y0, self.y1)

    @property
    def nx(self) -> int:
        return self.x1 - self.x0 + 1

    @property
    def ny(self) -> int:
        return self.y1 - self.y0 + 1

    @property
    def nz(self) -> int:
        return self.k + 1

    @property
    def num_vertices(self) -> int:
        return self.nx * self.ny * self.nz

    @property
    def num_edges(self) -> int:
        return len(self.edge_u)

    # -- indexing ---------------------------------------------------------

    def contains(self, v: Sequence[int]) -> bool:
        x, y, z = v
        return self.x0 <= x <= self.x1 and self.y0 <= y <= self.y1 and 0 <= z <= self.k

    def index(self, v: Sequence[int]) -> int:
        if not self.contains(v):
            raise GeometryError(f"vertex {tuple(v)} outside window {self.window} (k={self.k})")
        x, y, z = v
        return ((x - self.x0) * self.ny + (y - self.y0)) * self.nz + z

    def vertex(self, i: int) -> Vertex:
        x, i = divmod(int(i), self.ny * self.nz)
        y, z = divmod(i, self.nz)
        return Vertex(x + self.x0, y + self.y0, z)

    @cached_property
    def coords(self) -> np.ndarray:
        """``(num_vertices, 3)`` integer array of vertex coordinates."""
        xs = np.arange(self.x0, self.x1 + 1)
        ys = np.arange(self.y0, self.y1 + 1)
        zs = np.arange(self.nz)
        grid = np.stack(np.meshgrid(xs, ys, zs, indexing="ij"), axis=-1)
        out = grid.reshape(-1, 3).astype(np.int64)
        out.setflags(write=False)
        return out

    def _build_edges(self):
        c = self.coords
        idx = np.arange(self.num_vertices, dtype=np.int64)
        stride = {0: self.ny * self.nz, 1: self.nz, 2: 1}
        upper = {0: self.x1, 1: self.y1, 2: self.k}
        us, vs, ds = [], [], []
        for d in range(3):
            ok = c[:, d] < upper[d]
            us.append(idx[ok])
            vs.append(idx[ok] + stride[d])
            ds.append(np.full(int(ok.sum()), d, dtype=np.int8))
        u = np.concatenate(us)
        v = np.concatenate(vs)
        d = np.concatenate(ds)
        order = np.lexsort((d, u))
        return u[order], v[order], d[order]

    @cached_property
    def _edges(self):
        u, v, d = self._build_edges()
        for a in (u, v, d):
            a.setflags(write=False)
        return u, v, d

    @property
    def edge_u(self) -> np.ndarray:
        return self._edges[0]

    @property
    def edge_v(self) -> np.ndarray:
        return self._edges[1]

    @property
    def edge_dir(self) -> np.ndarray:
        """0, 1, 2 for edges along x, y, z; ``edge_v`` is ``edge_u`` shifted by +1."""
        return self._edges[2]

    @cached_property
    def _edge_table(self) -> np.ndarray:
        table = np.full((self.num_vertices, 3), -1, dtype=np.int64)
        table[self.edge_u, self.edge_dir] = np.arange(self.num_edges)
        return table

    def edge_id(self, a: Sequence[int], b: Sequence[int]) -> int:
        if not adjacent(a, b):
            raise GeometryError(f"{tuple(a)} and {tuple(b)} are not adjacent")
        lo, hi = (a, b) if tuple(a) < tuple(b) else (b, a)
        d = next(i for i in range(3) if lo[i] != hi[i])
        return int(self._edge_table[self.index(lo), d])

    def edge_vertices(self, e: int) -> tuple[Vertex, Vertex]:
        return self.vertex(self.edge_u[e]), self.vertex(self.edge_v[e])

    @cached_property
    def adjacency(self) -> list[list[tuple[int, int]]]:
        """For every vertex index, ``(neighbor index, edge id)`` in DIRECTIONS order."""
        adj: list[list[tuple[int, int]]] = [[] for _ in range(self.num_vertices)]
        table = self._edge_table
        stride = (self.ny * self.nz, self.nz, 1)
        coords = self.coords.tolist()
        upper = (self.x1, self.y1, self.k)
        lower = (self.x0, self.y0, 0)
        for i, c in enumerate(coords):
            row = adj[i]
            for d in range(3):
                if c[d] < upper[d]:
                    row.append((i + stride[d], int(table[i, d])))
                if c[d] > lower[d]:
                    j = i - stride[d]
                    row.append((j, int(table[j, d])))
        # reorder to +x, -x, +y, -y, +z, -z (already produced in that order)
        return adj

    def neighbors(self, v: Sequence[int]) -> list[Vertex]:
        """Lattice neighbors of ``v`` inside the window, in DIRECTIONS order."""
        i = self.index(v)
        return [self.vertex(j) for j, _ in self.adjacency[i]]

    # -- sub-windows --------------------------------------------------------

    def is_subwindow(self, other: "SlabGeometry") -> bool:
        return (
            other.k == self.k
            and self.x0 <= other.x0
            and other.x1 <= self.x1
            and self.y0 <= other.y0
            and other.y1 <= self.y1
        )

    def edge_map_to(self, sub: "SlabGeometry") -> np.ndarray:
        """Ids in ``self`` of every edge of the sub-window ``sub`` (indexed by sub id)."""
        if not self.is_subwindow(sub):
            raise GeometryError(f"{sub} is not a sub-window of {self}")
        c = sub.coords[sub.edge_u]
        shifted = (
            ((c[:, 0] - self.x0) * self.ny + (c[:, 1] - self.y0)) * self.nz + c[:, 2]
        )
        return self._edge_table[shifted, sub.edge_dir]

    def vertex_map_to(self, sub: "SlabGeometry") -> np.ndarray:
        c = sub.coords
        return ((c[:, 0] - self.x0) * self.ny + (c[:, 1] - self.y0)) * self.nz + c[:, 2]

    # -- serialization ------------------------------------------------------

    def to_json(self) -> dict:
        return {"k": self.k, "window": [self.x0, self.x1, self.y0, self.y1]}

    @classmethod
    def from_json(cls, obj: dict | str) -> "SlabGeometry":
        if isinstance(obj, str):
            obj = json.loads(obj)
        x0, x1, y0, y1 = obj["window"]
        return cls(int(obj["k"]), x0, x1, y0, y1)


# -- regions ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Region:
    """Vertical cylinder ``S x [k]`` over a plane footprint, inside a geometry."""

    geometry: SlabGeometry
    kind: str
    footprint: frozenset
    center: tuple[int, int] | None = None
    radii: tuple[int, int] | None = None
    bounds: tuple[int, int, int, int] | None = None
    _mask: np.ndarray = field(default=None, repr=False)

    @cached_property
    def mask(self) -> np.ndarray:
        if self._mask is not None:
            return self._mask
        g = self.geometry
        plane = np.zeros((g.nx, g.ny), dtype=bool)
        for x, y in self.footprint:
            plane[x - g.x0, y - g.y0] = True
        m = np.repeat(plane.reshape(-1), g.nz)
        m.setflags(write=False)
        return m

    @cached_property
    def vertices(self) -> np.ndarray:
        return np.flatnonzero(self.mask)

    def __len__(self) -> int:
        return len(self.footprint) * self.geometry.nz

    def __contains__(self, v) -> bool:
        return (v[0], v[1]) in self.footprint and 0 <= v[2] <= self.geometry.k

    @cached_property
    def edge_mask(self) -> np.ndarray:
        """Edges with both endpoints in the region."""
        g = self.geometry
        return self.mask[g.edge_u] & self.mask[g.edge_v]

    @cached_property
    def faces(self) -> dict[str, np.ndarray]:
        """Vertex indices of the four vertical faces (rectangles only)."""
        if self.bounds is None:
            return {}
        x0, x1, y0, y1 = self.bounds
        c = self.geometry.coords
        m = self.mask
        return {
            "left": np.flatnonzero(m & (c[:, 0] == x0)),
            "right": np.flatnonzero(m & (c[:, 0] == x1)),
            "bottom": np.flatnonzero(m & (c[:, 1] == y0)),
            "top": np.flatnonzero(m & (c[:, 1] == y1)),
        }

    @cached_property
    def boundary(self) -> np.ndarray:
        """Vertex boundary: region vertices with a slab neighbor outside the region.

        Neighbors outside the geometry window count as outside.
        """
        g = self.geometry
        out = []
        fp = self.footprint
        for i in self.vertices:
            x, y, z = g.vertex(i)
            if any((x + dx, y + dy) not in fp for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1))):
                out.append(i)
        return np.asarray(out, dtype=np.int64)


def _check_footprint(g: SlabGeometry, pts) -> frozenset:
    pts = frozenset((int(x), int(y)) for x, y in pts)
    for x, y in pts:
        if not (g.x0 <= x <= g.x1 and g.y0 <= y <= g.y1):
            raise GeometryError(f"plane point {(x, y)} outside window {g.window}")
    return pts


def rectangle(g: SlabGeometry, x0: int, x1: int, y0: int, y1: int) -> Region:
    pts = [(x, y) for x in range(x0, x1 + 1) for y in range(y0, y1 + 1)]
    if not pts:
        raise GeometryError("empty rectangle")
    return Region(g, "rectangle", _check_footprint(g, pts), bounds=(x0, x1, y0, y1))


def box_footprint(n: int, center: tuple[int, int] = (0, 0)) -> frozenset:
    cx, cy = center
    return frozenset((x, y) for x in range(cx - n, cx + n + 1) for y in range(cy - n, cy + n + 1))


def annulus(g: SlabGeometry, n: int, m: int, center: tuple[int, int] = (0, 0)) -> Region:
    """The cylinder over ``B_m(center) minus B_n(center)`` (sup-norm in (n, m])."""
    if not 0 <= n < m:
        raise GeometryError(f"annulus needs 0 <= n < m, got n={n}, m={m}")
    pts = box_footprint(m, center) - box_footprint(n, center)
    return Region(g, "annulus", _check_footprint(g, pts), center=tuple(center), radii=(n, m))


def box_region(g: SlabGeometry, n: int, center: tuple[int, int] = (0, 0)) -> Region:
    cx, cy = center
    return rectangle(g, cx - n, cx + n, cy - n, cy + n)


def bar(g: SlabGeometry, S: Iterable) -> Region:
    """The vertical cylinder over a plane set (or over the projection of slab vertices)."""
    pts = {(int(p[0]), int(p[1])) for p in S}
    if not pts:
        raise GeometryError("empty plane set")
    fp = _check_footprint(g, pts)
    xs = [p[0] for p in fp]
    ys = [p[1] for p in fp]
    x0, x1, y0, y1 = min(xs), max(xs), min(ys), max(ys)
    if len(fp) == (x1 - x0 + 1) * (y1 - y0 + 1):
        return Region(g, "rectangle", fp, bounds=(x0, x1, y0, y1))
    return Region(g, "cylinder", fp)


def whole(g: SlabGeometry) -> Region:
    return rectangle(g, *g.window)


# -- distances --------------------------------------------------------------


def _points(a) -> list[tuple[int, int]]:
    if isinstance(a, Region):
        return list(a.footprint)
    if len(a) and isinstance(a[0], (int, np.integer)):
        return [(int(a[0]), int(a[1]))]
    return [(int(p[0]), int(p[1])) for p in a]


def dist_star(a, b) -> int:
    """Sup-norm distance between plane projections; minimum over pairs for sets."""
    pa, pb = _points(a), _points(b)
    if not pa or not pb:
        raise GeometryError("dist_star of an empty set")
    return min(max(abs(x - u), abs(y - w)) for x, y in pa for u, w in pb)


def sup_radius(v: Sequence[int], center: tuple[int, int] = (0, 0)) -> int:
    return max(abs(v[0] - center[0]), abs(v[1] - center[1]))


# -- paths and circuits -----------------------------------------------------


@dataclass(frozen=True)
class PathOrCircuit:
    """Vertex sequence; circuits repeat their first vertex at the end."""

    vertices: tuple = ()
    closed: bool = False
    canonical: bool = False

    def __post_init__(self):
        object.__setattr__(self, "vertices", tuple(Vertex(*map(int, v)) for v in self.vertices))

    def __bool__(self) -> bool:
        return bool(self.vertices)

    def __len__(self) -> int:
        return len(self.vertices)

    @property
    def representative(self) -> tuple:
        return self.vertices[:-1] if self.closed else self.vertices

    def edges(self) -> list[tuple[Vertex, Vertex]]:
        return list(zip(self.vertices[:-1], self.vertices[1:]))

    def is_valid(self) -> bool:
        vs = self.vertices
        if not vs:
            return True
        if any(not adjacent(a, b) for a, b in zip(vs[:-1], vs[1:])):
            return False
        body = self.representative
        if len(set(body)) != len(body):
            return False
        if self.closed:
            return len(vs) >= 4 and vs[0] == vs[-1]
        return True

    def key(self) -> tuple:
        return tuple(vertex_key(v) for v in self.representative)

    def to_json(self) -> list[list[int]]:
        return [list(v) for v in self.vertices]

    @classmethod
    def from_json(cls, obj, closed: bool | None = None) -> "PathOrCircuit":
        vs = [tuple(v) for v in obj]
        if closed is None:
            closed = len(vs) > 1 and vs[0] == vs[-1]
        if closed:
            return canonical_circuit(vs)
        return cls(tuple(vs))


def canonical_circuit(vertices: Sequence) -> PathOrCircuit:
    """Normalize a cyclic vertex sequence (closing repetition optional).

    The representative starts at the smallest vertex and runs in the direction
    whose second vertex is the smaller of the two neighbors.
    """
    vs = [Vertex(*map(int, v)) for v in vertices]
    if len(vs) > 1 and vs[0] == vs[-1]:
        vs = vs[:-1]
    if len(vs) < 3:
        raise GeometryError("a circuit needs at least three distinct vertices")
    i = min(range(len(vs)), key=lambda j: vertex_key(vs[j]))
    rot = vs[i:] + vs[:i]
    if vertex_key(rot[-1]) < vertex_key(rot[1]):
        rot = [rot[0]] + rot[:0:-1]
    return PathOrCircuit(tuple(rot) + (rot[0],), closed=True, canonical=True)


def path_less(p: PathOrCircuit, q: PathOrCircuit) -> bool:
    """Lexicographic order on vertex sequences; a strict prefix is smaller."""
    if p.closed != q.closed:
        raise GeometryError("cannot compare a path with a circuit")
    if p.closed:
        if not p.canonical:
            p = canonical_circuit(p.vertices)
        if not q.canonical:
            q = canonical_circuit(q.vertices)
    return p.key() < q.key()
