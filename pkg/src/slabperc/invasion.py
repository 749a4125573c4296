"""Invasion percolation, minimal spanning trees and forests on slab windows."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .connectivity import UnionFind
from .geometry import GeometryError, SlabGeometry, Vertex
from .labels import LabelField

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None


@dataclass(frozen=True)
class StopRule:
    """``exhaust`` the window, stop on ``hit-boundary`` of the sup-norm box of radius ``n``,
    or after a ``steps`` budget of ``n`` invaded edges."""

    kind: str = "exhaust"
    n: int = 0
    center: tuple[int, int] = (0, 0)

    def __post_init__(self):
        if self.kind not in ("exhaust", "hit-boundary", "steps"):
            raise ValueError(f"unknown stop rule {self.kind!r}")
        if self.kind != "exhaust" and self.n < 0:
            raise ValueError("stop radius / budget must be nonnegative")

    @classmethod
    def exhaust(cls) -> "StopRule":
        return cls("exhaust")

    @classmethod
    def hit_boundary(cls, n: int, center: tuple[int, int] = (0, 0)) -> "StopRule":
        return cls("hit-boundary", n, center)

    @classmethod
    def steps(cls, n: int) -> "StopRule":
        return cls("steps", n)


@lru_cache(maxsize=16)
def _csr(g: SlabGeometry):
    """Incidence lists as CSR arrays: neighbors and edge ids of every vertex."""
    u, v = g.edge_u, g.edge_v
    src = np.concatenate([u, v])
    dst = np.concatenate([v, u])
    eid = np.concatenate([np.arange(len(u)), np.arange(len(u))])
    order = np.lexsort((dst, src))
    src, dst, eid = src[order], dst[order], eid[order]
    indptr = np.zeros(g.num_vertices + 1, dtype=np.int64)
    np.add.at(indptr, src + 1, 1)
    return np.cumsum(indptr), dst.astype(np.int64), eid.astype(np.int64)


# -- binary heap keyed by (label, edge id) --------------------------------------


def _heap_push(hk, he, size, key, e):
    i = size
    hk[i] = key
    he[i] = e
    while i > 0:
        p = (i - 1) // 2
        if hk[p] < hk[i] or (hk[p] == hk[i] and he[p] < he[i]):
            break
        hk[p], hk[i] = hk[i], hk[p]
        he[p], he[i] = he[i], he[p]
        i = p
    return size + 1


def _heap_pop(hk, he, size):
    e = he[0]
    size -= 1
    hk[0] = hk[size]
    he[0] = he[size]
    i = 0
    while True:
        a = 2 * i + 1
        if a >= size:
            break
        b = a + 1
        c = a
        if b < size and (hk[b] < hk[a] or (hk[b] == hk[a] and he[b] < he[a])):
            c = b
        if hk[i] < hk[c] or (hk[i] == hk[c] and he[i] < he[c]):
            break
        hk[c], hk[i] = hk[i], hk[c]
        he[c], he[i] = he[i], he[c]
        i = c
    return e, size


def _invade_py(labels, eu, ev, indptr, nbr, eid, radius, start, kind, limit):
    """Core loop.  kind 0 = exhaust, 1 = stop on radius >= limit, 2 = stop after limit edges.

    Returns (edge order, vertex order, per-edge 'added a vertex' flag, stopped by the rule).
    """
    nv = len(indptr) - 1
    ne = len(labels)
    hk = np.empty(ne, dtype=np.float64)
    he = np.empty(ne, dtype=np.int64)
    pushed = np.zeros(ne, dtype=np.bool_)
    invaded = np.zeros(nv, dtype=np.bool_)
    edges = np.empty(ne, dtype=np.int64)
    adds = np.zeros(ne, dtype=np.bool_)
    verts = np.empty(nv, dtype=np.int64)
    verts[0] = start
    invaded[start] = True
    nverts = 1
    nedges = 0
    if (kind == 1 and radius[start] >= limit) or (kind == 2 and limit == 0):
        return edges[:0], verts[:1], adds[:0], True
    size = 0
    for j in range(indptr[start], indptr[start + 1]):
        e = eid[j]
        pushed[e] = True
        size = _heap_push(hk, he, size, labels[e], e)
    while size > 0:
        e, size = _heap_pop(hk, he, size)
        edges[nedges] = e
        nedges += 1
        new = -1
        if not invaded[eu[e]]:
            new = eu[e]
        elif not invaded[ev[e]]:
            new = ev[e]
        if new >= 0:
            adds[nedges - 1] = True
            invaded[new] = True
            verts[nverts] = new
            nverts += 1
            for j in range(indptr[new], indptr[new + 1]):
                f = eid[j]
                if not pushed[f]:
                    pushed[f] = True
                    size = _heap_push(hk, he, size, labels[f], f)
            if kind == 1 and radius[new] >= limit:
                return edges[:nedges], verts[:nverts], adds[:nedges], True
        if kind == 2 and nedges >= limit:
            return edges[:nedges], verts[:nverts], adds[:nedges], True
    return edges[:nedges], verts[:nverts], adds[:nedges], False


if numba is not None:
    _heap_push = numba.njit(cache=True)(_heap_push)
    _heap_pop = numba.njit(cache=True)(_heap_pop)
    _invade_kernel = numba.njit(cache=True)(_invade_py)
else:  # pragma: no cover
    _invade_kernel = _invade_py


@dataclass(frozen=True, eq=False)
class InvasionState:
    """A finished (or stopped) invasion.

    ``edges`` lists invaded edge ids in invasion order (the cluster), ``adds``
    flags those that brought in a new vertex (the tree), ``vertices`` lists
    vertex indices in the order they joined.
    """

    field: LabelField
    start: Vertex
    edges: np.ndarray
    adds: np.ndarray
    vertices: np.ndarray
    stop: StopRule
    stop_reason: str

    @property
    def geometry(self) -> SlabGeometry:
        return self.field.geometry

    @property
    def steps(self) -> int:
        return len(self.edges)

    def tree_edges(self) -> np.ndarray:
        return self.edges[self.adds]

    def vertex_set(self) -> set[int]:
        return set(self.vertices.tolist())

    def contains(self, v: Sequence[int]) -> bool:
        g = self.geometry
        return g.contains(v) and g.index(v) in self.vertex_set()

    def invasion_times(self) -> np.ndarray:
        """Step (number of invaded edges) at which every vertex joined; -1 if never."""
        t = np.full(self.geometry.num_vertices, -1, dtype=np.int64)
        t[self.vertices[0]] = 0
        steps = np.flatnonzero(self.adds) + 1
        t[self.vertices[1:]] = steps
        return t

    def labels(self) -> np.ndarray:
        return self.field.labels[self.edges]

    def to_csv(self) -> str:
        g = self.geometry
        lab = self.labels()
        running = np.maximum.accumulate(lab) if len(lab) else lab
        record = np.ones(len(lab), dtype=bool)
        if len(lab) > 1:
            record[1:] = lab[1:] > running[:-1]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "u", "v", "label", "is_tree_edge", "record_flag"])
        for i, e in enumerate(self.edges.tolist()):
            a, b = g.edge_vertices(e)
            w.writerow([i + 1, "%d %d %d" % a, "%d %d %d" % b, repr(float(lab[i])),
                        int(self.adds[i]), int(record[i])])
        return buf.getvalue()


def _radius_array(g: SlabGeometry, center: tuple[int, int]) -> np.ndarray:
    c = g.coords
    return np.maximum(np.abs(c[:, 0] - center[0]), np.abs(c[:, 1] - center[1]))


def invade(field: LabelField, start: Sequence[int], stop: StopRule | None = None) -> InvasionState:
    """Grow the invasion cluster of ``start``: always take the smallest-label frontier edge.

    Frontier edges are all edges touching the cluster that are not yet in it, so
    edges closing a cycle are invaded too (they belong to the cluster but not to
    the tree).  Ties in label are broken by edge id.
    """
    g = field.geometry
    stop = stop or StopRule.exhaust()
    s = g.index(start)
    indptr, nbr, eid = _csr(g)
    kind = {"exhaust": 0, "hit-boundary": 1, "steps": 2}[stop.kind]
    radius = _radius_array(g, stop.center) if kind == 1 else np.zeros(g.num_vertices, dtype=np.int64)
    edges, verts, adds, stopped = _invade_kernel(
        field.labels, g.edge_u, g.edge_v, indptr, nbr, eid, radius, s, kind, int(stop.n)
    )
    reason = stop.kind if stopped else "exhausted"
    return InvasionState(field, g.vertex(s), edges.copy(), adds.copy(), verts.copy(), stop, reason)


def record_values(state: InvasionState) -> list[tuple[int, float]]:
    """(step, label) for every invaded edge whose label exceeds all earlier ones."""
    out = []
    best = -np.inf
    for i, x in enumerate(state.labels().tolist()):
        if x > best:
            out.append((i + 1, x))
            best = x
    return out


# -- spanning trees and forests -------------------------------------------------


@dataclass(frozen=True, eq=False)
class ForestEdgeSet:
    geometry: SlabGeometry
    edges: frozenset
    flavor: str  # mst | free-window | wired-window
    window: tuple | None = None

    def __len__(self) -> int:
        return len(self.edges)

    def __contains__(self, e) -> bool:
        return e in self.edges

    def to_json(self) -> str:
        g = self.geometry
        return json.dumps(
            {
                "geometry": g.to_json(),
                "flavor": self.flavor,
                "window": list(self.window) if self.window else None,
                "edges": [[list(a), list(b)] for a, b in map(g.edge_vertices, sorted(self.edges))],
            }
        )


def _kruskal(n_vertices: int, us, vs, order) -> list[int]:
    uf = UnionFind(n_vertices)
    chosen = []
    for e in order:
        if uf.union(us[e], vs[e]):
            chosen.append(e)
    return chosen


def kruskal_mst(field: LabelField) -> ForestEdgeSet:
    """Minimal spanning tree under the (label, edge id) order; a spanning forest if disconnected."""
    g = field.geometry
    order = field.edge_order().tolist()
    chosen = _kruskal(g.num_vertices, g.edge_u.tolist(), g.edge_v.tolist(), order)
    return ForestEdgeSet(g, frozenset(chosen), "mst", g.window)


def msf_window(field: LabelField, n: int, flavor: str = "free", center=(0, 0)) -> ForestEdgeSet:
    """MST of the box ``B_n(center)`` with free or wired (outside glued to one vertex) boundary.

    Edge ids refer to ``field.geometry``.  The wired tree includes the real edges
    leaving the box, which attach it to the glued outside vertex.
    """
    g = field.geometry
    cx, cy = center
    inner = SlabGeometry(g.k, cx - n, cx + n, cy - n, cy + n)
    if flavor == "free":
        if not g.is_subwindow(inner):
            raise GeometryError(f"box of radius {n} does not fit in {g.window}")
        ids = g.edge_map_to(inner)
        sub = field.labels[ids]
        order = np.lexsort((ids, sub))
        chosen = _kruskal(inner.num_vertices, inner.edge_u.tolist(), inner.edge_v.tolist(), order.tolist())
        return ForestEdgeSet(g, frozenset(int(ids[e]) for e in chosen), "free-window", inner.window)
    if flavor != "wired":
        raise ValueError(f"unknown flavor {flavor!r}")
    strict = SlabGeometry(g.k, cx - n - 1, cx + n + 1, cy - n - 1, cy + n + 1)
    if not g.is_subwindow(strict):
        raise GeometryError(f"wired box of radius {n} needs the geometry to extend one step beyond it")
    c = g.coords
    inside = (np.abs(c[:, 0] - cx) <= n) & (np.abs(c[:, 1] - cy) <= n)
    touch = inside[g.edge_u] | inside[g.edge_v]
    ids = np.flatnonzero(touch)
    outside_vertex = g.num_vertices  # the glued vertex
    us = np.where(inside[g.edge_u[ids]], g.edge_u[ids], outside_vertex)
    vs = np.where(inside[g.edge_v[ids]], g.edge_v[ids], outside_vertex)
    order = np.lexsort((ids, field.labels[ids]))
    chosen = _kruskal(g.num_vertices + 1, us.tolist(), vs.tolist(), order.tolist())
    return ForestEdgeSet(g, frozenset(int(ids[e]) for e in chosen), "wired-window", inner.window)


def _core_mask(g: SlabGeometry, core: int) -> np.ndarray:
    c = g.coords
    inside = np.maximum(np.abs(c[:, 0]), np.abs(c[:, 1])) <= core
    return inside[g.edge_u] & inside[g.edge_v]


def window_stability(field: LabelField, radii: Sequence[int], core: int, flavor: str = "free") -> list[float]:
    """Agreement of consecutive window forests on the edges inside ``B_core``.

    A heuristic finite-scale probe of the windows converging: for each pair of
    consecutive radii, the fraction of core edges with the same in/out status.
    """
    g = field.geometry
    mask = _core_mask(g, core)
    core_ids = np.flatnonzero(mask)
    status = []
    for n in radii:
        if n < core:
            raise GeometryError("every window must contain the core")
        chosen = np.zeros(g.num_edges, dtype=bool)
        chosen[list(msf_window(field, n, flavor).edges)] = True
        status.append(chosen[core_ids])
    return [float(np.mean(a == b)) for a, b in zip(status[:-1], status[1:])]


def invasion_union_agreement(field: LabelField, n: int, core: int) -> float:
    """Fraction of core edges on which the union of stopped invasion trees and the wired tree agree.

    Heuristic only: the union-of-invasion-trees identity for the wired forest
    holds in infinite volume, and no finite-window form of it is claimed.
    """
    g = field.geometry
    mask = _core_mask(g, core)
    c = g.coords
    starts = np.flatnonzero(np.maximum(np.abs(c[:, 0]), np.abs(c[:, 1])) <= core)
    union = np.zeros(g.num_edges, dtype=bool)
    for v in starts.tolist():
        union[invade(field, g.vertex(v), StopRule.hit_boundary(n)).tree_edges()] = True
    wired = np.zeros(g.num_edges, dtype=bool)
    wired[list(msf_window(field, n, "wired").edges)] = True
    return float(np.mean(union[mask] == wired[mask]))


# -- two invasions ----------------------------------------------------------------


@dataclass(frozen=True)
class Intersection:
    hit: bool
    vertex: Vertex | None


def intersect_invasions(field: LabelField, a: Sequence[int], b: Sequence[int], N: int) -> Intersection:
    """Do the invasions from ``a`` and ``b``, each stopped on reaching radius ``N``, meet?

    The reported vertex is the first common one in ``a``'s invasion order.
    """
    g = field.geometry
    if not g.is_subwindow(SlabGeometry(g.k, -N, N, -N, N)):
        raise GeometryError(f"geometry {g.window} does not contain the box of radius {N}")
    ia = invade(field, a, StopRule.hit_boundary(N))
    ib = invade(field, b, StopRule.hit_boundary(N))
    other = ib.vertex_set()
    for v in ia.vertices.tolist():
        if v in other:
            return Intersection(True, g.vertex(v))
    return Intersection(False, None)


def first_hit_steps(state: InvasionState, radii: Sequence[int], center=(0, 0)) -> np.ndarray:
    """Step at which ``state`` first invaded a vertex at sup-radius >= r, per r (-1 if never)."""
    g = state.geometry
    rad = _radius_array(g, center)[state.vertices]
    t = state.invasion_times()[state.vertices]
    best = np.maximum.accumulate(rad)
    out = np.full(len(radii), -1, dtype=np.int64)
    for i, r in enumerate(radii):
        j = np.searchsorted(best, r)  # best is non-decreasing
        if j < len(best):
            out[i] = t[j]
    return out


def intersection_profile(field: LabelField, a, b, radii: Sequence[int]) -> np.ndarray:
    """For each N in ``radii``, whether the invasions from ``a`` and ``b`` stopped at N meet.

    One unstopped-to-max(radii) invasion per start suffices: the invasion stopped
    at N is the prefix of the longer one up to its first visit at radius N.
    """
    radii = list(radii)
    nmax = max(radii)
    ia = invade(field, a, StopRule.hit_boundary(nmax))
    ib = invade(field, b, StopRule.hit_boundary(nmax))
    ta, tb = ia.invasion_times(), ib.invasion_times()
    ha, hb = first_hit_steps(ia, radii), first_hit_steps(ib, radii)
    both = (ta >= 0) & (tb >= 0)
    out = np.zeros(len(radii), dtype=bool)
    ta_b, tb_b = ta[both], tb[both]
    for i in range(len(radii)):
        if ha[i] < 0 or hb[i] < 0:
            raise GeometryError(f"invasion never reached radius {radii[i]}")
        out[i] = bool(np.any((ta_b <= ha[i]) & (tb_b <= hb[i])))
    return out
