"""Open clusters, crossing events, minimal open paths and surrounding circuits."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

from .geometry import (
    GeometryError,
    PathOrCircuit,
    Region,
    SlabGeometry,
    canonical_circuit,
    vertex_key,
    whole,
)
from .labels import BondConfig


class UnionFind:
    """Disjoint sets over ``0..n-1`` with path halving and union by size."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n
        self.components = n

    def find(self, a: int) -> int:
        parent = self.parent
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        self.components -= 1
        return True


def _components_py(n, u, v, keep):
    parent = np.arange(n)
    for i in range(len(u)):
        if not keep[i]:
            continue
        a = u[i]
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        b = v[i]
        while parent[b] != b:
            parent[b] = parent[parent[b]]
            b = parent[b]
        if a != b:
            if a < b:
                parent[b] = a
            else:
                parent[a] = b
    # number roots in order of their smallest vertex
    out = np.empty(n, dtype=np.int64)
    ids = np.full(n, -1, dtype=np.int64)
    nxt = 0
    for i in range(n):
        r = i
        while parent[r] != r:
            r = parent[r]
        if ids[r] < 0:
            ids[r] = nxt
            nxt += 1
        out[i] = ids[r]
    return out


_components = numba.njit(cache=True)(_components_py) if numba is not None else _components_py


def component_labels(g: SlabGeometry, open_mask: np.ndarray, vertex_mask=None) -> np.ndarray:
    """Component id per vertex of the open subgraph; -1 outside ``vertex_mask``.

    Ids are numbered by the smallest vertex of each component.
    """
    keep = open_mask
    if vertex_mask is not None:
        keep = keep & vertex_mask[g.edge_u] & vertex_mask[g.edge_v]
    labels = _components(g.num_vertices, g.edge_u, g.edge_v, np.ascontiguousarray(keep))
    if vertex_mask is not None:
        labels = np.where(vertex_mask, labels, -1)
    return labels


def _as_indices(g: SlabGeometry, vs) -> np.ndarray:
    if isinstance(vs, Region):
        return vs.vertices
    if isinstance(vs, np.ndarray) and vs.ndim == 1:
        return vs.astype(np.int64)
    vs = list(vs)
    if not vs:
        return np.zeros(0, dtype=np.int64)
    if isinstance(vs[0], (int, np.integer)):
        return np.asarray(vs, dtype=np.int64)
    return np.asarray([g.index(v) for v in vs], dtype=np.int64)


@dataclass(frozen=True, eq=False)
class ClusterPartition:
    geometry: SlabGeometry
    component: np.ndarray  # -1 for vertices outside the region
    sizes: dict

    def same(self, a, b) -> bool:
        g = self.geometry
        ca, cb = self.component[g.index(a)], self.component[g.index(b)]
        return ca >= 0 and ca == cb

    def cluster_of(self, v) -> np.ndarray:
        c = self.component[self.geometry.index(v)]
        return np.flatnonzero(self.component == c) if c >= 0 else np.zeros(0, dtype=np.int64)

    @property
    def count(self) -> int:
        return len(self.sizes)


def clusters(c: BondConfig, region: Region | None = None) -> ClusterPartition:
    g = c.geometry
    region = region or whole(g)
    labels = component_labels(g, c.open, region.mask)
    ids, counts = np.unique(labels[labels >= 0], return_counts=True)
    return ClusterPartition(g, labels, dict(zip(ids.tolist(), counts.tolist())))


@dataclass(frozen=True, eq=False)
class CrossingQuery:
    """Event ``A <-> B`` through open edges with both endpoints in ``region``."""

    region: Region
    source: object
    target: object

    @classmethod
    def horizontal(cls, region: Region) -> "CrossingQuery":
        f = region.faces
        return cls(region, f["left"], f["right"])

    @classmethod
    def vertical(cls, region: Region) -> "CrossingQuery":
        f = region.faces
        return cls(region, f["bottom"], f["top"])


def crossing(c: BondConfig, q: CrossingQuery) -> bool:
    g = c.geometry
    A = _as_indices(g, q.source)
    B = _as_indices(g, q.target)
    m = q.region.mask
    A, B = A[m[A]], B[m[B]]
    if not len(A) or not len(B):
        return False
    labels = component_labels(g, c.open, m)
    return bool(np.intersect1d(labels[A], labels[B]).size)


# -- lexicographically minimal open paths -------------------------------------


def _open_adjacency(c: BondConfig, mask: np.ndarray) -> dict[int, list[int]]:
    g = c.geometry
    keep = c.open & mask[g.edge_u] & mask[g.edge_v]
    adj: dict[int, list[int]] = {}
    for u, v in zip(g.edge_u[keep].tolist(), g.edge_v[keep].tolist()):
        adj.setdefault(u, []).append(v)
        adj.setdefault(v, []).append(u)
    keys = _key_table(g)
    for nbrs in adj.values():
        nbrs.sort(key=keys.__getitem__)
    return adj


@lru_cache(maxsize=32)
def _key_table(g: SlabGeometry) -> list:
    return [vertex_key(v) for v in g.coords.tolist()]


def _reaches(adj, start: int, targets: set, blocked: set) -> bool:
    if start in targets:
        return True
    seen = {start}
    todo = [start]
    while todo:
        a = todo.pop()
        for b in adj.get(a, ()):
            if b in seen or b in blocked:
                continue
            if b in targets:
                return True
            seen.add(b)
            todo.append(b)
    return False


def min_open_path(c: BondConfig, S: Region | None, A, B) -> PathOrCircuit:
    """The smallest open self-avoiding path in ``S`` from ``A`` to ``B``.

    Built greedily: a prefix is extended by its smallest neighbor from which
    ``B`` is still reachable while avoiding the prefix.  That reachability is
    exact for simple paths (any walk avoiding the prefix contains one), so the
    greedy choice never needs to backtrack.
    """
    g = c.geometry
    S = S or whole(g)
    mask = S.mask
    keys = _key_table(g)
    A = [int(a) for a in _as_indices(g, A) if mask[a]]
    targets = {int(b) for b in _as_indices(g, B) if mask[b]}
    if not A or not targets:
        return PathOrCircuit()
    adj = _open_adjacency(c, mask)
    for a in sorted(set(A), key=keys.__getitem__):
        if not _reaches(adj, a, targets, set()):
            continue
        path = [a]
        used = {a}
        while path[-1] not in targets:
            for u in adj[path[-1]]:
                if u not in used and _reaches(adj, u, targets, used):
                    path.append(u)
                    used.add(u)
                    break
            else:  # pragma: no cover - excluded by the reachability argument
                raise AssertionError("greedy extension lost reachability")
        return PathOrCircuit(tuple(g.vertex(i) for i in path))
    return PathOrCircuit()


# -- winding and surrounding circuits ---------------------------------------


def cut_signs(g: SlabGeometry, center: tuple[int, int] = (0, 0)) -> np.ndarray:
    """Signed crossing of each edge (traversed u -> v) with the cut ray.

    The ray leaves the center along +x between rows ``cy-1`` and ``cy``; an
    edge stepping upward across it counts +1.  Summing along a closed walk
    that avoids the center column gives its winding number.
    """
    cx, cy = center
    cu = g.coords[g.edge_u]
    s = (g.edge_dir == 1) & (cu[:, 1] == cy - 1) & (cu[:, 0] > cx)
    return s.astype(np.int8)


def _annulus_check(ann: Region) -> None:
    if ann.kind != "annulus":
        raise GeometryError(f"expected an annulus region, got {ann.kind!r}")


def winding_clusters(c: BondConfig, ann: Region) -> set[int]:
    """Ids (in ``clusters(c, ann)``) of open clusters holding a nonzero-winding cycle.

    Potentials are constant on the pieces left after removing the cut edges,
    so the potential propagation runs on the small graph of pieces.
    """
    _annulus_check(ann)
    g = c.geometry
    sign = cut_signs(g, ann.center)
    inside = c.open & ann.edge_mask
    pieces = component_labels(g, inside & (sign == 0), ann.mask)
    full = component_labels(g, inside, ann.mask)
    cut = np.flatnonzero(inside & (sign != 0))
    links: dict[int, list[tuple[int, int]]] = {}
    for e in cut.tolist():
        a, b = int(pieces[g.edge_u[e]]), int(pieces[g.edge_v[e]])
        s = int(sign[e])
        links.setdefault(a, []).append((b, s))
        links.setdefault(b, []).append((a, -s))
    potential: dict[int, int] = {}
    bad: set[int] = set()
    for root in links:
        if root in potential:
            continue
        potential[root] = 0
        todo = [root]
        conflict = False
        while todo:
            a = todo.pop()
            for b, s in links[a]:
                want = potential[a] + s
                if b not in potential:
                    potential[b] = want
                    todo.append(b)
                elif potential[b] != want:
                    conflict = True
        if conflict:
            rep = np.flatnonzero(pieces == root)[0]
            bad.add(int(full[rep]))
    return bad


def has_surrounding_circuit(c: BondConfig, ann: Region) -> bool:
    """True iff some open cluster in ``ann`` has a cycle winding around its center."""
    return bool(winding_clusters(c, ann))


def _signed_adjacency(c: BondConfig, ann: Region, keep_vertices: np.ndarray):
    g = c.geometry
    sign = cut_signs(g, ann.center)
    mask = np.zeros(g.num_vertices, dtype=bool)
    mask[keep_vertices] = True
    keep = c.open & mask[g.edge_u] & mask[g.edge_v]
    adj: dict[int, list[tuple[int, int]]] = {}
    for u, v, s in zip(g.edge_u[keep].tolist(), g.edge_v[keep].tolist(), sign[keep].tolist()):
        adj.setdefault(u, []).append((v, s))
        adj.setdefault(v, []).append((u, -s))
    keys = _key_table(g)
    for nbrs in adj.values():
        nbrs.sort(key=lambda t: keys[t[0]])
    ncut = int(np.count_nonzero(keep & (sign != 0)))
    return adj, ncut


class _CircuitSearch:
    """Depth-first search for the smallest circuit through a fixed first vertex.

    Children are visited in increasing vertex order and closing the circuit is
    tried before extending it, so the first circuit found is the smallest one
    starting at ``v1``.  Branches are pruned when the covering graph that
    tracks the running winding cannot reach ``v1`` with nonzero winding.
    """

    def __init__(self, adj, keys, v1: int, allowed: set, bound: int):
        self.adj = adj
        self.keys = keys
        self.v1 = v1
        self.allowed = allowed
        self.bound = bound
        # sign of the closing step u -> v1
        self.closers = {u: -s for u, s in adj.get(v1, ()) if u in allowed}

    def _can_finish(self, start: int, wind: int, used: set, v2key) -> bool:
        adj, keys, closers, allowed = self.adj, self.keys, self.closers, self.allowed
        bound = self.bound
        seen = {(start, wind)}
        todo = [(start, wind)]
        while todo:
            a, w = todo.pop()
            s = closers.get(a)
            if s is not None and w + s != 0 and keys[a] > v2key:
                return True
            for b, t in adj[a]:
                if b in used or b not in allowed:
                    continue
                st = (b, w + t)
                if abs(w + t) > bound or st in seen:
                    continue
                seen.add(st)
                todo.append(st)
        return False

    def run(self) -> list[int] | None:
        adj, keys, v1 = self.adj, self.keys, self.v1
        path = [v1]
        winds = [0]
        used = {v1}
        frames = [iter(adj.get(v1, ()))]
        while frames:
            step = None
            for u, s in frames[-1]:
                if u in used or u not in self.allowed:
                    continue
                v2key = keys[path[1]] if len(path) > 1 else keys[u]
                w = winds[-1] + s
                if self._closes(u, w, path, v2key):
                    return path + [u]
                used.add(u)
                if self._can_finish(u, w, used, v2key):
                    step = (u, w)
                    break
                used.discard(u)
            if step is None:
                frames.pop()
                used.discard(path.pop())
                winds.pop()
                continue
            path.append(step[0])
            winds.append(step[1])
            frames.append(iter(adj[step[0]]))
        return None

    def _closes(self, u: int, w: int, prefix: list, v2key) -> bool:
        # prefix excludes u; the circuit would be prefix + [u] + [v1]
        if len(prefix) < 2:
            return False
        s = self.closers.get(u)
        return s is not None and w + s != 0 and self.keys[u] > v2key


def min_surrounding_circuit(c: BondConfig, ann: Region) -> PathOrCircuit:
    """The smallest open circuit in ``ann`` with nonzero winding about its center.

    Circuits are compared through their canonical representatives.  The
    smallest one starts at the smallest vertex lying on any such circuit, so
    first vertices are tried in increasing order.
    """
    _annulus_check(ann)
    g = c.geometry
    bad = winding_clusters(c, ann)
    if not bad:
        return PathOrCircuit()
    labels = component_labels(g, c.open, ann.mask)
    candidates = np.flatnonzero(np.isin(labels, list(bad)))
    adj, ncut = _signed_adjacency(c, ann, candidates)
    keys = _key_table(g)
    order = sorted(candidates.tolist(), key=keys.__getitem__)
    allowed = set(order)
    for v1 in order:
        allowed.discard(v1)
        if len(adj.get(v1, ())) < 2:
            continue
        found = _CircuitSearch(adj, keys, v1, allowed, ncut).run()
        if found is not None:
            return canonical_circuit([g.vertex(i) for i in found])
    return PathOrCircuit()  # pragma: no cover - a winding cluster always has a circuit


def winding_of(vertices: Sequence, center: tuple[int, int] = (0, 0)) -> int:
    """Winding number about ``center`` of a closed lattice walk (closing step implied)."""
    vs = [tuple(v) for v in vertices]
    if len(vs) > 1 and vs[0] == vs[-1]:
        vs = vs[:-1]
    cx, cy = center
    total = 0
    for a, b in zip(vs, vs[1:] + vs[:1]):
        if a[0] == b[0] and a[0] > cx and {a[1], b[1]} == {cy - 1, cy}:
            total += 1 if b[1] == cy else -1
    return total


def is_open_path(c: BondConfig, vertices: Iterable) -> bool:
    g = c.geometry
    vs = list(vertices)
    return all(c.open[g.edge_id(a, b)] for a, b in zip(vs[:-1], vs[1:]))
