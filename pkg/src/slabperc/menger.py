"""Three vertex-disjoint paths inside a quadrant ball of the slab.

The setting: ``L`` is the quadrant slab ``Z_+^2 x [k]`` with the two corner
points ``(0,0,0)`` and ``(0,0,k)`` removed, ``U = B_s(z) x [k]`` intersected
with ``L``, and the boundary of ``U`` is taken inside the graph ``L``: the
vertices of ``U`` having an ``L``-neighbor outside ``U``.  For three neighbors ``u, v, w`` of ``z`` and three
boundary targets we ask for vertex-disjoint paths ``u -> u'``, ``v -> v'``,
``w -> w'`` avoiding ``z``.

Deciding a pinned 3-linkage is done in two layers.  A cheap routing heuristic
(sequential breadth-first routing in every pair order) produces witnesses for
almost every instance; whatever it cannot settle goes to an exhaustive
depth-first search, pruned by a vertex-disjoint flow bound.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import networkx as nx

from .geometry import GeometryError, SlabGeometry, Vertex

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None


def in_quadrant(v: Sequence[int], k: int) -> bool:
    x, y, z = v
    if x < 0 or y < 0 or not 0 <= z <= k:
        return False
    return not (x == 0 and y == 0 and z in (0, k))


@dataclass(frozen=True)
class QuadrantBall:
    """``B_s(z) x [k]`` intersected with the quadrant slab, as a small indexed graph."""

    k: int
    s: int
    center: Vertex
    nodes: tuple = field(repr=False)
    index: dict = field(repr=False)
    adj: np.ndarray = field(repr=False)  # (N, 6), -1 padded
    boundary: frozenset = field(repr=False)

    @classmethod
    def build(cls, k: int, s: int, z: Sequence[int]) -> "QuadrantBall":
        z = Vertex(*map(int, z))
        if not in_quadrant(z, k):
            raise GeometryError(f"{tuple(z)} is not in the quadrant slab (k={k})")
        pts = [
            Vertex(x, y, h)
            for x in range(z.x - s, z.x + s + 1)
            for y in range(z.y - s, z.y + s + 1)
            for h in range(k + 1)
            if in_quadrant((x, y, h), k)
        ]
        index = {v: i for i, v in enumerate(pts)}
        adj = np.full((len(pts), 6), -1, dtype=np.int64)
        boundary = set()
        for i, v in enumerate(pts):
            j = 0
            for dx, dy, dz in ((1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)):
                nb = (v.x + dx, v.y + dy, v.z + dz)
                if not 0 <= nb[2] <= k:
                    continue
                if nb in index:
                    adj[i, j] = index[nb]
                    j += 1
                elif in_quadrant(nb, k):
                    # boundary relative to the graph L: an L-neighbor outside the ball
                    boundary.add(v)
        return cls(k, s, z, tuple(pts), index, adj, frozenset(boundary))

    def neighbors_of_center(self) -> list[Vertex]:
        i = self.index[self.center]
        return [self.nodes[j] for j in self.adj[i] if j >= 0]

    def targets(self) -> list[Vertex]:
        """Boundary vertices other than the center, in increasing index order."""
        return [v for v in self.nodes if v in self.boundary and v != self.center]


# -- routing kernels -----------------------------------------------------------


def _route_py(adj, blocked, src, dst, parent, queue):
    """Breadth-first path src -> dst through unblocked vertices; marks it blocked."""
    n = adj.shape[0]
    for i in range(n):
        parent[i] = -2
    parent[src] = -1
    head = 0
    tail = 0
    queue[tail] = src
    tail += 1
    found = src == dst
    while head < tail and not found:
        a = queue[head]
        head += 1
        for j in range(adj.shape[1]):
            b = adj[a, j]
            if b < 0:
                break
            if parent[b] != -2:
                continue
            if b == dst:
                parent[b] = a
                found = True
                break
            if blocked[b]:
                continue
            parent[b] = a
            queue[tail] = b
            tail += 1
    if not found:
        return False
    v = dst
    while v != -1:
        blocked[v] = True
        v = parent[v]
    return True


_ORDERS = np.array(list(itertools.permutations(range(3))), dtype=np.int64)


def _heuristic_py(adj, radj, center, srcs, dsts, blocked, parent, queue):
    """Sequential routing in all six pair orders, on both neighbor orders."""
    n = adj.shape[0]
    for variant in range(2):
        a = adj if variant == 0 else radj
        for o in range(6):
            for i in range(n):
                blocked[i] = False
            blocked[center] = True
            for t in range(3):
                blocked[srcs[t]] = True
                blocked[dsts[t]] = True
            ok = True
            for t in range(3):
                q = _ORDERS[o, t]
                # release this pair's own endpoints, route, the path stays blocked
                blocked[dsts[q]] = False
                if not _route(a, blocked, srcs[q], dsts[q], parent, queue):
                    ok = False
                    break
            if ok:
                return True
    return False


def _sweep_py(adj, radj, center, nbrs, targets, out, max_out):
    """All triples of center neighbors x ordered target triples; returns (#instances, #fails)."""
    n = adj.shape[0]
    blocked = np.zeros(n, dtype=np.bool_)
    parent = np.zeros(n, dtype=np.int64)
    queue = np.zeros(n, dtype=np.int64)
    srcs = np.zeros(3, dtype=np.int64)
    dsts = np.zeros(3, dtype=np.int64)
    d = len(nbrs)
    m = len(targets)
    count = 0
    fails = 0
    for i0 in range(d):
        for i1 in range(i0 + 1, d):
            for i2 in range(i1 + 1, d):
                srcs[0] = nbrs[i0]
                srcs[1] = nbrs[i1]
                srcs[2] = nbrs[i2]
                for j0 in range(m):
                    t0 = targets[j0]
                    if t0 == srcs[0] or t0 == srcs[1] or t0 == srcs[2]:
                        continue
                    for j1 in range(j0 + 1, m):
                        t1 = targets[j1]
                        if t1 == srcs[0] or t1 == srcs[1] or t1 == srcs[2]:
                            continue
                        for j2 in range(j1 + 1, m):
                            t2 = targets[j2]
                            if t2 == srcs[0] or t2 == srcs[1] or t2 == srcs[2]:
                                continue
                            for o in range(6):
                                dsts[_ORDERS[o, 0]] = t0
                                dsts[_ORDERS[o, 1]] = t1
                                dsts[_ORDERS[o, 2]] = t2
                                count += 1
                                if not _heuristic(
                                    adj, radj, center, srcs, dsts, blocked, parent, queue
                                ):
                                    if fails < max_out:
                                        out[fails, 0] = srcs[0]
                                        out[fails, 1] = srcs[1]
                                        out[fails, 2] = srcs[2]
                                        out[fails, 3] = dsts[0]
                                        out[fails, 4] = dsts[1]
                                        out[fails, 5] = dsts[2]
                                    fails += 1
    return count, fails


if numba is not None:
    _route = numba.njit(cache=True)(_route_py)
    _heuristic = numba.njit(cache=True)(_heuristic_py)
    _sweep = numba.njit(cache=True)(_sweep_py)
else:  # pragma: no cover
    _route, _heuristic, _sweep = _route_py, _heuristic_py, _sweep_py


def _reversed_adj(adj: np.ndarray) -> np.ndarray:
    out = np.full_like(adj, -1)
    for i, row in enumerate(adj):
        nb = [j for j in row if j >= 0][::-1]
        out[i, : len(nb)] = nb
    return out


# -- exact decision --------------------------------------------------------------


def _flow_bound(G: nx.Graph, srcs, dsts, removed: set) -> bool:
    """Unpinned vertex-disjoint paths from the sources to the targets exist."""
    H = nx.DiGraph()
    for v in G.nodes:
        if v in removed:
            continue
        H.add_edge(("in", v), ("out", v), capacity=1)
        for w in G[v]:
            if w not in removed:
                H.add_edge(("out", v), ("in", w), capacity=1)
    for s in srcs:
        if s in removed:
            return False
        H.add_edge("S", ("in", s), capacity=1)
    for t in dsts:
        if t in removed:
            return False
        H.add_edge(("out", t), "T", capacity=1)
    if "S" not in H or "T" not in H:
        return False
    return nx.maximum_flow_value(H, "S", "T") >= len(srcs)


def _connected(G: nx.Graph, s, t, blocked: set) -> bool:
    if s == t:
        return True
    seen = {s}
    todo = [s]
    while todo:
        a = todo.pop()
        for b in G[a]:
            if b == t:
                return True
            if b not in seen and b not in blocked:
                seen.add(b)
                todo.append(b)
    return False


def exact_linkage(G: nx.Graph, pairs: list[tuple], limit: int | None = None) -> bool | None:
    """Exhaustive search for vertex-disjoint paths joining each pair.

    Paths are grown one vertex at a time, pair after pair.  A partial state is
    abandoned as soon as some pair can no longer be connected avoiding the
    used vertices and the other terminals.  The unpinned flow bound is applied
    once up front.  ``None`` means the node budget ``limit`` ran out.
    """
    pairs = [(s, t) for s, t in pairs]
    terminals = {v for pr in pairs for v in pr}
    live = [(s, t) for s, t in pairs if s != t]
    fixed = {s for s, t in pairs if s == t}
    if not live:
        return True
    if not _flow_bound(G, [s for s, _ in live], [t for _, t in live], fixed):
        return False
    budget = [limit]

    def feasible(i, head, used) -> bool:
        for j in range(i, len(live)):
            s, t = live[j]
            src = head if j == i else s
            blocked = used | (terminals - {src, t})
            if not _connected(G, src, t, blocked):
                return False
        return True

    def grow(i, head, used) -> bool | None:
        if budget[0] is not None:
            budget[0] -= 1
            if budget[0] < 0:
                return None
        s, t = live[i]
        for nb in sorted(G[head]):
            if nb == t:
                if i + 1 == len(live):
                    return True
                nxt = live[i + 1][0]
                used2 = used | {t}
                if feasible(i + 1, nxt, used2):
                    r = grow(i + 1, nxt, used2 | {nxt})
                    if r is not False:
                        return r
                continue
            if nb in used or nb in terminals:
                continue
            used2 = used | {nb}
            if not feasible(i, nb, used2):
                continue
            r = grow(i, nb, used2)
            if r is not False:
                return r
        return False

    first = live[0][0]
    used = fixed | {first}
    if not feasible(0, first, used):
        return False
    return grow(0, first, used)


@dataclass
class LinkageResult:
    holds: bool
    method: str
    paths: list | None = None


def _witness(ball: QuadrantBall, srcs, dsts) -> list | None:
    """Sequential routing witness (lists of vertices) or ``None``."""
    adj = ball.adj
    radj = _reversed_adj(adj)
    n = len(ball.nodes)
    center = ball.index[ball.center]
    for a in (adj, radj):
        for order in itertools.permutations(range(3)):
            blocked = np.zeros(n, dtype=bool)
            blocked[center] = True
            blocked[list(srcs) + list(dsts)] = True
            paths = [None] * 3
            for q in order:
                blocked[dsts[q]] = False
                parent = np.zeros(n, dtype=np.int64)
                queue = np.zeros(n, dtype=np.int64)
                if not _route_py(a, blocked, srcs[q], dsts[q], parent, queue):
                    break
                path = [dsts[q]]
                while parent[path[-1]] != -1:
                    path.append(int(parent[path[-1]]))
                paths[q] = [ball.nodes[i] for i in reversed(path)]
            else:
                return paths
    return None


def disjoint_paths_check(
    g: SlabGeometry | int,
    s: int,
    z: Sequence[int],
    u: Sequence[int],
    v: Sequence[int],
    w: Sequence[int],
    u2: Sequence[int],
    v2: Sequence[int],
    w2: Sequence[int],
    *,
    return_paths: bool = False,
):
    """Whether disjoint paths ``u->u2``, ``v->v2``, ``w->w2`` exist in the quadrant ball minus ``z``.

    ``g`` supplies the thickness (an int is accepted too).  A target may coincide
    with its own source (a zero-length path) but not with any other endpoint.
    """
    k = g.k if isinstance(g, SlabGeometry) else int(g)
    ball = QuadrantBall.build(k, s, z)
    srcs = [Vertex(*map(int, a)) for a in (u, v, w)]
    dsts = [Vertex(*map(int, a)) for a in (u2, v2, w2)]
    nbrs = set(ball.neighbors_of_center())
    if len(set(srcs)) != 3 or any(a not in nbrs for a in srcs):
        raise GeometryError("u, v, w must be three distinct neighbors of z inside the quadrant slab")
    if len(set(dsts)) != 3 or any(b not in ball.boundary or b == ball.center for b in dsts):
        raise GeometryError("u', v', w' must be three distinct boundary vertices of the ball")
    for i, b in enumerate(dsts):
        if b in srcs and srcs[i] != b:
            raise GeometryError(f"target {tuple(b)} coincides with another pair's source")
    si = [ball.index[a] for a in srcs]
    di = [ball.index[b] for b in dsts]
    paths = _witness(ball, si, di)
    if paths is not None:
        result = LinkageResult(True, "routing", paths)
    else:
        G = _ball_graph(ball)
        holds = exact_linkage(G, list(zip(srcs, dsts)))
        result = LinkageResult(bool(holds), "exhaustive")
    return result if return_paths else result.holds


def _ball_graph(ball: QuadrantBall) -> nx.Graph:
    G = nx.Graph()
    for i, v in enumerate(ball.nodes):
        if v == ball.center:
            continue
        G.add_node(v)
        for j in ball.adj[i]:
            if j >= 0 and ball.nodes[j] != ball.center:
                G.add_edge(v, ball.nodes[j])
    return G


# -- sweeps -------------------------------------------------------------------


def orbit_representatives(k: int, s: int) -> list[Vertex]:
    """Centers covering every ball shape up to the x<->y swap and the z-reflection.

    Once both plane coordinates reach ``s`` the ball no longer meets the axes,
    so larger coordinates only translate the picture.
    """
    reps = []
    for x in range(s + 1):
        for y in range(x, s + 1):
            for h in range(k // 2 + 1):
                if in_quadrant((x, y, h), k):
                    reps.append(Vertex(x, y, h))
    return reps


@dataclass
class SweepReport:
    k: int
    s: int
    centers: int
    instances: int
    routed: int
    exhaustive_true: int
    failures: list
    undecided: list
    seconds: float

    @property
    def holds(self) -> bool:
        return not self.failures and not self.undecided


def linkage_sweep(
    k: int,
    s: int,
    centers: Sequence[Vertex] | None = None,
    exact_limit: int | None = 5_000_000,
    max_failures: int = 50,
) -> SweepReport:
    """Check every admissible (neighbors, targets) assignment around each center."""
    t0 = time.perf_counter()
    centers = orbit_representatives(k, s) if centers is None else [Vertex(*c) for c in centers]
    instances = routed = exhaustive_true = 0
    failures: list = []
    undecided: list = []
    for zc in centers:
        ball = QuadrantBall.build(k, s, zc)
        nbrs = np.array(sorted(ball.index[a] for a in ball.neighbors_of_center()), dtype=np.int64)
        targets = np.array([ball.index[b] for b in ball.targets()], dtype=np.int64)
        out = np.zeros((10_000, 6), dtype=np.int64)
        count, nfail = _sweep(
            ball.adj, _reversed_adj(ball.adj), ball.index[ball.center], nbrs, targets, out, len(out)
        )
        instances += count
        routed += count - nfail
        if nfail > len(out):
            raise RuntimeError(f"{nfail} unrouted instances around {zc}; raise the buffer")
        G = _ball_graph(ball) if nfail else None
        for row in out[:nfail]:
            pairs = [(ball.nodes[row[i]], ball.nodes[row[i + 3]]) for i in range(3)]
            r = exact_linkage(G, pairs, exact_limit)
            if r:
                exhaustive_true += 1
            elif r is None:
                if len(undecided) < max_failures:
                    undecided.append((zc, pairs))
            elif len(failures) < max_failures:
                failures.append((zc, pairs))
    return SweepReport(
        k, s, len(centers), instances, routed, exhaustive_true, failures, undecided,
        time.perf_counter() - t0,
    )
