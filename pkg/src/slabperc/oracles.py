"""Slow, independent reference implementations used to validate the fast code.

Everything here favours obviousness over speed: exhaustive enumeration,
networkx graph routines and plain angle sums.  The fast algorithms never call
into this module; the tests and the ``verify`` command do.
"""

from __future__ import annotations

import math
from fractions import Fraction

import networkx as nx
import numpy as np

from .geometry import PathOrCircuit, Region, SlabGeometry, Vertex, canonical_circuit, vertex_key
from .labels import BondConfig, LabelField


def open_graph(c: BondConfig, mask: np.ndarray | None = None) -> nx.Graph:
    """Open subgraph on vertex tuples, optionally restricted to a vertex mask."""
    g = c.geometry
    G = nx.Graph()
    for i in range(g.num_vertices):
        if mask is None or mask[i]:
            G.add_node(g.vertex(i))
    for e in np.flatnonzero(c.open):
        a, b = int(g.edge_u[e]), int(g.edge_v[e])
        if mask is None or (mask[a] and mask[b]):
            G.add_edge(g.vertex(a), g.vertex(b))
    return G


# -- crossing probabilities by enumeration -----------------------------------


def crossing_counts_exact(g: SlabGeometry, region: Region, source, target, chunk: int = 1 << 20) -> np.ndarray:
    """Number of crossing configurations of the region's edges, by number of open edges.

    All ``2^E`` configurations are enumerated as integers, in chunks.  For each
    chunk, reachability from the source is a boolean vector per vertex, pushed
    along open edges until it stops changing.
    """
    edges = np.flatnonzero(region.edge_mask).tolist()
    E = len(edges)
    if E > 22:
        raise ValueError(f"{E} edges is too many to enumerate")
    src = {int(i) for i in source}
    dst = {int(i) for i in target}
    ends = [(int(g.edge_u[e]), int(g.edge_v[e])) for e in edges]
    verts = sorted(src | dst | {v for pr in ends for v in pr})
    counts = np.zeros(E + 1, dtype=np.int64)
    total = 1 << E
    for lo in range(0, total, chunk):
        cfg = np.arange(lo, min(lo + chunk, total), dtype=np.uint32)
        bit = [((cfg >> np.uint32(i)) & np.uint32(1)).astype(bool) for i in range(E)]
        reach = {v: np.full(len(cfg), v in src) for v in verts}
        changed = True
        while changed:
            changed = False
            for i, (a, b) in enumerate(ends):
                for x, y in ((a, b), (b, a)):
                    new = reach[y] | (reach[x] & bit[i])
                    if not np.array_equal(new, reach[y]):
                        reach[y] = new
                        changed = True
        hit = np.zeros(len(cfg), dtype=bool)
        for v in dst:
            hit |= reach[v]
        counts += np.bincount(np.bitwise_count(cfg[hit]), minlength=E + 1)
    return counts


def crossing_probability_exact(g: SlabGeometry, region: Region, source, target, p) -> Fraction:
    """P_p[source <-> target inside region], summed exactly over every configuration.

    Only edges inside the region matter; ``p`` may be a Fraction for exact output.
    """
    p = Fraction(p)
    counts = crossing_counts_exact(g, region, source, target)
    E = len(counts) - 1
    return sum((int(c) * p**k * (1 - p) ** (E - k) for k, c in enumerate(counts)), Fraction(0))


# -- self-avoiding paths -----------------------------------------------------


def open_paths(c: BondConfig, S: Region, A, B):
    """Every open self-avoiding path inside ``S`` starting in ``A`` and ending in ``B``."""
    G = open_graph(c, S.mask)
    A = [a for a in map(tuple, A) if a in G]
    B = set(map(tuple, B))

    def extend(path, seen):
        if path[-1] in B:
            yield list(path)
        for nb in G[path[-1]]:
            if nb not in seen:
                seen.add(nb)
                path.append(nb)
                yield from extend(path, seen)
                path.pop()
                seen.discard(nb)

    for a in A:
        yield from extend([a], {a})


def brute_min_path(c: BondConfig, S: Region, A, B) -> PathOrCircuit:
    """Minimum over the full list of open self-avoiding paths (exponential; tiny inputs only)."""
    best = None
    for p in open_paths(c, S, A, B):
        key = [vertex_key(v) for v in p]
        if best is None or key < best[0]:
            best = (key, p)
    return PathOrCircuit(tuple(best[1])) if best else PathOrCircuit()


def ordered_min_path(c: BondConfig, S: Region, A, B) -> PathOrCircuit:
    """Enumerate open self-avoiding paths in lexicographic order and keep the first.

    Depth-first search over starts and neighbors sorted by vertex key visits
    paths in increasing order, and a path ending in ``B`` precedes all its
    extensions, so the first complete path is the minimum.  Plain backtracking,
    no reachability pruning.
    """
    G = open_graph(c, S.mask)
    B = set(map(tuple, B))
    nbrs = {v: sorted(G[v], key=vertex_key) for v in G}

    def walk(path, seen):
        if path[-1] in B:
            return list(path)
        for nb in nbrs[path[-1]]:
            if nb not in seen:
                seen.add(nb)
                path.append(nb)
                found = walk(path, seen)
                if found:
                    return found
                path.pop()
                seen.discard(nb)
        return None

    for a in sorted((a for a in map(tuple, A) if a in G), key=vertex_key):
        found = walk([a], {a})
        if found:
            return PathOrCircuit(tuple(Vertex(*v) for v in found))
    return PathOrCircuit()


# -- winding -------------------------------------------------------------------


def angle_winding(cycle, center) -> int:
    """Winding number of a closed lattice walk from summed turning angles of its projection."""
    cx, cy = center
    pts = [(v[0] - cx, v[1] - cy) for v in cycle]
    total = 0.0
    for (x0, y0), (x1, y1) in zip(pts, pts[1:] + pts[:1]):
        if (x0, y0) == (x1, y1):
            continue
        a0 = math.atan2(y0, x0)
        a1 = math.atan2(y1, x1)
        d = a1 - a0
        while d > math.pi:
            d -= 2 * math.pi
        while d < -math.pi:
            d += 2 * math.pi
        total += d
    return round(total / (2 * math.pi))


def winding_cycles(c: BondConfig, ann: Region, limit: int | None = None):
    """Yield ``(cycle, winding)`` for simple open cycles of the annulus.

    Stops after ``limit`` cycles (then the caller knows enumeration was cut).
    """
    G = open_graph(c, ann.mask)
    # drop tree-like parts: only 2-cores carry cycles
    core = nx.k_core(G, 2)
    for n, cyc in enumerate(nx.simple_cycles(core)):
        if limit is not None and n >= limit:
            return
        if len(cyc) >= 3:
            yield cyc, angle_winding(cyc, ann.center)


def enumerated_has_winding_cycle(c: BondConfig, ann: Region, limit: int = 200_000) -> bool | None:
    """Search all simple cycles; ``None`` when the enumeration limit was hit first."""
    count = 0
    for _, w in winding_cycles(c, ann):
        if w != 0:
            return True
        count += 1
        if count >= limit:
            return None
    return False


def cycle_space_has_winding_cycle(c: BondConfig, ann: Region) -> bool:
    """Winding is additive on the integer cycle space, whose fundamental cycles are simple.

    So a nonzero-winding simple cycle exists iff some fundamental cycle winds.
    """
    G = open_graph(c, ann.mask)
    for cyc in nx.cycle_basis(G):
        if angle_winding(cyc, ann.center) != 0:
            return True
    return False


def brute_min_circuit(c: BondConfig, ann: Region, limit: int = 2_000_000) -> PathOrCircuit:
    best = None
    for n, (cyc, w) in enumerate(winding_cycles(c, ann)):
        if n >= limit:
            raise RuntimeError("too many cycles to enumerate")
        if w == 0:
            continue
        circ = canonical_circuit(cyc)
        if best is None or circ.key() < best.key():
            best = circ
    return best or PathOrCircuit()


# -- spanning trees ----------------------------------------------------------


def edge_criterion_set(field: LabelField) -> set[int]:
    """Edges whose endpoints are not joined through strictly smaller labels."""
    g = field.geometry
    rank = field.rank()
    out = set()
    for e in range(g.num_edges):
        G = nx.Graph()
        G.add_nodes_from(range(g.num_vertices))
        small = np.flatnonzero(rank < rank[e])
        G.add_edges_from(zip(g.edge_u[small].tolist(), g.edge_v[small].tolist()))
        if not nx.has_path(G, int(g.edge_u[e]), int(g.edge_v[e])):
            out.add(e)
    return out


def networkx_mst(field: LabelField) -> set[int]:
    g = field.geometry
    G = nx.Graph()
    G.add_nodes_from(range(g.num_vertices))
    rank = field.rank()
    for e in range(g.num_edges):
        G.add_edge(int(g.edge_u[e]), int(g.edge_v[e]), weight=int(rank[e]), eid=e)
    return {d["eid"] for _, _, d in nx.minimum_spanning_edges(G, algorithm="kruskal", data=True)}


def reachable_below(field: LabelField, start: Vertex, level: float) -> set[int]:
    """Vertex indices joined to ``start`` through edges with label ``< level``."""
    g = field.geometry
    G = nx.Graph()
    G.add_node(g.index(start))
    keep = np.flatnonzero(field.labels < level)
    G.add_edges_from(zip(g.edge_u[keep].tolist(), g.edge_v[keep].tolist()))
    return set(nx.node_connected_component(G, g.index(start)))


# -- disjoint paths -------------------------------------------------------------


def brute_disjoint_paths(nodes: set, adjacency, pairs) -> bool:
    """Exhaustive search for vertex-disjoint paths joining each (source, target) pair."""
    pairs = list(pairs)

    def route(i, used):
        if i == len(pairs):
            return True
        s, t = pairs[i]
        if s == t:
            return route(i + 1, used)
        blocked = used | {a for pr in pairs[i + 1 :] for a in pr}

        def walk(v, seen):
            for nb in adjacency(v):
                if nb == t:
                    if route(i + 1, used | seen | {t}):
                        return True
                elif nb in nodes and nb not in seen and nb not in blocked:
                    seen.add(nb)
                    if walk(nb, seen):
                        return True
                    seen.discard(nb)
            return False

        return walk(s, {s})

    return route(0, set())
