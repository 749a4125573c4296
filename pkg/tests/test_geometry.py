import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from slabperc.geometry import (
    GeometryError,
    PathOrCircuit,
    SlabGeometry,
    Vertex,
    adjacent,
    annulus,
    bar,
    canonical_circuit,
    dist_star,
    path_less,
    rectangle,
    vertex_less,
    whole,
)

windows = st.tuples(
    st.integers(0, 2), st.integers(-3, 1), st.integers(1, 3), st.integers(-3, 1), st.integers(1, 3)
).map(lambda t: SlabGeometry(t[0], t[1], t[1] + t[2], t[3], t[3] + t[4]))


def test_neighbors_interior_k1():
    g = SlabGeometry.box(1, 3)
    assert set(g.neighbors((0, 0, 0))) == {(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1)}


def test_neighbors_planar_k0():
    assert len(SlabGeometry.box(0, 3).neighbors((0, 0, 0))) == 4


def test_neighbors_middle_layer_k2():
    assert len(SlabGeometry.box(2, 3).neighbors((0, 0, 1))) == 6


def test_vertex_order_examples():
    assert vertex_less((1, 0, 0), (1, 1, 0))
    assert vertex_less((0, 1, 0), (1, 0, 0))
    assert not vertex_less((2, 1, 0), (2, 1, 0))


def test_path_order_examples():
    p = PathOrCircuit(((0, 0, 0), (1, 0, 0)))
    q = PathOrCircuit(((0, 0, 0), (0, 1, 0)))
    assert not path_less(p, q) and path_less(q, p)
    assert not path_less(p, p)
    assert path_less(PathOrCircuit(((0, 0, 0),)), p)


def test_dist_star_examples():
    g = SlabGeometry.box(1, 6)
    assert dist_star((0, 0, 0), (2, 3, 1)) == 3
    assert dist_star((1, 1, 0), (1, 1, 0)) == 0
    assert dist_star([(0, 0, 0)], bar(g, [(5, 1)])) == 5


def test_bar_examples():
    g = SlabGeometry.box(1, 3)
    assert set(map(tuple, (g.vertex(i) for i in bar(g, [(1, 2)]).vertices))) == {(1, 2, 0), (1, 2, 1)}
    g0 = SlabGeometry.box(0, 3)
    assert len(bar(g0, [(1, 2)])) == 1
    assert len(bar(g, [(0, 0), (1, 0), (2, 0)])) == 6


def test_annulus_requires_increasing_radii():
    g = SlabGeometry.box(1, 4)
    with pytest.raises(GeometryError):
        annulus(g, 3, 3)
    with pytest.raises(GeometryError):
        rectangle(g, 0, 9, 0, 1)


@pytest.mark.parametrize("k", [0, 1, 2])
def test_vertex_order_is_strict_total(k):
    vs = [Vertex(x, y, z) for x in range(-2, 3) for y in range(-2, 3) for z in range(k + 1)]
    for a in vs:
        assert not vertex_less(a, a)
    for a, b in itertools.permutations(vs, 2):
        assert vertex_less(a, b) != vertex_less(b, a)
    keyed = sorted(vs, key=lambda v: (v[0] ** 2 + v[1] ** 2 + v[2] ** 2, v))
    for a, b, c in zip(keyed, keyed[1:], keyed[2:]):
        assert vertex_less(a, b) and vertex_less(b, c) and vertex_less(a, c)


def _short_paths(g, max_len):
    out = []

    def grow(path):
        out.append(PathOrCircuit(tuple(path)))
        if len(path) > max_len:
            return
        for nb in g.neighbors(path[-1]):
            if nb not in path:
                grow(path + [nb])

    for i in range(g.num_vertices):
        grow([g.vertex(i)])
    return out


def test_path_order_total_on_short_paths():
    g = SlabGeometry(1, 0, 2, 0, 2)
    paths = _short_paths(g, 3)
    srt = sorted(paths, key=lambda p: p.key())
    for a, b in zip(srt, srt[1:]):
        assert path_less(a, b) and not path_less(b, a)
    rng = np.random.default_rng(0)
    for _ in range(3000):
        a, b, c = (paths[i] for i in rng.integers(len(paths), size=3))
        assert not path_less(a, a)
        if a != b:
            assert path_less(a, b) != path_less(b, a)
        if path_less(a, b) and path_less(b, c):
            assert path_less(a, c)


def test_edge_ids_stable_and_bijective():
    g1, g2 = SlabGeometry(2, -2, 3, 0, 2), SlabGeometry(2, -2, 3, 0, 2)
    assert np.array_equal(g1.edge_u, g2.edge_u) and np.array_equal(g1.edge_v, g2.edge_v)
    for e in range(g1.num_edges):
        a, b = g1.edge_vertices(e)
        assert g1.edge_id(a, b) == e == g1.edge_id(b, a)


@given(windows)
def test_edges_are_unit_steps_in_layers(g):
    c = g.coords
    d = np.abs(c[g.edge_u] - c[g.edge_v])
    assert np.all(d.sum(axis=1) == 1)
    assert c[:, 2].min() >= 0 and c[:, 2].max() <= g.k
    assert len({(int(u), int(v)) for u, v in zip(g.edge_u, g.edge_v)}) == g.num_edges


@given(windows)
def test_neighbors_symmetric(g):
    for i in range(g.num_vertices):
        v = g.vertex(i)
        for nb in g.neighbors(v):
            assert v in g.neighbors(nb)
            assert adjacent(v, nb)


@given(windows, st.data())
def test_bar_size_and_faces(g, data):
    x0, x1, y0, y1 = g.window
    a = data.draw(st.integers(x0, x1))
    b = data.draw(st.integers(a, x1))
    c = data.draw(st.integers(y0, y1))
    d = data.draw(st.integers(c, y1))
    R = rectangle(g, a, b, c, d)
    assert len(R.vertices) == (g.k + 1) * len(R.footprint)
    bnd = set(R.boundary.tolist())
    for face in R.faces.values():
        assert set(face.tolist()) <= bnd


cycles = st.sampled_from([
    [(0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0)],
    [(0, 0, 0), (0, 0, 1), (1, 0, 1), (1, 1, 1), (1, 1, 0), (1, 0, 0)],
    [(2, 1, 0), (2, 2, 0), (1, 2, 0), (1, 2, 1), (0, 2, 1), (0, 1, 1), (0, 1, 0), (1, 1, 0)],
])


@given(cycles, st.integers(0, 10), st.booleans())
def test_canonical_circuit_invariant_under_rotation_and_reversal(cyc, shift, flip):
    base = canonical_circuit(cyc)
    vs = cyc[shift % len(cyc):] + cyc[:shift % len(cyc)]
    if flip:
        vs = vs[::-1]
    moved = canonical_circuit(vs)
    assert moved == base
    assert canonical_circuit(moved.vertices) == base
    rep = base.representative
    assert all(vertex_less(rep[0], v) for v in rep[1:])
    assert vertex_less(rep[1], rep[-1])
    assert base.is_valid()


def test_json_round_trip():
    g = SlabGeometry(1, -1, 2, 0, 3)
    assert SlabGeometry.from_json(g.to_json()) == g
    c = canonical_circuit([(0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0)])
    assert PathOrCircuit.from_json(c.to_json()) == c
    assert whole(g).footprint == frozenset((x, y) for x in range(-1, 3) for y in range(0, 4))
