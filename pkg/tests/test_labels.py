import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from slabperc.geometry import SlabGeometry
from slabperc.labels import (
    BondConfig,
    LabelField,
    affine_close,
    affine_open,
    sample_labels,
    threshold,
)

G = SlabGeometry.box(1, 4)


def test_same_seed_and_stream_is_bit_identical():
    a, b = sample_labels(G, 7, 3), sample_labels(G, 7, 3)
    assert a.labels.tobytes() == b.labels.tobytes()


def test_streams_differ_almost_everywhere():
    g = SlabGeometry.box(1, 30)
    assert g.num_edges >= 10_000
    a, b = sample_labels(g, 1, 0), sample_labels(g, 1, 1)
    assert np.mean(a.labels != b.labels) > 0.99


def test_uniform_by_kolmogorov_smirnov():
    g = SlabGeometry.box(2, 80)
    lab = sample_labels(g, 0).labels[:100_000]
    assert len(lab) == 100_000
    assert stats.kstest(lab, "uniform").statistic < 1.63 / math.sqrt(1e5)


def test_threshold_extremes():
    f = sample_labels(G, 0)
    assert not threshold(f, 0.0).open.any()
    assert threshold(f, 1.0).open.all()
    edge = LabelField(SlabGeometry.rectangle(0, 1, 0), np.array([0.5]))
    assert not threshold(edge, 0.5).open[0]


def test_affine_examples():
    g = SlabGeometry.rectangle(0, 1, 0)
    f = LabelField(g, np.array([0.8]))
    assert affine_open(f, [0], 0.5).labels[0] == pytest.approx(0.4)
    f = LabelField(g, np.array([0.2]))
    assert affine_close(f, [0], 0.6).labels[0] == pytest.approx(0.68)


def test_affine_open_inverts():
    f = sample_labels(G, 2)
    edges = np.arange(0, G.num_edges, 3)
    g = affine_open(f, edges, 0.37)
    back = g.labels.copy()
    back[edges] /= 0.37
    np.testing.assert_allclose(back, f.labels, rtol=0, atol=1e-15)


@pytest.mark.parametrize("a,b", [(0.6, 0.7), (0.3, 0.4)])
def test_affine_volume_contraction(a, b):
    # fraction of the unit cube covered by the image cube, against a^m and (1-b)^m
    m, n = 3, 200_000
    rng = np.random.default_rng(5)
    y = rng.random((n, m))
    g = SlabGeometry.rectangle(0, 1, 1)
    lo = affine_open(LabelField(g, np.zeros(g.num_edges)), range(m), a).labels[:m]
    hi = affine_open(LabelField(g, np.ones(g.num_edges)), range(m), a).labels[:m]
    frac = np.mean(np.all((y >= lo) & (y < hi), axis=1))
    assert abs(frac - a**m) <= 3 * math.sqrt(a**m * (1 - a**m) / n)
    lo = affine_close(LabelField(g, np.zeros(g.num_edges)), range(m), b).labels[:m]
    hi = affine_close(LabelField(g, np.ones(g.num_edges)), range(m), b).labels[:m]
    frac = np.mean(np.all((y >= lo) & (y < hi), axis=1))
    v = (1 - b) ** m
    assert abs(frac - v) <= 3 * math.sqrt(v * (1 - v) / n)


def test_dump_round_trip(tmp_path):
    f = sample_labels(G, 9, 4)
    f.dump(tmp_path / "l.bin")
    h = LabelField.load(tmp_path / "l.bin")
    assert h.equals(f) and h.seed == 9 and h.stream == 4


def test_labels_are_read_only():
    f = sample_labels(G, 0)
    with pytest.raises(ValueError):
        f.labels[0] = 0.5


@given(st.integers(0, 2**32), st.integers(0, 50))
def test_edge_order_is_strict_total(seed, stream):
    f = sample_labels(SlabGeometry.rectangle(1, 2, 2), seed, stream)
    lab = f.labels.copy()
    lab[1] = lab[0]  # force a tie, broken by edge id
    f = LabelField(f.geometry, lab)
    order = f.edge_order()
    assert sorted(order.tolist()) == list(range(len(lab)))
    keys = [(lab[e], e) for e in order]
    assert all(x < y for x, y in zip(keys, keys[1:]))
    assert np.array_equal(f.rank()[order], np.arange(len(lab)))


@given(st.integers(0, 1000), st.floats(0, 1), st.floats(0, 1))
def test_threshold_monotone_and_dual(seed, p, q):
    f = sample_labels(SlabGeometry.rectangle(1, 3, 3), seed)
    lo, hi = sorted((p, q))
    a, b = threshold(f, lo).open, threshold(f, hi).open
    assert np.all(a <= b)
    assert np.array_equal(a, ~(f.labels >= lo))


def test_bond_config_helpers():
    g = SlabGeometry.rectangle(0, 2, 1)
    c = BondConfig.from_edges(g, [0, 3])
    assert c.open_edges().tolist() == [0, 3]
    assert c.with_open([3], False).open_edges().tolist() == [0]
    assert BondConfig.all_open(g).open.all() and not BondConfig.all_closed(g).open.any()
