from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slabperc.checks import combi0_instances
from slabperc.connectivity import CrossingQuery, crossing
from slabperc.geometry import SlabGeometry, annulus, rectangle, whole
from slabperc.gluing import (
    DomainError,
    EventPredicate,
    FixedSurgery,
    GlueContext,
    GlueSurgery,
    crossing_event,
    fkg_and_sqrt_check,
    glue_domain_event,
    glue_events,
    glue_invasion,
    glue_target_event,
    planted_domain_labels,
    plus_cylinder,
    plus_edge_count,
    recover_changes,
    sample_domain,
    verify_combi,
    verify_combi0,
)
from slabperc.labels import BondConfig, sample_labels

CTX = GlueContext()


@pytest.fixture(scope="module")
def domain_samples():
    return sample_domain(CTX, 40, seed=3, burn_in=300, thin=10)


# -- exact counting lemma ----------------------------------------------------------


def test_counting_lemma_cases():
    g, cases = combi0_instances()
    assert g.num_edges <= 20
    for name, A, B, phi, s, t, p, expect in cases:
        rep = verify_combi0(A, B, phi, s, t, p, range(g.num_edges), g)
        assert rep.holds == expect, name
        if not expect:
            assert "fibers vary on at most s edges" in rep.flagged()


def test_counting_lemma_open_one_edge_values():
    g, cases = combi0_instances()
    _, A, B, phi, s, t, p, _ = cases[1]
    rep = verify_combi0(A, B, phi, s, t, p, range(g.num_edges), g)
    assert Fraction(rep.exact["P[A]"]) == Fraction(1, 2)
    assert Fraction(rep.exact["rhs"]) == 2


def test_counting_lemma_identity_reduces_to_inclusion():
    g, cases = combi0_instances()
    _, A, B, phi, s, t, p, _ = cases[0]
    rep = verify_combi0(A, B, phi, s, t, p, range(g.num_edges), g)
    assert Fraction(rep.exact["P[A]"]) <= Fraction(rep.exact["P[B]"])
    assert rep.exact["constant"] == "1"


@given(st.sampled_from([Fraction(1, 3), Fraction(2, 5), Fraction(3, 7)]))
def test_counting_lemma_probabilities_are_exact_rationals(p):
    g, cases = combi0_instances()
    n = g.num_edges
    for _, A, B, phi, s, t, _, _ in cases[:4]:
        rep = verify_combi0(A, B, phi, s, t, p, range(n), g)
        for key in ("P[A]", "P[B]"):
            assert (p.denominator ** n) % Fraction(rep.exact[key]).denominator == 0


def test_counting_lemma_rejects_large_support():
    g = SlabGeometry.rectangle(0, 4, 3)
    H = crossing_event("H", CrossingQuery.horizontal(whole(g)))
    with pytest.raises(DomainError):
        verify_combi0(H, H, lambda c: [c], 0, 1, Fraction(1, 2), range(g.num_edges), g)


# -- affine surgery lemma -----------------------------------------------------------


def test_affine_lemma_single_edge():
    g = SlabGeometry.rectangle(0, 1, 0)
    a, b = 0.6, 0.7
    A = EventPredicate("label above a", lambda om: om.labels[0] > a, np.array([0]), on="labels")
    B = EventPredicate("label below a", lambda om: om.labels[0] < a, np.array([0]), on="labels")
    rep = verify_combi(A, B, FixedSurgery([0], [], a, b), 1, a, b, g, trials=20_000)
    assert rep.holds
    assert rep.exact["constant"] == pytest.approx(2 / 0.3)
    assert rep.exact["P[A]"] == pytest.approx(0.4, abs=0.02)
    assert rep.rhs == pytest.approx(4.0, abs=0.1)


def test_affine_lemma_flags_missing_image():
    g = SlabGeometry.rectangle(0, 1, 0)
    A = EventPredicate("high", lambda om: om.labels[0] > 0.5, np.array([0]), on="labels")
    B = EventPredicate("tiny", lambda om: om.labels[0] < 0.01, np.array([0]), on="labels")
    rep = verify_combi(A, B, FixedSurgery([0], [], 0.6, 0.7), 1, 0.6, 0.7, g, trials=500)
    assert "images lie in B" in rep.flagged()


def test_affine_lemma_identity():
    g = SlabGeometry.rectangle(0, 2, 1)
    A = EventPredicate("e0 small", lambda om: om.labels[0] < 0.3, np.array([0]), on="labels")
    B = EventPredicate("e0 smallish", lambda om: om.labels[0] < 0.5, np.array([0]), on="labels")
    rep = verify_combi(A, B, FixedSurgery(), 0, 0.5, 0.5, g, trials=5000)
    assert rep.holds and rep.lhs <= rep.rhs


# -- correlation inequalities -------------------------------------------------------


def test_covariance_of_event_with_itself_is_variance():
    g = SlabGeometry.rectangle(1, 3, 3)
    H = crossing_event("H", CrossingQuery.horizontal(whole(g)))
    rep = fkg_and_sqrt_check([H, H], 0.5, 2000, g)
    c = rep.covariances[1]["covariance"]
    q = rep.probabilities["H"]
    assert c >= 0 and c == pytest.approx(q * (1 - q))


def test_crossings_positively_correlated():
    g = SlabGeometry.rectangle(1, 4, 4)
    S = whole(g)
    H = crossing_event("H", CrossingQuery.horizontal(S))
    V = crossing_event("V", CrossingQuery.vertical(S))
    rep = fkg_and_sqrt_check([H, V], 0.5, 100_000, g)
    assert rep.holds
    assert rep.covariances[1]["margin_sigma"] >= -3


def test_square_root_trick_with_reflected_events():
    # crossings of the left and right halves of a square to its far faces
    g = SlabGeometry(1, -3, 3, -3, 3)
    c = g.coords
    centre = np.flatnonzero((np.abs(c[:, 0]) <= 1) & (np.abs(c[:, 1]) <= 1))
    left = np.flatnonzero(c[:, 0] == -3)
    right = np.flatnonzero(c[:, 0] == 3)
    S = whole(g)
    L = crossing_event("to left face", CrossingQuery(S, centre, left))
    R = crossing_event("to right face", CrossingQuery(S, centre, right))
    rep = fkg_and_sqrt_check([L, R], 0.4, 5000, g)
    assert rep.holds
    assert rep.sqrt_trick["max"] >= rep.sqrt_trick["bound"] - 3 * 0.01


def test_decreasing_event_rejected_by_fkg_check():
    g = SlabGeometry.rectangle(0, 2, 1)
    notH = EventPredicate("not H", lambda c: not crossing(c, CrossingQuery.horizontal(whole(g))),
                          np.arange(g.num_edges), "increasing")
    with pytest.raises(DomainError):
        fkg_and_sqrt_check([notH], 0.5, 10, g)


def test_support_and_monotone_probes():
    g = SlabGeometry.rectangle(0, 4, 2)
    R = rectangle(g, 0, 2, 0, 1)
    H = crossing_event("H", CrossingQuery.horizontal(R))
    assert H.check_support(g)
    assert H.check_monotone(g) is None
    liar = EventPredicate("liar", lambda c: not c.open[0], np.array([0]), "increasing")
    assert liar.check_monotone(g) is not None


# -- gluing surgery -------------------------------------------------------------------


def test_plus_cylinder_edge_count():
    g = SlabGeometry.box(1, 4)
    _, edges = plus_cylinder(g, (1, 1, 0))
    assert len(edges) == plus_edge_count(1) == 13
    assert plus_edge_count(0) == 4


def test_planted_configuration_glues():
    om = planted_domain_labels(CTX)
    st = glue_events(om, CTX)
    assert st.domain and not st.B0
    rep = glue_invasion(om, CTX, st)
    assert rep.before["B0"] is False and rep.after["B0"] is True
    assert rep.after["target"]
    assert rep.circuit_preserved and rep.untouched_identical and rep.reconstructed
    assert len(rep.changed) <= rep.bound == 13
    assert rep.violations() == []
    zp, changed = recover_changes(rep.output, CTX)
    assert zp == rep.z_prime and np.array_equal(np.sort(changed), np.sort(rep.changed))


def test_surgery_rejects_configs_outside_domain():
    om = sample_labels(CTX.geometry(), 0)
    assert not glue_events(om, CTX).domain
    with pytest.raises(DomainError):
        glue_invasion(om, CTX)
    with pytest.raises(DomainError):
        glue_invasion(sample_labels(SlabGeometry.box(1, 3), 0), CTX)


def test_context_validation():
    with pytest.raises(DomainError):
        GlueContext(n=3, m=6)
    with pytest.raises(DomainError):
        GlueContext(p=0.5, b=0.4)
    assert GlueContext(p=0.4).level_b == pytest.approx(0.7)
    with pytest.raises(DomainError):
        planted_domain_labels(GlueContext(k=0))


def test_sampler_stays_in_domain(domain_samples):
    assert len(domain_samples) == 40
    assert all(glue_events(om, CTX).domain for om in domain_samples)
    assert len({om.labels.tobytes() for om in domain_samples}) == 40


@settings(max_examples=20)
@given(st.integers(0, 39))
def test_surgery_contract_on_sampled_configs(domain_samples, i):
    rep = glue_invasion(domain_samples[i], CTX)
    assert rep.violations() == []
    assert rep.winding_clusters_after <= rep.winding_clusters_before
    ann = annulus(CTX.geometry(), CTX.n, 2 * CTX.n)
    assert all(v in ann for v in rep.circuit_after.vertices)


def test_surgery_lemma_hypotheses_on_domain_samples(domain_samples):
    ctx = CTX
    rep = verify_combi(glue_domain_event(ctx), glue_target_event(ctx), GlueSurgery(ctx),
                       plus_edge_count(ctx.k), ctx.p, ctx.level_b, ctx.geometry(),
                       trials=len(domain_samples), sampler=lambda i: domain_samples[i])
    assert rep.flagged() == []
    assert rep.exact["min_jacobian"] >= rep.exact["jacobian_floor"]


def test_surgery_lemma_inequality_under_independent_labels():
    ctx = CTX
    rep = verify_combi(glue_domain_event(ctx), glue_target_event(ctx), GlueSurgery(ctx),
                       plus_edge_count(ctx.k), ctx.p, ctx.level_b, ctx.geometry(), trials=3000)
    assert rep.holds


def test_event_predicate_on_bond_configs():
    g = SlabGeometry.rectangle(1, 2, 2)
    H = crossing_event("H", CrossingQuery.horizontal(whole(g)))
    assert H(BondConfig.all_open(g)) and not H(BondConfig.all_closed(g))
