"""End-to-end correctness checks shared by the ``verify`` command and the acceptance tests.

Each check returns a plain dict with at least a boolean ``holds``.
"""

from __future__ import annotations

import math
import time
from collections import Counter
from fractions import Fraction

import numpy as np

from .connectivity import CrossingQuery, has_surrounding_circuit, min_open_path
from .geometry import SlabGeometry, annulus, whole
from .gluing import (
    EventPredicate,
    GlueContext,
    crossing_event,
    glue_invasion,
    sample_domain,
    verify_combi0,
)
from .harness import estimates as est
from .invasion import StopRule, invade, kruskal_mst
from .labels import BondConfig, philox_generator, sample_labels, threshold
from .menger import linkage_sweep
from .oracles import (
    crossing_probability_exact,
    cycle_space_has_winding_cycle,
    edge_criterion_set,
    enumerated_has_winding_cycle,
    networkx_mst,
    ordered_min_path,
)

# rectangles [0,m] x [0,n] on S_k with at most 22 edges
SMALL_RECTANGLES = [(0, 1, 1), (0, 2, 1), (0, 2, 2), (0, 3, 2), (0, 2, 4), (0, 4, 2), (0, 1, 5),
                    (1, 1, 1), (1, 2, 1), (1, 1, 2)]


def _timed(fn):
    def wrap(*a, **kw):
        t0 = time.perf_counter()
        out = fn(*a, **kw)
        out["seconds"] = round(time.perf_counter() - t0, 2)
        return out

    wrap.__name__ = fn.__name__
    wrap.__doc__ = fn.__doc__
    return wrap


@_timed
def crossing_oracle(instances: int = 10, trials: int = 100_000, seed: int = 0) -> dict:
    """Monte Carlo crossing estimates against exhaustive enumeration, at 3 sigma."""
    rng = philox_generator(seed, 0x0C1)
    rows = []
    for i in range(instances):
        k, m, n = SMALL_RECTANGLES[int(rng.integers(len(SMALL_RECTANGLES)))]
        p = (0.3, 0.5, 0.7)[int(rng.integers(3))]
        g = SlabGeometry.rectangle(k, m, n)
        q = CrossingQuery.horizontal(whole(g))
        exact = crossing_probability_exact(g, q.region, q.source, q.target, Fraction(str(p)))
        rec = est.estimate_crossing(k, p, m, n, trials, seed + i)
        sigma = math.sqrt(float(exact) * (1 - float(exact)) / trials)
        z = abs(rec.estimate - float(exact)) / sigma if sigma else (0.0 if rec.estimate == exact else math.inf)
        rows.append({"k": k, "m": m, "n": n, "edges": g.num_edges, "p": p, "exact": str(exact),
                     "mc": rec.estimate, "z": z})
    return {"holds": all(r["z"] <= 3 for r in rows), "instances": rows}


@_timed
def min_path_oracle(configs: int = 100, seed: int = 0) -> dict:
    """Greedy minimal open path against lexicographically ordered enumeration of open self-avoiding paths."""
    g = SlabGeometry(1, 0, 3, 0, 3)
    S = whole(g)
    q = CrossingQuery.horizontal(S)
    A = [g.vertex(i) for i in q.source]
    B = [g.vertex(i) for i in q.target]
    rng = philox_generator(seed, 0x0C2)
    bad = []
    found = 0
    for i in range(configs):
        p = float(rng.uniform(0.45, 0.75))
        c = threshold(sample_labels(g, seed, 1000 + i), p)
        fast = min_open_path(c, S, A, B)
        slow = ordered_min_path(c, S, A, B)
        found += bool(fast.vertices)
        if fast.vertices != slow.vertices:
            bad.append(i)
    return {"holds": not bad, "configs": configs, "with_path": found, "mismatches": bad}


@_timed
def winding_oracle(configs: int = 1000, seed: int = 0, enumeration_limit: int = 2000) -> dict:
    """Potential-method circuit detection against cycle-based winding oracles on A_{1,3}.

    The cycle-space oracle decides every instance; full simple-cycle
    enumeration is also run and counted where it finishes within its budget.
    """
    rng = philox_generator(seed, 0x0C3)
    bad = []
    positives = Counter()
    enumerated = 0
    for i in range(configs):
        k = i % 2
        g = SlabGeometry.box(k, 3)
        ann = annulus(g, 1, 3)
        p = float(rng.uniform(0.3, 0.9))
        c = threshold(sample_labels(g, seed, 2000 + i), p)
        fast = has_surrounding_circuit(c, ann)
        basis = cycle_space_has_winding_cycle(c, ann)
        full = enumerated_has_winding_cycle(c, ann, enumeration_limit)
        if full is not None:
            enumerated += 1
        if fast != basis or (full is not None and full != fast):
            bad.append(i)
        positives[k] += fast
    return {"holds": not bad, "configs": configs, "positives_by_k": dict(positives),
            "decided_by_enumeration": enumerated, "mismatches": bad}


@_timed
def spanning_tree_triangle(fields: int = 100, seed: int = 0) -> dict:
    """Invasion tree from every start = Kruskal tree = edge-criterion set (= networkx tree)."""
    g = SlabGeometry(1, 0, 2, 0, 2)
    bad = []
    for i in range(fields):
        f = sample_labels(g, seed, 3000 + i)
        kr = set(kruskal_mst(f).edges)
        crit = edge_criterion_set(f)
        ok = kr == crit == networkx_mst(f)
        for v in range(g.num_vertices):
            tree = set(invade(f, g.vertex(v), StopRule.exhaust()).tree_edges().tolist())
            ok &= tree == kr
        if not ok:
            bad.append(i)
    return {"holds": not bad, "fields": fields, "mismatches": bad}


@_timed
def linkage_check(k: int = 1, s: int = 3) -> dict:
    """Disjoint-path property of radius s around every orbit representative."""
    r = linkage_sweep(k, s)
    return {"holds": r.holds, "k": k, "s": s, "centers": r.centers, "instances": r.instances,
            "routed_by_heuristic": r.routed, "decided_by_exact_search": r.exhaustive_true,
            "failures": [[list(z), [[list(a), list(b)] for a, b in pr]] for z, pr in r.failures[:5]],
            "undecided": len(r.undecided)}


def combi0_instances():
    """Constructed (A, B, Phi, s, t, p) cases, the last one a deliberately broken map."""
    g = SlabGeometry.rectangle(0, 2, 1)  # 7 edges
    S = whole(g)
    every = np.arange(g.num_edges)
    H = crossing_event("H", CrossingQuery.horizontal(S))
    notH = EventPredicate("not H", lambda c: not H(c), every, "decreasing")
    e1, e2 = 0, 1

    def opened(c, edges):
        o = c.open.copy()
        o[list(edges)] = True
        return BondConfig(c.geometry, o)

    e_closed = EventPredicate("e closed", lambda c: not c.open[e1], every, "decreasing")
    e_open = EventPredicate("e open", lambda c: bool(c.open[e1]), every, "increasing")
    both_closed = EventPredicate("e1, e2 closed", lambda c: not c.open[e1] and not c.open[e2], every)
    one_open = EventPredicate("one of e1, e2 open", lambda c: bool(c.open[e1]) != bool(c.open[e2]), every)
    # bottom row of the rectangle: opening it forces a horizontal crossing
    row = [g.edge_id((0, 0, 0), (1, 0, 0)), g.edge_id((1, 0, 0), (2, 0, 0))]
    return g, [
        ("identity, A inside B", H, H, lambda c: [c], 0, 1, Fraction(1, 2), True),
        ("open one edge", e_closed, e_open, lambda c: [opened(c, [e1])], 1, 1, Fraction(1, 2), True),
        ("open the bottom row", notH, H, lambda c: [opened(c, row)], 2, 1, Fraction(3, 10), True),
        ("two images", both_closed, one_open, lambda c: [opened(c, [e1]), opened(c, [e2])], 1, 2,
         Fraction(1, 2), True),
        ("broken fibers (negative control)", e_closed, H,
         lambda c: [opened(c, range(c.geometry.num_edges))], 1, 1, Fraction(1, 2), False),
    ]


@_timed
def combi0_check() -> dict:
    """Exact counting-lemma checks; the negative control must be flagged, the rest must hold."""
    g, cases = combi0_instances()
    rows = []
    ok = True
    for name, A, B, phi, s, t, p, expect in cases:
        rep = verify_combi0(A, B, phi, s, t, p, range(g.num_edges), g)
        rows.append({"case": name, "holds": rep.holds, "flagged": rep.flagged(), **rep.exact})
        ok &= rep.holds == expect
        if not expect:
            ok &= "fibers vary on at most s edges" in rep.flagged()
    return {"holds": ok, "cases": rows}


@_timed
def glue_contract(samples: int = 1000, seed: int = 0, ctx: GlueContext | None = None, **sampler) -> dict:
    """Surgery contract on configurations drawn from the domain event."""
    ctx = ctx or GlueContext()
    opts = {"burn_in": 2000, "thin": 25, "chains": 4}
    opts.update(sampler)
    configs = sample_domain(ctx, samples, seed, **opts)
    tally = Counter()
    changed = Counter()
    used_w = 0
    for om in configs:
        rep = glue_invasion(om, ctx)
        for v in rep.violations():
            tally[v] += 1
        changed[len(rep.changed)] += 1
        used_w += bool(rep.gamma_w)
    return {"holds": not tally, "samples": len(configs), "violations": dict(tally),
            "changed_edges": {str(k): v for k, v in sorted(changed.items())}, "bound": rep.bound,
            "step_two_paths": used_w}


def run_suite(name: str, seed: int = 0):
    """Yield ``(check name, report)`` pairs for the ``verify`` command."""
    if name in ("quick", "oracles"):
        scale = 1 if name == "oracles" else 10
        yield "crossing-oracle", crossing_oracle(3 if scale > 1 else 10, 100_000 // scale, seed)
        yield "min-path-oracle", min_path_oracle(100 // scale, seed)
        yield "winding-oracle", winding_oracle(1000 // scale, seed)
        yield "spanning-tree-triangle", spanning_tree_triangle(100 // scale, seed)
    if name in ("quick", "gluing"):
        yield "combi0", combi0_check()
        yield "glue-contract", glue_contract(20 if name == "quick" else 1000, seed)
    if name == "menger":
        yield "linkage-r3", linkage_check(1, 3)
