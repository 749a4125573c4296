"""Acceptance criteria at full scale; each test prints one PASS/FAIL line.

Run alone with ``pytest -m acceptance -s tests/test_acceptance.py``.
"""

import json
import time

import pytest

from slabperc import checks
from slabperc.harness import ExperimentPlan, run_plan
from slabperc.harness import estimates as est

pytestmark = pytest.mark.acceptance


def report(num, name, ok, seconds, limit, detail=""):
    within = limit is None or seconds < limit
    status = "PASS" if ok and within else "FAIL"
    budget = f"{seconds:.1f}s" + (f" < {limit}s" if limit else "")
    print(f"\nACCEPTANCE {num:2d} {status} {name} [{budget}] {detail}")
    assert ok, detail
    assert within, f"took {seconds:.1f}s, budget {limit}s"


def timed(fn, *a, **kw):
    t0 = time.perf_counter()
    out = fn(*a, **kw)
    return out, time.perf_counter() - t0


@pytest.fixture(scope="module")
def pc_hat():
    pc, secs = timed(est.estimate_pc, 1, 64, 0.005, 10_000, 0)
    return pc, secs


def test_01_crossing_oracle():
    r, s = timed(checks.crossing_oracle, 10, 100_000, 0)
    worst = max(row["z"] for row in r["instances"])
    report(1, "crossing MC vs exhaustive enumeration", r["holds"], s, 60, f"max |z| = {worst:.2f}")


def test_02_min_path_oracle():
    r, s = timed(checks.min_path_oracle, 100, 0)
    report(2, "minimal open path vs ordered enumeration", r["holds"], s, 60,
           f"{r['with_path']} of 100 configs have a path, mismatches {r['mismatches']}")


def test_03_winding_oracle():
    r, s = timed(checks.winding_oracle, 1000, 0)
    report(3, "circuit detection vs winding-cycle oracles", r["holds"], s, 60,
           f"positives {r['positives_by_k']}, mismatches {len(r['mismatches'])}")


def test_04_spanning_tree_triangle():
    r, s = timed(checks.spanning_tree_triangle, 100, 0)
    report(4, "invasion = Kruskal = edge criterion", r["holds"], s, 60, f"mismatches {r['mismatches']}")


def test_05_linkage_radius_three():
    r, s = timed(checks.linkage_check, 1, 3)
    report(5, "disjoint paths at s=3, k=1", r["holds"], s, 300,
           f"{r['instances']} instances over {r['centers']} centers, failures {len(r['failures'])}")


def test_06_counting_lemma():
    r, s = timed(checks.combi0_check)
    flagged = [c["case"] for c in r["cases"] if not c["holds"]]
    report(6, "counting lemma on constructed instances", r["holds"] and len(r["cases"]) >= 4, s, 120,
           f"{len(r['cases'])} cases, flagged {flagged}")


def test_07_glue_contract():
    r, s = timed(checks.glue_contract, 1000, 0)
    report(7, "surgery contract on domain samples", r["holds"] and r["samples"] == 1000, s, 300,
           f"violations {r['violations']}, changed-edge histogram {r['changed_edges']}")


def test_08_box_crossing(pc_hat):
    pc, pc_secs = pc_hat
    t0 = time.perf_counter()
    rows = []
    for n in (8, 16, 32):
        for m, h in ((n, n), (2 * n, n), (n, 2 * n)):
            rec = est.estimate_crossing(1, pc.estimate, m, h, 10_000, 0)
            rows.append((m, h, rec.estimate))
    s = pc_secs + time.perf_counter() - t0
    ok = all(0.05 <= f <= 0.95 for _, _, f in rows)
    detail = f"p_c = {pc.estimate:.5f}; " + ", ".join(f"f({m},{h})={f:.3f}" for m, h, f in rows)
    report(8, "box crossings at p_c in [0.05, 0.95]", ok, s, 1200, detail)


def test_09_one_arm(pc_hat):
    pc, _ = pc_hat
    t0 = time.perf_counter()
    crit = est.one_arm_suite(1, pc.estimate, 2, [4, 8, 16, 32, 64], 10_000, 0)
    with pytest.warns(UserWarning):
        sub = est.one_arm_suite(1, pc.estimate - 0.1, 2, [4, 8, 16, 32, 64], 10_000, 0)
    s = time.perf_counter() - t0
    ok = crit.estimate > 0 and crit.ci95[0] > 0 and sub.extra["preferred_model"] == "exponential"
    report(9, "one-arm decay exponent and subcritical control", ok, s, 1200,
           f"delta = {crit.estimate:.4f} CI ({crit.ci95[0]:.4f}, {crit.ci95[1]:.4f}); "
           f"control prefers {sub.extra['preferred_model']}")


def test_10_kesten_inequality():
    t0 = time.perf_counter()
    reps = [est.kesten_inequality_check(k, p, 8, 10_000, 0) for k in (0, 1) for p in (0.4, 0.5)]
    s = time.perf_counter() - t0
    detail = "; ".join(f"k={r.params['k']} p={r.params['p']}: {r.lhs:.4f} <= {r.rhs:.4f}" for r in reps)
    report(10, "f(2n,4n) <= 25 f(n,2n)^2 within 3 sigma", all(r.holds for r in reps), s, 600, detail)


def test_11_single_tree():
    Ns = [4, 8, 16, 32, 64]
    recs, s = timed(est.single_tree_suite, 1, (4, 0, 0), Ns, 1000, 0)
    p = [r.estimate for r in recs]
    ok = all(a <= b for a, b in zip(p, p[1:])) and p[-1] >= 0.9
    report(11, "single-tree trend, >= 0.9 at N=64", ok, s, 1800,
           ", ".join(f"N={N}: {x:.3f}" for N, x in zip(Ns, p)))


def test_12_determinism(tmp_path):
    t0 = time.perf_counter()
    same = []

    def lines(recs):
        return "".join(r.to_json() + "\n" for r in recs).encode()

    suites = [
        lambda w: [est.estimate_crossing(1, 0.4, 8, 8, 3000, 0, workers=w)],
        lambda w: est.box_crossing_suite(1, 0.37, [1.0, 2.0], [4, 8], 2000, 0, workers=w),
        lambda w: [est.one_arm_suite(1, 0.4, 2, [4, 8, 16], 2000, 0, workers=w)],
        lambda w: est.circuit_suite(1, 0.45, [2, 4], 1000, 0, workers=w),
        lambda w: est.single_tree_suite(1, (2, 0, 0), [2, 4, 8], 1000, 0, workers=w),
        lambda w: [est.estimate_pc(1, 16, 0.01, 2000, 0, workers=w).record],
    ]
    for suite in suites:
        same.append(lines(suite(1)) == lines(suite(2)))
    for kind, grid in [
        ("crossing", {"k": [0, 1], "p": [0.4, 0.5], "m": [8], "n": [8]}),
        ("one-arm", {"k": [1], "p": [0.4], "m": [2], "n": [8, 16]}),
        ("circuit", {"k": [1], "p": [0.5], "n": [2, 4]}),
        ("single-tree", {"k": [1], "x": [[2, 0, 0]], "N": [4, 8]}),
    ]:
        outs = []
        for w in (1, 2):
            path = tmp_path / f"{kind}-{w}.jsonl"
            list(run_plan(ExperimentPlan(kind, grid, 1000, out=str(path), block=300), workers=w))
            outs.append(path.read_bytes())
        same.append(outs[0] == outs[1] and len(outs[0].splitlines()) == len(ExperimentPlan(kind, grid, 1).cells()))
        assert all(json.loads(line)["wall_ms"] is None for line in outs[0].splitlines())
    s = time.perf_counter() - t0
    report(12, "byte-identical records for 1 and 2 workers", all(same), s, None,
           f"{sum(same)} of {len(same)} suites and plans identical")
