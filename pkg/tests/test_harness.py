import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from slabperc.connectivity import CrossingQuery, crossing
from slabperc.geometry import SlabGeometry, rectangle, whole
from slabperc.harness import (
    EstimateRecord,
    EstimationError,
    ExperimentPlan,
    PlanError,
    box_crossing_suite,
    circuit_suite,
    estimate_crossing,
    estimate_pc,
    kesten_inequality_check,
    one_arm_suite,
    run_plan,
    single_tree_suite,
    wilson_interval,
)
from slabperc.harness.estimates import (
    arm_radii,
    bisect_response,
    crossing_thresholds,
    per_trial,
    trial_labels,
)
from slabperc.harness.plot import plot_records, read_records
from slabperc.labels import LabelField, sample_labels, threshold
from slabperc.oracles import crossing_probability_exact

# exact crossing probabilities, checked by hand where the event is a union of parallel edges
EXACT = [
    ((0, 1, 1), Fraction(1, 2), Fraction(3, 4)),
    ((0, 2, 1), Fraction(1, 2), Fraction(1, 2)),
    ((1, 1, 1), Fraction(1, 2), Fraction(15, 16)),
    ((0, 2, 2), Fraction(1, 3), Fraction(2353, 6561)),
    ((1, 2, 1), Fraction(2, 5), Fraction(154621936, 244140625)),
]


@pytest.fixture(scope="module")
def pc_k1():
    return estimate_pc(1, 64, 0.005, 2000, seed=0)


# -- intervals and records ------------------------------------------------------------


def test_wilson_interval_values():
    lo, hi = wilson_interval(50, 100)
    assert lo == pytest.approx(0.40383, abs=1e-5) and hi == pytest.approx(0.59617, abs=1e-5)
    assert wilson_interval(0, 10)[0] == 0.0 and wilson_interval(10, 10)[1] == 1.0
    with pytest.raises(EstimationError):
        wilson_interval(0, 0)


@pytest.mark.parametrize("p", [0.05, 0.3, 0.5, 0.8])
def test_wilson_coverage(p):
    rng = np.random.default_rng(int(p * 1000))
    n = 200
    hits = rng.binomial(n, p, size=1000)
    cover = np.mean([lo <= p <= hi for lo, hi in (wilson_interval(int(s), n) for s in hits)])
    assert cover >= 0.93


def test_record_json_round_trip():
    rec = estimate_crossing(1, 0.4, 3, 3, 200, seed=1)
    line = rec.to_json()
    d = json.loads(line)
    assert set(d) >= {"experiment", "params", "estimate", "ci95", "trials", "successes", "seed", "version",
                      "wall_ms"}
    back = EstimateRecord.from_json(line)
    assert back.to_json() == line
    assert 0 <= rec.estimate <= 1 and rec.ci95[0] <= rec.estimate <= rec.ci95[1]


def test_record_reproducible_from_params_and_seed():
    a = estimate_crossing(1, 0.4, 4, 4, 300, seed=5)
    b = estimate_crossing(1, 0.4, 4, 4, 300, seed=5)
    assert a.to_json() == b.to_json()


# -- crossing estimator -----------------------------------------------------------------


def test_crossing_extremes():
    one = estimate_crossing(1, 1.0, 4, 4, 100)
    assert one.estimate == 1.0 and one.ci95 == (1.0, 1.0)
    zero = estimate_crossing(1, 0.0, 4, 4, 100)
    assert zero.estimate == 0.0 and zero.ci95 == (0.0, 0.0)
    with pytest.raises(EstimationError):
        estimate_crossing(1, 1.5, 4, 4, 10)
    with pytest.raises(EstimationError):
        estimate_crossing(1, 0.5, 4, 4, 0)


@pytest.mark.parametrize("shape,p,exact", EXACT)
def test_exact_oracle_frozen_values(shape, p, exact):
    g = SlabGeometry.rectangle(*shape)
    q = CrossingQuery.horizontal(whole(g))
    assert crossing_probability_exact(g, q.region, q.source, q.target, p) == exact


def test_threshold_estimator_matches_direct_evaluation():
    k, m, n, seed = 1, 3, 2, 4
    thr = crossing_thresholds(k, m, n, 200, seed)
    g = SlabGeometry.rectangle(k, m, n)
    q = CrossingQuery.horizontal(whole(g))
    for i, t in enumerate(thr):
        f = LabelField(g, trial_labels(g, {"k": k, "m": m, "n": n}, seed, i))
        for p in (0.3, 0.5, 0.7):
            assert crossing(threshold(f, p), q) == (t < p)


@pytest.mark.parametrize("shape,p,exact", EXACT)
def test_estimator_consistency_against_exact(shape, p, exact):
    k, m, n = shape
    trials, runs = 400, 100
    thr = crossing_thresholds(k, m, n, trials * runs, seed=11).reshape(runs, trials)
    hits = (thr < float(p)).sum(axis=1)
    ok = 0
    for s in hits:
        lo, hi = wilson_interval(int(s), trials)
        ok += abs(s / trials - float(exact)) <= 3 * (hi - lo) / 2
    assert ok >= 99


@given(st.integers(0, 10_000))
def test_crossing_monotone_in_p_per_trial(seed):
    thr = crossing_thresholds(1, 4, 4, 50, seed)
    ps = np.linspace(0, 1, 11)
    counts = [(thr < p).sum() for p in ps]
    assert all(a <= b for a, b in zip(counts, counts[1:]))


@given(st.integers(0, 10_000), st.integers(1, 5), st.integers(1, 5))
def test_crossing_monotone_in_shape_per_field(seed, m, n):
    g = SlabGeometry.rectangle(1, 6, 6)
    c = threshold(sample_labels(g, seed), 0.45)
    H = lambda a, b: crossing(c, CrossingQuery.horizontal(rectangle(g, 0, a, 0, b)))
    if H(m + 1, n):
        assert H(m, n)
    if H(m, n):
        assert H(m, n + 1)


def test_per_trial_independent_of_workers_and_blocks():
    a = per_trial(crossing_thresholds, (1, 4, 4), 700, 3, workers=1, block=500)
    b = per_trial(crossing_thresholds, (1, 4, 4), 700, 3, workers=2, block=500)
    c = per_trial(crossing_thresholds, (1, 4, 4), 700, 3, workers=1, block=64)
    assert a.tobytes() == b.tobytes() == c.tobytes()


# -- critical point -----------------------------------------------------------------------


def test_bisection_arithmetic():
    lo, hi, steps = bisect_response(lambda p: p, 0.5)
    assert len(steps) == 1 and (lo, hi) in ((0.0, 0.5), (0.5, 1.0))
    lo, hi, steps = bisect_response(lambda p: p, 0.01)
    assert hi - lo <= 0.01 and lo <= 0.5 <= hi
    with pytest.raises(EstimationError):
        bisect_response(lambda p: 0.2, 0.1)
    with pytest.raises(EstimationError):
        bisect_response(lambda p: p, 0)


def test_pc_planar_near_half():
    est = estimate_pc(0, 64, 0.005, 2000, seed=0)
    assert 0.49 <= est.estimate <= 0.51
    assert est.bracket[1] - est.bracket[0] <= 0.005


def test_pc_thicker_slab_is_lower(pc_k1):
    k0 = estimate_pc(0, 64, 0.005, 2000, seed=0)
    assert pc_k1.record.ci95[1] < k0.record.ci95[0]


def test_box_crossing_controls(pc_k1):
    pc = pc_k1.estimate
    hi = box_crossing_suite(1, pc + 0.1, [1.0], [32], 2000)[0]
    lo = box_crossing_suite(1, pc - 0.1, [1.0], [32], 2000)[0]
    assert hi.estimate > 0.95 and lo.estimate < 0.05
    assert not hi.extra["within_policy"] and hi.extra["policy"]["source"] == "artifact policy"
    with pytest.raises(EstimationError):
        box_crossing_suite(1, pc, [0.01], [8], 10)


# -- one arm, circuits, single tree, inequality -------------------------------------------------


def test_one_arm_touching_boxes_and_full_p():
    rec = one_arm_suite(1, 0.4, 2, [2, 4, 8], 200)
    assert rec.extra["table"][0]["estimate"] == 1.0
    rec = one_arm_suite(1, 1.0, 2, [2, 4, 8, 16], 200)
    assert all(t["estimate"] == 1.0 for t in rec.extra["table"])


def test_one_arm_radius_matches_direct_crossing():
    R = arm_radii(1, 1, 6, 0.5, 50, 2)
    assert R.min() >= 1 and R.max() <= 6


def test_one_arm_argument_checks():
    with pytest.raises(EstimationError):
        one_arm_suite(1, 0.4, 2, [4, 4], 10)
    with pytest.raises(EstimationError):
        one_arm_suite(1, 0.4, 4, [2, 8], 10)


def test_one_arm_drops_empty_radii():
    with pytest.warns(UserWarning):
        rec = one_arm_suite(1, 0.1, 1, [1, 2, 4, 8, 16], 200)
    assert rec.extra["table"][-1]["successes"] == 0


def test_circuit_full_p():
    recs = circuit_suite(1, 1.0, [2], 20)
    assert [r.estimate for r in recs] == [1.0, 1.0]
    assert recs[0].experiment == "circuit" and recs[1].experiment == "blocking-complement"


def test_single_tree_same_start_and_monotone():
    recs = single_tree_suite(1, (0, 0, 0), [2, 4, 8], 20)
    assert all(r.estimate == 1.0 for r in recs)
    recs = single_tree_suite(1, (4, 0, 0), [4, 8, 16], 200)
    est = [r.estimate for r in recs]
    assert est == sorted(est)
    with pytest.raises(EstimationError):
        single_tree_suite(1, (9, 0, 0), [4, 8], 10)


def test_kesten_zero_and_small_cases():
    rep = kesten_inequality_check(1, 0.0, 4, 100)
    assert rep.lhs == 0 and rep.rhs == 0 and rep.holds
    rep = kesten_inequality_check(0, 0.5, 8, 5000)
    assert rep.holds and json.loads(rep.to_json())["holds"]


# -- plans -------------------------------------------------------------------------------


def test_empty_grid_gives_empty_output(tmp_jsonl):
    plan = ExperimentPlan("crossing", {}, 10, out=str(tmp_jsonl))
    assert list(run_plan(plan)) == []
    plan = ExperimentPlan("crossing", {"k": [1], "p": [], "m": [4], "n": [4]}, 10)
    assert list(run_plan(plan)) == []


def test_plan_validation():
    with pytest.raises(PlanError):
        ExperimentPlan("nope", {}, 10)
    with pytest.raises(PlanError):
        ExperimentPlan("crossing", {"k": [1]}, 10)
    with pytest.raises(PlanError):
        ExperimentPlan("crossing", {}, 0)
    with pytest.raises(PlanError):
        ExperimentPlan.from_json(json.dumps({"kind": "crossing", "grid": {}, "trials": 1, "bogus": 1}))


GRID = {"k": [1], "p": [0.35, 0.45], "m": [6], "n": [6]}


def test_plan_rerun_is_idempotent(tmp_jsonl):
    plan = ExperimentPlan("crossing", GRID, 600, out=str(tmp_jsonl), block=250)
    assert len(list(run_plan(plan))) == 2
    first = tmp_jsonl.read_bytes()
    assert list(run_plan(plan)) == []
    assert tmp_jsonl.read_bytes() == first


def test_plan_resumes_after_partial_run(tmp_path):
    full = tmp_path / "full.jsonl"
    part = tmp_path / "part.jsonl"
    run = lambda path: list(run_plan(ExperimentPlan("crossing", GRID, 300, out=str(path))))
    run(full)
    part.write_text(full.read_text().splitlines()[0] + "\n")
    assert len(run(part)) == 1
    assert part.read_bytes() == full.read_bytes()


def test_plan_worker_count_does_not_change_bytes(tmp_path):
    outs = []
    for w in (1, 3):
        path = tmp_path / f"w{w}.jsonl"
        list(run_plan(ExperimentPlan("crossing", GRID, 900, out=str(path), block=200), workers=w))
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]


def test_plan_matches_direct_estimate():
    recs = list(run_plan(ExperimentPlan("crossing", GRID, 400)))
    direct = estimate_crossing(1, 0.35, 6, 6, 400)
    assert recs[0].successes == direct.successes


@pytest.mark.parametrize("kind,grid", [
    ("one-arm", {"k": [1], "p": [0.4], "m": [1], "n": [4]}),
    ("circuit", {"k": [1], "p": [0.5], "n": [2]}),
    ("single-tree", {"k": [1], "x": [[2, 0, 0]], "N": [4]}),
])
def test_plan_kinds_run(kind, grid, tmp_path):
    path = tmp_path / "r.csv"
    recs = list(run_plan(ExperimentPlan(kind, grid, 50, out=str(path), format="csv")))
    assert len(recs) == 1 and 0 <= recs[0].estimate <= 1
    assert path.read_text().splitlines()[0].startswith("cell,experiment")
    assert list(run_plan(ExperimentPlan(kind, grid, 50, out=str(path), format="csv"))) == []


def test_unwritable_sink(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    plan = ExperimentPlan("crossing", GRID, 10, out=str(blocker / "sub" / "r.jsonl"))
    with pytest.raises(PlanError):
        list(run_plan(plan))


def test_nondeterministic_mode_records_time():
    rec = next(run_plan(ExperimentPlan("crossing", GRID, 20, deterministic=False)))
    assert rec.wall_ms is not None and rec.wall_ms >= 0


# -- figures ------------------------------------------------------------------------------


def test_plots_are_reproducible(tmp_path):
    recs = single_tree_suite(1, (2, 0, 0), [2, 4], 50)
    path = tmp_path / "st.jsonl"
    path.write_text("".join(r.to_json() + "\n" for r in recs))
    a = plot_records(read_records(path), tmp_path / "a.svg").read_bytes()
    b = plot_records(read_records(path), tmp_path / "b.svg").read_bytes()
    assert a == b and a.lstrip().startswith(b"<?xml")
    arm = one_arm_suite(1, 0.45, 1, [1, 2, 4, 8], 300)
    assert plot_records([arm], tmp_path / "arm.svg").exists()
    box = box_crossing_suite(1, 0.4, [1.0, 2.0], [4, 8], 100)
    assert plot_records(box, tmp_path / "box.svg").exists()
    with pytest.raises(ValueError):
        plot_records(recs + [arm], tmp_path / "mixed.svg")
