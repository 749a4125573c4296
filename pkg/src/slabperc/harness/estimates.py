"""Monte Carlo estimators for crossing, arm, circuit and invasion-intersection probabilities.

Every trial draws its labels from a Philox stream keyed by ``(seed, stream)``
where the stream id hashes the cell parameters together with the trial index.
Results therefore do not depend on how trials are split across workers.

Crossing events are evaluated through the per-trial *crossing threshold*: the
smallest ``p`` at which the event occurs, i.e. the minimax label over crossing
paths.  Thresholding one label field at several ``p`` is the standard monotone
coupling, so estimates at different ``p`` share random numbers exactly.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
import warnings
from dataclasses import asdict, dataclass, field
from concurrent.futures import ProcessPoolExecutor
from functools import lru_cache, partial
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .. import __version__
from ..connectivity import has_surrounding_circuit
from ..geometry import SlabGeometry, annulus
from ..invasion import intersection_profile
from ..labels import LabelField, philox_generator, threshold

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None


class EstimationError(ValueError):
    """Bad estimator arguments, or an estimator that cannot converge."""


# -- records and intervals --------------------------------------------------------


def wilson_interval(successes: int, trials: int, z: float = 1.959963984540054) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials <= 0:
        raise EstimationError("zero trials")
    ph = successes / trials
    denom = 1 + z * z / trials
    centre = (ph + z * z / (2 * trials)) / denom
    half = z * math.sqrt(ph * (1 - ph) / trials + z * z / (4 * trials * trials)) / denom
    lo, hi = max(0.0, centre - half), min(1.0, centre + half)
    # the score interval always contains the boundary estimate itself
    if successes == 0:
        lo = 0.0
    if successes == trials:
        hi = 1.0
    return lo, hi


def binomial_se(successes: int, trials: int) -> float:
    ph = successes / trials
    return math.sqrt(ph * (1 - ph) / trials)


@dataclass
class EstimateRecord:
    """One Monte Carlo result, serialisable as a JSON line."""

    experiment: str
    params: dict
    estimate: float
    ci95: tuple[float, float]
    trials: int
    successes: int | None
    seed: int
    version: str = __version__
    wall_ms: float | None = None
    extra: dict = field(default_factory=dict)

    @property
    def half_width(self) -> float:
        return (self.ci95[1] - self.ci95[0]) / 2

    @property
    def se(self) -> float:
        if self.successes is None:
            return self.half_width / 1.959963984540054
        return binomial_se(self.successes, self.trials)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ci95"] = list(self.ci95)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, default=_jsonable)

    @classmethod
    def from_json(cls, line: str) -> "EstimateRecord":
        d = json.loads(line)
        d["ci95"] = tuple(d["ci95"])
        return cls(**d)


def _jsonable(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not serialisable: {type(o)}")


def proportion_record(experiment: str, params: dict, successes: int, trials: int, seed: int,
                      wall_ms: float | None = None, **extra) -> EstimateRecord:
    lo, hi = wilson_interval(successes, trials)
    return EstimateRecord(experiment, params, successes / trials, (lo, hi), trials, int(successes),
                          seed, wall_ms=wall_ms, extra=extra)


# -- streams ----------------------------------------------------------------------


def cell_key(params: dict) -> str:
    return json.dumps(params, sort_keys=True, default=_jsonable)


def trial_stream(params: dict, trial: int) -> int:
    """64-bit stream id from the cell parameters and the trial index."""
    h = hashlib.blake2b(f"{cell_key(params)}#{trial}".encode(), digest_size=8)
    return int.from_bytes(h.digest(), "little")


def trial_labels(g: SlabGeometry, params: dict, seed: int, trial: int) -> np.ndarray:
    return philox_generator(seed, trial_stream(params, trial)).random(g.num_edges)


# -- kernels ----------------------------------------------------------------------


def _find(parent, a):
    root = a
    while parent[root] != root:
        root = parent[root]
    while parent[a] != root:
        parent[a], a = root, parent[a]
    return root


def _minimax_py(labels, eu, ev, nv, src, dst):
    """Smallest label level at which some src vertex joins some dst vertex (2.0 if never)."""
    parent = np.arange(nv + 2)
    s, t = nv, nv + 1
    for i in range(src.shape[0]):
        parent[src[i]] = s
    for i in range(dst.shape[0]):
        r = _find(parent, dst[i])
        if r == s:
            return 0.0
        parent[r] = t
    order = np.argsort(labels, kind="mergesort")
    for j in range(order.shape[0]):
        e = order[j]
        a = _find(parent, eu[e])
        b = _find(parent, ev[e])
        if a != b:
            if b == s or b == t:
                a, b = b, a
            parent[b] = a
            if _find(parent, s) == _find(parent, t):
                return labels[e]
    return 2.0


def _reach_radius_py(labels, p, eu, ev, nv, src, radius):
    """Largest radius reached by the open clusters of the src vertices."""
    parent = np.arange(nv + 1)
    s = nv
    for i in range(src.shape[0]):
        parent[src[i]] = s
    for e in range(labels.shape[0]):
        if labels[e] < p:
            a = _find(parent, eu[e])
            b = _find(parent, ev[e])
            if a != b:
                if b == s:
                    a, b = b, a
                parent[b] = a
    best = 0
    for v in range(nv):
        if radius[v] > best and _find(parent, v) == s:
            best = radius[v]
    return best


if numba is not None:
    _find = numba.njit(cache=True)(_find)
    _minimax = numba.njit(cache=True)(_minimax_py)
    _reach_radius = numba.njit(cache=True)(_reach_radius_py)
else:  # pragma: no cover
    _minimax = _minimax_py
    _reach_radius = _reach_radius_py


@lru_cache(maxsize=64)
def _rect_setup(k: int, m: int, n: int):
    g = SlabGeometry.rectangle(k, m, n)
    co = g.coords
    src = np.flatnonzero(co[:, 0] == 0).astype(np.int64)
    dst = np.flatnonzero(co[:, 0] == m).astype(np.int64)
    return g, g.edge_u.astype(np.int64), g.edge_v.astype(np.int64), src, dst


@lru_cache(maxsize=64)
def _box_setup(k: int, n: int):
    g = SlabGeometry.box(k, n)
    co = g.coords
    rad = np.maximum(np.abs(co[:, 0]), np.abs(co[:, 1])).astype(np.int64)
    return g, g.edge_u.astype(np.int64), g.edge_v.astype(np.int64), rad


def crossing_thresholds(k: int, m: int, n: int, trials: int, seed: int, start: int = 0) -> np.ndarray:
    """Per-trial crossing threshold of the cylinder over ``[0, m] x [0, n]``."""
    if m < 1 or n < 1:
        raise EstimationError("m and n must be at least 1")
    g, eu, ev, src, dst = _rect_setup(k, m, n)
    params = {"k": k, "m": m, "n": n}
    out = np.empty(trials)
    for i in range(trials):
        out[i] = _minimax(trial_labels(g, params, seed, start + i), eu, ev, g.num_vertices, src, dst)
    return out


def arm_radii(k: int, m: int, nmax: int, p: float, trials: int, seed: int, start: int = 0) -> np.ndarray:
    """Per-trial radius reached by the open cluster of the box of radius ``m``.

    The inner box is joined to the boundary of the box of radius ``n`` inside
    that box exactly when the reached radius is at least ``n``: a path leaving
    the box must cross its boundary first.
    """
    g, eu, ev, rad = _box_setup(k, nmax)
    src = np.flatnonzero(rad <= m).astype(np.int64)
    params = {"k": k, "m": m, "nmax": nmax}
    out = np.empty(trials, dtype=np.int64)
    for i in range(trials):
        out[i] = _reach_radius(trial_labels(g, params, seed, start + i), p, eu, ev, g.num_vertices, src, rad)
    return out


def per_trial(fn: Callable, args: tuple, trials: int, seed: int, workers: int = 1, block: int = 500) -> np.ndarray:
    """Run ``fn(*args, count, seed, start)`` over fixed trial blocks and stack the per-trial results.

    Blocks are fixed by ``block`` alone, and each trial's stream depends only
    on its index, so the output is the same for every worker count.
    """
    if trials < 1:
        raise EstimationError("zero trials")
    jobs = [(a, min(a + block, trials)) for a in range(0, trials, block)]
    calls = [partial(fn, *args, b - a, seed, a) for a, b in jobs]
    if workers > 1 and len(calls) > 1:
        with ProcessPoolExecutor(workers) as pool:
            parts = list(pool.map(_call, calls))
    else:
        parts = [c() for c in calls]
    return np.concatenate(parts)


def _call(f):
    return f()


# -- crossing probabilities -------------------------------------------------------


def _check_p(p: float):
    if not 0 <= p <= 1:
        raise EstimationError(f"p must lie in [0, 1], got {p}")


def estimate_crossing(k: int, p: float, m: int, n: int, trials: int, seed: int = 0,
                      timed: bool = False, workers: int = 1) -> EstimateRecord:
    """Monte Carlo estimate of f_p(m, n) with a Wilson interval."""
    _check_p(p)
    if trials < 1:
        raise EstimationError("zero trials")
    t0 = time.perf_counter()
    thr = per_trial(crossing_thresholds, (k, m, n), trials, seed, workers)
    wall = (time.perf_counter() - t0) * 1e3 if timed else None
    rec = proportion_record("crossing", {"k": k, "p": p, "m": m, "n": n},
                            int(np.count_nonzero(thr < p)), trials, seed, wall)
    if p in (0.0, 1.0):
        # no open edge at p=0, every edge open at p=1: the outcome is certain
        rec.ci95 = (rec.estimate, rec.estimate)
        rec.extra["deterministic"] = True
    return rec


@dataclass
class PcEstimate:
    estimate: float
    bracket: tuple[float, float]
    steps: list  # (p, f_hat) per bisection step
    record: EstimateRecord


def bisect_response(response: Callable[[float], float], tol: float, target: float = 0.5,
                    lo: float = 0.0, hi: float = 1.0) -> tuple[float, float, list]:
    """Bisection on a non-decreasing response until the bracket is at most ``tol`` wide."""
    if tol <= 0:
        raise EstimationError("tol must be positive")
    flo, fhi = response(lo), response(hi)
    if not flo < target <= fhi:
        raise EstimationError(
            f"response does not cross {target} on [{lo}, {hi}] (f={flo:.3g}..{fhi:.3g}); flat or mis-bracketed"
        )
    steps = []
    while hi - lo > tol:
        mid = (lo + hi) / 2
        f = response(mid)
        steps.append((mid, f))
        if f < target:
            lo = mid
        else:
            hi = mid
    return lo, hi, steps


def estimate_pc(k: int, n: int, tol: float, trials_per_step: int, seed: int = 0, workers: int = 1) -> PcEstimate:
    """Bisection on p -> f_p(n, n) towards 1/2, all steps sharing the same trials."""
    if trials_per_step < 1:
        raise EstimationError("zero trials")
    thr = np.sort(per_trial(crossing_thresholds, (k, n, n), trials_per_step, seed, workers))

    def response(p):
        return np.searchsorted(thr, p, side="left") / len(thr)

    lo, hi, steps = bisect_response(response, tol)
    est = (lo + hi) / 2
    # the interval reflects both the bracket and the sampling error of the median
    q = stats.binom.interval(0.95, len(thr), 0.5)
    qlo = thr[max(int(q[0]) - 1, 0)]
    qhi = thr[min(int(q[1]), len(thr) - 1)]
    ci = (float(min(lo, qlo)), float(max(hi, qhi)))
    rec = EstimateRecord("pc-estimate", {"k": k, "n": n, "tol": tol}, est, ci, len(thr), None, seed,
                         extra={"bracket": [lo, hi], "steps": [[a, b] for a, b in steps]})
    return PcEstimate(est, (lo, hi), steps, rec)


BOX_POLICY = {"lower": 0.05, "upper": 0.95, "source": "artifact policy"}


def box_crossing_suite(k: int, pc: float, rhos: Sequence[float], ns: Sequence[int], trials: int,
                       seed: int = 0, workers: int = 1) -> list[EstimateRecord]:
    """f(n, floor(rho n)) at ``pc`` across scales, flagged against the policy band."""
    out = []
    for rho in rhos:
        for n in ns:
            h = int(math.floor(rho * n))
            if h < 1:
                raise EstimationError(f"rho={rho} gives an empty rectangle at n={n}")
            thr = per_trial(crossing_thresholds, (k, n, h), trials, seed, workers)
            s = int(np.count_nonzero(thr < pc))
            est = s / trials
            ok = BOX_POLICY["lower"] <= est <= BOX_POLICY["upper"]
            out.append(proportion_record("box-crossing", {"k": k, "p": pc, "rho": rho, "n": n, "m": h},
                                         s, trials, seed, policy=BOX_POLICY, within_policy=ok))
    return out


# -- one arm ----------------------------------------------------------------------


@dataclass
class SlopeFit:
    slope: float
    intercept: float
    ci95: tuple[float, float]
    sse_power: float
    sse_exponential: float

    @property
    def preferred(self) -> str:
        return "power" if self.sse_power <= self.sse_exponential else "exponential"


def _lsq(x, y):
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    sse = float(np.sum((A @ coef - y) ** 2))
    return coef, sse


def fit_decay(ns: np.ndarray, probs: np.ndarray) -> tuple[float, float, float, float]:
    """Slope and intercept of log P against log n, plus SSEs of the power and exponential fits."""
    y = np.log(probs)
    (b, a), sse_pow = _lsq(np.log(ns), y)
    _, sse_exp = _lsq(ns.astype(float), y)
    return b, a, sse_pow, sse_exp


def one_arm_suite(k: int, p: float, m: int, radii: Sequence[int], trials: int, seed: int = 0,
                  bootstrap: int = 1000, workers: int = 1) -> EstimateRecord:
    """P[box of radius m joined to the boundary of the box of radius n], with the fitted decay exponent.

    The slope CI resamples trials (bootstrap, percentile 95%).  Radii where no
    trial succeeded are dropped with a warning.
    """
    radii = sorted(int(r) for r in radii)
    if not radii or any(b <= a for a, b in zip(radii[:-1], radii[1:])):
        raise EstimationError("radii must be strictly increasing")
    if radii[0] < m:
        raise EstimationError("radii must be at least m")
    _check_p(p)
    R = per_trial(arm_radii, (k, m, radii[-1], p), trials, seed, workers)
    ns = np.asarray(radii)
    hits = (R[:, None] >= ns[None, :])
    counts = hits.sum(axis=0)
    keep = counts > 0
    if not keep.all():
        warnings.warn(f"dropping radii with zero successes: {ns[~keep].tolist()}", stacklevel=2)
    table = [
        {"n": int(n), "successes": int(c), "estimate": c / trials, "ci95": list(wilson_interval(int(c), trials))}
        for n, c in zip(ns, counts)
    ]
    fit = None
    if keep.sum() >= 3:
        nk = ns[keep]
        slope, icpt, sse_p, sse_e = fit_decay(nk, counts[keep] / trials)
        rng = philox_generator(seed, 0xB007)
        boot = []
        for _ in range(bootstrap):
            idx = rng.integers(0, trials, trials)
            c = hits[idx][:, keep].sum(axis=0)
            if (c > 0).all():
                boot.append(fit_decay(nk, c / trials)[0])
        lo, hi = np.percentile(boot, [2.5, 97.5]) if boot else (float("nan"), float("nan"))
        fit = SlopeFit(slope, icpt, (float(lo), float(hi)), sse_p, sse_e)
    delta = -fit.slope if fit else float("nan")
    ci = (-fit.ci95[1], -fit.ci95[0]) if fit else (float("nan"), float("nan"))
    extra = {"table": table}
    if fit:
        extra.update({"intercept": fit.intercept, "sse_power": fit.sse_power,
                      "sse_exponential": fit.sse_exponential, "preferred_model": fit.preferred})
    return EstimateRecord("one-arm", {"k": k, "p": p, "m": m, "radii": radii}, delta, ci, trials, None,
                          seed, extra=extra)


# -- circuits and blocking --------------------------------------------------------

CIRCUIT_POLICY = {"lower": 0.02, "blocking_upper": 0.98, "source": "artifact policy"}


def circuit_hits(k: int, n: int, p: float, trials: int, seed: int, start: int = 0) -> np.ndarray:
    """Per trial: (surrounding circuit in A_{n,2n}, box of radius n joined to radius 2n)."""
    g, eu, ev, rad = _box_setup(k, 2 * n)
    ann = annulus(g, n, 2 * n)
    src = np.flatnonzero(rad <= n).astype(np.int64)
    params = {"k": k, "n": n, "kind": "circuit"}
    out = np.zeros((trials, 2), dtype=bool)
    for i in range(trials):
        lab = trial_labels(g, params, seed, start + i)
        out[i, 0] = has_surrounding_circuit(threshold(LabelField(g, lab), p), ann)
        out[i, 1] = _reach_radius(lab, p, eu, ev, g.num_vertices, src, rad) >= 2 * n
    return out


def circuit_suite(k: int, p: float, ns: Sequence[int], trials: int, seed: int = 0,
                  workers: int = 1) -> list[EstimateRecord]:
    """Surrounding open circuit in the annulus ``A_{n,2n}``, and the blocking complement.

    The complement is the one-arm event from the box of radius n to the
    boundary of the box of radius 2n, evaluated on the same labels.
    """
    _check_p(p)
    out = []
    for n in ns:
        hits = per_trial(circuit_hits, (k, n, p), trials, seed, workers)
        circ, arm = (int(c) for c in hits.sum(axis=0))
        pr = {"k": k, "p": p, "n": n}
        out.append(proportion_record("circuit", pr, circ, trials, seed, policy=CIRCUIT_POLICY,
                                     within_policy=circ / trials >= CIRCUIT_POLICY["lower"]))
        out.append(proportion_record("blocking-complement", pr, arm, trials, seed, policy=CIRCUIT_POLICY,
                                     within_policy=arm / trials <= CIRCUIT_POLICY["blocking_upper"]))
    return out


# -- single tree ------------------------------------------------------------------


def intersection_hits(k: int, x: Sequence[int], Ns: Sequence[int], trials: int, seed: int = 0,
                      start: int = 0) -> np.ndarray:
    """Per trial and N: do the invasions from 0 and x, stopped at radius N, meet?"""
    Ns = sorted(int(n) for n in Ns)
    x = tuple(int(c) for c in x)
    if max(abs(x[0]), abs(x[1])) > Ns[0]:
        raise EstimationError("x must lie in the smallest box")
    # one window one step wider than the largest box, so every stopped invasion fits
    g = SlabGeometry.box(k, Ns[-1] + 1)
    params = {"k": k, "x": list(x), "Nmax": Ns[-1]}
    out = np.zeros((trials, len(Ns)), dtype=bool)
    for i in range(trials):
        f = LabelField(g, trial_labels(g, params, seed, start + i))
        out[i] = intersection_profile(f, (0, 0, 0), x, Ns)
    return out


def intersection_counts(k: int, x: Sequence[int], Ns: Sequence[int], trials: int, seed: int = 0,
                        start: int = 0) -> np.ndarray:
    return intersection_hits(k, x, Ns, trials, seed, start).sum(axis=0)


TREE_POLICY = {"lower": 0.9, "source": "artifact policy"}


def single_tree_suite(k: int, x: Sequence[int], Ns: Sequence[int], trials: int, seed: int = 0,
                      workers: int = 1) -> list[EstimateRecord]:
    """Intersection probability of the two stopped invasions per N, on common labels across N."""
    Ns = sorted(int(n) for n in Ns)
    x = [int(c) for c in x]
    counts = per_trial(intersection_hits, (k, x, Ns), trials, seed, workers).sum(axis=0)
    return [
        proportion_record("single-tree", {"k": k, "x": x, "N": N}, int(c), trials, seed, policy=TREE_POLICY)
        for N, c in zip(Ns, counts)
    ]


# -- Kesten-type inequality -------------------------------------------------------


@dataclass
class InequalityReport:
    name: str
    lhs: float
    rhs: float
    se: float
    params: dict

    @property
    def margin_sigma(self) -> float:
        return (self.rhs - self.lhs) / self.se if self.se > 0 else (math.inf if self.rhs >= self.lhs else -math.inf)

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs or self.margin_sigma >= -3

    def to_json(self) -> str:
        return json.dumps({"name": self.name, "params": self.params, "lhs": self.lhs, "rhs": self.rhs,
                           "se": self.se, "margin_sigma": self.margin_sigma, "holds": self.holds})


def kesten_inequality_check(k: int, p: float, n: int, trials: int, seed: int = 0,
                            workers: int = 1) -> InequalityReport:
    """f(2n, 4n) <= 25 f(n, 2n)^2, both sides estimated independently."""
    _check_p(p)
    a = estimate_crossing(k, p, 2 * n, 4 * n, trials, seed, workers=workers)
    b = estimate_crossing(k, p, n, 2 * n, trials, seed, workers=workers)
    rhs = 25 * b.estimate ** 2
    se = math.hypot(a.se, 50 * b.estimate * b.se)
    return InequalityReport("kesten", a.estimate, rhs, se, {"k": k, "p": p, "n": n, "trials": trials})
