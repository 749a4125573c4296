"""Local label surgeries and numerical checks of the measure-comparison lemmas.

The central piece is :func:`glue_invasion`: given labels where the invasion
from ``x`` swallows the minimal surrounding circuit but the invasion from the
origin does not, it lowers a few labels to connect the origin's invasion to
the circuit and raises the remaining labels of a small plus-shaped cylinder,
so that the changed edges can be read back from the output alone.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import numpy as np

from .connectivity import (
    CrossingQuery,
    clusters,
    crossing,
    has_surrounding_circuit,
    min_surrounding_circuit,
    winding_clusters,
)
from .geometry import PathOrCircuit, SlabGeometry, Vertex, annulus, box_region, vertex_key
from .invasion import InvasionState, StopRule, invade
from .labels import BondConfig, LabelField, affine_close, affine_open, philox_generator, threshold

PLUS = ((0, 0), (1, 0), (-1, 0), (0, 1), (0, -1))


class DomainError(ValueError):
    """The input is outside the domain of a surgery or verifier."""


# -- event predicates -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class EventPredicate:
    """A named event evaluated on a BondConfig (or on labels when ``on='labels'``)."""

    name: str
    evaluate: Callable
    support: np.ndarray
    monotonicity: str = "neither"  # increasing | decreasing | neither
    on: str = "config"

    def __call__(self, omega) -> bool:
        return bool(self.evaluate(omega))

    def check_support(self, g: SlabGeometry, trials: int = 50, seed: int = 0, p: float = 0.5) -> bool:
        """Flipping edges outside the support never changes the outcome on random configs."""
        rng = philox_generator(seed, 0xC0FFEE)
        outside = np.setdiff1d(np.arange(g.num_edges), self.support)
        if not len(outside):
            return True
        for _ in range(trials):
            o = rng.random(g.num_edges) < p
            before = self(BondConfig(g, o))
            o2 = o.copy()
            flip = outside[rng.random(len(outside)) < 0.5]
            o2[flip] = ~o2[flip]
            if self(BondConfig(g, o2)) != before:
                return False
        return True

    def check_monotone(self, g: SlabGeometry, trials: int = 200, seed: int = 0, p: float = 0.5):
        """Search for a single-edge flip contradicting the tag; returns the witness or None."""
        if self.monotonicity == "neither":
            return None
        rng = philox_generator(seed, 0xF00D)
        sup = np.asarray(self.support)
        for _ in range(trials):
            o = rng.random(g.num_edges) < p
            e = int(sup[rng.integers(len(sup))])
            lo, hi = o.copy(), o.copy()
            lo[e], hi[e] = False, True
            a, b = self(BondConfig(g, lo)), self(BondConfig(g, hi))
            bad = (a and not b) if self.monotonicity == "increasing" else (b and not a)
            if bad:
                return (np.flatnonzero(lo).tolist(), e)
        return None


def crossing_event(name: str, q: CrossingQuery) -> EventPredicate:
    return EventPredicate(name, lambda c: crossing(c, q), np.flatnonzero(q.region.edge_mask), "increasing")


# -- exact combinatorial lemma ----------------------------------------------------


def _hyp(name, holds, counterexample=None) -> dict:
    out = {"name": name, "holds": bool(holds)}
    if counterexample is not None:
        out["counterexample"] = counterexample
    return out


@dataclass
class LemmaReport:
    lemma: str
    hypotheses: list
    lhs: float
    rhs: float
    margin_sigma: float | None = None
    exact: dict | None = None

    @property
    def holds(self) -> bool:
        return all(h["holds"] for h in self.hypotheses) and self.inequality_holds

    @property
    def inequality_holds(self) -> bool:
        if self.margin_sigma is None:
            return self.lhs <= self.rhs
        return self.margin_sigma >= -3.0

    def flagged(self) -> list[str]:
        return [h["name"] for h in self.hypotheses if not h["holds"]]

    def to_json(self) -> str:
        d = {
            "lemma": self.lemma,
            "hypotheses": self.hypotheses,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "margin_sigma": self.margin_sigma,
        }
        if self.exact:
            d["exact"] = self.exact
        return json.dumps(d)


def verify_combi0(
    A: EventPredicate,
    B: EventPredicate,
    phi: Callable[[BondConfig], Iterable[BondConfig]],
    s: int,
    t,
    p,
    support: Sequence[int],
    geometry: SlabGeometry,
) -> LemmaReport:
    """Exhaustively check the counting lemma on every configuration of ``support``.

    Edges outside the support stay closed.  Checked: images of ``A`` lie in
    ``B``; every ``omega`` in ``A`` has at least ``t`` images; each image's
    preimages differ from it only on a common set of at most ``s`` edges; and
    ``P[A] <= (1/t) (2/min(p,1-p))^s P[B]`` with exact rational probabilities.
    """
    support = [int(e) for e in support]
    if len(support) > 22:
        raise DomainError(f"support of {len(support)} edges is too large to enumerate")
    p = Fraction(p)
    t = Fraction(t)
    if not 0 < p < 1:
        raise DomainError("p must lie strictly between 0 and 1")
    g = geometry
    n = len(support)
    weight = {}
    PA = PB = Fraction(0)
    preimages: dict[tuple, list[tuple]] = {}
    bad_image = bad_count = None
    for bits in itertools.product((False, True), repeat=n):
        o = np.zeros(g.num_edges, dtype=bool)
        o[support] = bits
        c = BondConfig(g, o)
        k = sum(bits)
        w = p**k * (1 - p) ** (n - k)
        weight[bits] = w
        if B(c):
            PB += w
        if not A(c):
            continue
        PA += w
        images = list(phi(c))
        if len(images) < t and bad_count is None:
            bad_count = {"omega": _open_list(support, bits), "images": len(images)}
        for img in images:
            ib = tuple(bool(img.open[e]) for e in support)
            if not B(img) and bad_image is None:
                bad_image = {"omega": _open_list(support, bits), "image": _open_list(support, ib)}
            preimages.setdefault(ib, []).append(bits)
    worst = None
    for ib, pre in preimages.items():
        S = {support[i] for bits in pre for i in range(n) if bits[i] != ib[i]}
        if len(S) > s and (worst is None or len(S) > worst["fiber_edges"]):
            worst = {
                "image": _open_list(support, ib),
                "preimage": _open_list(support, next(b for b in pre if sum(x != y for x, y in zip(b, ib)))),
                "fiber_edges": len(S),
            }
    const = (1 / t) * (2 / min(p, 1 - p)) ** s
    rhs = const * PB
    hyps = [
        _hyp("images lie in B", bad_image is None, bad_image),
        _hyp("at least t images", bad_count is None, bad_count),
        _hyp("fibers vary on at most s edges", worst is None, worst),
    ]
    return LemmaReport(
        "counting", hyps, float(PA), float(rhs), None,
        {"P[A]": str(PA), "P[B]": str(PB), "constant": str(const), "rhs": str(rhs)},
    )


def _open_list(support, bits) -> list[int]:
    return [e for e, b in zip(support, bits) if b]


# -- affine surgeries ---------------------------------------------------------------


class AffineSurgery:
    """A label map that lowers (``w -> a w``) and raises (``w -> b + (1-b) w``) a few labels.

    Subclasses implement :meth:`plan` (which edges to lower and raise on a given
    input) and :meth:`recover` (the changed set, computed from the output only).
    """

    a: float
    b: float

    def plan(self, omega: LabelField) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def recover(self, omega2: LabelField) -> np.ndarray:
        raise NotImplementedError

    def apply(self, omega: LabelField) -> tuple[LabelField, np.ndarray, np.ndarray]:
        lower, raise_ = self.plan(omega)
        out = omega
        if len(lower):
            out = affine_open(out, lower, self.a)
        if len(raise_):
            out = affine_close(out, raise_, self.b)
        return out, np.asarray(lower, dtype=np.int64), np.asarray(raise_, dtype=np.int64)


@dataclass
class FixedSurgery(AffineSurgery):
    """Lower and raise fixed edge sets regardless of the input."""

    lower: Sequence[int] = ()
    raise_: Sequence[int] = ()
    a: float = 0.5
    b: float = 0.5

    def plan(self, omega):
        return np.asarray(self.lower, dtype=np.int64), np.asarray(self.raise_, dtype=np.int64)

    def recover(self, omega2):
        return np.union1d(np.asarray(self.lower, dtype=np.int64), np.asarray(self.raise_, dtype=np.int64))


def _sigma_margin(lhs, se_l, rhs, se_r) -> float:
    se = math.hypot(se_l, se_r)
    if se == 0:
        return math.inf if lhs <= rhs else -math.inf
    return (rhs - lhs) / se


def verify_combi(
    A: EventPredicate,
    B: EventPredicate,
    phi: AffineSurgery,
    s: int,
    a: float,
    b: float,
    geometry: SlabGeometry,
    trials: int = 10_000,
    seed: int = 0,
    sampler: Callable[[int], LabelField] | None = None,
) -> LemmaReport:
    """Monte Carlo check of the affine-surgery lemma ``P[A] <= (2/(a ^ (1-b)))^s P[B]``.

    On every sampled ``omega`` in ``A`` the map's hypotheses are checked
    directly: the image is in ``B``, at most ``s`` labels change, lowered and
    raised labels follow the affine maps, the changed set is recovered from the
    image alone, and the finite-difference Jacobian on the changed coordinates
    is at least ``(a ^ (1-b))^s``.
    """
    if not isinstance(phi, AffineSurgery):
        raise DomainError("the map must be an AffineSurgery built from affine_open/affine_close")
    if not (0 < a < 1 and 0 < b < 1):
        raise DomainError("a and b must lie in (0, 1)")
    if trials < 1:
        raise DomainError("trials must be positive")
    g = geometry
    sampler = sampler or (lambda i: _sample(g, seed, i))
    nA = nB = 0
    problems: dict[str, object] = {}
    jac_min = math.inf
    floor = min(a, 1 - b) ** s
    for i in range(trials):
        omega = sampler(i)
        inA = A(_view(A, omega))
        nB += B(_view(B, omega))
        if not inA:
            continue
        nA += 1
        out, lower, raise_ = phi.apply(omega)
        changed = np.union1d(lower, raise_)
        if not B(_view(B, out)):
            problems.setdefault("images lie in B", i)
        if len(changed) > s:
            problems.setdefault("at most s changed labels", i)
        diff = np.flatnonzero(out.labels != omega.labels)
        if not np.all(np.isin(diff, changed)):
            problems.setdefault("unchanged labels identical", i)
        ok_aff = np.allclose(out.labels[lower], a * omega.labels[lower]) and np.allclose(
            out.labels[raise_], b + (1 - b) * omega.labels[raise_]
        )
        if not ok_aff or len(np.intersect1d(lower, raise_)):
            problems.setdefault("affine form", i)
        if not np.array_equal(np.sort(phi.recover(out)), changed):
            problems.setdefault("changed set recovered from the image", i)
        jac = _fd_jacobian(phi, omega, changed, lower, raise_)
        jac_min = min(jac_min, jac)
        if jac < floor * (1 - 1e-9):
            problems.setdefault("Jacobian lower bound", i)
    pa, pb = nA / trials, nB / trials
    se_a = math.sqrt(pa * (1 - pa) / trials)
    se_b = math.sqrt(pb * (1 - pb) / trials)
    const = (2 / min(a, 1 - b)) ** s
    names = [
        "images lie in B",
        "at most s changed labels",
        "unchanged labels identical",
        "affine form",
        "changed set recovered from the image",
        "Jacobian lower bound",
    ]
    hyps = [
        _hyp(n, n not in problems, None if n not in problems else {"trial": problems[n]}) for n in names
    ]
    rep = LemmaReport(
        "affine", hyps, pa, const * pb, _sigma_margin(pa, se_a, const * pb, const * se_b),
        {"P[A]": pa, "P[B]": pb, "constant": const, "trials_in_A": nA,
         "min_jacobian": None if jac_min == math.inf else jac_min, "jacobian_floor": floor},
    )
    return rep


def _sample(g: SlabGeometry, seed: int, i: int) -> LabelField:
    rng = philox_generator(seed, 0xA11 + i)
    return LabelField(g, rng.random(g.num_edges), seed, 0xA11 + i)


def _view(ev: EventPredicate, omega: LabelField):
    if ev.on == "labels":
        return omega
    raise DomainError(f"event {ev.name!r} must be evaluated on labels for the affine lemma")


def _fd_jacobian(phi: AffineSurgery, omega: LabelField, changed, lower, raise_, h: float = 1e-7) -> float:
    """|det| of the map restricted to the changed coordinates, by finite differences.

    The case split (which edges are lowered or raised) is held fixed, as on one
    piece of the partition in the lemma's proof.
    """
    if not len(changed):
        return 1.0
    base = _apply_pieces(omega.labels, lower, raise_, phi.a, phi.b)
    J = np.empty((len(changed), len(changed)))
    for j, e in enumerate(changed):
        bumped = omega.labels.copy()
        bumped[e] += h
        J[:, j] = (_apply_pieces(bumped, lower, raise_, phi.a, phi.b)[changed] - base[changed]) / h
    return abs(float(np.linalg.det(J)))


def _apply_pieces(labels, lower, raise_, a, b):
    out = labels.copy()
    out[lower] = a * labels[lower]
    out[raise_] = b + (1 - b) * labels[raise_]
    return out


# -- FKG and the square-root trick ----------------------------------------------------


@dataclass
class CorrelationReport:
    p: float
    trials: int
    probabilities: dict
    covariances: list
    sqrt_trick: dict

    @property
    def holds(self) -> bool:
        ok = all(c["margin_sigma"] >= -3 for c in self.covariances)
        return ok and self.sqrt_trick["margin_sigma"] >= -3


def fkg_and_sqrt_check(
    events: Sequence[EventPredicate],
    p: float,
    trials: int,
    geometry: SlabGeometry,
    seed: int = 0,
    union: EventPredicate | None = None,
) -> CorrelationReport:
    """Estimate pairwise covariances of increasing events and the square-root bound.

    The square-root trick says ``max_i P[A_i] >= 1 - (1 - P[union])^(1/j)``;
    the report gives both sides with a 3-sigma margin.
    """
    g = geometry
    for ev in events:
        if ev.monotonicity != "increasing":
            raise DomainError(f"event {ev.name!r} is not tagged increasing")
        witness = ev.check_monotone(g, seed=seed)
        if witness is not None:
            raise DomainError(f"event {ev.name!r} is not increasing: flipping edge {witness[1]} breaks it")
    if trials < 2:
        raise DomainError("need at least two trials")
    hits = np.zeros((trials, len(events)), dtype=bool)
    uni = np.zeros(trials, dtype=bool)
    for i in range(trials):
        c = threshold(_sample(g, seed, i), p)
        for j, ev in enumerate(events):
            hits[i, j] = ev(c)
        uni[i] = union(c) if union is not None else hits[i].any()
    probs = hits.mean(axis=0)
    covs = []
    for i, j in itertools.combinations_with_replacement(range(len(events)), 2):
        x, y = hits[:, i].astype(float), hits[:, j].astype(float)
        prod = (x - x.mean()) * (y - y.mean())
        cov = prod.mean()
        se = prod.std(ddof=1) / math.sqrt(trials)
        covs.append({
            "events": [events[i].name, events[j].name],
            "covariance": float(cov),
            "se": float(se),
            "margin_sigma": math.inf if se == 0 and cov >= 0 else (float(cov / se) if se else -math.inf),
        })
    pu = float(uni.mean())
    jn = len(events)
    bound = 1 - (1 - pu) ** (1 / jn)
    best = int(np.argmax(probs))
    pm = float(probs[best])
    se_m = math.sqrt(pm * (1 - pm) / trials)
    # delta method for the bound
    se_u = math.sqrt(pu * (1 - pu) / trials)
    dbound = (1 / jn) * (1 - pu) ** (1 / jn - 1) if pu < 1 else 0.0
    margin = _sigma_margin(bound, dbound * se_u, pm, se_m)
    return CorrelationReport(
        p, trials, {ev.name: float(q) for ev, q in zip(events, probs)}, covs,
        {"max": pm, "union": pu, "bound": bound, "margin_sigma": margin},
    )


# -- the invasion gluing surgery --------------------------------------------------


@dataclass(frozen=True)
class GlueContext:
    """Scales and parameters: circuit annulus ``A_{n,2n}``, blocking annulus ``A_{2n,m}``."""

    k: int = 1
    n: int = 2
    m: int = 6
    x: tuple = (1, 0, 0)
    p: float = 0.5
    b: float | None = None

    def __post_init__(self):
        if not 0 < self.p < 1:
            raise DomainError("p must lie in (0, 1)")
        if not 2 * self.n < self.m:
            raise DomainError("need 2n < m")
        if not self.p < self.level_b < 1:
            raise DomainError("b must lie in (p, 1)")

    @property
    def level_b(self) -> float:
        return (1 + self.p) / 2 if self.b is None else self.b

    def geometry(self) -> SlabGeometry:
        return SlabGeometry.box(self.k, self.m)


def plus_cylinder(g: SlabGeometry, center: Sequence[int]) -> tuple[list[Vertex], np.ndarray]:
    """Vertices of the cylinder over the five-point plus around ``center`` and its internal edges."""
    cx, cy = center[0], center[1]
    cols = [(cx + dx, cy + dy) for dx, dy in PLUS]
    verts = [Vertex(x, y, h) for x, y in cols for h in range(g.k + 1) if g.contains((x, y, h))]
    vs = set(verts)
    edges = sorted({g.edge_id(a, b) for a in verts for b in g.neighbors(a) if b in vs})
    return verts, np.asarray(edges, dtype=np.int64)


def plus_edge_count(k: int) -> int:
    """Edges inside the plus cylinder: 4 spokes per layer plus k rungs per column."""
    return 4 * (k + 1) + 5 * k


@dataclass
class GlueState:
    """Everything the surgery reads off a configuration."""

    config: BondConfig
    circuit: PathOrCircuit
    inv0: InvasionState
    invx: InvasionState
    C: bool
    D: bool
    B0: bool
    Bx: bool

    @property
    def domain(self) -> bool:
        return self.C and self.D and self.Bx and not self.B0

    @property
    def target(self) -> bool:
        return self.C and self.D and self.Bx and self.B0

    def failed_conjuncts(self) -> list[str]:
        out = []
        if not self.C:
            out.append("C: no surrounding open circuit")
        if not self.D:
            out.append("D: open path crosses the blocking annulus")
        if self.C and not self.Bx:
            out.append("B_x: invasion from x misses the minimal circuit")
        if self.C and self.B0:
            out.append("not B_0: invasion from the origin already contains the minimal circuit")
        return out


def glue_events(omega: LabelField, ctx: GlueContext, previous: GlueState | None = None) -> GlueState:
    """Evaluate the events; ``previous`` lets the circuit be reused when the annulus is unchanged."""
    g = omega.geometry
    c = threshold(omega, ctx.p)
    inner = annulus(g, ctx.n, 2 * ctx.n)
    em = inner.edge_mask
    if previous is not None and np.array_equal(previous.config.open[em], c.open[em]):
        C, circuit = previous.C, previous.circuit
    else:
        C = has_surrounding_circuit(c, inner)
        circuit = min_surrounding_circuit(c, inner) if C else PathOrCircuit()
    D = not _blocked_crossing(c, g, 2 * ctx.n, ctx.m)
    inv0 = invade(omega, (0, 0, 0), StopRule.hit_boundary(ctx.m))
    invx = invade(omega, ctx.x, StopRule.hit_boundary(ctx.m))
    B0 = Bx = False
    if C:
        ids = [g.index(v) for v in circuit.representative]
        B0 = inv0.vertex_set().issuperset(ids)
        Bx = invx.vertex_set().issuperset(ids)
    return GlueState(c, circuit, inv0, invx, C, D, B0, Bx)


def _blocked_crossing(c: BondConfig, g: SlabGeometry, inner: int, outer: int) -> bool:
    """An open path inside the box of radius ``outer`` joins its inner box to its boundary."""
    reg = box_region(g, outer)
    co = g.coords
    rad = np.maximum(np.abs(co[:, 0]), np.abs(co[:, 1]))
    src = np.flatnonzero(rad <= inner)
    dst = np.flatnonzero(rad == outer)
    return crossing(c, CrossingQuery(reg, src, dst))


@dataclass
class SurgeryReport:
    input: LabelField
    output: LabelField
    changed: np.ndarray
    kinds: dict  # edge id -> "opened-affine" | "closed-affine"
    before: dict
    after: dict
    z: Vertex
    z_prime: Vertex
    w: Vertex | None
    gamma_z: list
    gamma_w: list
    recovered_z_prime: Vertex | None
    recovered_changed: np.ndarray
    circuit_before: PathOrCircuit
    circuit_after: PathOrCircuit
    winding_clusters_before: int
    winding_clusters_after: int
    bound: int

    @property
    def circuit_preserved(self) -> bool:
        return self.circuit_before == self.circuit_after

    @property
    def reconstructed(self) -> bool:
        return self.recovered_z_prime == self.z_prime and np.array_equal(
            np.sort(self.recovered_changed), np.sort(self.changed)
        )

    @property
    def untouched_identical(self) -> bool:
        mask = np.ones(len(self.input.labels), dtype=bool)
        mask[self.changed] = False
        return np.array_equal(self.input.labels[mask], self.output.labels[mask])

    def violations(self) -> list[str]:
        out = []
        if not self.after.get("target"):
            out.append("target event")
        if not self.circuit_preserved:
            out.append("minimal circuit changed")
        if len(self.changed) > self.bound:
            out.append("too many changed edges")
        if not self.reconstructed:
            out.append("reconstruction")
        if not self.untouched_identical:
            out.append("untouched labels modified")
        if self.winding_clusters_after > self.winding_clusters_before:
            out.append("new surrounding cluster")
        return out

    def to_json(self) -> str:
        g = self.input.geometry
        return json.dumps({
            "changed": [[list(a), list(b)] for a, b in map(g.edge_vertices, self.changed.tolist())],
            "kinds": {str(k): v for k, v in self.kinds.items()},
            "before": self.before,
            "after": self.after,
            "z": list(self.z),
            "z_prime": list(self.z_prime),
            "w": list(self.w) if self.w else None,
            "violations": self.violations(),
        })


def _columns(vertices) -> set:
    return {(v[0], v[1]) for v in vertices}


def inner_region(g: SlabGeometry, circuit: PathOrCircuit) -> set[int]:
    """Vertices reachable from the origin through columns the circuit does not use."""
    cols = _columns(circuit.representative)
    start = g.index((0, 0, 0))
    seen = {start}
    todo = [start]
    while todo:
        a = todo.pop()
        for b, _ in g.adjacency[a]:
            if b in seen:
                continue
            x, y, _z = g.vertex(b)
            if (x, y) in cols:
                continue
            seen.add(b)
            todo.append(b)
    return seen


def landing_point(g: SlabGeometry, circuit: PathOrCircuit, inv0: InvasionState) -> Vertex:
    """First vertex of the origin's invasion on the boundary of the inner region."""
    R = inner_region(g, circuit)
    cols = _columns(circuit.representative)
    for v in inv0.vertices.tolist():
        if v not in R:
            continue
        x, y, _ = g.vertex(v)
        if any((x + dx, y + dy) in cols for dx, dy in PLUS[1:]):
            return g.vertex(v)
    raise DomainError("the origin's invasion never reaches the circuit")


def attach_point(circuit: PathOrCircuit, z: Vertex) -> Vertex:
    """Smallest circuit vertex in a column plane-adjacent to ``z``'s column."""
    near = {(z.x + dx, z.y + dy) for dx, dy in PLUS[1:]}
    cands = [v for v in circuit.representative if (v.x, v.y) in near]
    if not cands:
        raise DomainError(f"no circuit column next to {tuple(z)}")
    return min(cands, key=vertex_key)


def _column_walk(start: Vertex, stops: set) -> list[Vertex]:
    """Vertical walk from ``start`` to the nearest vertex of ``stops`` in its column."""
    if start in stops:
        return [start]
    hits = [v for v in stops if (v.x, v.y) == (start.x, start.y)]
    if not hits:
        raise DomainError(f"nothing to reach in the column of {tuple(start)}")
    target = min(hits, key=lambda v: (abs(v.z - start.z), vertex_key(v)))
    step = 1 if target.z > start.z else -1
    return [Vertex(start.x, start.y, h) for h in range(start.z, target.z + step, step)]


def _path_edges(g: SlabGeometry, path: Sequence[Vertex]) -> list[int]:
    return [g.edge_id(a, b) for a, b in zip(path[:-1], path[1:])]


def glue_invasion(omega: LabelField, ctx: GlueContext, state: GlueState | None = None) -> SurgeryReport:
    g = omega.geometry
    if g != ctx.geometry():
        raise DomainError(f"labels must live on the box of radius {ctx.m}")
    state = state or glue_events(omega, ctx)
    if not state.domain:
        raise DomainError("configuration outside the domain event: " + "; ".join(state.failed_conjuncts()))
    circuit = state.circuit
    gamma = set(circuit.representative)
    z = landing_point(g, circuit, state.inv0)
    zp = attach_point(circuit, z)
    plus_verts, plus_edges = plus_cylinder(g, zp)
    arms = {v for v in plus_verts if (v.x, v.y) != (zp.x, zp.y)}

    # step 1: z -> column of z' at the same height -> nearest circuit vertex
    first = Vertex(zp.x, zp.y, z.z)
    gamma_z = [z] + _column_walk(first, gamma)
    lowered = set(_path_edges(g, gamma_z))

    # step 2: the invasion from x, if it enters the plus cylinder
    w = None
    gamma_w: list = []
    plus_ids = {g.index(v) for v in plus_verts}
    arm_ids = {g.index(v) for v in arms}
    if plus_ids & state.invx.vertex_set():
        for v in state.invx.vertices.tolist():
            if v in arm_ids:
                w = g.vertex(v)
                break
        if w is not None:
            cl = clusters(state.config)
            # w already joined to z or to the circuit: opening a path would close a new loop
            if not cl.same(w, z) and not cl.same(w, circuit.representative[0]):
                reach = gamma | set(gamma_z)
                if w in reach:
                    gamma_w = [w]
                else:
                    mid = Vertex(zp.x, zp.y, w.z)
                    gamma_w = [w] + _column_walk(mid, reach)
                lowered |= set(_path_edges(g, gamma_w))

    # step 3: raise the rest of the cylinder, circuit edges excepted
    circuit_edges = set(_path_edges(g, list(circuit.vertices)))
    raised = set(plus_edges.tolist()) - circuit_edges - lowered
    lowered -= circuit_edges
    lower = np.asarray(sorted(lowered), dtype=np.int64)
    raise_ = np.asarray(sorted(raised), dtype=np.int64)
    out = omega
    if len(lower):
        out = affine_open(out, lower, ctx.p)
    if len(raise_):
        out = affine_close(out, raise_, ctx.level_b)
    changed = np.union1d(lower, raise_)
    kinds = {int(e): "opened-affine" for e in lower}
    kinds.update({int(e): "closed-affine" for e in raise_})

    after = glue_events(out, ctx)
    rec_zp, rec_changed = recover_changes(out, ctx, after)
    nb = len(winding_clusters(state.config, annulus(g, ctx.n, 2 * ctx.n)))
    na = len(winding_clusters(after.config, annulus(g, ctx.n, 2 * ctx.n)))
    return SurgeryReport(
        omega, out, changed, kinds,
        _flags(state), _flags(after),
        z, zp, w, gamma_z, gamma_w, rec_zp, rec_changed,
        circuit, after.circuit, nb, na, plus_edge_count(g.k),
    )


def _flags(s: GlueState) -> dict:
    return {"C": s.C, "D": s.D, "B0": s.B0, "Bx": s.Bx, "domain": s.domain, "target": s.target}


def recover_changes(omega2: LabelField, ctx: GlueContext, state: GlueState | None = None):
    """Read ``z'`` and the changed edge set off a surgery output, without the input."""
    g = omega2.geometry
    state = state or glue_events(omega2, ctx)
    if not state.C:
        return None, np.zeros(0, dtype=np.int64)
    circuit = state.circuit
    try:
        z = landing_point(g, circuit, state.inv0)
        zp = attach_point(circuit, z)
    except DomainError:
        return None, np.zeros(0, dtype=np.int64)
    _, plus_edges = plus_cylinder(g, zp)
    circuit_edges = set(_path_edges(g, list(circuit.vertices)))
    S = np.asarray(sorted(set(plus_edges.tolist()) - circuit_edges), dtype=np.int64)
    return zp, S


class GlueSurgery(AffineSurgery):
    """:func:`glue_invasion` wrapped as an affine surgery for :func:`verify_combi`."""

    def __init__(self, ctx: GlueContext):
        self.ctx = ctx
        self.a = ctx.p
        self.b = ctx.level_b

    def plan(self, omega):
        rep = glue_invasion(omega, self.ctx)
        lower = [e for e, k in rep.kinds.items() if k == "opened-affine"]
        raise_ = [e for e, k in rep.kinds.items() if k == "closed-affine"]
        return np.asarray(sorted(lower), dtype=np.int64), np.asarray(sorted(raise_), dtype=np.int64)

    def recover(self, omega2):
        return recover_changes(omega2, self.ctx)[1]


def glue_domain_event(ctx: GlueContext) -> EventPredicate:
    g = ctx.geometry()
    return EventPredicate(
        "glue-domain", lambda om: glue_events(om, ctx).domain, np.arange(g.num_edges), on="labels"
    )


def glue_target_event(ctx: GlueContext) -> EventPredicate:
    g = ctx.geometry()
    return EventPredicate(
        "glue-target", lambda om: glue_events(om, ctx).target, np.arange(g.num_edges), on="labels"
    )


# -- sampling the domain event ----------------------------------------------------


def planted_domain_labels(ctx: GlueContext, seed: int = 0) -> LabelField:
    """A hand-built configuration in the domain event.

    An open ring at sup radius ``n + 1`` in the bottom layer carries the
    circuit, ``x`` reaches it through an open spoke, and the origin escapes
    over the ring in the top layer along edges just above ``p``.  Everything
    else is closed with labels drawn above ``p``.
    """
    if ctx.k < 1:
        raise DomainError("the planted configuration needs a second layer")
    g = ctx.geometry()
    rng = philox_generator(seed, 7)
    p = ctx.p
    lab = p + (1 - p) * (0.5 + 0.5 * rng.random(g.num_edges))
    r = ctx.n + 1
    ring = [Vertex(x, y, 0) for x in range(-r, r + 1) for y in range(-r, r + 1) if max(abs(x), abs(y)) == r]
    ring_set = set(ring)
    for a in ring:
        for b in g.neighbors(a):
            if b in ring_set:
                lab[g.edge_id(a, b)] = p * rng.random()
    x = Vertex(*ctx.x)
    if not (x.z == 0 and x.y == 0 and 0 < x.x < r):
        raise DomainError("the planted configuration wants x on the positive x-axis inside the ring")
    spoke = [Vertex(i, 0, 0) for i in range(x.x, r + 1)]
    for a, b in zip(spoke[:-1], spoke[1:]):
        lab[g.edge_id(a, b)] = p * rng.random()
    escape = [Vertex(0, 0, 0)] + [Vertex(-i, 0, 1) for i in range(0, ctx.m + 1)]
    eps = (1 - p) / 8
    for a, b in zip(escape[:-1], escape[1:]):
        lab[g.edge_id(a, b)] = p + eps * rng.random()
    out = LabelField(g, lab, seed, 7)
    st = glue_events(out, ctx)
    if not st.domain:
        raise DomainError("planted configuration misses the domain event: " + "; ".join(st.failed_conjuncts()))
    return out


def sample_domain(
    ctx: GlueContext,
    count: int,
    seed: int = 0,
    burn_in: int = 200,
    thin: int = 10,
    chains: int = 4,
) -> list[LabelField]:
    """Draw configurations from the label law conditioned on the domain event.

    A single-site Metropolis chain resamples one label uniformly and rejects
    moves that leave the event; its stationary law is the conditional law.
    Several independent chains start from planted configurations.
    """
    if count < 1:
        raise DomainError("count must be positive")
    out: list[LabelField] = []
    per = -(-count // chains)
    for c in range(chains):
        rng = philox_generator(seed, 1000 + c)
        cur = planted_domain_labels(ctx, seed * chains + c)
        g = cur.geometry
        lab = cur.labels.copy()
        state = glue_events(cur, ctx)
        step = 0
        kept = 0
        while kept < per and len(out) < count:
            e = int(rng.integers(g.num_edges))
            old = lab[e]
            lab[e] = rng.random()
            nxt = glue_events(LabelField(g, lab.copy(), seed, c), ctx, state)
            if nxt.domain:
                state = nxt
            else:
                lab[e] = old
            step += 1
            if step > burn_in and step % thin == 0:
                out.append(LabelField(g, lab.copy(), seed, c))
                kept += 1
    return out
