"""Experiment plans: parameter grids run in parallel into a resumable JSON-lines sink."""

from __future__ import annotations

import csv
import hashlib
import io
import itertools
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from ..connectivity import has_surrounding_circuit
from ..geometry import SlabGeometry, annulus
from ..labels import LabelField, threshold
from .estimates import (
    EstimateRecord,
    arm_radii,
    crossing_thresholds,
    intersection_counts,
    proportion_record,
    trial_labels,
)

KINDS = ("crossing", "one-arm", "circuit", "single-tree")
REQUIRED = {
    "crossing": ("k", "p", "m", "n"),
    "one-arm": ("k", "p", "m", "n"),
    "circuit": ("k", "p", "n"),
    "single-tree": ("k", "x", "N"),
}


class PlanError(RuntimeError):
    pass


@dataclass
class ExperimentPlan:
    """A finite grid of cells, each estimated with ``trials`` Monte Carlo trials.

    ``grid`` maps parameter names to lists of values; cells are the Cartesian
    product in key-sorted order.  ``block`` is the number of trials per work
    unit; counts add up, so the split never changes the result.
    """

    kind: str
    grid: dict
    trials: int
    seed: int = 0
    out: str | None = None
    format: str = "jsonl"
    block: int = 500
    deterministic: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise PlanError(f"unknown experiment kind {self.kind!r}; expected one of {KINDS}")
        if self.trials < 1:
            raise PlanError("trials must be at least 1")
        if self.format not in ("jsonl", "csv"):
            raise PlanError("format must be jsonl or csv")
        missing = [p for p in REQUIRED[self.kind] if self.grid and p not in self.grid]
        if missing:
            raise PlanError(f"grid for {self.kind} lacks {missing}")
        if any(not 0.0 <= float(p) <= 1.0 for p in self.grid.get("p", [])):
            raise PlanError("p values must lie in [0, 1]")

    def cells(self) -> list[dict]:
        if not self.grid or any(len(v) == 0 for v in self.grid.values()):
            return []
        keys = sorted(self.grid)
        return [dict(zip(keys, vals)) for vals in itertools.product(*(self.grid[k] for k in keys))]

    def cell_id(self, params: dict) -> str:
        s = json.dumps([self.kind, params, self.seed, self.trials], sort_keys=True)
        return hashlib.sha256(s.encode()).hexdigest()[:16]

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentPlan":
        d = json.loads(text)
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise PlanError(f"unknown plan fields {sorted(extra)}")
        return cls(**d)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "ExperimentPlan":
        return cls.from_json(Path(path).read_text())


def _count(kind: str, params: dict, seed: int, start: int, stop: int) -> int:
    """Successes among trials ``start..stop-1`` of one cell."""
    n = stop - start
    if kind == "crossing":
        thr = crossing_thresholds(params["k"], params["m"], params["n"], n, seed, start)
        return int(np.count_nonzero(thr < params["p"]))
    if kind == "one-arm":
        R = arm_radii(params["k"], params["m"], params["n"], params["p"], n, seed, start)
        return int(np.count_nonzero(R >= params["n"]))
    if kind == "circuit":
        k, m = params["k"], params["n"]
        g = SlabGeometry.box(k, 2 * m)
        ann = annulus(g, m, 2 * m)
        key = {"k": k, "n": m, "kind": "circuit"}
        return sum(
            has_surrounding_circuit(threshold(LabelField(g, trial_labels(g, key, seed, i)), params["p"]), ann)
            for i in range(start, stop)
        )
    if kind == "single-tree":
        return int(intersection_counts(params["k"], params["x"], [params["N"]], n, seed, start)[0])
    raise PlanError(kind)


def _task(args) -> int:
    return _count(*args)


def _completed(path: Path, fmt: str) -> dict[str, str]:
    """Cell id -> stored line, for cells already present in the sink."""
    if not path.exists():
        return {}
    done = {}
    text = path.read_text()
    if fmt == "jsonl":
        for line in text.splitlines():
            if line.strip():
                d = json.loads(line)
                done[d["extra"]["cell"]] = line
    else:
        rows = list(csv.DictReader(io.StringIO(text)))
        for row in rows:
            done[row["cell"]] = row
    return done


CSV_FIELDS = ["cell", "experiment", "params", "estimate", "ci_lo", "ci_hi", "trials", "successes", "seed",
              "version", "wall_ms"]


def _csv_row(rec: EstimateRecord) -> dict:
    return {
        "cell": rec.extra["cell"], "experiment": rec.experiment, "params": json.dumps(rec.params, sort_keys=True),
        "estimate": repr(rec.estimate), "ci_lo": repr(rec.ci95[0]), "ci_hi": repr(rec.ci95[1]),
        "trials": rec.trials, "successes": rec.successes, "seed": rec.seed, "version": rec.version,
        "wall_ms": "" if rec.wall_ms is None else repr(rec.wall_ms),
    }


def run_plan(plan: ExperimentPlan, workers: int = 1) -> Iterator[EstimateRecord]:
    """Run every pending cell and yield its record; completed cells in the sink are skipped.

    Records are written in grid order as soon as their cell finishes, so an
    interrupted run leaves a valid prefix that a rerun extends.  With
    ``deterministic`` set, ``wall_ms`` is null and the sink bytes depend only
    on the plan.
    """
    cells = plan.cells()
    sink = Path(plan.out) if plan.out else None
    done = _completed(sink, plan.format) if sink else {}
    pending = [c for c in cells if plan.cell_id(c) not in done]
    tasks, owners = [], []
    for ci, c in enumerate(pending):
        for a in range(0, plan.trials, plan.block):
            tasks.append((plan.kind, c, plan.seed, a, min(a + plan.block, plan.trials)))
            owners.append(ci)
    if sink is not None:
        try:
            sink.parent.mkdir(parents=True, exist_ok=True)
            fh = sink.open("a", newline="")
        except OSError as exc:
            raise PlanError(f"cannot open sink {sink}: {exc}") from exc
    else:
        fh = None
    writer = None
    if fh is not None and plan.format == "csv":
        writer = csv.DictWriter(fh, CSV_FIELDS)
        if not done and fh.tell() == 0:
            writer.writeheader()
    pool = ProcessPoolExecutor(workers) if workers > 1 and len(tasks) > 1 else None
    written = 0
    try:
        results = pool.map(_task, tasks) if pool else map(_task, tasks)
        counts = [0] * len(pending)
        left = [0] * len(pending)
        for ci in owners:
            left[ci] += 1
        nxt = 0
        t0 = time.perf_counter()
        for ci, s in zip(owners, results):
            counts[ci] += s
            left[ci] -= 1
            while nxt < len(pending) and left[nxt] == 0:
                c = pending[nxt]
                wall = None if plan.deterministic else (time.perf_counter() - t0) * 1e3
                rec = proportion_record(plan.kind, c, counts[nxt], plan.trials, plan.seed, wall,
                                        cell=plan.cell_id(c))
                if fh is not None:
                    try:
                        if writer:
                            writer.writerow(_csv_row(rec))
                        else:
                            fh.write(rec.to_json() + "\n")
                        fh.flush()
                    except OSError as exc:
                        raise PlanError(f"write to {sink} failed after {written} new records; "
                                        f"partial results are in {sink}") from exc
                written += 1
                nxt += 1
                yield rec
    finally:
        if pool:
            pool.shutdown(cancel_futures=True)
        if fh is not None:
            fh.close()
