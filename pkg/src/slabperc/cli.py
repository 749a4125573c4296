"""Command line entry point: ``slabperc <subcommand> [flags]``.

Every flag can also be set through an environment variable named
``SLABPERC_<FLAG>`` (for example ``SLABPERC_TRIALS=5000``).
"""

from __future__ import annotations

import csv
import json
import sys
from pathlib import Path

import click

from . import __version__
from .connectivity import CrossingQuery, min_open_path, min_surrounding_circuit
from .geometry import SlabGeometry, Vertex, annulus, rectangle, whole
from .harness import estimates as est
from .harness.plan import CSV_FIELDS, ExperimentPlan, PlanError, _csv_row, run_plan
from .harness.plot import plot_records, read_records
from .invasion import StopRule, invade, kruskal_mst, msf_window
from .labels import LabelField, sample_labels, threshold


def _ints(text: str) -> list[int]:
    return [int(t) for t in str(text).replace(" ", "").split(",") if t]


def _floats(text: str) -> list[float]:
    return [float(t) for t in str(text).replace(" ", "").split(",") if t]


def _opt(name, *decls, **kw):
    env = "SLABPERC_" + name.lstrip("-").replace("-", "_").upper()
    return click.option(name, *decls, envvar=env, show_default=True, **kw)


def _emit(records, out, fmt):
    """Write records as JSON lines or CSV to ``out`` (stdout if omitted)."""
    fh = open(out, "w", newline="") if out else sys.stdout
    try:
        if fmt == "csv":
            w = csv.DictWriter(fh, CSV_FIELDS)
            w.writeheader()
            for r in records:
                r.extra.setdefault("cell", "")
                w.writerow(_csv_row(r))
        else:
            for r in records:
                fh.write(r.to_json() + "\n")
    finally:
        if out:
            fh.close()


def _run(plan: ExperimentPlan, workers: int, out, fmt):
    if out is None:
        _emit(list(run_plan(plan, workers)), None, fmt)
        return
    plan.out, plan.format = out, fmt
    n = sum(1 for _ in run_plan(plan, workers))
    click.echo(f"{n} new records -> {out}", err=True)


def _load_or_sample(labels, k, n, seed, stream=0) -> LabelField:
    if labels:
        return LabelField.load(labels)
    return sample_labels(SlabGeometry.box(k, n), seed, stream)


fmt_opt = _opt("--format", "fmt", type=click.Choice(["jsonl", "csv"]), default="jsonl")
out_opt = _opt("--out", type=click.Path(dir_okay=False), default=None, help="output file (stdout if omitted)")
seed_opt = _opt("--seed", type=int, default=0)
trials_opt = _opt("--trials", type=int, default=1000)
workers_opt = _opt("--workers", type=int, default=1)
k_opt = _opt("--k", type=int, default=1, help="slab thickness")
config_opt = _opt("--config", type=click.Path(exists=True, dir_okay=False), default=None,
                  help="JSON experiment plan; overrides the grid flags")


class _Group(click.Group):
    """Report library errors as usage failures instead of tracebacks."""

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except (PlanError, est.EstimationError, ValueError) as exc:
            raise click.ClickException(str(exc)) from exc


@click.group(cls=_Group)
@click.version_option(__version__)
def main():
    """Percolation, invasion and spanning-forest experiments on slabs Z^2 x {0..k}."""


@main.command()
@k_opt
@_opt("--n", type=int, default=8, help="half-width of the square window")
@seed_opt
@_opt("--stream", type=int, default=0)
@_opt("--out", type=click.Path(dir_okay=False), required=True, help="binary label dump")
def sample(k, n, seed, stream, out):
    """Draw independent uniform labels on a box window and dump them."""
    f = sample_labels(SlabGeometry.box(k, n), seed, stream)
    f.dump(out)
    click.echo(json.dumps({"geometry": f.geometry.to_json(), "edges": f.geometry.num_edges,
                           "seed": seed, "stream": stream}))


@main.command()
@k_opt
@_opt("--p", type=float, default=0.5)
@_opt("--m", type=int, default=8, help="rectangle width")
@_opt("--n", type=int, default=8, help="rectangle height")
@trials_opt
@seed_opt
@workers_opt
@out_opt
@fmt_opt
@config_opt
def crossing(k, p, m, n, trials, seed, workers, out, fmt, config):
    """Estimate f_p(m, n), the horizontal crossing probability of [0,m] x [0,n]."""
    plan = ExperimentPlan.load(config) if config else ExperimentPlan(
        "crossing", {"k": [k], "p": [p], "m": [m], "n": [n]}, trials, seed)
    _run(plan, workers, out, fmt)


@main.command("pc-estimate")
@k_opt
@_opt("--n", type=int, default=64)
@_opt("--tol", type=float, default=0.005)
@trials_opt
@seed_opt
@workers_opt
@out_opt
@fmt_opt
def pc_estimate(k, n, tol, trials, seed, workers, out, fmt):
    """Bisection for the p at which f_p(n, n) = 1/2."""
    _emit([est.estimate_pc(k, n, tol, trials, seed, workers=workers).record], out, fmt)


def _pc_or(p, k, seed):
    if p is not None:
        return p
    click.echo("no --p given: estimating p_c at n=64 first", err=True)
    return est.estimate_pc(k, 64, 0.005, 2000, seed).estimate


@main.command("box-crossing")
@k_opt
@_opt("--p", type=float, default=None, help="defaults to an estimate of p_c")
@_opt("--rho", default="1,2,0.5", help="aspect ratios")
@_opt("--radii", default="8,16,32", help="scales n")
@trials_opt
@seed_opt
@workers_opt
@out_opt
@fmt_opt
def box_crossing(k, p, rho, radii, trials, seed, workers, out, fmt):
    """f(n, floor(rho n)) across scales, flagged against the [0.05, 0.95] policy band."""
    p = _pc_or(p, k, seed)
    _emit(est.box_crossing_suite(k, p, _floats(rho), _ints(radii), trials, seed, workers=workers), out, fmt)


@main.command("one-arm")
@k_opt
@_opt("--p", type=float, default=None, help="defaults to an estimate of p_c")
@_opt("--m", type=int, default=2, help="inner box radius")
@_opt("--radii", default="4,8,16,32,64")
@trials_opt
@seed_opt
@workers_opt
@out_opt
@fmt_opt
@config_opt
def one_arm(k, p, m, radii, trials, seed, workers, out, fmt, config):
    """Arm probabilities from the box of radius m, with the fitted decay exponent."""
    if config:
        _run(ExperimentPlan.load(config), workers, out, fmt)
        return
    p = _pc_or(p, k, seed)
    _emit([est.one_arm_suite(k, p, m, _ints(radii), trials, seed, workers=workers)], out, fmt)


@main.command()
@k_opt
@_opt("--p", type=float, default=None, help="defaults to an estimate of p_c")
@_opt("--radii", default="4,8,16", help="inner radii n of the annuli A_{n,2n}")
@trials_opt
@seed_opt
@workers_opt
@out_opt
@fmt_opt
@config_opt
def circuit(k, p, radii, trials, seed, workers, out, fmt, config):
    """Surrounding open circuits in A_{n,2n} and the blocking complement."""
    if config:
        _run(ExperimentPlan.load(config), workers, out, fmt)
        return
    p = _pc_or(p, k, seed)
    _emit(est.circuit_suite(k, p, _ints(radii), trials, seed, workers=workers), out, fmt)


@main.command("single-tree")
@k_opt
@_opt("--x", default="4,0,0", help="second start vertex")
@_opt("--radii", default="4,8,16,32,64", help="stopping radii N")
@trials_opt
@seed_opt
@workers_opt
@out_opt
@fmt_opt
@config_opt
def single_tree(k, x, radii, trials, seed, workers, out, fmt, config):
    """Probability that the invasions from 0 and x, stopped at radius N, meet."""
    if config:
        _run(ExperimentPlan.load(config), workers, out, fmt)
        return
    _emit(est.single_tree_suite(k, _ints(x), _ints(radii), trials, seed, workers=workers), out, fmt)


@main.command("invade")
@_opt("--labels", type=click.Path(exists=True, dir_okay=False), default=None, help="label dump")
@k_opt
@_opt("--n", type=int, default=16, help="window half-width when sampling")
@seed_opt
@_opt("--start", default="0,0,0")
@_opt("--stop", type=click.Choice(["exhaust", "hit-boundary", "steps"]), default="hit-boundary")
@_opt("--stop-n", type=int, default=8, help="stop radius or step budget")
@out_opt
def invade_cmd(labels, k, n, seed, start, stop, stop_n, out):
    """Run invasion percolation and write the step log as CSV."""
    f = _load_or_sample(labels, k, n, seed)
    rule = StopRule(stop, stop_n) if stop != "exhaust" else StopRule.exhaust()
    text = invade(f, _ints(start), rule).to_csv()
    if out:
        Path(out).write_text(text)
    else:
        click.echo(text, nl=False)


@main.command()
@_opt("--labels", type=click.Path(exists=True, dir_okay=False), default=None)
@k_opt
@_opt("--n", type=int, default=8, help="window half-width when sampling")
@seed_opt
@_opt("--flavor", type=click.Choice(["mst", "free", "wired"]), default="mst")
@_opt("--radius", type=int, default=None, help="box radius for the free / wired trees")
@out_opt
def msf(labels, k, n, seed, flavor, radius, out):
    """Minimal spanning tree of the window, or a free / wired box tree, as a JSON edge list."""
    f = _load_or_sample(labels, k, n, seed)
    if flavor == "mst":
        forest = kruskal_mst(f)
    else:
        r = radius if radius is not None else (n - 1 if flavor == "wired" else n)
        forest = msf_window(f, r, flavor)
    text = forest.to_json()
    if out:
        Path(out).write_text(text + "\n")
    else:
        click.echo(text)


def _region(g, spec):
    if "annulus" in spec:
        a, b = spec["annulus"]
        return annulus(g, a, b, tuple(spec.get("center", (0, 0))))
    if "rectangle" in spec:
        return rectangle(g, *spec["rectangle"])
    return whole(g)


def _answer_query(f: LabelField, q: dict, p: float) -> dict:
    c = threshold(f, p)
    g = f.geometry
    kind = q.get("kind", "path")
    if kind == "circuit":
        ann = _region(g, q)
        gamma = min_surrounding_circuit(c, ann)
    elif kind == "crossing":
        reg = _region(g, q)
        cq = CrossingQuery.vertical(reg) if q.get("direction") == "vertical" else CrossingQuery.horizontal(reg)
        gamma = min_open_path(c, reg, [g.vertex(i) for i in cq.source], [g.vertex(i) for i in cq.target])
    else:
        reg = _region(g, q) if ("rectangle" in q or "annulus" in q) else None
        gamma = min_open_path(c, reg, [Vertex(*v) for v in q["source"]], [Vertex(*v) for v in q["target"]])
    return {"kind": kind, "p": p, "found": len(gamma.vertices) > 0, "witness": gamma.to_json()}


@main.command()
@_opt("--labels", type=click.Path(exists=True, dir_okay=False), default=None,
      help="label dump to query; without it the built-in checks run")
@_opt("--query", type=click.Path(exists=True, dir_okay=False), default=None, help="query JSON")
@_opt("--p", type=float, default=0.5)
@_opt("--suite", type=click.Choice(["quick", "oracles", "gluing", "menger"]), default="quick")
@seed_opt
def verify(labels, query, p, suite, seed):
    """Print the minimal witness for a query, or run the oracle and surgery checks."""
    if labels:
        if not query:
            raise click.UsageError("--labels needs --query")
        click.echo(json.dumps(_answer_query(LabelField.load(labels), json.loads(Path(query).read_text()), p)))
        return
    from . import checks

    ok = True
    for name, report in checks.run_suite(suite, seed):
        ok &= bool(report.get("holds"))
        click.echo(json.dumps({"check": name, **report}, default=est._jsonable))
    if not ok:
        sys.exit(1)


@main.command()
@click.argument("records", type=click.Path(exists=True, dir_okay=False))
@_opt("--out", type=click.Path(dir_okay=False), required=True, help="SVG path")
def plot(records, out):
    """Standalone SVG figure from a JSON-lines record file."""
    path = plot_records(read_records(records), out)
    click.echo(str(path))


if __name__ == "__main__":  # pragma: no cover
    main()
