"""Standalone SVG figures from estimate records."""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path
from typing import Iterable

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .estimates import EstimateRecord  # noqa: E402

# fixed ids and no timestamp, so the same records give the same bytes
matplotlib.rcParams["svg.hashsalt"] = "slabperc"
_META = {"Date": None, "Creator": None}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, format="svg", metadata=_META)
    plt.close(fig)
    return path


def _errbars(recs):
    est = np.array([r.estimate for r in recs])
    lo = np.array([r.ci95[0] for r in recs])
    hi = np.array([r.ci95[1] for r in recs])
    return est, np.vstack([est - lo, hi - est])


def plot_one_arm(rec: EstimateRecord, path) -> Path:
    """Log-log arm probability against n, with the fitted power law."""
    table = rec.extra["table"]
    ns = np.array([t["n"] for t in table], dtype=float)
    est = np.array([t["estimate"] for t in table])
    keep = est > 0
    fig, ax = plt.subplots(figsize=(5, 4))
    lo = np.array([t["ci95"][0] for t in table])
    hi = np.array([t["ci95"][1] for t in table])
    ax.errorbar(ns[keep], est[keep], yerr=[est[keep] - lo[keep], hi[keep] - est[keep]], fmt="o", label="estimate")
    if "intercept" in rec.extra:
        xs = np.geomspace(ns[keep].min(), ns[keep].max(), 50)
        ax.plot(xs, np.exp(rec.extra["intercept"]) * xs ** (-rec.estimate),
                label=f"fit, delta = {rec.estimate:.3f}")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("n")
    ax.set_ylabel("P[inner box joined to boundary]")
    ax.set_title(f"one arm, k={rec.params['k']}, p={rec.params['p']:.4f}, m={rec.params['m']}")
    ax.legend()
    return _save(fig, path)


def plot_box_crossing(recs: Iterable[EstimateRecord], path) -> Path:
    """Crossing probability against n, one curve per aspect ratio."""
    by_rho = defaultdict(list)
    for r in recs:
        by_rho[r.params["rho"]].append(r)
    fig, ax = plt.subplots(figsize=(5, 4))
    for rho in sorted(by_rho):
        rs = sorted(by_rho[rho], key=lambda r: r.params["n"])
        est, err = _errbars(rs)
        ax.errorbar([r.params["n"] for r in rs], est, yerr=err, marker="o", label=f"rho = {rho}")
    ax.axhline(0.05, color="grey", ls=":")
    ax.axhline(0.95, color="grey", ls=":")
    ax.set_xscale("log", base=2)
    ax.set_ylim(0, 1)
    ax.set_xlabel("n")
    ax.set_ylabel("f(n, floor(rho n))")
    ax.legend()
    return _save(fig, path)


def plot_single_tree(recs: Iterable[EstimateRecord], path) -> Path:
    """Probability that the two stopped invasions meet, against N."""
    rs = sorted(recs, key=lambda r: r.params["N"])
    est, err = _errbars(rs)
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.errorbar([r.params["N"] for r in rs], est, yerr=err, marker="o")
    ax.set_xscale("log", base=2)
    ax.set_ylim(0, 1)
    ax.set_xlabel("N")
    ax.set_ylabel("P[invasions from 0 and x meet]")
    return _save(fig, path)


def read_records(path) -> list[EstimateRecord]:
    return [EstimateRecord.from_json(line) for line in Path(path).read_text().splitlines() if line.strip()]


def plot_records(records: list[EstimateRecord], path) -> Path:
    """Pick the figure from the experiment name of the records."""
    kinds = {r.experiment for r in records}
    if kinds == {"one-arm"}:
        return plot_one_arm(records[-1], path)
    if kinds == {"box-crossing"}:
        return plot_box_crossing(records, path)
    if kinds == {"single-tree"}:
        return plot_single_tree(records, path)
    raise ValueError(f"no figure for experiments {sorted(kinds)}")
