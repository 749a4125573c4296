"""Critical-point experiments on the slab: p_c, box crossings and the one-arm exponent.

    python scripts/criticality.py --k 1 --out results/k1
"""

from __future__ import annotations

import argparse
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from slabperc.harness import box_crossing_suite, estimate_pc, one_arm_suite
from slabperc.harness.plot import plot_box_crossing, plot_one_arm


@dataclass
class CriticalityConfig:
    k: int = 1
    pc_n: int = 64
    pc_tol: float = 0.005
    pc_trials: int = 10_000
    rhos: list[float] = field(default_factory=lambda: [0.5, 1.0, 2.0])
    scales: list[int] = field(default_factory=lambda: [8, 16, 32])
    box_trials: int = 10_000
    arm_m: int = 2
    arm_radii: list[int] = field(default_factory=lambda: [4, 8, 16, 32, 64])
    arm_trials: int = 10_000
    subcritical_shift: float = 0.1
    seed: int = 0
    workers: int = 1


def run(cfg: CriticalityConfig, out: Path) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    pc = estimate_pc(cfg.k, cfg.pc_n, cfg.pc_tol, cfg.pc_trials, cfg.seed, cfg.workers)
    box = box_crossing_suite(cfg.k, pc.estimate, cfg.rhos, cfg.scales, cfg.box_trials, cfg.seed, cfg.workers)
    arm = one_arm_suite(cfg.k, pc.estimate, cfg.arm_m, cfg.arm_radii, cfg.arm_trials, cfg.seed,
                        workers=cfg.workers)
    sub = one_arm_suite(cfg.k, pc.estimate - cfg.subcritical_shift, cfg.arm_m, cfg.arm_radii, cfg.arm_trials,
                        cfg.seed, workers=cfg.workers)
    with open(out / "records.jsonl", "w") as fh:
        for rec in [pc.record, *box, arm, sub]:
            fh.write(rec.to_json() + "\n")
    plot_box_crossing(box, out / "box_crossing.svg")
    plot_one_arm(arm, out / "one_arm.svg")
    summary = {
        "config": asdict(cfg),
        "pc": pc.estimate,
        "pc_ci95": pc.record.ci95,
        "box_within_policy": all(r.extra["within_policy"] for r in box),
        "delta": arm.estimate,
        "delta_ci95": arm.ci95,
        "critical_model": arm.extra.get("preferred_model"),
        "subcritical_model": sub.extra.get("preferred_model"),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return summary


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", type=Path, help="JSON file with CriticalityConfig fields")
    ap.add_argument("--k", type=int)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--workers", type=int)
    ap.add_argument("--out", type=Path, default=Path("results/criticality"))
    args = ap.parse_args()
    cfg = CriticalityConfig(**json.loads(args.config.read_text())) if args.config else CriticalityConfig()
    for name in ("k", "seed", "workers"):
        if getattr(args, name) is not None:
            setattr(cfg, name, getattr(args, name))
    print(json.dumps(run(cfg, args.out), indent=2))


if __name__ == "__main__":
    main()
