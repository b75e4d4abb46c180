"""Paired-seed comparison of Heuristic, Personalized and Personalized+curiosity
in the hidden-archetype simulator.

    python scripts/sim_experiment.py --episodes 200 --seeds 0 1 2 3
"""

import argparse
import json
from pathlib import Path

import numpy as np

from coachope.rewards import CuriositySchedule
from coachope.simulator.archetypes import SimConfig, SimPolicy, run_policy

COLS = ["final_return", "goal_success", "pass_at_3", "trait_id_turn", "trait_id_rate", "archetype_alignment"]


def parse_args():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--episodes", type=int, default=200)
    p.add_argument("--rollouts", type=int, default=3)
    p.add_argument("--seeds", type=int, nargs="+", default=[0])
    p.add_argument("--lam", type=float, nargs="+", default=[0.1, 0.2])
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", default="runs/sim")
    return p.parse_args()


def main():
    args = parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = SimConfig()
    runs = [(SimPolicy.HEURISTIC, None), (SimPolicy.PERSONALIZED, None)]
    runs += [(SimPolicy.CURIOSITY, CuriositySchedule(lam, args.k)) for lam in args.lam]

    rows = {}
    for seed in args.seeds:
        for policy, sched in runs:
            m = run_policy(policy, args.episodes, sched, seed, cfg, n_rollouts=args.rollouts, workers=args.threads)
            rows.setdefault(m.policy, []).append(m.to_dict())

    print(f"{args.episodes} episodes x {len(args.seeds)} seed(s), {args.rollouts} rollouts each")
    print(f"{'policy':<28}" + "".join(f"{c:>20}" for c in COLS))
    summary = {}
    for label, per_seed in rows.items():
        stats = {}
        for c in COLS:
            vals = np.array([r[c] for r in per_seed], dtype=float)
            stats[c] = {"mean": float(np.nanmean(vals)), "sd": float(np.nanstd(vals)), "per_seed": vals.tolist()}
        summary[label] = stats
        cells = "".join(f"{stats[c]['mean']:>13.3f} ±{stats[c]['sd']:.3f}" for c in COLS)
        print(f"{label:<28}{cells}")

    doc = {"episodes": args.episodes, "rollouts": args.rollouts, "seeds": args.seeds,
           "simulator": cfg.to_dict(), "summary": summary}
    (out / "sim_summary.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    print(f"\nwrote {out}/sim_summary.json")


if __name__ == "__main__":
    main()
