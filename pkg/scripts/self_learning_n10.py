"""Desk-scale self-learning experiment on 10-city graphs.

Trains on 40 random graphs for 300 episodes, then compares the episode-0 and
trained networks with nearest neighbour on 20 held-out graphs (best over all
start cities, ratios against Held-Karp). Extra seeds show run-to-run spread.

    python scripts/self_learning_n10.py --workdir runs/n10 --seeds 0,1,2,3,4
"""

from __future__ import annotations

import argparse
import json
import time
from dataclasses import replace
from pathlib import Path

from mctstsp.experiments import ImprovementSetup, run_improvement


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--workdir", required=True)
    ap.add_argument("--seeds", default="0")
    ap.add_argument("--episodes", type=int, default=300)
    ap.add_argument("--lr", type=float, default=None, help="default: the setup's learning rate")
    ap.add_argument("--starts", default="all", help="all or one")
    a = ap.parse_args()

    base = ImprovementSetup(starts=a.starts)
    train = replace(base.train, max_episodes=a.episodes)
    if a.lr is not None:
        train = replace(train, learning_rate=a.lr)
    rows = []
    for seed in (int(s) for s in a.seeds.split(",")):
        t0 = time.perf_counter()
        res = run_improvement(replace(base, seed=seed, train=train), Path(a.workdir) / f"seed{seed}")
        row = {
            "seed": seed,
            "init_ratio": round(res.init_ratio, 4),
            "trained_ratio": round(res.trained_ratio, 4),
            "nn_ratio": round(res.nn_ratio, 4),
            "improved": res.trained_ratio < res.init_ratio,
            "probe_slope": res.probe_slope,
            "seconds": round(time.perf_counter() - t0),
        }
        rows.append(row)
        print(json.dumps(row), flush=True)
    wins = sum(r["improved"] for r in rows)
    print(f"improved on {wins}/{len(rows)} seeds")


if __name__ == "__main__":
    main()
