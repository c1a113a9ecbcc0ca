"""TSP20 run at the published protocol: 40 training graphs, 100 test graphs, 400 playouts, c_p 0.5.

Exact test optima come from a MILP with lazily added subtour cuts (scipy), since
Held-Karp is capped below n = 20 here. The optimal tours are written next to the
test instances as TSPLIB ``.opt.tour`` files, which ``mctstsp eval`` picks up.

    python scripts/reproduce_tsp20.py --workdir runs/tsp20 --episodes 1000
"""

from __future__ import annotations

import argparse
import itertools
import json
import time
from pathlib import Path

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp
from scipy.sparse import lil_matrix

from mctstsp.cli import evaluate
from mctstsp.embed_net import save_checkpoint
from mctstsp.instances import gen_random, load_instance, save_instance
from mctstsp.mcts import SearchConfig
from mctstsp.trainer import TrainConfig, train_with_state

N = 20
TRAIN_GRAPHS = 40
TEST_GRAPHS = 100
DEFAULT_EPISODES = 1000
DEFAULT_LR = 1e-3


def milp_tour(inst) -> list[int]:
    """Optimal tour by integer programming on edge variables with subtour elimination."""
    n = inst.n
    edges = list(itertools.combinations(range(n), 2))
    cost = np.array([inst.dist[i, j] for i, j in edges])
    degree = lil_matrix((n, len(edges)))
    for k, (i, j) in enumerate(edges):
        degree[i, k] = degree[j, k] = 1
    constraints = [LinearConstraint(degree.tocsr(), 2, 2)]
    while True:
        res = milp(cost, constraints=constraints, integrality=np.ones(len(edges)), bounds=Bounds(0, 1))
        adj = {v: [] for v in range(n)}
        for k in np.flatnonzero(res.x > 0.5):
            i, j = edges[k]
            adj[i].append(j)
            adj[j].append(i)
        cycles, seen = [], set()
        for s in range(n):
            if s in seen:
                continue
            cyc, prev, cur = [s], None, s
            seen.add(s)
            while True:
                nxt = next(u for u in adj[cur] if u != prev)
                if nxt == s:
                    break
                cyc.append(nxt)
                seen.add(nxt)
                prev, cur = cur, nxt
            cycles.append(cyc)
        if len(cycles) == 1:
            return cycles[0]
        for cyc in cycles:
            members = set(cyc)
            row = np.array([1.0 if i in members and j in members else 0.0 for i, j in edges])
            constraints.append(LinearConstraint(row, -np.inf, len(members) - 1))


def write_opt_tour(path: Path, tour) -> None:
    body = "\n".join(str(v + 1) for v in tour)
    path.write_text(f"NAME : {path.stem}\nTYPE : TOUR\nDIMENSION : {len(tour)}\nTOUR_SECTION\n{body}\n-1\nEOF\n")


def run(workdir, episodes=DEFAULT_EPISODES, lr=DEFAULT_LR, seed=0, test_graphs=TEST_GRAPHS, playouts=400, log=print) -> dict:
    work = Path(workdir)
    train_dir, test_dir = work / "train", work / "test"
    train_dir.mkdir(parents=True, exist_ok=True)
    test_dir.mkdir(parents=True, exist_ok=True)
    dataset = []
    for i in range(TRAIN_GRAPHS):
        inst = gen_random(N, [11, i], name=f"train{N}_{i:03d}")
        save_instance(inst, train_dir / f"{inst.name}.txt")
        dataset.append(inst)
    test_files = []
    t0 = time.perf_counter()
    for i in range(test_graphs):
        inst = gen_random(N, [12, i], name=f"test{N}_{i:03d}")
        path = test_dir / f"{inst.name}.txt"
        save_instance(inst, path)
        opt = test_dir / f"{inst.name}.opt.tour"
        if not opt.exists():
            write_opt_tour(opt, milp_tour(load_instance(path)))
        test_files.append(path)
    log(f"optima ready for {test_graphs} test graphs ({time.perf_counter() - t0:.0f}s)")

    config = TrainConfig(max_episodes=episodes, learning_rate=lr, search=SearchConfig(playouts=playouts))
    t0 = time.perf_counter()
    with (work / "train.log.jsonl").open("w") as fh:

        def on_record(rec):
            fh.write(json.dumps(rec) + "\n")
            if "probe_loss" in rec:
                log(f"episode {rec['episode']}: probe loss {rec['probe_loss']:.4f}")

        params, adam = train_with_state(dataset, config, seed, on_record=on_record)
    train_time = time.perf_counter() - t0
    save_checkpoint(work / "trained.bin", params, adam)
    log(f"trained {episodes} episodes in {train_time:.0f}s")

    t0 = time.perf_counter()
    search = SearchConfig(playouts=playouts)
    base, base_summary = evaluate(test_files, ["nearest_neighbor", "two_opt"], starts="all", timing=False)
    rows, summary = evaluate(test_files, ["mcts"], params, search, "all")
    eval_time = time.perf_counter() - t0
    with (work / "report.jsonl").open("w") as fh:
        for rec in base + base_summary + rows + summary:
            fh.write(json.dumps(rec) + "\n")
    result = {
        "episodes": episodes,
        "learning_rate": lr,
        "seed": seed,
        "test_graphs": test_graphs,
        "mean_ratio": summary[0]["mean_ratio"],
        "baselines": {s["method"]: s["mean_ratio"] for s in base_summary},
        "train_seconds": round(train_time),
        "eval_seconds": round(eval_time),
    }
    if episodes == 0:
        result["note"] = "untrained"
    (work / "summary.json").write_text(json.dumps(result, indent=2) + "\n")
    log(json.dumps(result))
    return result


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--workdir", required=True)
    ap.add_argument("--episodes", type=int, default=DEFAULT_EPISODES)
    ap.add_argument("--lr", type=float, default=DEFAULT_LR)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--test-graphs", type=int, default=TEST_GRAPHS)
    ap.add_argument("--playouts", type=int, default=400)
    a = ap.parse_args()
    run(a.workdir, a.episodes, a.lr, a.seed, a.test_graphs, a.playouts)


if __name__ == "__main__":
    main()
