"""Desk-scale self-learning experiment shared by the acceptance suite and scripts/.

Trains on a fixed set of random graphs, then compares the episode-0 network,
the trained network and nearest neighbour on held-out graphs. Every stage is
seeded, and report records omit timings, so two runs give identical files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cli import evaluate
from .embed_net import init_params, save_checkpoint
from .instances import gen_random, load_instance, save_instance
from .mcts import SearchConfig
from .trainer import TrainConfig, train_with_state


@dataclass(frozen=True)
class ImprovementSetup:
    n: int = 10
    train_graphs: int = 40
    test_graphs: int = 20
    train_instance_seed: int = 1
    test_instance_seed: int = 2
    seed: int = 0
    train: TrainConfig = field(default_factory=lambda: TrainConfig(max_episodes=300, learning_rate=3e-3))
    eval_search: SearchConfig = field(default_factory=SearchConfig)
    starts: str = "all"


@dataclass
class ImprovementResult:
    init_ratio: float
    trained_ratio: float
    nn_ratio: float
    probe_episodes: list[int]
    probe_losses: list[float]
    checkpoint: Path
    report: Path
    train_log: Path

    @property
    def probe_slope(self) -> float:
        """Least-squares slope of probe loss against episode."""
        return float(np.polyfit(self.probe_episodes, self.probe_losses, 1)[0])


def _write_suite(directory: Path, n: int, count: int, seed: int, prefix: str) -> list[Path]:
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(count):
        path = directory / f"{prefix}{n}_{i:03d}.txt"
        save_instance(gen_random(n, [seed, i], name=path.stem), path)
        paths.append(path)
    return paths


def run_improvement(setup: ImprovementSetup, workdir) -> ImprovementResult:
    work = Path(workdir)
    train_files = _write_suite(work / "train", setup.n, setup.train_graphs, setup.train_instance_seed, "train")
    test_files = _write_suite(work / "test", setup.n, setup.test_graphs, setup.test_instance_seed, "test")
    dataset = [load_instance(p) for p in train_files]
    log_path = work / "train.log.jsonl"
    records = []
    with log_path.open("w") as fh:

        def on_record(rec):
            records.append(rec)
            fh.write(json.dumps(rec) + "\n")

        params, adam = train_with_state(dataset, setup.train, setup.seed, on_record=on_record)
    checkpoint = work / "trained.bin"
    save_checkpoint(checkpoint, params, adam)

    cfg = setup.eval_search
    base, base_summary = evaluate(test_files, ["held_karp", "nearest_neighbor"], starts=setup.starts, timing=False)
    init_rows, init_summary = evaluate(test_files, ["mcts"], init_params(setup.seed), cfg, setup.starts, timing=False)
    trained_rows, trained_summary = evaluate(test_files, ["mcts"], params, cfg, setup.starts, timing=False)

    report = work / "report.jsonl"
    with report.open("w") as fh:
        for tag, rows in (("baseline", base + base_summary), ("init", init_rows + init_summary), ("trained", trained_rows + trained_summary)):
            for rec in rows:
                fh.write(json.dumps({"model": tag, **rec}) + "\n")

    probes = [(r["episode"], r["probe_loss"]) for r in records if "probe_loss" in r]
    nn = next(s for s in base_summary if s["method"] == "nearest_neighbor")
    return ImprovementResult(
        init_ratio=init_summary[0]["mean_ratio"],
        trained_ratio=trained_summary[0]["mean_ratio"],
        nn_ratio=nn["mean_ratio"],
        probe_episodes=[e for e, _ in probes],
        probe_losses=[v for _, v in probes],
        checkpoint=checkpoint,
        report=report,
        train_log=log_path,
    )
