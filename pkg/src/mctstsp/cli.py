"""Command line interface: generate, train, solve, eval, plot."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import oracles
from .embed_net import load_checkpoint, save_checkpoint
from .errors import InsufficientData
from .instances import (
    dumps_tour,
    gen_clustered,
    gen_random,
    load_instance,
    loads_tour,
    parse_tsplib_tour,
    save_instance,
    tour_length,
)
from .mcts import SearchConfig, best_of_starts
from .plot import tour_svg
from .trainer import TrainConfig, parse_config, train_with_state

log = logging.getLogger("mctstsp")

INSTANCE_SUFFIXES = (".txt", ".tsp", ".inst")
METHODS = ("held_karp", "brute_force", "nearest_neighbor", "two_opt", "mcts")


class UsageError(Exception):
    pass


def _list_instances(directory) -> list[Path]:
    d = Path(directory)
    if not d.is_dir():
        raise InsufficientData(f"{d} is not a directory")
    files = sorted(p for p in d.iterdir() if p.suffix.lower() in INSTANCE_SUFFIXES and not p.name.endswith(".opt.tour"))
    if not files:
        raise InsufficientData(f"no instance files in {d}")
    return files


def _parse_starts(text: str, n: int) -> list[int]:
    if text == "all":
        return list(range(n))
    if text == "one":
        return [0]
    try:
        starts = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"--starts must be all, one or a comma list, got {text!r}") from None
    if not starts or any(not 0 <= s < n for s in starts):
        raise UsageError(f"start cities must lie in 0..{n - 1}")
    return starts


def _known_optimum(path: Path, inst) -> float | None:
    if inst.n <= oracles.HELD_KARP_MAX_N:
        return oracles.held_karp(inst).length
    opt = path.with_name(path.stem + ".opt.tour")
    if opt.exists():
        return tour_length(inst, parse_tsplib_tour(opt.read_text()))
    return None


# -- subcommands --------------------------------------------------------------


def cmd_generate(args) -> None:
    gen = {"random": gen_random, "clustered": gen_clustered}[args.kind]
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    width = max(3, len(str(args.count - 1)))
    for i in range(args.count):
        name = f"{args.kind}{args.n}_{i:0{width}d}"
        inst = gen(args.n, [args.seed, i], name=name)
        save_instance(inst, out / f"{name}.txt")
    print(f"wrote {args.count} {args.kind} instances (n={args.n}) to {out}")


def cmd_train(args) -> None:
    config = parse_config(Path(args.config).read_text()) if args.config else TrainConfig()
    files = _list_instances(args.dataset)[: config.graphs_per_run]
    dataset = [load_instance(p) for p in files]
    out = Path(args.out)
    log_path = Path(args.log) if args.log else out.with_name(out.name + ".log.jsonl")
    with log_path.open("w") as fh:

        def on_record(rec):
            fh.write(json.dumps(rec) + "\n")

        params, adam = train_with_state(dataset, config, args.seed, checkpoint_path=out, on_record=on_record)
    save_checkpoint(out, params, adam)
    print(f"trained {config.max_episodes} episodes on {len(dataset)} graphs; checkpoint {out}, log {log_path}")


def cmd_solve(args) -> None:
    params, _ = load_checkpoint(args.checkpoint)
    inst = load_instance(args.instance)
    config = SearchConfig(playouts=args.playouts, c_p=args.c_p)
    starts = _parse_starts(args.starts, inst.n)
    t0 = time.perf_counter()
    tour = best_of_starts(inst, params, config, starts)
    elapsed = time.perf_counter() - t0
    out = Path(args.out) if args.out else Path(args.instance).with_suffix(".tour")
    out.write_text(dumps_tour(tour))
    print(f"{inst.name or Path(args.instance).stem} n={inst.n} length={tour_length(inst, tour):.6f} starts={len(starts)} elapsed={elapsed:.2f}s tour={out}")


def _best_start(solver, inst, starts, method):
    t0 = time.perf_counter()
    best = min((solver(inst, s) for s in starts), key=lambda r: r.length)  # first minimum -> lowest start
    return oracles.SolveResult(best.tour, best.length, method, time.perf_counter() - t0)


def _run_method(method, inst, params, config, starts):
    """Exact oracles ignore ``starts``; constructive methods keep the best start."""
    if method == "held_karp":
        return oracles.held_karp(inst)
    if method == "brute_force":
        return oracles.brute_force_opt(inst)
    start_list = _parse_starts(starts, inst.n)
    if method == "nearest_neighbor":
        return _best_start(oracles.nearest_neighbor, inst, start_list, method)
    if method == "two_opt":
        return _best_start(oracles.nn_two_opt, inst, start_list, method)
    t0 = time.perf_counter()
    tour = best_of_starts(inst, params, config, start_list)
    return oracles.SolveResult(tour, tour_length(inst, tour), "mcts", time.perf_counter() - t0)


def evaluate(files, methods, params=None, config=None, starts="all", timing=True):
    """Run every method on every instance; returns (records, summary)."""
    records = []
    for path in files:
        inst = load_instance(path)
        exact = _known_optimum(path, inst)
        for method in methods:
            res = _run_method(method, inst, params, config, starts)
            records.append(
                {
                    "instance": inst.name or path.stem,
                    "method": method,
                    "length": res.length,
                    "exact": exact,
                    "ratio": None if exact is None else oracles.optimality_gap(res.length, exact),
                    "elapsed": res.elapsed if timing else None,
                }
            )
    summary = []
    for method in methods:
        rows = [r for r in records if r["method"] == method]
        ratios = [r["ratio"] for r in rows if r["ratio"] is not None]
        summary.append(
            {
                "method": method,
                "count": len(rows),
                "mean_length": float(np.mean([r["length"] for r in rows])),
                "mean_ratio": float(np.mean(ratios)) if ratios else None,
            }
        )
    return records, summary


def cmd_eval(args) -> None:
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    unknown = [m for m in methods if m not in METHODS]
    if unknown or not methods:
        raise UsageError(f"unknown method(s) {unknown}; choose from {', '.join(METHODS)}")
    params = config = None
    if "mcts" in methods:
        if not args.checkpoint:
            raise UsageError("method mcts needs --checkpoint")
        params, _ = load_checkpoint(args.checkpoint)
        config = SearchConfig(playouts=args.playouts, c_p=args.c_p)
    files = _list_instances(args.instances)
    records, summary = evaluate(files, methods, params, config, args.starts, timing=not args.no_timing)
    with open(args.out, "w") as fh:
        for rec in records + summary:
            fh.write(json.dumps(rec) + "\n")
    print(f"{'method':<18} {'count':>5} {'ratio':>7} {'mean length':>14}")
    for s in summary:
        ratio = f"{s['mean_ratio']:.3f}" if s["mean_ratio"] is not None else "-"
        print(f"{s['method']:<18} {s['count']:>5} {ratio:>7} {s['mean_length']:>14.1f}")


def cmd_plot(args) -> None:
    inst = load_instance(args.instance)
    text = Path(args.tour).read_text()
    tour = parse_tsplib_tour(text) if "TOUR_SECTION" in text else loads_tour(text)
    if len(tour) != inst.n:
        raise ValueError(f"tour has {len(tour)} cities, instance has {inst.n}")
    Path(args.out).write_text(tour_svg(inst, tour))
    print(f"wrote {args.out}")


# -- entry point ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mctstsp", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write random or clustered instances")
    p.add_argument("--kind", choices=("random", "clustered"), required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="self-learning training run")
    p.add_argument("--config", help="key=value file; missing keys use defaults")
    p.add_argument("--dataset", required=True, help="directory of instance files")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--log", help="training log (default: <out>.log.jsonl)")
    p.add_argument("--seed", type=int, required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("solve", help="solve one instance with a trained checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--instance", required=True)
    p.add_argument("--starts", default="all", help="all, one, or comma list of start cities")
    p.add_argument("--playouts", type=int, default=400)
    p.add_argument("--c-p", type=float, default=0.5)
    p.add_argument("--out", help="tour file (default: instance path with .tour)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("eval", help="compare methods on a directory of instances")
    p.add_argument("--instances", required=True)
    p.add_argument("--methods", default="held_karp,nearest_neighbor")
    p.add_argument("--checkpoint")
    p.add_argument("--starts", default="all")
    p.add_argument("--playouts", type=int, default=400)
    p.add_argument("--c-p", type=float, default=0.5)
    p.add_argument("--out", required=True, help="report file, one JSON record per line")
    p.add_argument("--no-timing", action="store_true", help="omit elapsed times so reports are reproducible")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("plot", help="render a tour as SVG")
    p.add_argument("--instance", required=True)
    p.add_argument("--tour", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
