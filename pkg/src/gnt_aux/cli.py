"""Command line entry point: ``gnt-aux {run,sweep,analyze,pool}``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from collections import defaultdict
from pathlib import Path

import numpy as np

from .analysis import learning_curve, rank_curve, read_logs, stderr
from .harness import VARIANTS, ExperimentConfig, build_pool, run_many, save_runs, sweep, write_pool


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_file(args.config)
    variant = getattr(args, "variant", None) or cfg.variant
    pool = getattr(args, "pool", None) or cfg.pool_file
    cfg = cfg.with_variant(variant, pool_file=pool)
    if getattr(args, "step_size", None) is not None:
        cfg = cfg.with_step_size(args.step_size)
    return cfg


def cmd_run(args) -> int:
    cfg = _load_config(args)
    seeds = args.seed if args.seed else cfg.seeds
    logs = run_many(cfg, seeds, args.jobs)
    save_runs(logs, args.out)
    for lg in logs:
        status = "FAILED " + lg.message if lg.failed else "ok"
        print(f"{lg.env} {lg.variant} seed={lg.seed} episodes={len(lg.episodes)} "
              f"auc={lg.auc:.0f} steps={lg.total_steps} {status}")
    return int(any(lg.failed for lg in logs))


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    variants = args.variants.split(",") if args.variants else None
    kwargs = {"pilot_seeds": range(args.seeds), "jobs": args.jobs}
    if variants:
        kwargs["variants"] = variants
    results = sweep(cfg, **kwargs)
    text = json.dumps({v: {**r, "mean_auc": {str(a): m for a, m in r["mean_auc"].items()}}
                       for v, r in results.items()}, indent=2)
    if args.out:
        Path(args.out).write_text(text)
    print(text)
    return 0


def cmd_analyze(args) -> int:
    logs = [lg for lg in read_logs(args.logs) if not lg.failed]
    if not logs:
        print(f"no completed runs under {args.logs}", file=sys.stderr)
        return 1
    groups = defaultdict(list)
    for lg in logs:
        groups[(lg.env, lg.variant)].append(lg)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["env", "variant", "episode", "mean_steps", "stderr_steps",
                         "mean_stable_rank", "stderr_stable_rank"])
        for (env, variant), runs in sorted(groups.items()):
            steps, ranks = learning_curve(runs), rank_curve(runs)
            for ep in range(len(steps.mean)):
                writer.writerow([env, variant, ep, steps.mean[ep], steps.stderr[ep],
                                 ranks.mean[ep], ranks.stderr[ep]])
            print(f"{env:10s} {variant:18s} runs={steps.n_runs:3d} "
                  f"AUC {np.mean(steps.auc):10.1f} +- {stderr(steps.auc):8.1f}  "
                  f"final stable rank {ranks.mean[-1]:.3f}")
    return 0


def cmd_pool(args) -> int:
    pool = build_pool(read_logs(args.source))
    write_pool(pool, args.out)
    print(f"pool of {len(pool['subgoals'])} subgoals from {pool['n_runs']} runs -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gnt-aux", description="Generate-and-test auxiliary task discovery experiments.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="train agents and write their logs")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, nargs="*", help="seeds (default: the config's list)")
    p.add_argument("--variant", choices=VARIANTS)
    p.add_argument("--step-size", type=float)
    p.add_argument("--pool", help="task pool file for the fixed_pool variant")
    p.add_argument("--out", default="runs")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="pick the step size of each variant by lowest mean AUC")
    p.add_argument("--config", required=True)
    p.add_argument("--variants", help="comma-separated variants (default: the swept baselines)")
    p.add_argument("--seeds", type=int, default=10, help="number of pilot seeds")
    p.add_argument("--out")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("analyze", help="aggregate run logs into learning and stable-rank curves")
    p.add_argument("--logs", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("pool", help="collect retained subgoals of generate-and-test runs")
    p.add_argument("--from", dest="source", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pool)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
