"""Command-line entry points.

    pointsal generate-data --out data/ --seed 7 --train-count 8 --test-count 12 --size 24
    pointsal train-full --data data/ --seed 0 [--config desk.cfg]
    pointsal al-run --data data/ --out runs/adv0 --strategy adversarial --seed 0
    pointsal ablate --data data/ --out runs/ablation --strategies adversarial,random
    pointsal budget-sweep --data data/ --out runs/sweep --budgets 2,4,6,8,10,20
    pointsal evaluate --checkpoint-dir runs/adv0/final_trajectory --data data/
    pointsal serve --experiment runs/human0 --port 8788
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ExperimentConfig, load_config


def _load_cfg(args) -> ExperimentConfig:
    if getattr(args, "config", None):
        return load_config(args.config)
    return ExperimentConfig().validate()


def _add_config_arg(p):
    p.add_argument("--config", help="flat key=value config file")


def cmd_generate_data(args):
    from .data import generate_for_config

    cfg = _load_cfg(args)
    if args.size:
        cfg.data.size = args.size
    if args.train_count:
        cfg.data.train_count = args.train_count
    if args.test_count:
        cfg.data.test_count = args.test_count
    train, test = generate_for_config(args.out, args.seed, cfg.data)
    print(f"wrote {len(train)} train + {len(test)} test images under {args.out}")


def cmd_train_full(args):
    from .engine import train_fully_supervised
    from .ensemble import save_trajectory

    cfg = _load_cfg(args)
    traj, metrics = train_fully_supervised(args.data, cfg, args.seed,
                                           arch=args.arch)
    print(f"fully-supervised: maxF={metrics['maxF']:.4f} "
          f"avgF={metrics['avgF']:.4f} mae={metrics['mae']:.4f}")
    if args.out:
        save_trajectory(traj, args.out)
        print(f"snapshots saved to {args.out}")


def cmd_al_run(args):
    from .engine import Experiment

    cfg = _load_cfg(args)
    exp = Experiment.create(args.out, args.data, cfg, args.strategy, args.seed,
                            oracle=args.oracle, target_budget=args.budget)
    try:
        if args.oracle == "gt":
            state = exp.run(oracle="gt")
            for e in state.metric_history:
                ratio = e["full_sup_ratio"]
                print(f"round {e['round']} budget {e['budget']:2d}: "
                      f"maxF={e['maxF']:.4f} avgF={e['avgF']:.4f} "
                      f"mae={e['mae']:.4f}"
                      + (f" ratio={ratio:.3f}" if ratio else ""))
        else:
            print(f"experiment created; {len(exp.pending_queries())} seed "
                  f"queries pending. Start `pointsal serve --experiment "
                  f"{args.out}` and label them.")
    finally:
        exp.close()


def cmd_ablate(args):
    from .engine import ablate

    cfg = _load_cfg(args)
    strategies = args.strategies.split(",")
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else list(cfg.seeds)
    rows = ablate(args.out, args.data, cfg, strategies, seeds,
                  target_budget=args.budget)
    for row in rows:
        print(f"{row['strategy']:>22} seed {row['seed']}: "
              f"maxF={row['maxF']:.4f} updates={row['updates']}")
    print(f"table written to {Path(args.out) / 'ablation.tsv'}")


def cmd_budget_sweep(args):
    from .engine import budget_sweep

    cfg = _load_cfg(args)
    budgets = [int(b) for b in args.budgets.split(",")]
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else list(cfg.seeds)
    rows = budget_sweep(args.out, args.data, cfg, budgets, seeds,
                        strategy=args.strategy)
    for b in budgets:
        vals = [r["maxF"] for r in rows if r["budget"] == b]
        print(f"budget {b:2d}: mean maxF {sum(vals) / len(vals):.4f}")
    print(f"table written to {Path(args.out) / 'budget_sweep.tsv'}")


def cmd_evaluate(args):
    from .data import DatasetManifest
    from .ensemble import ensemble_predict, load_trajectory_snapshots
    from .metrics import evaluate_maps

    models = load_trajectory_snapshots(args.checkpoint_dir)
    manifest = DatasetManifest.load(Path(args.data) / f"manifest_{args.split}.tsv")
    preds = [ensemble_predict(models, manifest.load_image(e))
             for e in manifest.entries]
    masks = [manifest.load_mask(e) for e in manifest.entries]
    m = evaluate_maps(preds, masks)
    print(json.dumps({"maxF": m["maxF"], "avgF": m["avgF"], "mae": m["mae"],
                      "models": len(models), "split": args.split}))


def cmd_serve(args):
    import os

    import uvicorn

    from .service import create_app

    host = args.host or os.environ.get("POINTSAL_BIND", "127.0.0.1")
    app = create_app(args.experiment)
    uvicorn.run(app, host=host, port=args.port, log_level="warning")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pointsal")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate-data", help="write a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--train-count", type=int)
    p.add_argument("--test-count", type=int)
    p.add_argument("--size", type=int)
    _add_config_arg(p)
    p.set_defaults(fn=cmd_generate_data)

    p = sub.add_parser("train-full", help="train the fully-supervised baseline")
    p.add_argument("--data", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--arch")
    p.add_argument("--out", help="directory for the snapshot checkpoints")
    _add_config_arg(p)
    p.set_defaults(fn=cmd_train_full)

    p = sub.add_parser("al-run", help="run one active-learning experiment")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--strategy", default="adversarial")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--budget", type=int, help="target budget (points per image)")
    p.add_argument("--oracle", choices=("gt", "external"), default="gt")
    _add_config_arg(p)
    p.set_defaults(fn=cmd_al_run)

    p = sub.add_parser("ablate", help="compare strategies over seeds")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--strategies", default="adversarial,random,entropy")
    p.add_argument("--seeds")
    p.add_argument("--budget", type=int)
    _add_config_arg(p)
    p.set_defaults(fn=cmd_ablate)

    p = sub.add_parser("budget-sweep", help="metric curve over budgets")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--budgets", default="2,4,6,8,10,20")
    p.add_argument("--seeds")
    p.add_argument("--strategy", default="adversarial")
    _add_config_arg(p)
    p.set_defaults(fn=cmd_budget_sweep)

    p = sub.add_parser("evaluate", help="evaluate saved snapshots on a split")
    p.add_argument("--checkpoint-dir", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test", choices=("train", "test"))
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("serve", help="HTTP annotation service for an experiment")
    p.add_argument("--experiment", required=True)
    p.add_argument("--port", type=int, default=8788)
    p.add_argument("--host", default=None)
    p.set_defaults(fn=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    args.fn(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
