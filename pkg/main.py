#!/usr/bin/env python3
"""
Command-line entry point for the goal-swapping replay laboratory.

Every subcommand reads an experiment preset (or JSON file), applies the
command-line overrides and runs one pipeline stage; `pipeline` runs them all.

Examples:
    python main.py --list-presets
    python main.py gen-data --config desk_four_rooms --seed 3
    python main.py pipeline --config desk_four_rooms --jobs 4 --set train.updates=5000
"""
import argparse
import json
import logging
import sys

from errors import GCRLError, StageError
from experiment_config import PresetManager, load_config
from q_learner import VARIANTS
import pipeline

log = logging.getLogger("main")

COMMANDS = ("gen-data", "pretrain", "fill-buffer", "train", "evaluate", "qhist", "classify", "pipeline")


def list_presets():
    """List all bundled experiment presets."""
    manager = PresetManager()
    default = manager.get_default_preset_name()
    print("\nAvailable presets:")
    for i, name in enumerate(manager.get_preset_names(), 1):
        suffix = " (default)" if name == default else ""
        print(f"{i}. {name}{suffix}")


def build_parser():
    parser = argparse.ArgumentParser(description="Offline goal-conditioned RL with prioritized goal swapping")
    parser.add_argument("--list-presets", "-l", action="store_true", help="List bundled experiment presets")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", "-c", help="Preset name or path to a JSON config (default: desk_four_rooms)")
    common.add_argument("--seed", type=int, help="Override the master seed")
    common.add_argument("--out", "-o", help="Override the output directory")
    common.add_argument("--jobs", "-j", type=int, help="Parallel training runs (pipeline only)")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="Override a config value by flat key path, e.g. train.rho=0.25 (repeatable)")
    common.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"],
                        help="Logging verbosity (default: INFO)")

    sub = parser.add_subparsers(dest="command")
    sub.add_parser("gen-data", parents=[common], help="Generate the offline dataset")
    p = sub.add_parser("pretrain", parents=[common], help="Pre-train the scoring Q-table")
    p.add_argument("--dataset", help="Dataset file (default: <out>/dataset.jsonl)")
    p = sub.add_parser("fill-buffer", parents=[common], help="Fill the prioritized goal-swap buffer")
    p.add_argument("--dataset", help="Dataset file")
    p.add_argument("--qtable", help="Pre-trained Q-table (default: <out>/pretrain_q.bin)")
    p = sub.add_parser("train", parents=[common], help="Retrain one agent")
    p.add_argument("--variant", choices=VARIANTS, default="mem", help="Training variant (default: mem)")
    p.add_argument("--run-seed", type=int, default=1, help="Seed of this training run (default: 1)")
    p.add_argument("--dataset", help="Dataset file")
    p.add_argument("--buffer", help="Buffer dump (default: <out>/buffer.csv)")
    p.add_argument("--qtable", help="Pre-trained Q-table, used with train.warm_start")
    p = sub.add_parser("evaluate", parents=[common], help="Evaluate a trained Q-table")
    p.add_argument("--qtable", required=True, help="Q-table to evaluate")
    p.add_argument("--variant", default="agent", help="Label written into the report")
    p.add_argument("--run-seed", type=int, help="Seed selecting the evaluation tasks (default: first eval seed)")
    p.add_argument("--dataset", help="Dataset file (supplies the grid)")
    for name, text in (("qhist", "Histogram Q-values of positive and swapped transitions"),
                       ("classify", "Reachability classifiers on the Q feature")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--qtable", help="Q-table to score with (default: <out>/pretrain_q.bin)")
        p.add_argument("--dataset", help="Dataset file")
    sub.add_parser("pipeline", parents=[common], help="Run every stage for all variants and seeds")
    return parser


def run_command(args):
    config = load_config(args.config, args.set, seed=args.seed, output_dir=args.out, jobs=args.jobs)
    log.info("Config '%s', seed %d, output %s", config.name, config.seed, config.output_dir)
    cmd = args.command
    if cmd == "gen-data":
        print(f"Dataset saved to: {pipeline.cmd_gen_data(config)}")
    elif cmd == "pretrain":
        print(f"Pre-trained Q-table saved to: {pipeline.cmd_pretrain(config, args.dataset)}")
    elif cmd == "fill-buffer":
        print(f"Buffer saved to: {pipeline.cmd_fill_buffer(config, args.qtable, args.dataset)}")
    elif cmd == "train":
        path = pipeline.cmd_train(config, args.variant, args.run_seed, args.dataset, args.buffer, args.qtable)
        print(f"Trained Q-table saved to: {path}")
    elif cmd == "evaluate":
        report = pipeline.cmd_evaluate(config, args.qtable, args.variant, args.run_seed, args.dataset)
        entry = report.entries[0]
        print(f"Mean reward {entry.mean_reward:.2f}, success rate {entry.success_rate:.2f}, "
              f"mean length {entry.mean_length:.2f}")
    elif cmd == "qhist":
        print(f"Histogram saved to: {pipeline.cmd_qhist(config, args.qtable, args.dataset)}")
    elif cmd == "classify":
        report = pipeline.cmd_classify(config, args.qtable, args.dataset)
        print(json.dumps(report, indent=2))
    elif cmd == "pipeline":
        summary = pipeline.cmd_pipeline(config)
        print("\nPipeline complete!")
        for variant, agg in summary["aggregate"].items():
            r = agg["mean_reward"]
            print(f"{variant:>8}: reward {r['mean']:.2f} +/- {r['std']:.2f}, "
                  f"success {agg['success_rate']['mean']:.2f}")
        for row in summary["significance"]:
            print(f"{row['variant_a']} vs {row['variant_b']}: t = {row['t']:.3f}, p = {row['p']:.4f}")
        print(f"Significance table saved to: {summary['significance_path']}")


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.list_presets:
        list_presets()
        return 0
    if args.command is None:
        parser.print_help()
        return 2

    logging.basicConfig(level=getattr(logging, args.log_level),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        run_command(args)
    except GCRLError as exc:
        log.error("%s", exc)
        return exc.exit_code
    except Exception as exc:
        log.exception("Unexpected failure")
        return StageError(args.command, exc).exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
