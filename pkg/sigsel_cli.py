#!/usr/bin/env python3
"""
Command-line interface for writer-independent signature verification experiments.

Usage:
    python sigsel_cli.py gen --config configs/desk_spec.toml --out data/desk
    python sigsel_cli.py gen --config configs/transfer_target.toml --out data/target --transfer-from data/desk
    python sigsel_cli.py baseline --config configs/experiment.toml
    python sigsel_cli.py optimize --config configs/experiment.toml [--strategy gv]
    python sigsel_cli.py eval --config configs/experiment.toml --mask runs/desk/gv/rep_0/best_mask.json [--dataset data/target]
    python sigsel_cli.py eval --config configs/experiment.toml --model runs/desk/gv/rep_0/model.json
    python sigsel_cli.py report --run-dir runs/desk
"""

import argparse
import asyncio
import logging
import sys
from pathlib import Path

from components.harness import cmd_baseline, cmd_eval, cmd_gen, cmd_optimize
from components.reporting import cmd_report
from core.config import load_experiment_config, settings
from core.errors import SigselError
from data.models import StrategyKind


def _load_config(args):
    return load_experiment_config(args.config, {"seed": args.seed, "output_dir": args.out})


async def gen_command(args):
    """Generate a synthetic dataset."""
    print(f"🔄 Generating dataset from {args.spec}...")
    csv_path, manifest_path = await cmd_gen(args.spec, args.out, args.seed, args.transfer_from)
    print(f"✅ Dataset written to {csv_path}")
    print(f"   Manifest: {manifest_path}")
    return True


async def baseline_command(args):
    """Train on all features and verify the exploitation writers."""
    config = _load_config(args)
    print(f"🔄 Baseline over {config.replications} replication(s)...")
    report = await cmd_baseline(config)
    print(f"✅ Baseline EER {100 * report.mean_eer:.2f}% (std {100 * report.std_eer:.2f}) "
          f"over {len(report.per_writer_eer)} replication(s)")
    return True


async def optimize_command(args):
    """Run feature selection for one or all strategies."""
    config = _load_config(args)
    strategies = [StrategyKind(args.strategy)] if args.strategy else config.strategies
    print(f"🔄 Optimizing with {', '.join(s.value.upper() for s in strategies)} "
          f"over {config.replications} replication(s)...")
    results = await cmd_optimize(config, strategies)

    print(f"📋 Results written to {config.output_dir}")
    print("-" * 64)
    print(f"{'Strategy':<10} {'Rep':<5} {'#Features':<11} {'Sel EER':<10} {'Gap'}")
    print("-" * 64)
    for strategy, runs in results.items():
        for r, result in enumerate(runs):
            print(f"{strategy.value.upper():<10} {r:<5} {result.best_mask.count:<11} "
                  f"{result.returned_sel_eer:<10.4f} {result.overfitting_gap:.4f}")
    return True


async def eval_command(args):
    """Verify a dataset with a saved feature mask or model."""
    config = _load_config(args)
    report = await cmd_eval(config, args.mask, args.dataset, args.replication, model_path=args.model)
    print(f"✅ EER {100 * report.mean_eer:.2f}% (std {100 * report.std_eer:.2f}) "
          f"over {len(report.per_writer_eer)} writer(s)")
    return True


async def report_command(args):
    """Summarize completed runs."""
    csv_path, md_path = cmd_report(args.run_dir)
    print(f"✅ Summary written to {md_path} and {csv_path}")
    return True


COMMANDS = {
    "gen": gen_command,
    "baseline": baseline_command,
    "optimize": optimize_command,
    "eval": eval_command,
    "report": report_command,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Signature verification feature selection CLI")
    subparsers = parser.add_subparsers(dest="command", help="Available commands")

    def experiment_parser(name, help_text):
        sub = subparsers.add_parser(name, help=help_text)
        sub.add_argument("--config", type=Path, required=True, help="Experiment config (TOML)")
        sub.add_argument("--seed", type=int, help="Master seed (overrides the config)")
        sub.add_argument("--out", type=Path, help="Output directory (overrides the config)")
        return sub

    gen_parser = subparsers.add_parser("gen", help="Generate a synthetic dataset")
    gen_parser.add_argument("--config", "--spec", dest="spec", type=Path, required=True, help="Generator spec (TOML)")
    gen_parser.add_argument("--out", type=Path, required=True, help="Output directory")
    gen_parser.add_argument("--seed", type=int, help="Generator seed (overrides the spec)")
    gen_parser.add_argument("--transfer-from", type=Path, help="Source dataset directory whose layout is shared")

    experiment_parser("baseline", "Evaluate the all-features dichotomizer")

    optimize_parser = experiment_parser("optimize", "Run BPSO feature selection")
    optimize_parser.add_argument("--strategy", choices=[s.value for s in StrategyKind],
                                 help="Single strategy (default: all in the config)")

    eval_parser = experiment_parser("eval", "Evaluate a saved mask or model")
    source = eval_parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--mask", type=Path, help="best_mask.json of a run; a dichotomizer is trained with it")
    source.add_argument("--model", type=Path, help="model.json of a run, reused as is")
    eval_parser.add_argument("--dataset", type=Path, help="Target dataset (default: source exploitation writers)")
    eval_parser.add_argument("--replication", type=int, default=0, help="Replication whose training split is used")

    report_parser = subparsers.add_parser("report", help="Summarize completed runs")
    report_parser.add_argument("--run-dir", type=Path, required=True, help="Experiment output directory")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    if not args.command:
        parser.print_help()
        return 0

    logging.basicConfig(level=settings.LOG_LEVEL, format="%(asctime)s %(levelname)s %(name)s %(message)s")

    try:
        success = asyncio.run(COMMANDS[args.command](args))
    except SigselError as e:
        print(f"❌ Error: {e}", file=sys.stderr)
        return 1
    except Exception as e:
        print(f"❌ Unexpected error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    return 0 if success else 1


if __name__ == "__main__":
    sys.exit(main())
