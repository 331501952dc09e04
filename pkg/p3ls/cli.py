"""Command-line entry point: ``p3ls gen``, ``p3ls run`` and ``p3ls audit``.

Usage:
    p3ls gen --dataset 1 --seed 7 --out data/ds1
    p3ls run --data data/ds1 --models cen,local,p3ls --reps 10 --kmax 10 --seed 7 --out results
    p3ls audit --transcript results/transcripts/ds1.jsonl
"""

import argparse
import asyncio
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError

from .config import DEFAULT_K_MAX, DEFAULT_REPETITIONS, DEFAULT_ROWS, LOG_LEVEL, QUICK_REPETITIONS
from .errors import P3lsError
from .harness import ALL_MODELS, ExperimentConfig, run_experiment
from .simulator import builtin_config, export_dataset, generate_dataset, load_stage_configs
from .tools.report_writer import format_summary
from .transcript import ProtocolTranscript, audit_views

logger = logging.getLogger(__name__)


def _models(text: str) -> List[str]:
    models = [item.strip() for item in text.split(",") if item.strip()]
    unknown = [model for model in models if model not in ALL_MODELS]
    if unknown:
        raise argparse.ArgumentTypeError(f"unknown model(s): {', '.join(unknown)}")
    return models


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="p3ls",
        description="Privacy-preserving federated PLS on simulated multistage process data",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    gen = commands.add_parser("gen", help="Generate a dataset and export it as CSV files")
    gen.add_argument("--dataset", required=True, help="Built-in id 1..5 or a stage-config JSON file")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--rows", type=int, default=DEFAULT_ROWS)
    gen.add_argument("--out", required=True, help="Output directory")

    run = commands.add_parser("run", help="Compare CenPLS, LocalPLS and P3LS over repeated splits")
    run.add_argument("--data", nargs="+", required=True, help="Dataset directories or built-in ids")
    run.add_argument("--models", type=_models, default=list(ALL_MODELS), help="Comma-separated subset of cen,local,p3ls")
    run.add_argument("--reps", type=int, default=None, help=f"Repetitions (default {DEFAULT_REPETITIONS})")
    run.add_argument("--quick", action="store_true", help=f"Use {QUICK_REPETITIONS} repetitions")
    run.add_argument("--kmax", type=int, default=DEFAULT_K_MAX)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--rows", type=int, default=DEFAULT_ROWS, help="Rows for built-in ids")
    run.add_argument("--out", default=None, help="Directory for report.json, summary.csv and transcripts")

    audit = commands.add_parser("audit", help="Check a protocol transcript for view violations")
    audit.add_argument("--transcript", required=True, help="JSONL transcript file")
    return parser


def _gen(args: argparse.Namespace) -> int:
    if args.dataset.isdigit():
        stages = builtin_config(int(args.dataset))
    else:
        stages = load_stage_configs(args.dataset)
    dataset = generate_dataset(stages, args.rows, args.seed)
    out = export_dataset(dataset, args.out)
    print(json.dumps({"out": str(out), "blocks": dataset.block_widths, "l": dataset.l, "m": dataset.m}))
    return 0


def _run(args: argparse.Namespace) -> int:
    if args.reps is not None:
        repetitions = args.reps
    else:
        repetitions = QUICK_REPETITIONS if args.quick else DEFAULT_REPETITIONS
    cfg = ExperimentConfig(
        datasets=args.data,
        repetitions=repetitions,
        seed=args.seed,
        k_max=args.kmax,
        output_dir=args.out,
        models=args.models,
        rows=args.rows,
    )
    report = asyncio.run(run_experiment(cfg))
    print(format_summary(report))
    return 0


def _audit(args: argparse.Namespace) -> int:
    transcript = ProtocolTranscript.from_jsonl(Path(args.transcript))
    report = audit_views(transcript)
    print(report.model_dump_json(indent=2))
    return 0 if report.passed else 1


COMMANDS = {"gen": _gen, "run": _run, "audit": _audit}


def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, run the command, and turn failures into a JSON error line."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=LOG_LEVEL, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (P3lsError, ValidationError, ValueError, OSError) as exc:
        logger.debug("Command failed", exc_info=True)
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    except Exception as exc:
        logger.exception("Unexpected failure in %s", args.command)
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
