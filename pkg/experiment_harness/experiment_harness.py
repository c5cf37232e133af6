#!/usr/bin/env python3
"""
experiment_harness.py

Main entry point for vanishlab experiments.
Parses the subcommand and flags, builds the experiment spec from a JSON
document plus command-line overrides, and dispatches to the experiment
module of its kind.

Author: s2659865
Date: October 2026
"""

# ── Imports ───────────────────────────────────────────────────────────────────
import argparse
import json
import time
from typing import Any, Dict, List, Optional

from experiment_harness.src.harness_core import (
    SUBCOMMAND_KINDS,
    load_spec,
    log,
    print_system_info,
    resolve_workers,
)
from experiment_harness.src.harness_runner import export_thread_limits
from experiment_harness.experiments.experiment_chain import run_chain_experiment
from experiment_harness.experiments.experiment_conv import run_conv_experiment
from experiment_harness.experiments.experiment_mlp import run_mlp_experiment
from experiment_harness.experiments.experiment_predict import run_predict_experiment
from experiment_harness.experiments.experiment_verify import run_verify_experiment
from vanishlab.utils.validation import SpecValidationError


# ── Command-line Argument Processing ───────────────────────────────────────────
def _parse_param(text: str) -> tuple:
    """Parse KEY=VALUE; the value is read as JSON when it parses, else kept as text."""
    key, sep, raw = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got '{text}'")
    try:
        return key, json.loads(raw)
    except json.JSONDecodeError:
        return key, raw


def parse_arguments(argv: Optional[List[str]] = None) -> argparse.Namespace:
    """
    Parse command line arguments for the experiment harness.

    Args:
        argv: Arguments without the program name

    Returns:
        argparse.Namespace: Parsed command-line arguments
    """
    parser = argparse.ArgumentParser(
        prog="vanishlab",
        description="Vanishing gradient and curvature laboratory: chains, MLPs and FCNs",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    helps = {
        "predict": "Evaluate a closed-form prediction and print it as JSON",
        "chain": "Run a neural chain scan or optimizer experiment",
        "mlp": "Run a random MLP depth scan",
        "conv": "Run a fully convolutional network depth scan",
        "verify": "Run the theory-versus-simulation agreement suite",
    }
    for command, help_text in helps.items():
        sub = subparsers.add_parser(command, help=help_text)
        sub.add_argument("--config", type=str, default=None,
                         help="JSON experiment document (default: the bundled config of the command)")
        sub.add_argument("--seed", type=int, default=None, help="64-bit master seed")
        sub.add_argument("--trials", type=int, default=None, help="Number of trials")
        sub.add_argument("--out", type=str, default=None, help="Output path (.csv or .json)")
        sub.add_argument("--threads", type=int, default=None,
                         help="Worker processes (overrides VANISHLAB_THREADS)")
        if command == "predict":
            sub.add_argument("--quantity", type=str, default=None, help="Quantity to evaluate")
            sub.add_argument("--param", type=_parse_param, action="append", default=[],
                             metavar="KEY=VALUE", help="Argument of the quantity (repeatable)")
        if command == "verify":
            sub.add_argument("--quick", action="store_true", help="Run the checks at desk-test sizes")

    return parser.parse_args(argv)


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    return {"master_seed": args.seed, "trials": args.trials, "output": args.out}


def _param_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    """Command-specific flags that set params of the spec."""
    params: Dict[str, Any] = {}
    if args.command == "predict":
        if args.quantity is not None:
            params["quantity"] = args.quantity
        if args.param:
            params["args"] = dict(args.param)
    if args.command == "verify" and args.quick:
        params["scale"] = "quick"
    return params


# ── Main Function ───────────────────────────────────────────────────────────────
def main(argv: Optional[List[str]] = None) -> int:
    """
    Run one subcommand.

    Args:
        argv: Arguments without the program name

    Returns:
        0 on success; 1 on invalid input or a failed verify suite
    """
    args = parse_arguments(argv)
    start_time = time.time()
    try:
        workers = resolve_workers(args.threads)
        export_thread_limits(workers)
        spec = load_spec(args.config, _overrides(args), SUBCOMMAND_KINDS[args.command][0], _param_overrides(args))
        if spec.kind not in SUBCOMMAND_KINDS[args.command]:
            raise SpecValidationError([
                f"kind '{spec.kind}' cannot run under '{args.command}', "
                f"expected one of {SUBCOMMAND_KINDS[args.command]}"
            ])

        if spec.kind != "predict":
            print_system_info()
            log("INFO", f"{workers} worker(s), master seed {spec.master_seed}")

        exit_code = 0
        if spec.kind == "predict":
            run_predict_experiment(spec)
        elif spec.kind in ("chain_scan", "chain_train"):
            run_chain_experiment(spec, workers)
        elif spec.kind in ("mlp_scan", "mlp_hessian"):
            run_mlp_experiment(spec, workers)
        elif spec.kind == "conv_scan":
            run_conv_experiment(spec, workers)
        else:
            _, passed = run_verify_experiment(spec, workers)
            exit_code = 0 if passed else 1
    except (ValueError, RuntimeError, FileNotFoundError, PermissionError) as e:
        # Domain errors subclass ValueError or RuntimeError
        log("ERROR", str(e))
        return 1

    minutes, seconds = divmod(time.time() - start_time, 60)
    log("INFO", f"Completed in {int(minutes):02d}:{seconds:05.2f}")
    return exit_code


# ── Entrypoint ────────────────────────────────────────────────────────────────
if __name__ == "__main__":
    raise SystemExit(main())
