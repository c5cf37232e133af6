#!/usr/bin/env python3
"""
experiment_mlp.py

Random MLP depth scans for vanishlab.
Each unit builds one random network at one depth, with the width given by
the width rule, and records forward, gradient, Hessian and spectrum
observables.

Author: s2659865
Date: October 2026
"""

# ── Imports ───────────────────────────────────────────────────────────────────
import sys
from typing import List

from vanishlab.src.init_distributions import activation_for, format_scheme, make_rng, parse_scheme
from vanishlab.src.io_handlers import ResultRow
from vanishlab.src.mlp_lab import MlpConfig, scan_trial, width_for
from experiment_harness.src.harness_core import ExperimentSpec, log
from experiment_harness.src.harness_runner import TrialUnit, run_units
from experiment_harness.src.harness_reporting import finish_experiment


# ── MLP Scan ──────────────────────────────────────────────────────────────────
def mlp_config(params: dict, L: int) -> MlpConfig:
    """Config of the spec's network at depth L."""
    base = MlpConfig(
        L=L,
        d=int(params["d"]),
        d_in=params.get("d_in"),
        d_out=params.get("d_out"),
        activation=activation_for(params["activation"]),
        init=parse_scheme(params["init"]),
        width_rule=params["width_rule"],
    )
    return base.at_depth(L)


def mlp_unit(unit: TrialUnit) -> List[ResultRow]:
    """Observables of one random network at the unit's depth."""
    p = unit.params
    config = mlp_config(p, unit.depth)
    values = scan_trial(config, make_rng(unit.sub_seed), p["observables"], int(p["n_data"]), int(p["cap"]))
    return [unit.row(name, value) for name, value in values.items()]


def build_mlp_units(spec: ExperimentSpec) -> List[TrialUnit]:
    """
    One unit per (depth, trial); trial t uses the same sub-seed at every depth.
    """
    p = spec.params
    init = format_scheme(parse_scheme(p["init"]))
    return [
        TrialUnit(kind=spec.kind, params=p, master_seed=spec.master_seed, trial=t,
                  depth=L, width=width_for(p["width_rule"], L, int(p["d"])),
                  init=init, activation=p["activation"])
        for L in p["depths"]
        for t in range(spec.trials)
    ]


# ── Experiment Entry Point ────────────────────────────────────────────────────
def run_mlp_experiment(spec: ExperimentSpec, workers: int) -> List[ResultRow]:
    """
    Run an mlp_scan or mlp_hessian experiment and save its rows.

    mlp_hessian is the same scan with Hessian and spectrum observables as
    its default groups.
    """
    if spec.kind not in ("mlp_scan", "mlp_hessian"):
        raise ValueError(f"run_mlp_experiment cannot run kind '{spec.kind}'")
    p = spec.params
    log("EXPERIMENT", f"{spec.kind}, {p['init']} {p['activation']}, width rule {p['width_rule']}, "
        f"depths={p['depths']}, {spec.trials} trials")
    rows = run_units(mlp_unit, build_mlp_units(spec), workers)
    finish_experiment(rows, spec, workers)
    return rows


# ── Main Entry Point ───────────────────────────────────────────────────────────
if __name__ == "__main__":
    print("This module is not intended to be run directly.")
    print("Please use experiment_harness.py instead.")
    sys.exit(1)
