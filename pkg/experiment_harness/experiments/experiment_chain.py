#!/usr/bin/env python3
"""
experiment_chain.py

Neural chain experiments for vanishlab.
chain_scan samples forward passes and derivative entries of random chains
over a depth sweep; chain_train runs optimizers from a random
initialization and records escape steps.

Author: s2659865
Date: October 2026
"""

# ── Imports ───────────────────────────────────────────────────────────────────
import math
import sys
from typing import Any, Dict, List

import numpy as np

from vanishlab.src.chain_lab import (
    ChainParams,
    OptimizerSpec,
    chain_entry_samples,
    chain_gradient,
    chain_loss,
    escape_time,
    grid_search,
    run_optimizer,
    sample_chain_init,
    sample_forward,
    settled_escape_time,
)
from vanishlab.src.init_distributions import InitScheme, derive_sub_seed, format_scheme, make_rng
from vanishlab.src.io_handlers import ResultRow
from experiment_harness.src.harness_core import ExperimentSpec, log
from experiment_harness.src.harness_runner import TrialUnit, run_units
from experiment_harness.src.harness_reporting import finish_experiment


# ── Chain Scan ────────────────────────────────────────────────────────────────
def chain_scan_unit(unit: TrialUnit) -> List[ResultRow]:
    """
    One trial of the chain scan: a fresh chain at every depth.

    Rows per depth: forward.log_v (tau w_k with w_k ~ U(0, 1]) and one
    gradient, diagonal and off-diagonal Hessian entry of a chain with
    w ~ U[-tau, tau].
    """
    p = unit.params
    tau = float(p["tau"])
    rng = make_rng(unit.sub_seed)
    rows = []
    for L in p["depths"]:
        rows.append(unit.row("forward.log_v", sample_forward(tau, L, rng).log_v, depth=L))
        if L < 2:
            continue
        entries = chain_entry_samples(tau, L, 1, rng, float(p["x"]), float(p["y"]))
        rows.append(unit.row("grad.entry", entries["gradient"][0], depth=L))
        rows.append(unit.row("hessian.diag_entry", entries["hessian_diag"][0], depth=L))
        rows.append(unit.row("hessian.offdiag_entry", entries["hessian_offdiag"][0], depth=L))
    return rows


def build_chain_scan_units(spec: ExperimentSpec) -> List[TrialUnit]:
    init = format_scheme(InitScheme("uniform", "range", float(spec.params["tau"])))
    return [
        TrialUnit(kind=spec.kind, params=spec.params, master_seed=spec.master_seed, trial=t,
                  width=1, init=init, activation="linear")
        for t in range(spec.trials)
    ]


# ── Chain Training ────────────────────────────────────────────────────────────
def optimizer_label(entry: Dict[str, Any]) -> str:
    """Row prefix of an optimizer entry: its 'name', else method plus noise."""
    if "name" in entry:
        return str(entry["name"])
    if entry["method"] == "perturbed_gd":
        return f"perturbed_gd[{entry.get('noise_std', 0.0):g}]"
    return entry["method"]


def optimizer_spec(entry: Dict[str, Any], lr: float) -> OptimizerSpec:
    return OptimizerSpec(
        method=entry["method"],
        lr=lr,
        noise_std=float(entry.get("noise_std", 0.0)),
        beta1=float(entry.get("beta1", 0.9)),
        beta2=float(entry.get("beta2", 0.9)),
        eps=float(entry.get("eps", 1e-8)),
        decay=entry.get("decay"),
    )


def escape_threshold(params0: ChainParams, threshold: Any, fraction: float) -> float:
    """Absolute loss threshold if given, else a fraction of the initial loss."""
    if threshold is not None:
        return float(threshold)
    return fraction * chain_loss(params0)


def chain_train_unit(unit: TrialUnit) -> List[ResultRow]:
    """
    One trial of chain training: one initialization, every optimizer.

    Optimizer i draws its noise from the sub-seed derived from
    (trial sub-seed, i + 1), so adding an optimizer leaves the others'
    rows unchanged. An optimizer that never escapes records an escape step
    of +inf. Noisy entries run their whole budget and also record the step
    from which the loss stayed below the threshold for settle_window records.
    """
    p = unit.params
    rng = make_rng(unit.sub_seed)
    w0 = sample_chain_init(int(p["L"]), float(p["init_range"]), rng)
    params0 = ChainParams.from_pairs(w0, p["data"])
    threshold = escape_threshold(params0, p.get("threshold"), float(p["fraction"]))
    steps = int(p["steps"])

    rows = [
        unit.row("init.loss", chain_loss(params0)),
        unit.row("init.grad_inf", float(np.max(np.abs(chain_gradient(params0))))),
    ]
    for index, entry in enumerate(p["optimizers"]):
        label = optimizer_label(entry)
        seed = derive_sub_seed(unit.sub_seed, index + 1)
        if entry["lr"] == "grid":
            lr, escape, _ = grid_search(params0, optimizer_spec(entry, 1.0), p["lr_grid"], steps, seed,
                                        fraction=threshold / chain_loss(params0))
            rows.append(unit.row(f"{label}.lr", lr))
            rows.append(unit.row(f"{label}.escape_step", math.inf if escape is None else escape))
            continue
        spec = optimizer_spec(entry, float(entry["lr"]))
        noisy = spec.noise_std > 0
        traj = run_optimizer(params0, spec, steps, make_rng(seed), stop_loss=None if noisy else threshold)
        escape = escape_time(traj, threshold)
        rows.append(unit.row(f"{label}.lr", float(entry["lr"])))
        rows.append(unit.row(f"{label}.escape_step", math.inf if escape is None else escape))
        rows.append(unit.row(f"{label}.final_loss", float(traj.losses[-1])))
        rows.append(unit.row(f"{label}.diverged", float(traj.diverged)))
        if noisy:
            settled = settled_escape_time(traj, threshold, int(p["settle_window"]))
            rows.append(unit.row(f"{label}.settled_step", math.inf if settled is None else settled))
    return rows


def build_chain_train_units(spec: ExperimentSpec) -> List[TrialUnit]:
    p = spec.params
    init = format_scheme(InitScheme("uniform", "range", float(p["init_range"])))
    return [
        TrialUnit(kind=spec.kind, params=p, master_seed=spec.master_seed, trial=t,
                  depth=int(p["L"]), width=1, init=init, activation="linear")
        for t in range(spec.trials)
    ]


# ── Experiment Entry Points ───────────────────────────────────────────────────
def run_chain_experiment(spec: ExperimentSpec, workers: int) -> List[ResultRow]:
    """
    Run a chain_scan or chain_train experiment and save its rows.

    Args:
        spec: Validated spec of kind chain_scan or chain_train
        workers: Worker processes

    Returns:
        The result rows in trial order
    """
    if spec.kind == "chain_scan":
        log("EXPERIMENT", f"chain scan, tau={spec.params['tau']}, depths={spec.params['depths']}, "
            f"{spec.trials} trials")
        rows = run_units(chain_scan_unit, build_chain_scan_units(spec), workers)
    elif spec.kind == "chain_train":
        log("EXPERIMENT", f"chain training, L={spec.params['L']}, "
            f"{len(spec.params['optimizers'])} optimizer(s), {spec.trials} trials")
        rows = run_units(chain_train_unit, build_chain_train_units(spec), workers)
    else:
        raise ValueError(f"run_chain_experiment cannot run kind '{spec.kind}'")
    finish_experiment(rows, spec, workers)
    return rows


# ── Main Entry Point ───────────────────────────────────────────────────────────
if __name__ == "__main__":
    print("This module is not intended to be run directly.")
    print("Please use experiment_harness.py instead.")
    sys.exit(1)
