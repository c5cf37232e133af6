#!/usr/bin/env python3
"""
experiment_conv.py

Fully convolutional network depth scans for vanishlab.
Runs random FCNs on synthetic Gaussian feature maps, or on images read
from a raw tensor file, with the input as target.

Author: s2659865
Date: October 2026
"""

# ── Imports ───────────────────────────────────────────────────────────────────
import functools
import sys
from typing import List, Optional

import numpy as np

from vanishlab.src.conv_lab import ConvConfig, effective_width, scan_trial
from vanishlab.src.init_distributions import activation_for, format_scheme, make_rng, parse_scheme
from vanishlab.src.io_handlers import ResultRow, load_raw_tensor
from experiment_harness.src.harness_core import ExperimentSpec, log
from experiment_harness.src.harness_runner import TrialUnit, run_units
from experiment_harness.src.harness_reporting import finish_experiment


# ── Inputs ────────────────────────────────────────────────────────────────────
@functools.lru_cache(maxsize=4)
def cached_images(path: str) -> np.ndarray:
    """Image stack of a raw tensor file, read once per process."""
    return load_raw_tensor(path)


def conv_config(params: dict, L: int) -> ConvConfig:
    """Config of the spec's network at depth L, channels from the channel rule."""
    base = ConvConfig(
        spatial=params["spatial"],
        size=int(params["size"]),
        c=int(params["c"]),
        k=int(params["k"]),
        padding=params["padding"],
        L=L,
        activation=activation_for(params["activation"]),
        init=parse_scheme(params["init"]),
        c_in=params.get("c_in"),
        channel_rule=params["channel_rule"],
    )
    return base.at_depth(L)


# ── Conv Scan ─────────────────────────────────────────────────────────────────
def conv_unit(unit: TrialUnit) -> List[ResultRow]:
    p = unit.params
    config = conv_config(p, unit.depth)
    images: Optional[np.ndarray] = cached_images(p["images"]) if p.get("images") else None
    values = scan_trial(config, make_rng(unit.sub_seed), int(p["hessian_pairs"]), images, unit.trial)
    return [unit.row(name, value) for name, value in values.items()]


def build_conv_units(spec: ExperimentSpec) -> List[TrialUnit]:
    """One unit per (depth, trial); the width column holds the effective width."""
    p = spec.params
    init = format_scheme(parse_scheme(p["init"]))
    units = []
    for L in p["depths"]:
        width = effective_width(conv_config(p, L))
        for t in range(spec.trials):
            units.append(TrialUnit(kind=spec.kind, params=p, master_seed=spec.master_seed, trial=t,
                                   depth=L, width=width, init=init, activation=p["activation"]))
    return units


# ── Experiment Entry Point ────────────────────────────────────────────────────
def run_conv_experiment(spec: ExperimentSpec, workers: int) -> List[ResultRow]:
    """Run a conv_scan experiment and save its rows."""
    p = spec.params
    if p.get("images"):
        # Fail on a bad image file before any worker starts
        images = cached_images(p["images"])
        log("INFO", f"Loaded {images.shape[0]} image(s) of shape {images.shape[1:]} from {p['images']}")
    log("EXPERIMENT", f"conv scan, {p['spatial']} {p['size']}, k={p['k']}, {p['padding']} padding, "
        f"channel rule {p['channel_rule']}, depths={p['depths']}, {spec.trials} trials")
    rows = run_units(conv_unit, build_conv_units(spec), workers)
    finish_experiment(rows, spec, workers)
    return rows


# ── Main Entry Point ───────────────────────────────────────────────────────────
if __name__ == "__main__":
    print("This module is not intended to be run directly.")
    print("Please use experiment_harness.py instead.")
    sys.exit(1)
