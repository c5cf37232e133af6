#!/usr/bin/env python3
"""
experiment_predict.py

Closed-form predictions for vanishlab.
Evaluates one theory quantity from its arguments and returns a JSON-ready
document; nothing is sampled.

Author: s2659865
Date: October 2026
"""

# ── Imports ───────────────────────────────────────────────────────────────────
import dataclasses
import json
import math
import sys
from typing import Any, Callable, Dict

import numpy as np

from vanishlab.src import theory_oracle as oracle
from vanishlab.src.init_distributions import activation_for, moment_profile, parse_scheme
from vanishlab.src.mlp_lab import standard_normal_moments
from experiment_harness.src.harness_core import ExperimentSpec, log


# ── Argument Helpers ──────────────────────────────────────────────────────────
def _width_args(args: Dict[str, Any]) -> Dict[str, Any]:
    """
    Resolve d, sigma2, kappa and p.

    'init' (e.g. 'uniform:lecun') supplies sigma2 and kappa at width d and
    'activation' supplies p; explicit values win.
    """
    d = int(args["d"])
    resolved = {"d": d, "sigma2": args.get("sigma2"), "kappa": args.get("kappa"), "p": args.get("p")}
    if "init" in args:
        profile = moment_profile(parse_scheme(args["init"]), d)
        resolved["sigma2"] = profile.sigma2 if resolved["sigma2"] is None else resolved["sigma2"]
        resolved["kappa"] = profile.kappa if resolved["kappa"] is None else resolved["kappa"]
    if resolved["p"] is None:
        resolved["p"] = activation_for(args.get("activation", "linear")).p
    if resolved["kappa"] is None:
        resolved["kappa"] = 3.0
    if resolved["sigma2"] is None:
        raise ValueError("give either params.args.sigma2 or params.args.init")
    return resolved


def _input_state(args: Dict[str, Any], d: int) -> oracle.MomentState:
    if "state" in args:
        return oracle.MomentState(*[float(v) for v in args["state"]])
    return standard_normal_moments(d)


def _forward_moments(args: Dict[str, Any]) -> Any:
    w = _width_args(args)
    state = _input_state(args, w["d"])
    return oracle.forward_moments(w["d"], w["sigma2"], w["kappa"], w["p"], int(args["k"]), state)


def _log_forward_moments(args: Dict[str, Any]) -> Any:
    w = _width_args(args)
    state = _input_state(args, w["d"])
    return oracle.log_forward_moments(w["d"], w["sigma2"], w["kappa"], w["p"], int(args["k"]), state)


def _frobenius_propagation(args: Dict[str, Any]) -> Any:
    w = _width_args(args)
    return oracle.frobenius_propagation(w["d"], w["sigma2"], w["p"], int(args["span"]),
                                        int(args.get("moment", 2)), w["kappa"])


def _variance_recursion(args: Dict[str, Any]) -> Any:
    w = _width_args(args)
    return oracle.variance_recursion(w["d"], w["sigma2"], w["p"], int(args["L"]))


def _q_matrix(args: Dict[str, Any]) -> Any:
    w = _width_args(args)
    return oracle.q_matrix(w["d"], w["kappa"], w["p"])


def _grad_hessian_scaling(args: Dict[str, Any]) -> Any:
    w = _width_args(args)
    return oracle.grad_hessian_scaling(w["d"], w["sigma2"], w["p"], int(args["L"]),
                                       float(args.get("constant", 1.0)))


QUANTITIES: Dict[str, Callable[[Dict[str, Any]], Any]] = {
    "chain_moment": lambda a: oracle.chain_moment(float(a["tau"]), int(a["L"]), int(a["m"])),
    "chain_log_cdf": lambda a: oracle.chain_log_cdf(float(a["tau"]), int(a["L"]), a["zeta"]),
    "chain_median_bounds": lambda a: oracle.chain_median_bounds(float(a["tau"]), int(a["L"])),
    "chain_median": lambda a: oracle.chain_median(float(a["tau"]), int(a["L"])),
    "chain_derivative_rate": lambda a: oracle.chain_derivative_rate(float(a["tau"]), int(a["L"]), a["kind"]),
    "blowup": lambda a: oracle.blowup(float(a["w0"]), int(a["L"]), float(a.get("y", 1.0))),
    "gradient_flow_bound": lambda a: oracle.gradient_flow_bound(
        float(a["w0"]), int(a["L"]), float(a.get("y", 1.0)), a["t"]),
    "chain_escape_prediction": lambda a: oracle.chain_escape_prediction(
        float(a["w0"]), int(a["L"]), float(a.get("y", 1.0)), float(a["lr"])),
    "variance_recursion": _variance_recursion,
    "q_matrix": _q_matrix,
    "forward_moments": _forward_moments,
    "log_forward_moments": _log_forward_moments,
    "frobenius_propagation": _frobenius_propagation,
    "min_width_for_median": lambda a: oracle.min_width_for_median(float(a["alpha"]), int(a["L"])),
    "grad_hessian_scaling": _grad_hessian_scaling,
}


# ── Serialization ─────────────────────────────────────────────────────────────
def to_jsonable(value: Any) -> Any:
    """Convert oracle results (dataclasses, arrays, tuples, numpy scalars) to JSON values."""
    if dataclasses.is_dataclass(value):
        return {key: to_jsonable(v) for key, v in dataclasses.asdict(value).items()}
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, float) and not math.isfinite(value):
        # JSON has no inf/nan literals
        return str(value)
    return value


# ── Prediction Experiment ─────────────────────────────────────────────────────
def evaluate_quantity(quantity: str, args: Dict[str, Any]) -> Dict[str, Any]:
    """
    Evaluate one theory quantity.

    Args:
        quantity: One of PREDICT_QUANTITIES
        args: Keyword arguments of the quantity

    Returns:
        {'quantity', 'args', 'value'} with a JSON-ready value

    Raises:
        ValueError: For unknown quantities, missing or invalid arguments
    """
    if quantity not in QUANTITIES:
        raise ValueError(f"Unknown quantity '{quantity}', expected one of {sorted(QUANTITIES)}")
    try:
        value = QUANTITIES[quantity](args)
    except KeyError as e:
        raise ValueError(f"quantity '{quantity}' needs argument {e.args[0]!r}")
    return {"quantity": quantity, "args": to_jsonable(args), "value": to_jsonable(value)}


def run_predict_experiment(spec: ExperimentSpec) -> Dict[str, Any]:
    """
    Evaluate the spec's quantity and print the result as JSON on stdout.

    Returns:
        The printed document
    """
    quantity = spec.params["quantity"]
    log("EXPERIMENT", f"predict {quantity}")
    document = evaluate_quantity(quantity, spec.params.get("args", {}))
    json.dump(document, sys.stdout, indent=2)
    sys.stdout.write("\n")
    return document


# ── Main Entry Point ───────────────────────────────────────────────────────────
if __name__ == "__main__":
    print("This module is not intended to be run directly.")
    print("Please use experiment_harness.py instead.")
    sys.exit(1)
