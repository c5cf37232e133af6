#!/usr/bin/env python3
"""
harness_core.py

Core utilities and configuration for vanishlab experiments.
This module contains the shared constants, the experiment spec with its
validation, seed and worker-count resolution, tagged logging and system
information used by the experiment harness.

Author: s2659865
Date: October 2026
"""

# ── Imports ───────────────────────────────────────────────────────────────────
import hashlib
import json
import math
import os
import platform
import sys
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional

import psutil

from vanishlab.src.init_distributions import ACTIVATIONS, parse_scheme
from vanishlab.src.chain_lab import DECAYS, METHODS
from vanishlab.utils.validation import SpecValidationError
from vanishlab.vanishlab_cli import getVersion

# ── Directories and Paths ──────────────────────────────────────────────────────
SCRIPT_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
CONFIG_DIR = os.path.join(SCRIPT_DIR, "configs")
RESULTS_DIR = "results"

# ── Artifact Metadata ───────────────────────────────────────────────────────────
ARTIFACT_VERSION = str(getVersion())
BOOTSTRAP_RESAMPLES = 1000
CI_METHOD = f"percentile bootstrap of the mean, {BOOTSTRAP_RESAMPLES} resamples, seeded"
THREADS_ENV = "VANISHLAB_THREADS"

# ── Experiment Configuration ────────────────────────────────────────────────────
KINDS = ("predict", "chain_scan", "chain_train", "mlp_scan", "mlp_hessian", "conv_scan", "verify")

# Subcommand -> experiment kinds it accepts (first is the default)
SUBCOMMAND_KINDS = {
    "predict": ("predict",),
    "chain": ("chain_train", "chain_scan"),
    "mlp": ("mlp_scan", "mlp_hessian"),
    "conv": ("conv_scan",),
    "verify": ("verify",),
}

# Learning-rate grid searched by chain optimizers
LR_GRID = [1e-3, 5e-4, 1e-4, 5e-5, 1e-5, 5e-6, 1e-6, 5e-7, 1e-7, 5e-8, 1e-8]

# Records a noisy run must stay below its escape threshold to count as settled
SETTLE_WINDOW = 100

DEFAULT_HESSIAN_CAP = 4096
DEFAULT_TRIALS = {
    "predict": 1,
    "chain_scan": 10000,
    "chain_train": 20,
    "mlp_scan": 20,
    "mlp_hessian": 10,
    "conv_scan": 20,
    "verify": 1,
}

REQUIRED_PARAMS = {
    "predict": ("quantity",),
    "chain_scan": ("tau", "depths"),
    "chain_train": ("L", "init_range", "optimizers", "steps"),
    "mlp_scan": ("depths", "init", "activation"),
    "mlp_hessian": ("depths", "init", "activation"),
    "conv_scan": ("spatial", "size", "c", "k", "padding", "depths"),
    "verify": (),
}

DEFAULT_PARAMS: Dict[str, Dict[str, Any]] = {
    "predict": {"args": {}},
    "chain_scan": {"x": 1.0, "y": 1.0},
    "chain_train": {"data": [[1.0, 1.0]], "fraction": 0.1, "threshold": None, "lr_grid": LR_GRID,
                    "settle_window": SETTLE_WINDOW},
    "mlp_scan": {
        "d": 4, "width_rule": "linear:1", "d_in": 1, "d_out": 1, "n_data": 1,
        "observables": ["forward", "gradient", "hessian"], "cap": DEFAULT_HESSIAN_CAP,
    },
    "mlp_hessian": {
        "d": 4, "width_rule": "linear:1", "d_in": 1, "d_out": 1, "n_data": 1,
        "observables": ["hessian", "spectrum"], "cap": DEFAULT_HESSIAN_CAP,
    },
    "conv_scan": {
        "channel_rule": "constant", "init": "gaussian:he", "activation": "relu",
        "c_in": None, "hessian_pairs": 0, "images": None,
    },
    "verify": {"checks": "all", "scale": "default"},
}

VERIFY_CHECKS = (
    "forward_moments", "erlang_law", "median_bracket", "chain_slopes", "oracle_equivalence",
    "hessian_scaling", "spectrum_structure", "width_effect", "chain_optimizers", "flow_bound",
    "conv_properties", "determinism",
)

PREDICT_QUANTITIES = (
    "chain_moment", "chain_log_cdf", "chain_median_bounds", "chain_median",
    "chain_derivative_rate", "blowup", "gradient_flow_bound", "chain_escape_prediction",
    "variance_recursion", "q_matrix", "forward_moments", "log_forward_moments",
    "frobenius_propagation", "min_width_for_median", "grad_hessian_scaling",
)


# ── Logging ───────────────────────────────────────────────────────────────────
def log(tag: str, message: str) -> None:
    """
    Print a tagged progress line to stderr.

    stdout is reserved for the JSON that `predict` prints.
    """
    print(f"[{tag}] {message}", file=sys.stderr, flush=True)


# ── Experiment Spec ───────────────────────────────────────────────────────────
@dataclass(frozen=True)
class ExperimentSpec:
    """
    One experiment.

    Attributes:
        kind: Experiment kind (see KINDS)
        params: Kind-specific parameters, defaults filled in
        master_seed: 64-bit master seed
        trials: Number of trials
        output: Output path
    """
    kind: str
    params: Dict[str, Any] = field(default_factory=dict)
    master_seed: int = 0
    trials: int = 1
    output: str = ""

    def to_document(self) -> Dict[str, Any]:
        return asdict(self)


def spec_hash(spec: ExperimentSpec) -> str:
    """sha256 of the canonical JSON form of a spec."""
    canonical = json.dumps(spec.to_document(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _is_int(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value)


def _check_depths(value: Any, problems: List[str]) -> None:
    if not isinstance(value, list) or not value or not all(_is_int(v) and v >= 1 for v in value):
        problems.append(f"params.depths must be a non-empty list of positive integers, got {value!r}")


def _check_positive(params: Dict[str, Any], key: str, problems: List[str], integer: bool = False) -> None:
    if key not in params:
        return
    value = params[key]
    ok = _is_int(value) if integer else _is_number(value)
    if not ok or value <= 0:
        kind = "a positive integer" if integer else "a positive number"
        problems.append(f"params.{key} must be {kind}, got {value!r}")


def _check_init(params: Dict[str, Any], problems: List[str]) -> None:
    if "init" not in params:
        return
    try:
        parse_scheme(str(params["init"]))
    except ValueError as e:
        problems.append(f"params.init: {e}")


def _check_activation(params: Dict[str, Any], problems: List[str]) -> None:
    if "activation" in params and params["activation"] not in ACTIVATIONS:
        problems.append(f"params.activation must be one of {ACTIVATIONS}, got {params['activation']!r}")


def _check_optimizers(value: Any, problems: List[str]) -> None:
    if not isinstance(value, list) or not value:
        problems.append("params.optimizers must be a non-empty list")
        return
    for index, entry in enumerate(value):
        if not isinstance(entry, dict):
            problems.append(f"params.optimizers[{index}] must be an object")
            continue
        if entry.get("method") not in METHODS:
            problems.append(f"params.optimizers[{index}].method must be one of {sorted(METHODS)}")
        lr = entry.get("lr")
        if lr != "grid" and not (_is_number(lr) and lr > 0):
            problems.append(f"params.optimizers[{index}].lr must be a positive number or 'grid'")
        if "decay" in entry and entry["decay"] not in DECAYS:
            problems.append(f"params.optimizers[{index}].decay must be one of {sorted(DECAYS)}")


def _check_params(kind: str, params: Dict[str, Any], problems: List[str]) -> None:
    for key in REQUIRED_PARAMS[kind]:
        if key not in params:
            problems.append(f"missing params.{key}")
    allowed = set(REQUIRED_PARAMS[kind]) | set(DEFAULT_PARAMS[kind])
    for key in sorted(set(params) - allowed):
        problems.append(f"unknown params.{key}")

    if "depths" in params:
        _check_depths(params["depths"], problems)
    _check_init(params, problems)
    _check_activation(params, problems)

    if kind == "predict":
        if "quantity" in params and params["quantity"] not in PREDICT_QUANTITIES:
            problems.append(f"params.quantity must be one of {PREDICT_QUANTITIES}, got {params['quantity']!r}")
        if "args" in params and not isinstance(params["args"], dict):
            problems.append("params.args must be an object")
    elif kind == "chain_scan":
        _check_positive(params, "tau", problems)
    elif kind == "chain_train":
        _check_positive(params, "L", problems, integer=True)
        _check_positive(params, "init_range", problems)
        _check_positive(params, "steps", problems, integer=True)
        _check_positive(params, "settle_window", problems, integer=True)
        if "optimizers" in params:
            _check_optimizers(params["optimizers"], problems)
    elif kind in ("mlp_scan", "mlp_hessian"):
        for key in ("d", "n_data", "cap"):
            _check_positive(params, key, problems, integer=True)
    elif kind == "conv_scan":
        for key in ("size", "c", "k"):
            _check_positive(params, key, problems, integer=True)
        if params.get("spatial", "line") not in ("line", "grid"):
            problems.append(f"params.spatial must be 'line' or 'grid', got {params['spatial']!r}")
        if params.get("padding", "zero") not in ("zero", "circular"):
            problems.append(f"params.padding must be 'zero' or 'circular', got {params['padding']!r}")
        if _is_int(params.get("k")) and params["k"] % 2 == 0:
            problems.append(f"params.k must be odd, got {params['k']}")
    elif kind == "verify":
        if params.get("scale", "default") not in ("default", "quick"):
            problems.append(f"params.scale must be 'default' or 'quick', got {params['scale']!r}")
        checks = params.get("checks", "all")
        if checks != "all":
            if not isinstance(checks, list) or not checks:
                problems.append("params.checks must be 'all' or a non-empty list of check names")
            else:
                for name in checks:
                    if name not in VERIFY_CHECKS:
                        problems.append(f"unknown verify check {name!r}, expected one of {VERIFY_CHECKS}")


def validate_spec(document: Dict[str, Any]) -> ExperimentSpec:
    """
    Validate an experiment document and fill in defaults.

    Every problem is collected before raising, so one error lists all
    missing or invalid keys.

    Args:
        document: Parsed JSON document

    Returns:
        The validated ExperimentSpec

    Raises:
        SpecValidationError: If the document is invalid
    """
    problems: List[str] = []
    if not isinstance(document, dict):
        raise SpecValidationError([f"spec must be a JSON object, got {type(document).__name__}"])

    for key in sorted(set(document) - {"kind", "params", "master_seed", "trials", "output"}):
        problems.append(f"unknown key {key}")

    kind = document.get("kind")
    if kind is None:
        problems.append("missing kind")
    elif kind not in KINDS:
        problems.append(f"kind must be one of {KINDS}, got {kind!r}")
        kind = None

    params = document.get("params", {})
    if not isinstance(params, dict):
        problems.append("params must be an object")
        params = {}

    master_seed = document.get("master_seed", 0)
    if not _is_int(master_seed) or not (0 <= master_seed < 2 ** 64):
        problems.append(f"master_seed must be an integer in [0, 2^64), got {master_seed!r}")

    trials = document.get("trials", DEFAULT_TRIALS.get(kind, 1))
    if not _is_int(trials) or trials < 1:
        problems.append(f"trials must be an integer >= 1, got {trials!r}")

    output = document.get("output", os.path.join(RESULTS_DIR, f"{kind}.csv"))
    if not isinstance(output, str) or not output:
        problems.append(f"output must be a non-empty path, got {output!r}")

    if kind is not None:
        _check_params(kind, params, problems)

    if problems:
        raise SpecValidationError(problems)
    merged = {**DEFAULT_PARAMS[kind], **params}
    return ExperimentSpec(kind=kind, params=merged, master_seed=master_seed, trials=trials, output=output)


def load_spec(
    path: Optional[str],
    overrides: Dict[str, Any],
    default_kind: str,
    param_overrides: Optional[Dict[str, Any]] = None
) -> ExperimentSpec:
    """
    Read a JSON spec (or start from the default of a kind) and apply CLI overrides.

    Args:
        path: Path to the JSON document, or None
        overrides: Top-level keys set on the command line (None values ignored)
        default_kind: Kind used when no document is given
        param_overrides: Keys merged into params; object values merge one level deep

    Returns:
        The validated ExperimentSpec

    Raises:
        FileNotFoundError: If path does not exist
        SpecValidationError: If the resulting document is invalid
    """
    if path is None:
        default_path = os.path.join(CONFIG_DIR, f"{default_kind}.json")
        document = _read_json(default_path) if os.path.exists(default_path) else {"kind": default_kind}
    else:
        document = _read_json(path)
    for key, value in overrides.items():
        if value is not None:
            document[key] = value
    if param_overrides:
        params = document.setdefault("params", {})
        for key, value in param_overrides.items():
            if isinstance(value, dict) and isinstance(params.get(key), dict):
                params[key] = {**params[key], **value}
            else:
                params[key] = value
    return validate_spec(document)


def _read_json(path: str) -> Dict[str, Any]:
    if not os.path.exists(path):
        raise FileNotFoundError(f"Spec file not found: {path}")
    with open(path, "r") as f:
        try:
            return json.load(f)
        except json.JSONDecodeError as e:
            raise SpecValidationError([f"{path} is not valid JSON: {e}"])


# ── Worker Count ──────────────────────────────────────────────────────────────
def resolve_workers(threads: Optional[int] = None) -> int:
    """
    Worker count: the --threads flag, else VANISHLAB_THREADS, else the logical core count.

    Raises:
        ValueError: If the chosen value is not a positive integer
    """
    if threads is not None:
        value = threads
    elif os.environ.get(THREADS_ENV):
        raw = os.environ[THREADS_ENV]
        try:
            value = int(raw)
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be a positive integer, got '{raw}'")
    else:
        value = psutil.cpu_count(logical=True) or 1
    if value < 1:
        raise ValueError(f"worker count must be positive, got {value}")
    return int(value)


# ── System Information ───────────────────────────────────────────────────────────
def get_system_info() -> Dict[str, Any]:
    """
    Gather system information for reproducibility of experiments.

    Returns:
        Dict[str, Any]: Dictionary containing system specifications
    """
    return {
        "os": f"{platform.system()} {platform.release()}",
        "python_version": platform.python_version(),
        "cpu_model": platform.processor(),
        "logical_cpus": psutil.cpu_count(logical=True),
        "physical_cpus": psutil.cpu_count(logical=False),
        "total_memory_gb": round(psutil.virtual_memory().total / (1024 ** 3), 2),
        "platform_full": platform.platform(),
    }


def print_system_info() -> None:
    """Print system information to stderr in a human-readable format."""
    info = get_system_info()
    log("SYSTEM INFO", f"OS {info['os']}, Python {info['python_version']}, "
        f"{info['logical_cpus']} logical / {info['physical_cpus']} physical CPUs, "
        f"{info['total_memory_gb']} GB")


# ── Main Entry Point ───────────────────────────────────────────────────────────
if __name__ == "__main__":
    print("This module is not intended to be run directly.")
    print("Please use experiment_harness.py instead.")
    sys.exit(1)
