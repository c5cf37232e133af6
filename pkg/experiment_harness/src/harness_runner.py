#!/usr/bin/env python3
"""
harness_runner.py

Trial execution utilities for vanishlab experiments.
This module fans independent trials out to a process pool, limits the
threads of the numeric libraries, and turns per-trial failures into error
rows so that a run always completes.

Author: s2659865
Date: October 2026
"""

# ── Imports ───────────────────────────────────────────────────────────────────
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, TypeVar

from vanishlab.src.init_distributions import derive_sub_seed
from vanishlab.src.io_handlers import ResultRow
from experiment_harness.src.harness_core import log

T = TypeVar("T")
R = TypeVar("R")

THREAD_VARIABLES = (
    "OMP_NUM_THREADS",        # OpenMP
    "MKL_NUM_THREADS",        # Intel MKL
    "OPENBLAS_NUM_THREADS",   # OpenBLAS
    "VECLIB_MAXIMUM_THREADS", # Accelerate
    "NUMEXPR_NUM_THREADS",    # NumExpr
    "NUMBA_NUM_THREADS",      # Numba
)


# ── Thread Limits ─────────────────────────────────────────────────────────────
def export_thread_limits(workers: int) -> int:
    """
    Export the per-process thread count to the numeric-library variables.

    With several worker processes each one gets a single library thread;
    a serial run may use all of them.

    Returns:
        The exported thread count
    """
    threads = 1 if workers > 1 else max(1, os.cpu_count() or 1)
    for name in THREAD_VARIABLES:
        os.environ[name] = str(threads)
    return threads


# ── Fan-out ───────────────────────────────────────────────────────────────────
def parallel_map(func: Callable[[T], R], items: Sequence[T], workers: int) -> List[R]:
    """
    Apply a picklable top-level function to every item.

    Results come back in item order whatever the scheduling, so the output
    never depends on the worker count.

    Args:
        func: Function of one item
        items: Work items
        workers: Number of worker processes (1 runs inline)

    Returns:
        List of results aligned with items
    """
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    pool_size = min(workers, len(items))
    chunk = max(1, len(items) // (4 * pool_size))
    with ProcessPoolExecutor(max_workers=pool_size) as executor:
        return list(executor.map(func, items, chunksize=chunk))


# ── Trials ────────────────────────────────────────────────────────────────────
@dataclass(frozen=True)
class TrialUnit:
    """
    One independent unit of work: a trial, optionally at one depth.

    Attributes:
        kind: Experiment kind
        params: Experiment parameters
        master_seed: Master seed of the experiment
        trial: Trial index
        depth: Depth of this unit, or None
        width: Width of this unit, or None
        init: Init scheme text for the rows
        activation: Activation name for the rows
    """
    kind: str
    params: Dict[str, Any] = field(default_factory=dict)
    master_seed: int = 0
    trial: int = 0
    depth: Optional[int] = None
    width: Optional[int] = None
    init: str = ""
    activation: str = ""

    @property
    def sub_seed(self) -> int:
        return derive_sub_seed(self.master_seed, self.trial)

    def row(self, observable: str, value: float, depth: Optional[int] = None, width: Optional[int] = None) -> ResultRow:
        """Result row of this unit (depth and width default to the unit's)."""
        return ResultRow(
            kind=self.kind,
            observable=observable,
            depth=self.depth if depth is None else depth,
            width=self.width if width is None else width,
            init=self.init,
            activation=self.activation,
            trial=self.trial,
            sub_seed=self.sub_seed,
            value=float(value),
        )


def _guarded(job) -> List[ResultRow]:
    unit_fn, unit = job
    try:
        return unit_fn(unit)
    except Exception as e:
        log("WARNING", f"{unit.kind} trial {unit.trial} depth {unit.depth} failed: {type(e).__name__}: {e}")
        return [unit.row(f"error.{type(e).__name__}", float("nan"))]


def run_units(
    unit_fn: Callable[[TrialUnit], List[ResultRow]],
    units: Sequence[TrialUnit],
    workers: int
) -> List[ResultRow]:
    """
    Run every unit and concatenate their rows in unit order.

    A unit that raises contributes one row with observable
    'error.<ExceptionName>' and a NaN value; the run continues.
    """
    log("EXPERIMENT", f"{len(units)} units on {min(workers, max(1, len(units)))} worker(s)")
    batches = parallel_map(_guarded, [(unit_fn, unit) for unit in units], workers)
    rows: List[ResultRow] = []
    for batch in batches:
        rows.extend(batch)
    failures = sum(1 for row in rows if row.observable.startswith("error."))
    if failures:
        log("WARNING", f"{failures} unit(s) failed and were recorded as error rows")
    return rows


# ── Main Entry Point ───────────────────────────────────────────────────────────
if __name__ == "__main__":
    print("This module is not intended to be run directly.")
    print("Please use experiment_harness.py instead.")
    sys.exit(1)
