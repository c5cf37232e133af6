#!/usr/bin/env python3
"""
harness_reporting.py

Results handling and reporting utilities for vanishlab experiments.
This module writes result rows with their sidecar metadata, groups rows
into summary tables and prints them.

Author: s2659865
Date: October 2026
"""

# ── Imports ───────────────────────────────────────────────────────────────────
import json
import math
import sys
import time
from typing import Any, Dict, List, Sequence

import numpy as np
import pandas as pd

from vanishlab.src.io_handlers import ResultRow, emit_csv, emit_json, rows_to_frame
from experiment_harness.src.harness_core import (
    ARTIFACT_VERSION,
    CI_METHOD,
    ExperimentSpec,
    get_system_info,
    log,
    spec_hash,
)
from experiment_harness.src.harness_statistics import log_summary, summarize

GROUP_COLUMNS = ["kind", "observable", "depth", "width", "init", "activation"]


# ── Results Storage ──────────────────────────────────────────────────────────
def sidecar_path(output: str) -> str:
    return f"{output}.meta.json"


def write_sidecar(output: str, spec: ExperimentSpec, meta: Dict[str, Any]) -> str:
    """
    Save the spec and run metadata next to an output file.

    The sidecar holds the full spec, its sha256, the artifact version, the
    CI method, system information and a timestamp; the data file itself
    carries no timestamps.

    Args:
        output: Path of the data file
        spec: Experiment spec
        meta: Extra metadata (worker count, row counts, ...)

    Returns:
        Path of the sidecar
    """
    enriched = dict(meta)
    enriched.update({
        "spec": spec.to_document(),
        "spec_sha256": spec_hash(spec),
        "artifact_version": ARTIFACT_VERSION,
        "ci_method": CI_METHOD,
        "system": get_system_info(),
        "timestamp": time.strftime("%Y-%m-%d %H:%M:%S"),
    })
    path = sidecar_path(output)
    with open(path, "w") as f:
        json.dump(enriched, f, indent=4)
    log("INFO", f"Saved: {path}")
    return path


def save_results(rows: Sequence[ResultRow], spec: ExperimentSpec, meta: Dict[str, Any]) -> str:
    """
    Write rows to spec.output (JSON if it ends in .json, CSV otherwise) plus the sidecar.

    Returns:
        Path of the data file
    """
    output = spec.output
    if output.lower().endswith(".json"):
        emit_json(rows, output)
    else:
        emit_csv(rows, output)
    log("INFO", f"Saved: {output} ({len(rows)} rows)")
    write_sidecar(output, spec, {**meta, "rows": len(rows)})
    return output


# ── Summary Table Generation ─────────────────────────────────────────────────
def summary_table(rows: Sequence[ResultRow]) -> pd.DataFrame:
    """
    One StatSummary per (kind, observable, depth, width, init, activation).

    Non-finite values (error rows, escape steps of runs that never
    escaped) are left out of the statistics. Every group also gets the
    median of ln|x| with its bootstrap interval.

    Returns:
        DataFrame with the group columns followed by mean, median, std,
        ci95_low, ci95_high, n, log_median, log_ci95_low, log_ci95_high
    """
    frame = rows_to_frame(rows)
    records: List[Dict[str, Any]] = []
    for key, group in frame.groupby(GROUP_COLUMNS, dropna=False, sort=False):
        values = group["value"].to_numpy(dtype=float)
        record = dict(zip(GROUP_COLUMNS, key))
        finite = values[np.isfinite(values)]
        if finite.size:
            stats = summarize(finite)
            record.update(mean=stats.mean, median=stats.median, std=stats.std,
                          ci95_low=stats.ci95_low, ci95_high=stats.ci95_high, n=stats.n)
        else:
            record.update(mean=math.nan, median=math.nan, std=math.nan,
                          ci95_low=math.nan, ci95_high=math.nan, n=0)
        try:
            logs = log_summary(finite)
            record.update(log_median=logs.median, log_ci95_low=logs.ci95_low, log_ci95_high=logs.ci95_high)
        except ValueError:
            record.update(log_median=math.nan, log_ci95_low=math.nan, log_ci95_high=math.nan)
        records.append(record)
    return pd.DataFrame(records)


def print_summary_table(table: pd.DataFrame, limit: int = 40) -> None:
    """
    Print a summary table to stderr.

    Args:
        table: Output of summary_table
        limit: Maximum number of groups printed
    """
    log("SUMMARY", f"{len(table)} observable group(s), mean [95% CI] and median ln|x|")
    print("-" * 100, file=sys.stderr)
    header = "Observable".ljust(40) + "Depth".rjust(7) + "Width".rjust(7) + "Mean".rjust(14) + \
        "95% CI".rjust(30) + "ln|x| med".rjust(12)
    print(header, file=sys.stderr)
    for _, row in table.head(limit).iterrows():
        depth = "" if pd.isna(row["depth"]) else str(int(row["depth"]))
        width = "" if pd.isna(row["width"]) else str(int(row["width"]))
        interval = f"[{row['ci95_low']:.4g}, {row['ci95_high']:.4g}]"
        print(f"{str(row['observable'])[:39].ljust(40)}{depth:>7}{width:>7}{row['mean']:>14.5g}"
              f"{interval:>30}{row['log_median']:>12.4g}", file=sys.stderr)
    if len(table) > limit:
        print(f"... {len(table) - limit} more group(s)", file=sys.stderr)


def finish_experiment(rows: Sequence[ResultRow], spec: ExperimentSpec, workers: int) -> str:
    """Save the rows with their sidecar and print the summary table."""
    output = save_results(rows, spec, {"workers": workers})
    print_summary_table(summary_table(rows))
    return output


# ── Main Entry Point ───────────────────────────────────────────────────────────
if __name__ == "__main__":
    print("This module is not intended to be run directly.")
    print("Please use experiment_harness.py instead.")
    sys.exit(1)
