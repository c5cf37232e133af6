#!/usr/bin/env python3
"""
io_handlers.py

Input/output handlers for vanishlab results and raw tensors.

This module writes result rows as CSV (fixed header, 17 significant
digits) or JSON, parses them back, and reads and writes the raw image
tensor format used by the convolutional scans.

Author: s2659865
Date: October 2026
"""
import json
import os
from dataclasses import asdict, dataclass, fields
from typing import Any, List, Optional, Sequence

import numpy as np
import pandas as pd

from vanishlab.utils.validation import EmptyInputError, ShapeError, validate_file_exists

CSV_COLUMNS = ["kind", "observable", "depth", "width", "init", "activation", "trial", "sub_seed", "value"]
FLOAT_FORMAT = "%.17g"
RAW_HEADER_DTYPE = np.dtype("<u4")
RAW_VALUE_DTYPE = np.dtype("<f4")


@dataclass(frozen=True)
class ResultRow:
    """
    One observation of an experiment.

    Attributes:
        kind: Experiment kind
        observable: Name of the observed quantity (error rows use 'error.<Name>')
        depth: Network depth, or None
        width: Network width (effective width for convolutions), or None
        init: Canonical init scheme text, or ''
        activation: 'linear', 'relu' or ''
        trial: Trial index
        sub_seed: Sub-seed the trial ran with
        value: Observed value
    """
    kind: str
    observable: str
    depth: Optional[int]
    width: Optional[int]
    init: str
    activation: str
    trial: int
    sub_seed: int
    value: float


def rows_to_frame(rows: Sequence[ResultRow]) -> pd.DataFrame:
    """Table of rows with nullable integer depth/width and unsigned sub-seeds."""
    frame = pd.DataFrame([asdict(row) for row in rows], columns=CSV_COLUMNS)
    frame["depth"] = frame["depth"].astype("Int64")
    frame["width"] = frame["width"].astype("Int64")
    frame["trial"] = frame["trial"].astype("int64")
    frame["sub_seed"] = frame["sub_seed"].astype("uint64")
    frame["value"] = frame["value"].astype("float64")
    return frame


def frame_to_rows(frame: pd.DataFrame) -> List[ResultRow]:
    """Inverse of rows_to_frame."""
    rows = []
    for record in frame.to_dict(orient="records"):
        rows.append(ResultRow(
            kind=str(record["kind"]),
            observable=str(record["observable"]),
            depth=None if pd.isna(record["depth"]) else int(record["depth"]),
            width=None if pd.isna(record["width"]) else int(record["width"]),
            init="" if pd.isna(record["init"]) else str(record["init"]),
            activation="" if pd.isna(record["activation"]) else str(record["activation"]),
            trial=int(record["trial"]),
            sub_seed=int(record["sub_seed"]),
            value=float(record["value"]),
        ))
    return rows


def _ensure_parent(path: str) -> None:
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)


def emit_csv(rows: Sequence[ResultRow], path: str) -> None:
    """
    Write rows as CSV with the fixed header.

    Floats carry 17 significant digits so they re-parse to the same binary
    value; NaN values and missing depth/width are written as empty fields.

    Raises:
        EmptyInputError: If rows is empty (no file is created)
        OSError: If the file cannot be written, with the path in the message
    """
    if len(rows) == 0:
        raise EmptyInputError(f"no rows to write to {path}")
    frame = rows_to_frame(rows)
    try:
        _ensure_parent(path)
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, na_rep="", lineterminator="\n")
    except OSError as e:
        raise OSError(f"Error writing results to {path}: {e}") from e


def parse_csv(path: str) -> List[ResultRow]:
    """
    Read rows written by emit_csv.

    Raises:
        FileNotFoundError: If the file doesn't exist
        ValueError: If the header is not the fixed header
    """
    validate_file_exists(path)
    frame = pd.read_csv(
        path,
        dtype={"kind": str, "observable": str, "init": str, "activation": str,
               "depth": "Int64", "width": "Int64", "trial": "int64", "sub_seed": "uint64"},
        keep_default_na=False,
        na_values={"depth": [""], "width": [""], "value": [""]},
        float_precision="round_trip",
    )
    if list(frame.columns) != CSV_COLUMNS:
        raise ValueError(f"Invalid results header in {path}: {list(frame.columns)}, expected {CSV_COLUMNS}")
    frame["value"] = frame["value"].astype("float64")
    return frame_to_rows(frame)


def emit_json(rows: Sequence[ResultRow], path: str) -> None:
    """
    Write rows as a JSON list of records (floats in shortest round-trip form).

    Raises:
        EmptyInputError: If rows is empty (no file is created)
    """
    if len(rows) == 0:
        raise EmptyInputError(f"no rows to write to {path}")
    records = [asdict(row) for row in rows]
    try:
        _ensure_parent(path)
        with open(path, "w") as f:
            json.dump(records, f, indent=2)
    except OSError as e:
        raise OSError(f"Error writing results to {path}: {e}") from e


def parse_json(path: str) -> List[ResultRow]:
    """Read rows written by emit_json."""
    validate_file_exists(path)
    with open(path, "r") as f:
        records = json.load(f)
    names = {field.name for field in fields(ResultRow)}
    rows = []
    for index, record in enumerate(records):
        if set(record) != names:
            raise ValueError(f"Invalid record {index} in {path}: keys {sorted(record)}")
        rows.append(ResultRow(**{**record, "value": float(record["value"])}))
    return rows


def load_raw_tensor(path: str) -> np.ndarray:
    """
    Load a raw image tensor.

    The file holds four little-endian uint32 (count, channels, height,
    width) followed by count*channels*height*width little-endian float32
    values in C order.

    Args:
        path: Path to the tensor file

    Returns:
        float64 array of shape (count, channels, height, width)

    Raises:
        FileNotFoundError: If the file doesn't exist
        ValueError: If the payload does not match the header
    """
    validate_file_exists(path)
    with open(path, "rb") as f:
        header = np.frombuffer(f.read(4 * RAW_HEADER_DTYPE.itemsize), dtype=RAW_HEADER_DTYPE)
        if header.size != 4:
            raise ValueError(f"Truncated tensor header in {path}")
        payload = np.frombuffer(f.read(), dtype=RAW_VALUE_DTYPE)
    shape = tuple(int(v) for v in header)
    if payload.size != int(np.prod(shape)):
        raise ValueError(f"Tensor payload in {path} has {payload.size} values, header {shape} needs {int(np.prod(shape))}")
    return payload.reshape(shape).astype(np.float64)


def write_raw_tensor(path: str, array: Any) -> None:
    """
    Write a (count, channels, height, width) array in the raw tensor format.

    Raises:
        ShapeError: If the array is not 4-dimensional
    """
    array = np.asarray(array)
    if array.ndim != 4:
        raise ShapeError(f"raw tensors are 4-dimensional, got shape {array.shape}")
    _ensure_parent(path)
    with open(path, "wb") as f:
        f.write(np.asarray(array.shape, dtype=RAW_HEADER_DTYPE).tobytes())
        f.write(np.ascontiguousarray(array, dtype=RAW_VALUE_DTYPE).tobytes())
