#!/usr/bin/env python3
"""
validation.py

Input validation utilities and error types for vanishlab.

This module provides functions for validating numeric parameters and input
files, and the exception classes raised by the laboratories when an
operation is called outside its domain.

Author: s2659865
Date: October 2026
"""
from typing import Any, Iterable, List
import os
import numbers

import numpy as np


# ── Error Types ──────────────────────────────────────────────────────────────
class UnsupportedFamilyError(ValueError):
    """Raised when a distribution family has no moment profile (orthogonal)."""


class ShapeError(ValueError):
    """Raised on dimension or shape mismatches."""


class DomainError(ValueError):
    """Raised when an argument lies outside the domain of a closed form."""


class UnsupportedOrderError(ValueError):
    """Raised for moment orders the oracle does not implement."""


class UnsupportedDepthError(ValueError):
    """Raised for depths at which a closed form is singular."""


class HessianSizeError(ValueError):
    """Raised when a dense Hessian would exceed the configured cap."""


class NonFiniteError(ValueError):
    """Raised when an input matrix or vector holds NaN or infinite entries."""


class EmptyInputError(ValueError):
    """Raised when an emitter receives no rows."""


class StaleCacheError(RuntimeError):
    """Raised when a cached forward pass does not match the current request."""


class SpecValidationError(ValueError):
    """
    Raised when an experiment spec is invalid.

    Every problem found is collected in ``problems`` so the caller sees all
    missing or invalid keys at once.
    """

    def __init__(self, problems: List[str]):
        self.problems = list(problems)
        super().__init__("invalid experiment spec: " + "; ".join(self.problems))


# ── File Validation ──────────────────────────────────────────────────────────
def validate_file_exists(file_path: str) -> None:
    """
    Validate that a file exists and is readable.

    Args:
        file_path: Path to the file to check

    Raises:
        FileNotFoundError: If the file doesn't exist
        PermissionError: If the file cannot be read
    """
    if not os.path.exists(file_path):
        raise FileNotFoundError(f"Input file not found: {file_path}")
    if not os.path.isfile(file_path):
        raise ValueError(f"Path is not a file: {file_path}")
    if not os.access(file_path, os.R_OK):
        raise PermissionError(f"Cannot read file: {file_path}")


# ── Scalar Validation ────────────────────────────────────────────────────────
def validate_positive_float(value: float, name: str) -> None:
    """
    Validate that a value is a strictly positive real number.

    Args:
        value: Value to check
        name: Name of the parameter (for error messages)

    Raises:
        TypeError: If the value is not a number
        ValueError: If the value is not positive and finite
    """
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise TypeError(f"{name} must be a number, got {type(value).__name__}")
    if not np.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be positive, got {value}")


def validate_positive_int(value: int, name: str) -> None:
    """
    Validate that a value is a positive integer.

    Args:
        value: Value to check
        name: Name of the parameter (for error messages)

    Raises:
        TypeError: If the value is not an integer
        ValueError: If the value is not positive
    """
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise TypeError(f"{name} must be an integer, got {type(value).__name__}")
    if value <= 0:
        raise ValueError(f"{name} must be positive, got {value}")


def validate_non_negative_int(value: int, name: str) -> None:
    """
    Validate that a value is an integer greater than or equal to zero.

    Args:
        value: Value to check
        name: Name of the parameter (for error messages)

    Raises:
        TypeError: If the value is not an integer
        ValueError: If the value is negative
    """
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise TypeError(f"{name} must be an integer, got {type(value).__name__}")
    if value < 0:
        raise ValueError(f"{name} must be non-negative, got {value}")


def validate_proportion(value: float, name: str, closed_upper: bool = True) -> None:
    """
    Validate that a value is a proportion between 0 and 1.

    Args:
        value: Value to check
        name: Name of the parameter (for error messages)
        closed_upper: Whether 1 itself is accepted

    Raises:
        TypeError: If the value is not a number
        ValueError: If the value is not between 0 and 1
    """
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise TypeError(f"{name} must be a number, got {type(value).__name__}")
    upper_ok = value <= 1 if closed_upper else value < 1
    if value < 0 or not upper_ok:
        bound = "[0, 1]" if closed_upper else "[0, 1)"
        raise ValueError(f"{name} must be in {bound}, got {value}")


def validate_odd(value: int, name: str) -> None:
    """
    Validate that a value is a positive odd integer.

    Raises:
        ValueError: If the value is even
    """
    validate_positive_int(value, name)
    if value % 2 == 0:
        raise ValueError(f"{name} must be odd, got {value}")


# ── Array Validation ─────────────────────────────────────────────────────────
def validate_finite(array: Any, name: str) -> np.ndarray:
    """
    Validate that an array holds only finite entries.

    Args:
        array: Array-like to check
        name: Name of the parameter (for error messages)

    Returns:
        The input as a float64 NumPy array

    Raises:
        NonFiniteError: If any entry is NaN or infinite
    """
    arr = np.asarray(array, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{name} contains non-finite entries")
    return arr


def validate_shape(array: np.ndarray, expected: Iterable[int], name: str) -> None:
    """
    Validate the exact shape of an array.

    Raises:
        ShapeError: If the shapes differ
    """
    expected = tuple(expected)
    if tuple(array.shape) != expected:
        raise ShapeError(f"{name} must have shape {expected}, got {tuple(array.shape)}")
