#!/usr/bin/env python3
"""
init_distributions.py

Weight distributions, initialization rules and their population moments.

This module defines the immutable value types describing how weights are
drawn (family and variance rule), the activation kinds with their gate
probability, and reproducible samplers built on a counter-based random
generator. Every sampler is a pure function of (scheme, shape, seed).

Author: s2659865
Date: October 2026
"""

# ── Imports ───────────────────────────────────────────────────────────────────
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from vanishlab.utils.validation import (
    UnsupportedFamilyError,
    ShapeError,
    validate_positive_int,
    validate_positive_float,
    validate_non_negative_int,
)

# ── Constants ─────────────────────────────────────────────────────────────────
FAMILIES = ("uniform", "gaussian", "orthogonal")
RULES = ("lecun", "xavier", "he", "var", "range")
ACTIVATIONS = ("linear", "relu")

# Kurtosis mu4 / sigma2^2 of the i.i.d. families
FAMILY_KURTOSIS = {"gaussian": 3.0, "uniform": 9.0 / 5.0}

# Variance as a multiple of 1/fan_in
RULE_GAIN = {"lecun": 1.0 / 3.0, "xavier": 1.0, "he": 2.0}


# ── Value Types ───────────────────────────────────────────────────────────────
@dataclass(frozen=True)
class MomentProfile:
    """
    Population moments of a scalar weight distribution.

    Attributes:
        sigma2: Variance
        mu4: Fourth raw moment
    """
    sigma2: float
    mu4: float

    def __post_init__(self):
        validate_positive_float(self.sigma2, "sigma2")
        if self.mu4 < self.sigma2 ** 2 * (1.0 - 1e-12):
            raise ValueError(f"mu4 must be at least sigma2^2, got mu4={self.mu4}, sigma2={self.sigma2}")

    @property
    def kappa(self) -> float:
        """Kurtosis mu4 / sigma2^2."""
        return self.mu4 / self.sigma2 ** 2


@dataclass(frozen=True)
class InitScheme:
    """
    A weight initialization scheme.

    Attributes:
        family: One of 'uniform', 'gaussian', 'orthogonal'
        rule: One of 'lecun', 'xavier', 'he', 'var' (custom variance) or
            'range' (custom half-width of a uniform support)
        value: The custom variance or half-width, when the rule needs one
    """
    family: str
    rule: str = "xavier"
    value: Optional[float] = None

    def __post_init__(self):
        _check_rule_family(self.family, self.rule, self.value)

    @property
    def iid(self) -> bool:
        """True when entries are i.i.d. and a MomentProfile exists."""
        return self.family != "orthogonal"

    def __str__(self) -> str:
        return format_scheme(self)


@dataclass(frozen=True)
class ActivationKind:
    """
    Activation function of a network.

    Attributes:
        kind: 'linear' or 'relu'
    """
    kind: str

    def __post_init__(self):
        if self.kind not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}, got '{self.kind}'")

    @property
    def p(self) -> float:
        """Probability that a gate is open: 1 for linear, 1/2 for ReLU."""
        return 1.0 if self.kind == "linear" else 0.5

    def gates(self, preactivation: np.ndarray) -> np.ndarray:
        """
        Gate values for a preactivation array.

        A ReLU gate is 1 iff the preactivation is strictly positive, so an
        exactly zero preactivation closes the gate.

        Args:
            preactivation: Array of preactivations

        Returns:
            Float array of 0/1 gates with the same shape
        """
        if self.kind == "linear":
            return np.ones_like(preactivation, dtype=np.float64)
        return (preactivation > 0).astype(np.float64)

    def __str__(self) -> str:
        return self.kind


LINEAR = ActivationKind("linear")
RELU = ActivationKind("relu")


def _check_rule_family(family: str, rule: str, value: Optional[float]) -> None:
    """Reject family/rule combinations that have no meaning."""
    if family not in FAMILIES:
        raise ValueError(f"family must be one of {FAMILIES}, got '{family}'")
    if rule not in RULES:
        raise ValueError(f"rule must be one of {RULES}, got '{rule}'")
    if rule == "range" and family != "uniform":
        raise ValueError(f"a custom range is only valid for the uniform family, got '{family}'")
    if rule in ("var", "range"):
        if value is None:
            raise ValueError(f"rule '{rule}' needs a value")
        validate_positive_float(value, f"{rule} value")


# ── Textual Form ──────────────────────────────────────────────────────────────
def parse_scheme(text: str) -> InitScheme:
    """
    Parse the canonical textual form of an initialization scheme.

    Accepted forms are 'uniform:he', 'gaussian:xavier', 'uniform:lecun',
    'uniform:range=1.5', 'gaussian:var=0.2' and 'orthogonal'.

    Args:
        text: Scheme description

    Returns:
        The parsed InitScheme

    Raises:
        ValueError: If the text is not a recognised scheme
    """
    token = text.strip().lower()
    if token == "orthogonal":
        return InitScheme("orthogonal", "xavier")
    family, sep, rule = token.partition(":")
    if not sep or not rule:
        raise ValueError(f"Invalid init scheme '{text}', expected '<family>:<rule>'")
    if "=" in rule:
        name, _, raw = rule.partition("=")
        try:
            value = float(raw)
        except ValueError:
            raise ValueError(f"Invalid numeric value in init scheme '{text}'")
        return InitScheme(family, name, value)
    return InitScheme(family, rule)


def format_scheme(scheme: InitScheme) -> str:
    """Return the canonical textual form of a scheme (inverse of parse_scheme)."""
    if scheme.family == "orthogonal":
        return "orthogonal"
    if scheme.rule in ("var", "range"):
        return f"{scheme.family}:{scheme.rule}={scheme.value!r}"
    return f"{scheme.family}:{scheme.rule}"


def activation_for(name: Union[str, ActivationKind]) -> ActivationKind:
    """Return the ActivationKind for a name ('linear' or 'relu')."""
    if isinstance(name, ActivationKind):
        return name
    return ActivationKind(str(name).strip().lower())


# ── Moments ───────────────────────────────────────────────────────────────────
def variance_for(scheme: InitScheme, d: int) -> float:
    """
    Variance of a weight entry under a scheme for fan-in d.

    LeCun gives 1/(3d), Xavier 1/d, He 2/d; a custom range tau gives tau^2/3
    and a custom variance is returned as is. Entries of a Haar orthogonal
    d x d matrix have variance 1/d.

    Args:
        scheme: Initialization scheme
        d: Fan-in

    Returns:
        The variance sigma2

    Raises:
        ValueError: If d < 1 or the rule does not apply to the family
    """
    validate_positive_int(d, "fan-in d")
    _check_rule_family(scheme.family, scheme.rule, scheme.value)
    if scheme.family == "orthogonal":
        return 1.0 / d
    if scheme.rule == "range":
        return scheme.value ** 2 / 3.0
    if scheme.rule == "var":
        return float(scheme.value)
    return RULE_GAIN[scheme.rule] / d


def range_for_uniform(sigma2: float) -> float:
    """Half-width tau of the uniform distribution U[-tau, tau] with variance sigma2."""
    validate_positive_float(sigma2, "sigma2")
    return float(np.sqrt(3.0 * sigma2))


def kurtosis_of(family: str) -> float:
    """
    Kurtosis of an i.i.d. family.

    Raises:
        UnsupportedFamilyError: For the orthogonal family (entries are not i.i.d.)
    """
    if family == "orthogonal":
        raise UnsupportedFamilyError("orthogonal weights are not i.i.d. and have no kurtosis")
    if family not in FAMILY_KURTOSIS:
        raise ValueError(f"family must be one of {FAMILIES}, got '{family}'")
    return FAMILY_KURTOSIS[family]


def moment_profile(scheme: InitScheme, d: int) -> MomentProfile:
    """
    MomentProfile of a scheme at fan-in d.

    Raises:
        UnsupportedFamilyError: For orthogonal schemes
    """
    kappa = kurtosis_of(scheme.family)
    sigma2 = variance_for(scheme, d)
    return MomentProfile(sigma2=sigma2, mu4=kappa * sigma2 ** 2)


# ── Random Generators ─────────────────────────────────────────────────────────
def derive_sub_seed(master_seed: int, trial: int) -> int:
    """
    Derive the 64-bit sub-seed of a trial from the master seed.

    The derivation depends only on (master_seed, trial), so trials can run
    in any order or in parallel.

    Args:
        master_seed: Non-negative master seed
        trial: Trial index

    Returns:
        Unsigned 64-bit sub-seed as a Python int
    """
    validate_non_negative_int(master_seed, "master seed")
    validate_non_negative_int(trial, "trial index")
    state = np.random.SeedSequence([int(master_seed), int(trial)]).generate_state(1, dtype=np.uint64)
    return int(state[0])


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based (Philox) generator for a seed."""
    return np.random.Generator(np.random.Philox(int(seed)))


# ── Sampling ──────────────────────────────────────────────────────────────────
def sample_entries(scheme: InitScheme, shape, sigma2: float, rng: np.random.Generator) -> np.ndarray:
    """
    Draw i.i.d. entries with variance sigma2 from the scheme's family.

    Args:
        scheme: Initialization scheme (uniform or gaussian)
        shape: Output shape
        sigma2: Target variance
        rng: Random generator

    Returns:
        Array of the requested shape
    """
    if scheme.family == "uniform":
        tau = range_for_uniform(sigma2)
        return rng.uniform(-tau, tau, size=shape)
    if scheme.family == "gaussian":
        return np.sqrt(sigma2) * rng.standard_normal(size=shape)
    raise UnsupportedFamilyError(f"family '{scheme.family}' has no i.i.d. entries")


def sample_orthogonal(n: int, rng: np.random.Generator) -> np.ndarray:
    """
    Uniformly random (Haar) orthogonal n x n matrix.

    Uses the QR decomposition of a Gaussian matrix with the signs of R's
    diagonal folded into Q.
    """
    gaussian = rng.standard_normal(size=(n, n))
    q, r = np.linalg.qr(gaussian)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs[np.newaxis, :]


def sample_matrix(
    scheme: InitScheme,
    rows: int,
    cols: int,
    rng: np.random.Generator,
    fan_in: Optional[int] = None
) -> np.ndarray:
    """
    Sample a weight matrix.

    Args:
        scheme: Initialization scheme
        rows: Number of rows
        cols: Number of columns
        rng: Random generator owned by the caller
        fan_in: Fan-in used by the variance rule (defaults to cols)

    Returns:
        rows x cols matrix; i.i.d. entries for uniform/gaussian, a Haar
        orthogonal matrix for the orthogonal family

    Raises:
        ShapeError: If an orthogonal matrix is requested with rows != cols
    """
    validate_positive_int(rows, "rows")
    validate_positive_int(cols, "cols")
    if scheme.family == "orthogonal":
        if rows != cols:
            raise ShapeError(f"orthogonal sampling needs a square shape, got {rows}x{cols}")
        return sample_orthogonal(rows, rng)
    sigma2 = variance_for(scheme, fan_in if fan_in is not None else cols)
    return sample_entries(scheme, (rows, cols), sigma2, rng)
