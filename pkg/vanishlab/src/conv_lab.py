#!/usr/bin/env python3
"""
conv_lab.py

Fully convolutional networks on lines and square grids.

A network lifts c_in input channels to c channels, applies L hidden k^m
convolutions (m = 1 for lines, 2 for grids) with gates, and projects back
to c_in channels. Convolutions are cross-correlations with a padding of
(k - 1)/2 cells on each side, either zero or circular, so the resolution
does not change with depth. Like the MLP lab, only the hidden kernels are
parameters; the lift and the projection stay fixed.

Neighbour lookups use a precomputed index table. Out-of-range neighbours
under zero padding point at an extra all-zero row appended to every
feature map, the way a halo of zeros surrounds a grid.

Author: s2659865
Date: October 2026
"""

# ── Imports ───────────────────────────────────────────────────────────────────
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy import linalg

from vanishlab.src.init_distributions import (
    LINEAR,
    ActivationKind,
    InitScheme,
    activation_for,
    derive_sub_seed,
    make_rng,
    sample_entries,
    variance_for,
)
from vanishlab.src.mlp_lab import FD_STEP, width_for
from vanishlab.utils.validation import (
    ShapeError,
    UnsupportedFamilyError,
    validate_finite,
    validate_odd,
    validate_positive_int,
)

# ── Constants ─────────────────────────────────────────────────────────────────
SPATIAL_KINDS = ("line", "grid")
PADDINGS = ("zero", "circular")
DEFAULT_SAMPLED_PAIRS = 256


# ── Configuration ─────────────────────────────────────────────────────────────
@dataclass(frozen=True)
class ConvConfig:
    """
    Architecture of a fully convolutional network.

    Attributes:
        spatial: 'line' (n cells) or 'grid' (size x size cells)
        size: Line length n or grid side r
        c: Hidden channels
        k: Odd kernel size
        padding: 'zero' or 'circular'
        L: Number of hidden convolutions
        activation: Activation kind
        init: Initialization scheme; fan-in is k^m times the input channels
        c_in: Input channels (None means 1 for lines, 3 for grids)
        channel_rule: Width rule for c used by depth sweeps
    """
    spatial: str
    size: int
    c: int
    k: int
    padding: str
    L: int
    activation: ActivationKind = LINEAR
    init: InitScheme = field(default_factory=lambda: InitScheme("gaussian", "he"))
    c_in: Optional[int] = None
    channel_rule: str = "constant"

    def __post_init__(self):
        if self.spatial not in SPATIAL_KINDS:
            raise ValueError(f"spatial must be one of {SPATIAL_KINDS}, got '{self.spatial}'")
        if self.padding not in PADDINGS:
            raise ValueError(f"padding must be one of {PADDINGS}, got '{self.padding}'")
        validate_positive_int(self.size, "spatial size")
        validate_positive_int(self.c, "channels c")
        validate_odd(self.k, "kernel size k")
        validate_positive_int(self.L, "depth L")
        if self.c_in is not None:
            validate_positive_int(self.c_in, "input channels")
        if not self.init.iid:
            raise UnsupportedFamilyError("convolution kernels need an i.i.d. family")
        object.__setattr__(self, "activation", activation_for(self.activation))

    @property
    def dims(self) -> int:
        return 1 if self.spatial == "line" else 2

    @property
    def in_channels(self) -> int:
        if self.c_in is not None:
            return self.c_in
        return 1 if self.spatial == "line" else 3

    @property
    def positions(self) -> int:
        return self.size ** self.dims

    @property
    def taps(self) -> int:
        """Kernel entries per channel pair, k^m."""
        return self.k ** self.dims

    @property
    def n_params(self) -> int:
        return self.L * self.c * self.c * self.taps

    def at_depth(self, L: int) -> "ConvConfig":
        """Copy at depth L with c given by the channel rule."""
        return replace(self, L=L, c=width_for(self.channel_rule, L, self.c))


@dataclass(frozen=True, eq=False)
class ConvState:
    """
    Kernels of a network.

    Attributes:
        A: Input lift, shape (c, c_in, k^m)
        W: Hidden kernels, shape (L, c, c, k^m)
        B: Output projection, shape (c_in, c, k^m)
    """
    A: np.ndarray
    W: np.ndarray
    B: np.ndarray

    def parameters(self) -> np.ndarray:
        return self.W.reshape(-1).copy()

    def with_parameters(self, theta: np.ndarray) -> "ConvState":
        return ConvState(self.A, np.asarray(theta, dtype=np.float64).reshape(self.W.shape), self.B)


@dataclass
class ConvCache:
    """Preactivations, gates and activations per layer, each (L + 1, batch, P, c)."""
    preacts: np.ndarray
    gates: np.ndarray
    acts: np.ndarray
    output: np.ndarray


def effective_width(config: ConvConfig) -> int:
    """Path multiplicity of a layer: k c on a line, k^2 c on a grid."""
    return config.taps * config.c


# ── Circulant Matrices ────────────────────────────────────────────────────────
def circulant_matrix(h: Sequence[float], n: Optional[int] = None) -> np.ndarray:
    """
    Dense matrix of a circular single-channel convolution.

    K x equals the cross-correlation of x with h under circular padding,
    so for h = (h1, h2, h3) and n = 3 the first row is (h2, h3, h1).

    Args:
        h: Kernel of odd length k
        n: Signal length (defaults to k), at least k

    Returns:
        n x n circulant matrix

    Raises:
        ValueError: If the kernel length is even
        ShapeError: If n < k
    """
    h = validate_finite(h, "kernel").reshape(-1)
    validate_odd(int(h.size), "kernel length")
    n = h.size if n is None else n
    validate_positive_int(n, "signal length")
    if n < h.size:
        raise ShapeError(f"signal length {n} is shorter than the kernel ({h.size})")
    half = h.size // 2
    column = np.zeros(n)
    for m in range(-half, half + 1):
        column[m % n] = h[half - m]
    return linalg.circulant(column)


# ── Neighbour Tables ──────────────────────────────────────────────────────────
@lru_cache(maxsize=64)
def _neighbor_table(spatial: str, size: int, k: int, padding: str) -> np.ndarray:
    half = k // 2
    offsets = np.arange(-half, half + 1)
    if spatial == "line":
        cells = np.arange(size)[:, np.newaxis] + offsets[np.newaxis, :]
        inside = (cells >= 0) & (cells < size)
        table = cells % size
        if padding == "zero":
            table = np.where(inside, table, size)
        return table
    positions = size * size
    rows = np.repeat(np.arange(size), size)
    cols = np.tile(np.arange(size), size)
    dr = np.repeat(offsets, k)
    dc = np.tile(offsets, k)
    nr = rows[:, np.newaxis] + dr[np.newaxis, :]
    nc = cols[:, np.newaxis] + dc[np.newaxis, :]
    inside = (nr >= 0) & (nr < size) & (nc >= 0) & (nc < size)
    table = (nr % size) * size + (nc % size)
    if padding == "zero":
        table = np.where(inside, table, positions)
    return table


def neighbor_table(config: ConvConfig) -> np.ndarray:
    """
    Source cell of every (cell, kernel tap) pair, shape (P, k^m).

    Grid cells and taps are numbered row-major. Under zero padding an
    out-of-range source is the sentinel index P.
    """
    return _neighbor_table(config.spatial, config.size, config.k, config.padding)


def _columns(table: np.ndarray, x: np.ndarray) -> np.ndarray:
    padded = np.concatenate([x, np.zeros((x.shape[0], 1, x.shape[2]))], axis=1)
    return padded[:, table]


def _conv(table: np.ndarray, kernel: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.einsum("bpkc,ock->bpo", _columns(table, x), kernel)


def _conv_adjoint(table: np.ndarray, kernel: np.ndarray, delta: np.ndarray) -> np.ndarray:
    batch, positions = delta.shape[0], delta.shape[1]
    spread = np.einsum("bpo,ock->bpkc", delta, kernel)
    out = np.zeros((batch, positions + 1, kernel.shape[1]))
    np.add.at(out, (slice(None), table), spread)
    return out[:, :positions]


def _kernel_gradient(table: np.ndarray, delta: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.einsum("bpo,bpkc->ock", delta, _columns(table, x))


# ── Construction ──────────────────────────────────────────────────────────────
def _sample_kernel(config: ConvConfig, c_out: int, c_in: int, rng: np.random.Generator) -> np.ndarray:
    sigma2 = variance_for(config.init, config.taps * c_in)
    return sample_entries(config.init, (c_out, c_in, config.taps), sigma2, rng)


def build_conv_state(config: ConvConfig, rng: np.random.Generator) -> ConvState:
    """Sample the lift, the hidden kernels and the projection (in that order)."""
    c, c_in = config.c, config.in_channels
    A = _sample_kernel(config, c, c_in, rng)
    W = np.stack([_sample_kernel(config, c, c, rng) for _ in range(config.L)])
    B = _sample_kernel(config, c_in, c, rng)
    return ConvState(A, W, B)


def _check_shapes(config: ConvConfig, state: ConvState) -> None:
    c, c_in, taps = config.c, config.in_channels, config.taps
    expected = {
        "A": (c, c_in, taps),
        "W": (config.L, c, c, taps),
        "B": (c_in, c, taps),
    }
    for name, shape in expected.items():
        actual = getattr(state, name).shape
        if actual != shape:
            raise ShapeError(f"kernel {name} must have shape {shape}, got {actual}")


def _as_batch(config: ConvConfig, x: np.ndarray, name: str) -> Tuple[np.ndarray, bool]:
    x = validate_finite(x, name)
    single = x.ndim == 2
    batch = x[np.newaxis] if single else x
    expected = (config.positions, config.in_channels)
    if batch.ndim != 3 or batch.shape[1:] != expected:
        raise ShapeError(f"{name} must have shape {expected} or (batch,) + {expected}, got {x.shape}")
    return batch, single


# ── Forward and Backward ──────────────────────────────────────────────────────
def conv_forward(config: ConvConfig, state: ConvState, x: np.ndarray) -> Tuple[np.ndarray, ConvCache]:
    """
    Run the network.

    Args:
        config: Architecture
        state: Kernels
        x: Input of shape (P, c_in) or (batch, P, c_in), positions first

    Returns:
        (output with the shape of x, cache of the pass)

    Raises:
        ShapeError: If kernels or input do not match the config
    """
    _check_shapes(config, state)
    batch, single = _as_batch(config, x, "input")
    table = neighbor_table(config)
    L = config.L
    shape = (L + 1, batch.shape[0], config.positions, config.c)
    preacts, gates, acts = np.empty(shape), np.empty(shape), np.empty(shape)
    preacts[0] = _conv(table, state.A, batch)
    for layer in range(L + 1):
        if layer > 0:
            preacts[layer] = _conv(table, state.W[layer - 1], acts[layer - 1])
        gates[layer] = config.activation.gates(preacts[layer])
        acts[layer] = gates[layer] * preacts[layer]
    output = _conv(table, state.B, acts[L])
    cache = ConvCache(preacts, gates, acts, output)
    return (output[0] if single else output), cache


def conv_loss(config: ConvConfig, state: ConvState, x: np.ndarray, target: Optional[np.ndarray] = None) -> float:
    """L2 loss (1/2n) sum ||f(x) - target||^2; the target defaults to the input."""
    batch, _ = _as_batch(config, x, "input")
    goal, _ = _as_batch(config, batch if target is None else target, "target")
    output, _ = conv_forward(config, state, batch)
    residual = output - goal
    return 0.5 * float(np.sum(residual * residual)) / batch.shape[0]


def conv_gradient(
    config: ConvConfig,
    state: ConvState,
    x: np.ndarray,
    target: Optional[np.ndarray] = None,
    cache: Optional[ConvCache] = None
) -> np.ndarray:
    """
    Gradient of conv_loss with respect to the hidden kernels.

    Args:
        config: Architecture
        state: Kernels
        x: Input, (P, c_in) or (batch, P, c_in)
        target: Target of the same shape (defaults to x)
        cache: Cache of a forward pass on x with these kernels (recomputed if None)

    Returns:
        Array of shape (L, c, c, k^m)
    """
    batch, _ = _as_batch(config, x, "input")
    goal, _ = _as_batch(config, batch if target is None else target, "target")
    if goal.shape != batch.shape:
        raise ShapeError(f"target must have shape {batch.shape}, got {goal.shape}")
    if cache is None:
        _, cache = conv_forward(config, state, batch)
    table = neighbor_table(config)
    L = config.L
    grads = np.empty(state.W.shape)
    delta = _conv_adjoint(table, state.B, cache.output - goal) * cache.gates[L]
    for j in range(L - 1, -1, -1):
        grads[j] = _kernel_gradient(table, delta, cache.acts[j])
        if j > 0:
            delta = _conv_adjoint(table, state.W[j], delta) * cache.gates[j]
    return grads / batch.shape[0]


def _flat_gradient(config, state, theta, x, target) -> np.ndarray:
    return conv_gradient(config, state.with_parameters(theta), x, target).reshape(-1)


def finite_difference_gradient(
    config: ConvConfig,
    state: ConvState,
    x: np.ndarray,
    indices: Sequence[int],
    target: Optional[np.ndarray] = None,
    step: float = FD_STEP
) -> np.ndarray:
    """Central differences of conv_loss at flat kernel indices."""
    theta = state.parameters()
    values = np.empty(len(indices))
    for slot, index in enumerate(indices):
        h = step * max(1.0, abs(theta[index]))
        plus, minus = theta.copy(), theta.copy()
        plus[index] += h
        minus[index] -= h
        values[slot] = (conv_loss(config, state.with_parameters(plus), x, target)
                        - conv_loss(config, state.with_parameters(minus), x, target)) / (2.0 * h)
    return values


def sampled_hessian_entries(
    config: ConvConfig,
    state: ConvState,
    x: np.ndarray,
    pairs: Sequence[Tuple[int, int]],
    target: Optional[np.ndarray] = None,
    step: float = FD_STEP
) -> np.ndarray:
    """Hessian entries H[p, q] over the hidden kernels by central differences of the gradient."""
    theta = state.parameters()
    columns: Dict[int, np.ndarray] = {}
    values = np.empty(len(pairs))
    for slot, (p, q) in enumerate(pairs):
        p, q = int(p), int(q)
        if not (0 <= p < theta.size and 0 <= q < theta.size):
            raise ShapeError(f"Hessian index ({p}, {q}) is out of range for {theta.size} parameters")
        if q not in columns:
            h = step * max(1.0, abs(theta[q]))
            plus, minus = theta.copy(), theta.copy()
            plus[q] += h
            minus[q] -= h
            columns[q] = (_flat_gradient(config, state, plus, x, target)
                          - _flat_gradient(config, state, minus, x, target)) / (2.0 * h)
        values[slot] = columns[q][p]
    return values


def kink_distance(config: ConvConfig, state: ConvState, x: np.ndarray) -> float:
    """Smallest |preactivation| of a pass on x (inf for linear networks)."""
    if config.activation.kind == "linear":
        return math.inf
    _, cache = conv_forward(config, state, x)
    return float(np.min(np.abs(cache.preacts)))


# ── Dense Expansion ───────────────────────────────────────────────────────────
def _dense_operator(table: np.ndarray, kernel: np.ndarray, positions: int) -> np.ndarray:
    c_out, c_in, taps = kernel.shape
    dense = np.zeros((positions * c_out, positions * c_in))
    for p in range(positions):
        for tap in range(taps):
            q = table[p, tap]
            if q == positions:
                continue
            dense[p * c_out:(p + 1) * c_out, q * c_in:(q + 1) * c_in] += kernel[:, :, tap]
    return dense


def expand_dense(config: ConvConfig, state: ConvState) -> Dict[str, np.ndarray]:
    """
    Dense matrices of every convolution, acting on position-major vectors.

    A feature map of shape (P, channels) flattens to index p * channels + ch.
    Under circular padding on a line the hidden matrices are block-circulant.

    Returns:
        {'A': (P c, P c_in), 'W': (L, P c, P c), 'B': (P c_in, P c)}
    """
    _check_shapes(config, state)
    table = neighbor_table(config)
    P = config.positions
    return {
        "A": _dense_operator(table, state.A, P),
        "W": np.stack([_dense_operator(table, kernel, P) for kernel in state.W]),
        "B": _dense_operator(table, state.B, P),
    }


def fold_dense_gradient(config: ConvConfig, dense_gradient: np.ndarray) -> np.ndarray:
    """
    Kernel gradient from the gradient with respect to the expanded dense matrices.

    Each kernel entry collects the dense entries it was copied to.
    """
    table = neighbor_table(config)
    P, c = config.positions, config.c
    dense_gradient = np.asarray(dense_gradient, dtype=np.float64).reshape(config.L, P * c, P * c)
    grads = np.zeros((config.L, c, c, config.taps))
    for p in range(P):
        for tap in range(config.taps):
            q = table[p, tap]
            if q == P:
                continue
            grads[:, :, :, tap] += dense_gradient[:, p * c:(p + 1) * c, q * c:(q + 1) * c]
    return grads


# ── Symmetry ──────────────────────────────────────────────────────────────────
def cyclic_shift(x: np.ndarray, config: ConvConfig, s: Union[int, Tuple[int, int]]) -> np.ndarray:
    """
    Shift a feature map cyclically by s cells (s = (rows, cols) on grids).

    Accepts (P, channels) or (batch, P, channels).
    """
    x = np.asarray(x, dtype=np.float64)
    axis = x.ndim - 2
    if config.spatial == "line":
        return np.roll(x, int(s if np.ndim(s) == 0 else s[0]), axis=axis)
    shifts = (int(s), 0) if np.ndim(s) == 0 else (int(s[0]), int(s[1]))
    grid_shape = x.shape[:axis] + (config.size, config.size) + x.shape[axis + 1:]
    rolled = np.roll(x.reshape(grid_shape), shifts, axis=(axis, axis + 1))
    return rolled.reshape(x.shape)


# ── Depth Scans ───────────────────────────────────────────────────────────────
def image_input(config: ConvConfig, image: np.ndarray) -> np.ndarray:
    """Convert a (channels, height, width) image to a (P, channels) feature map."""
    image = validate_finite(image, "image")
    channels = image.shape[0]
    if channels != config.in_channels or image[0].size != config.positions:
        raise ShapeError(
            f"image of shape {image.shape} does not fit {config.positions} cells with {config.in_channels} channels"
        )
    return image.reshape(channels, -1).T.copy()


def random_parameter_pairs(n_params: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """Uniformly random (p, q) index pairs."""
    return rng.integers(n_params, size=(count, 2))


def scan_trial(
    config: ConvConfig,
    rng: np.random.Generator,
    hessian_pairs: int = 0,
    images: Optional[np.ndarray] = None,
    trial: int = 0
) -> Dict[str, float]:
    """
    Observables of one random network on one input.

    The input is a synthetic Gaussian feature map unless images of shape
    (count, channels, height, width) are given, in which case image
    trial % count is used. The target is the input itself.

    Args:
        config: Architecture with depth and channels fixed
        rng: Generator owned by this trial
        hessian_pairs: Number of sampled Hessian entries (0 skips them)
        images: Optional image stack
        trial: Trial index used to pick an image

    Returns:
        Mapping of observable name to value
    """
    state = build_conv_state(config, rng)
    if images is None:
        x = rng.standard_normal(size=(config.positions, config.in_channels))
    else:
        x = image_input(config, images[trial % images.shape[0]])
    grads = conv_gradient(config, state, x)
    per_layer = np.sqrt(np.sum(grads ** 2, axis=(1, 2, 3)))
    with np.errstate(divide="ignore"):
        layer_mean_log = float(np.mean(np.log(per_layer)))
    values = {
        "loss": conv_loss(config, state, x),
        "grad.frobenius": float(np.sqrt(np.sum(per_layer ** 2))),
        "grad.first_layer": float(per_layer[0]),
        "grad.layer_mean_log": layer_mean_log,
    }
    if hessian_pairs > 0:
        pairs = random_parameter_pairs(config.n_params, hessian_pairs, rng)
        entries = sampled_hessian_entries(config, state, x, pairs)
        values["hessian.sampled_mean_abs"] = float(np.mean(np.abs(entries)))
    return values


def depth_scan(
    config: ConvConfig,
    depths: Sequence[int],
    trials: int,
    master_seed: int = 0,
    hessian_pairs: int = DEFAULT_SAMPLED_PAIRS,
    images: Optional[np.ndarray] = None
) -> pd.DataFrame:
    """
    Gradient norms and sampled Hessian entries over a depth sweep.

    Channels at each depth follow the config's channel rule.

    Returns:
        Long-format table with columns depth, width, trial, sub_seed,
        observable, value; width is the effective width
    """
    if trials < 2:
        raise ValueError(f"a scan needs at least 2 trials, got {trials}")
    rows = []
    for L in depths:
        at_depth = config.at_depth(int(L))
        for trial in range(trials):
            sub_seed = derive_sub_seed(master_seed, trial)
            values = scan_trial(at_depth, make_rng(sub_seed), hessian_pairs, images, trial)
            for name, value in values.items():
                rows.append((at_depth.L, effective_width(at_depth), trial, sub_seed, name, value))
    return pd.DataFrame(rows, columns=["depth", "width", "trial", "sub_seed", "observable", "value"])
