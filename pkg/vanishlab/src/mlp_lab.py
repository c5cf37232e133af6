#!/usr/bin/env python3
"""
mlp_lab.py

Random multilayer perceptrons at initialization.

This module builds random MLPs f(x) = B D^L W^L ... W^1 D^0 A x, runs the
forward pass with cached preactivations and gates, computes exact
gradients by backpropagation and full Hessians over the hidden weights
W^1..W^L, either assembled from Kronecker-structured blocks or by central
differences of the gradient. It also provides the Monte-Carlo protocols
that check the closed-form moment recursions.

Parameters are flattened row-major: entry (i, j) of W^k sits at index
(k - 1) d^2 + i d + j. A and B are sampled like the hidden layers but
are not parameters.

Author: s2659865
Date: October 2026
"""

# ── Imports ───────────────────────────────────────────────────────────────────
import math
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

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
    sample_matrix,
    variance_for,
)
from vanishlab.src.theory_oracle import MomentState, gershgorin_contains
from vanishlab.utils.validation import (
    HessianSizeError,
    NonFiniteError,
    ShapeError,
    StaleCacheError,
    UnsupportedFamilyError,
    validate_finite,
    validate_non_negative_int,
    validate_positive_float,
    validate_positive_int,
)

# ── Constants ─────────────────────────────────────────────────────────────────
DEFAULT_HESSIAN_CAP = 4096
FD_STEP = 1e-5
# Reported when the off-diagonal blocks of a Hessian are exactly zero
HOLLOWNESS_SATURATION = float(np.finfo(np.float64).max)
OBSERVABLE_GROUPS = ("forward", "gradient", "hessian", "spectrum")
DEFAULT_SAMPLED_PAIRS = 256
MC_CHUNK = 10000


# ── Configuration ─────────────────────────────────────────────────────────────
def width_for(rule: str, L: int, default: int) -> int:
    """
    Evaluate a width rule at depth L.

    Rules are 'constant' (keep the configured width), 'constant:c',
    'sqrt_depth' (ceil(sqrt(L))) and 'linear:alpha' (ceil(alpha L)).
    Widths are at least 1.

    Args:
        rule: Width rule text
        L: Depth
        default: Width used by a bare 'constant' rule

    Returns:
        The integer width
    """
    validate_positive_int(L, "depth L")
    name, _, raw = rule.strip().lower().partition(":")
    if name == "constant":
        width = int(raw) if raw else default
    elif name == "sqrt_depth":
        width = math.ceil(math.sqrt(L) - 1e-12)
    elif name == "linear":
        alpha = float(raw) if raw else 1.0
        validate_positive_float(alpha, "width slope")
        width = math.ceil(alpha * L - 1e-9)
    else:
        raise ValueError(f"Unknown width rule '{rule}', expected constant[:c], sqrt_depth or linear[:alpha]")
    return max(1, int(width))


@dataclass(frozen=True)
class MlpConfig:
    """
    Shape and initialization of a random MLP.

    Attributes:
        L: Number of hidden weight matrices
        d: Width
        d_in: Input dimension (None means d)
        d_out: Output dimension (None means d)
        activation: Activation kind
        init: Initialization scheme for A, B and every W^k
        width_rule: Width rule applied by depth sweeps
    """
    L: int
    d: int
    d_in: Optional[int] = None
    d_out: Optional[int] = None
    activation: ActivationKind = LINEAR
    init: InitScheme = field(default_factory=lambda: InitScheme("gaussian", "xavier"))
    width_rule: str = "constant"

    def __post_init__(self):
        validate_positive_int(self.L, "depth L")
        validate_positive_int(self.d, "width d")
        if self.d_in is not None:
            validate_positive_int(self.d_in, "input dimension")
        if self.d_out is not None:
            validate_positive_int(self.d_out, "output dimension")
        object.__setattr__(self, "activation", activation_for(self.activation))
        if self.init.family == "orthogonal" and (self.in_dim != self.d or self.out_dim != self.d):
            raise ShapeError("orthogonal initialization needs d_in = d_out = d")

    @property
    def in_dim(self) -> int:
        return self.d if self.d_in is None else self.d_in

    @property
    def out_dim(self) -> int:
        return self.d if self.d_out is None else self.d_out

    @property
    def n_params(self) -> int:
        """Number of hidden-weight parameters L d^2."""
        return self.L * self.d * self.d

    def at_depth(self, L: int) -> "MlpConfig":
        """Copy of the config at depth L with the width given by the width rule."""
        return replace(self, L=L, d=width_for(self.width_rule, L, self.d))


@dataclass(frozen=True, eq=False)
class MlpDataset:
    """
    Inputs X (n x d_in) and targets Y (n x d_out).
    """
    X: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        X = np.atleast_2d(validate_finite(self.X, "inputs"))
        Y = np.atleast_2d(validate_finite(self.Y, "targets"))
        if X.shape[0] == 0:
            raise ValueError("dataset must not be empty")
        if X.shape[0] != Y.shape[0]:
            raise ShapeError(f"inputs and targets differ in count: {X.shape[0]} vs {Y.shape[0]}")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    @property
    def n(self) -> int:
        return self.X.shape[0]


@dataclass
class ForwardCache:
    """
    Intermediate values of the latest forward pass.

    preacts[0] is z = A x and preacts[l] = W^l h^{l-1}; gates[l] are the
    diagonals of D^l and acts[l] = gates[l] * preacts[l]. Every array has
    shape (L + 1, n, d).
    """
    inputs: np.ndarray
    version: int
    preacts: np.ndarray
    gates: np.ndarray
    acts: np.ndarray
    output: np.ndarray


class MlpState:
    """
    Weights of a random MLP and the cache of its latest forward pass.

    The state is single-writer: forward() overwrites the cache and
    set_weights() invalidates it.
    """

    def __init__(self, config: MlpConfig, A: np.ndarray, B: np.ndarray, W: np.ndarray):
        self.config = config
        d = config.d
        self.A = validate_finite(A, "input map A").copy()
        self.B = validate_finite(B, "output map B").copy()
        if self.A.shape != (d, config.in_dim):
            raise ShapeError(f"A must have shape {(d, config.in_dim)}, got {self.A.shape}")
        if self.B.shape != (config.out_dim, d):
            raise ShapeError(f"B must have shape {(config.out_dim, d)}, got {self.B.shape}")
        self._version = 0
        self.cache: Optional[ForwardCache] = None
        self.W = np.empty((config.L, d, d))
        self.set_weights(W)

    def set_weights(self, W: np.ndarray) -> None:
        """Replace the hidden weights (any shape with L d^2 entries) and drop the cache."""
        W = validate_finite(W, "hidden weights")
        if W.size != self.config.n_params:
            raise ShapeError(f"expected {self.config.n_params} hidden weights, got {W.size}")
        self.W = W.reshape(self.config.L, self.config.d, self.config.d).copy()
        self._version += 1
        self.cache = None

    @property
    def version(self) -> int:
        return self._version

    def parameters(self) -> np.ndarray:
        """Flat copy of the hidden weights."""
        return self.W.reshape(-1).copy()

    def with_parameters(self, theta: np.ndarray) -> "MlpState":
        """New state sharing A and B with the hidden weights replaced by theta."""
        return MlpState(self.config, self.A, self.B, theta)


# ── Construction ──────────────────────────────────────────────────────────────
def build_state(config: MlpConfig, rng: np.random.Generator) -> MlpState:
    """
    Sample A, W^1..W^L and B from the config's scheme.

    Each matrix uses its own fan-in: d_in for A, d for W^k and B.
    """
    d = config.d
    A = sample_matrix(config.init, d, config.in_dim, rng, fan_in=config.in_dim)
    W = np.stack([sample_matrix(config.init, d, d, rng) for _ in range(config.L)])
    B = sample_matrix(config.init, config.out_dim, d, rng, fan_in=d)
    return MlpState(config, A, B, W)


def teacher_dataset(config: MlpConfig, n: int, rng: np.random.Generator) -> MlpDataset:
    """
    Gaussian inputs labelled by a random one-hidden-layer ReLU network of width d.

    The hidden layer uses He variance and the output layer variance 1/d,
    so targets have unit scale independent of the width.
    """
    validate_positive_int(n, "dataset size")
    d, d_in, d_out = config.d, config.in_dim, config.out_dim
    X = rng.standard_normal(size=(n, d_in))
    hidden = np.sqrt(2.0 / d_in) * rng.standard_normal(size=(d, d_in))
    readout = np.sqrt(1.0 / d) * rng.standard_normal(size=(d_out, d))
    Y = np.maximum(X @ hidden.T, 0.0) @ readout.T
    return MlpDataset(X, Y)


# ── Forward and Backward ──────────────────────────────────────────────────────
def forward(state: MlpState, x: np.ndarray) -> np.ndarray:
    """
    Run the network on one input or a batch and refresh the cache.

    Args:
        state: Network state
        x: Input of shape (d_in,) or (n, d_in)

    Returns:
        Output of shape (d_out,) or (n, d_out)

    Raises:
        ShapeError: If the input dimension does not match d_in
    """
    config = state.config
    x = validate_finite(x, "input")
    single = x.ndim == 1
    X = np.atleast_2d(x)
    if X.ndim != 2 or X.shape[1] != config.in_dim:
        raise ShapeError(f"input must have dimension {config.in_dim}, got shape {x.shape}")

    n, L, d = X.shape[0], config.L, config.d
    preacts = np.empty((L + 1, n, d))
    gates = np.empty((L + 1, n, d))
    acts = np.empty((L + 1, n, d))
    preacts[0] = X @ state.A.T
    for layer in range(L + 1):
        if layer > 0:
            preacts[layer] = acts[layer - 1] @ state.W[layer - 1].T
        gates[layer] = config.activation.gates(preacts[layer])
        acts[layer] = gates[layer] * preacts[layer]
    output = acts[L] @ state.B.T

    state.cache = ForwardCache(X.copy(), state.version, preacts, gates, acts, output)
    return output[0] if single else output


def _valid_cache(state: MlpState, dataset: MlpDataset) -> ForwardCache:
    cache = state.cache
    if cache is None:
        raise StaleCacheError("no forward pass has been run on this state")
    if cache.version != state.version:
        raise StaleCacheError("weights changed since the last forward pass")
    if cache.inputs.shape != dataset.X.shape or not np.array_equal(cache.inputs, dataset.X):
        raise StaleCacheError("the cached forward pass was run on different inputs")
    return cache


def loss(state: MlpState, dataset: MlpDataset) -> float:
    """Mean squared-error loss (1/2n) sum_i ||f(x_i) - y_i||^2; refreshes the cache."""
    output = forward(state, dataset.X)
    if dataset.Y.shape != output.shape:
        raise ShapeError(f"targets must have shape {output.shape}, got {dataset.Y.shape}")
    residual = output - dataset.Y
    return 0.5 * float(np.mean(np.sum(residual * residual, axis=1)))


def _backward(state: MlpState, cache: ForwardCache, Y: np.ndarray) -> np.ndarray:
    """
    Backpropagated residuals delta_k = M_k^T r per layer, shape (L, n, d).

    M_k is the Jacobian of the output with respect to the preactivation
    fed by W^k.
    """
    L = state.config.L
    residual = cache.output - Y
    deltas = np.empty((L,) + cache.acts.shape[1:])
    deltas[L - 1] = (residual @ state.B) * cache.gates[L]
    for j in range(L - 1, 0, -1):
        deltas[j - 1] = (deltas[j] @ state.W[j]) * cache.gates[j]
    return deltas


def gradient(state: MlpState, dataset: MlpDataset) -> np.ndarray:
    """
    Gradient of the loss with respect to W^1..W^L.

    Gates are those of the cached forward pass.

    Args:
        state: Network state whose cache holds a forward pass on dataset.X
        dataset: Inputs and targets

    Returns:
        Array of shape (L, d, d); entry k is dLoss/dW^{k+1}

    Raises:
        StaleCacheError: If the cache is missing or belongs to other
            inputs or other weights
    """
    cache = _valid_cache(state, dataset)
    if dataset.Y.shape != cache.output.shape:
        raise ShapeError(f"targets must have shape {cache.output.shape}, got {dataset.Y.shape}")
    deltas = _backward(state, cache, dataset.Y)
    n = dataset.n
    return np.einsum("lna,lnb->lab", deltas, cache.acts[:-1]) / n


def loss_and_gradient(state: MlpState, dataset: MlpDataset) -> Tuple[float, np.ndarray]:
    """Loss and gradient from a single forward pass."""
    value = loss(state, dataset)
    return value, gradient(state, dataset)


def kink_distance(state: MlpState, dataset: MlpDataset) -> float:
    """Smallest |preactivation| over the dataset (inf for linear networks)."""
    forward(state, dataset.X)
    if state.config.activation.kind == "linear":
        return math.inf
    return float(np.min(np.abs(state.cache.preacts)))


def _gradient_at(state: MlpState, dataset: MlpDataset, theta: np.ndarray) -> np.ndarray:
    scratch = state.with_parameters(theta)
    loss(scratch, dataset)
    return gradient(scratch, dataset).reshape(-1)


def finite_difference_gradient(
    state: MlpState, dataset: MlpDataset, indices: Sequence[int], step: float = FD_STEP
) -> np.ndarray:
    """Central differences of the loss at the given flat parameter indices."""
    theta = state.parameters()
    values = np.empty(len(indices))
    for slot, index in enumerate(indices):
        h = step * max(1.0, abs(theta[index]))
        plus, minus = theta.copy(), theta.copy()
        plus[index] += h
        minus[index] -= h
        values[slot] = (loss(state.with_parameters(plus), dataset)
                        - loss(state.with_parameters(minus), dataset)) / (2.0 * h)
    return values


# ── Hessian ───────────────────────────────────────────────────────────────────
def transpose_permutation(d: int) -> np.ndarray:
    """Index map of the transpose: position m d + n holds n d + m."""
    return np.arange(d * d).reshape(d, d).T.reshape(-1)


def _analytic_hessian(state: MlpState, dataset: MlpDataset) -> np.ndarray:
    config = state.config
    L, d = config.L, config.d
    size = d * d
    loss(state, dataset)
    cache = state.cache
    deltas = _backward(state, cache, dataset.Y)
    perm = transpose_permutation(d)
    H = np.zeros((L * size, L * size))

    for i in range(dataset.n):
        gates = cache.gates[:, i, :]
        inputs = cache.acts[:-1, i, :]
        # M[j]: Jacobian of the output with respect to the preactivation fed by W[j]
        M = [None] * L
        M[L - 1] = state.B * gates[L][np.newaxis, :]
        for j in range(L - 1, 0, -1):
            M[j - 1] = (M[j] @ state.W[j]) * gates[j][np.newaxis, :]

        for k in range(L):
            # N: Jacobian of the input of W[l] with respect to the preactivation fed by W[k]
            N = np.diag(gates[k + 1])
            for l in range(k, L):
                block = np.kron(M[k].T @ M[l], np.outer(inputs[k], inputs[l]))
                if l > k:
                    if l > k + 1:
                        N = gates[l][:, np.newaxis] * (state.W[l - 1] @ N)
                    second = np.kron(N.T, np.outer(inputs[k], deltas[l, i]))
                    block = block + second[:, perm]
                H[k * size:(k + 1) * size, l * size:(l + 1) * size] += block

    H /= dataset.n
    for k in range(L):
        for l in range(k + 1, L):
            H[l * size:(l + 1) * size, k * size:(k + 1) * size] = \
                H[k * size:(k + 1) * size, l * size:(l + 1) * size].T
    return H


def _finite_difference_hessian(state: MlpState, dataset: MlpDataset, step: float) -> np.ndarray:
    theta = state.parameters()
    P = theta.size
    H = np.empty((P, P))
    for q in range(P):
        h = step * max(1.0, abs(theta[q]))
        plus, minus = theta.copy(), theta.copy()
        plus[q] += h
        minus[q] -= h
        H[:, q] = (_gradient_at(state, dataset, plus) - _gradient_at(state, dataset, minus)) / (2.0 * h)
    return 0.5 * (H + H.T)


def hessian(
    state: MlpState,
    dataset: MlpDataset,
    method: str = "analytic",
    cap: int = DEFAULT_HESSIAN_CAP,
    step: float = FD_STEP
) -> np.ndarray:
    """
    Full Hessian of the loss over the L d^2 hidden weights.

    The analytic path sums, per input, the Gauss-Newton term
    kron(M_k^T M_l, u_k u_l^T) and, for k < l, the second-order term
    kron(N^T, u_k delta_l^T) with its columns permuted by the transpose
    map; lower blocks are the transposes of upper blocks. ReLU networks
    use the gates of the forward pass. The finite-difference path takes
    central differences of the analytic gradient and serves as the oracle.

    Args:
        state: Network state
        dataset: Inputs and targets
        method: 'analytic' or 'finite_difference'
        cap: Largest parameter count for which a dense matrix is built
        step: Relative finite-difference step

    Returns:
        Symmetric (L d^2) x (L d^2) array

    Raises:
        HessianSizeError: If L d^2 exceeds the cap
    """
    P = state.config.n_params
    if P > cap:
        raise HessianSizeError(
            f"dense Hessian over {P} parameters exceeds the cap of {cap}; "
            f"use sampled_hessian_entries or hessian_vector_product instead"
        )
    if method == "analytic":
        return _analytic_hessian(state, dataset)
    if method == "finite_difference":
        return _finite_difference_hessian(state, dataset, step)
    raise ValueError(f"method must be 'analytic' or 'finite_difference', got '{method}'")


def hessian_vector_product(
    state: MlpState, dataset: MlpDataset, v: np.ndarray, step: float = FD_STEP
) -> np.ndarray:
    """Hessian-vector product by central differences of the gradient along v."""
    theta = state.parameters()
    v = validate_finite(v, "direction").reshape(-1)
    if v.size != theta.size:
        raise ShapeError(f"direction must have {theta.size} entries, got {v.size}")
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        return np.zeros_like(theta)
    h = step * max(1.0, float(np.linalg.norm(theta)) / math.sqrt(theta.size)) / norm
    return (_gradient_at(state, dataset, theta + h * v) - _gradient_at(state, dataset, theta - h * v)) / (2.0 * h)


def sampled_hessian_entries(
    state: MlpState, dataset: MlpDataset, pairs: Sequence[Tuple[int, int]], step: float = FD_STEP
) -> np.ndarray:
    """
    Individual Hessian entries H[p, q] by central differences of the gradient.

    Pairs sharing a column q reuse one pair of gradient evaluations.
    """
    theta = state.parameters()
    pairs = [(int(p), int(q)) for p, q in pairs]
    for p, q in pairs:
        if not (0 <= p < theta.size and 0 <= q < theta.size):
            raise ShapeError(f"Hessian index ({p}, {q}) is out of range for {theta.size} parameters")
    columns: Dict[int, np.ndarray] = {}
    for q in sorted({q for _, q in pairs}):
        h = step * max(1.0, abs(theta[q]))
        plus, minus = theta.copy(), theta.copy()
        plus[q] += h
        minus[q] -= h
        columns[q] = (_gradient_at(state, dataset, plus) - _gradient_at(state, dataset, minus)) / (2.0 * h)
    return np.array([columns[q][p] for p, q in pairs])


def random_block_pairs(
    L: int, d: int, count: int, rng: np.random.Generator, diagonal: bool
) -> List[Tuple[int, int]]:
    """Random index pairs inside diagonal (k = l) or off-diagonal (k != l) blocks."""
    size = d * d
    if not diagonal and L < 2:
        return []
    pairs = []
    for _ in range(count):
        k = int(rng.integers(L))
        l = k
        if not diagonal:
            l = int(rng.integers(L - 1))
            l = l + 1 if l >= k else l
        pairs.append((k * size + int(rng.integers(size)), l * size + int(rng.integers(size))))
    return pairs


# ── Spectra and Block Statistics ──────────────────────────────────────────────
def eigenspectrum(H: np.ndarray) -> np.ndarray:
    """
    Eigenvalues of the symmetrized matrix (H + H^T)/2 in descending order.

    Raises:
        NonFiniteError: If H has NaN or infinite entries
    """
    H = np.asarray(H, dtype=np.float64)
    if not np.all(np.isfinite(H)):
        raise NonFiniteError("matrix contains non-finite entries")
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ShapeError(f"eigenspectrum needs a square matrix, got shape {H.shape}")
    sym = 0.5 * (H + H.T)
    return linalg.eigh(sym, eigvals_only=True)[::-1]


def _block_mask(n: int, blocksize: int) -> np.ndarray:
    if blocksize < 1 or n % blocksize != 0:
        raise ShapeError(f"matrix of size {n} is not partitioned by blocks of size {blocksize}")
    block_of = np.arange(n) // blocksize
    return block_of[:, np.newaxis] == block_of[np.newaxis, :]


def hollowness(H: np.ndarray, blocksize: int) -> float:
    """
    Ratio of mean |entry| in diagonal blocks to mean |entry| in off-diagonal blocks.

    Returns HOLLOWNESS_SATURATION when the off-diagonal blocks are all zero
    (or there is a single block) and NaN when the whole matrix is zero.
    """
    H = np.asarray(H, dtype=np.float64)
    same = _block_mask(H.shape[0], blocksize)
    magnitude = np.abs(H)
    diag_mean = float(np.mean(magnitude[same]))
    off = magnitude[~same]
    off_mean = float(np.mean(off)) if off.size else 0.0
    if off_mean == 0.0:
        return math.nan if diag_mean == 0.0 else HOLLOWNESS_SATURATION
    return diag_mean / off_mean


def block_norms(H: np.ndarray, L: int, d: int) -> Dict[str, np.ndarray]:
    """
    Per-block Frobenius norms and mean absolute entries.

    Returns:
        {'frobenius': (L, L) array, 'mean_abs': (L, L) array}
    """
    size = d * d
    H = np.asarray(H, dtype=np.float64)
    if H.shape != (L * size, L * size):
        raise ShapeError(f"Hessian must have shape {(L * size, L * size)}, got {H.shape}")
    blocks = H.reshape(L, size, L, size).transpose(0, 2, 1, 3)
    return {
        "frobenius": np.sqrt(np.sum(blocks ** 2, axis=(2, 3))),
        "mean_abs": np.mean(np.abs(blocks), axis=(2, 3)),
    }


def _mean_log(values: np.ndarray) -> float:
    with np.errstate(divide="ignore"):
        return float(np.mean(np.log(values)))


# ── Depth Scans ───────────────────────────────────────────────────────────────
def scan_trial(
    config: MlpConfig,
    rng: np.random.Generator,
    observables: Iterable[str] = ("forward", "gradient", "hessian"),
    n_data: int = 1,
    cap: int = DEFAULT_HESSIAN_CAP,
    sampled_pairs: int = DEFAULT_SAMPLED_PAIRS
) -> Dict[str, float]:
    """
    Observables of one random network with its own teacher dataset.

    Args:
        config: Network config (depth and width already fixed)
        rng: Generator owned by this trial
        observables: Groups among 'forward', 'gradient', 'hessian', 'spectrum'
        n_data: Dataset size
        cap: Dense Hessian cap; larger networks use sampled entries
        sampled_pairs: Number of sampled entries per block kind beyond the cap

    Returns:
        Mapping of observable name to value
    """
    groups = set(observables)
    unknown = groups - set(OBSERVABLE_GROUPS)
    if unknown:
        raise ValueError(f"Unknown observables {sorted(unknown)}, expected a subset of {OBSERVABLE_GROUPS}")
    state = build_state(config, rng)
    dataset = teacher_dataset(config, n_data, rng)
    L, d = config.L, config.d
    values: Dict[str, float] = {"loss": loss(state, dataset)}

    if "forward" in groups:
        last = state.cache.preacts[L, 0]
        sq = float(np.dot(last, last))
        values["forward.m2"] = sq
        values["forward.m4_2"] = sq * sq
        values["forward.m4_4"] = float(np.sum(last ** 4))

    if "gradient" in groups:
        grad = gradient(state, dataset)
        per_layer = np.sqrt(np.sum(grad ** 2, axis=(1, 2)))
        values["grad.frobenius"] = float(np.sqrt(np.sum(per_layer ** 2)))
        values["grad.first_layer"] = float(per_layer[0])
        values["grad.layer_mean_log"] = _mean_log(per_layer)

    if groups & {"hessian", "spectrum"}:
        if config.n_params <= cap:
            H = hessian(state, dataset, cap=cap)
            norms = block_norms(H, L, d)
            diagonal = np.eye(L, dtype=bool)
            values["hessian.diag_block_log"] = _mean_log(norms["frobenius"][diagonal])
            values["hessian.diag_mean_abs"] = float(np.mean(norms["mean_abs"][diagonal]))
            values["hessian.hollowness"] = hollowness(H, d * d)
            if L > 1:
                upper = np.triu(np.ones((L, L), dtype=bool), k=1)
                values["hessian.offdiag_block_log"] = _mean_log(norms["frobenius"][upper])
                values["hessian.offdiag_mean_abs"] = float(np.mean(norms["mean_abs"][upper]))
            if "spectrum" in groups:
                eigs = eigenspectrum(H)
                values["spectrum.max"] = float(eigs[0])
                values["spectrum.min"] = float(eigs[-1])
                values["spectrum.trace_ratio"] = abs(float(np.trace(H))) / abs(float(eigs[0])) \
                    if eigs[0] != 0 else math.nan
                values["spectrum.gershgorin"] = float(np.all(gershgorin_contains(H, eigs)))
        else:
            diag_pairs = random_block_pairs(L, d, sampled_pairs, rng, diagonal=True)
            values["hessian.sampled_diag_mean_abs"] = float(
                np.mean(np.abs(sampled_hessian_entries(state, dataset, diag_pairs))))
            off_pairs = random_block_pairs(L, d, sampled_pairs, rng, diagonal=False)
            if off_pairs:
                values["hessian.sampled_offdiag_mean_abs"] = float(
                    np.mean(np.abs(sampled_hessian_entries(state, dataset, off_pairs))))
    return values


def norm_scan(
    config: MlpConfig,
    depths: Sequence[int],
    trials: int,
    observables: Iterable[str] = ("forward", "gradient", "hessian"),
    master_seed: int = 0,
    n_data: int = 1,
    cap: int = DEFAULT_HESSIAN_CAP
) -> pd.DataFrame:
    """
    Observables over a depth sweep, one row per (depth, trial, observable).

    The width at each depth comes from the config's width rule and trial t
    uses the sub-seed derived from (master_seed, t), so a row can be
    regenerated in isolation.

    Returns:
        Long-format table with columns depth, width, trial, sub_seed,
        observable, value
    """
    if trials < 2:
        raise ValueError(f"a scan needs at least 2 trials, got {trials}")
    observables = tuple(observables)
    rows = []
    for L in depths:
        at_depth = config.at_depth(int(L))
        for trial in range(trials):
            sub_seed = derive_sub_seed(master_seed, trial)
            values = scan_trial(at_depth, make_rng(sub_seed), observables, n_data, cap)
            for name, value in values.items():
                rows.append((at_depth.L, at_depth.d, trial, sub_seed, name, value))
    return pd.DataFrame(rows, columns=["depth", "width", "trial", "sub_seed", "observable", "value"])


# ── Monte-Carlo Protocols ─────────────────────────────────────────────────────
def standard_normal_moments(d: int) -> MomentState:
    """Moments of z ~ N(0, I_d): (d, d(d + 2), 3d)."""
    validate_positive_int(d, "width d")
    return MomentState(m2=float(d), m4_2=float(d * (d + 2)), m4_4=3.0 * d)


def _matrix_stack(scheme: InitScheme, count: int, d: int, rng: np.random.Generator) -> np.ndarray:
    if scheme.family == "orthogonal":
        q, r = np.linalg.qr(rng.standard_normal(size=(count, d, d)))
        signs = np.sign(np.diagonal(r, axis1=1, axis2=2))
        signs[signs == 0] = 1.0
        return q * signs[:, np.newaxis, :]
    return sample_entries(scheme, (count, d, d), variance_for(scheme, d), rng)


def _chunks(trials: int) -> Iterable[slice]:
    for start in range(0, trials, MC_CHUNK):
        yield slice(start, min(trials, start + MC_CHUNK))


def forward_norm_trials(
    scheme: InitScheme,
    activation: Union[str, ActivationKind],
    d: int,
    k: int,
    trials: int,
    rng: np.random.Generator
) -> Dict[str, np.ndarray]:
    """
    Monte-Carlo samples of the norms of W_phi^{j:1} z for j = 0..k.

    Each trial draws z ~ N(0, I_d) and fresh weights; layer j applies the
    gates of the current vector and then W^j.

    Returns:
        Arrays of shape (trials, k + 1) under 'm2' (||.||_2^2), 'm4_2'
        (||.||_2^4), 'm4_4' (||.||_4^4), and the per-trial ratios 'ratio2'
        (||.||_2^2 / ||z||_2^2) and 'ratio4' (||.||_2^4 / ||z||_2^4)
    """
    activation = activation_for(activation)
    validate_positive_int(d, "width d")
    validate_non_negative_int(k, "layers k")
    validate_positive_int(trials, "trials")
    m2 = np.empty((trials, k + 1))
    m4_4 = np.empty((trials, k + 1))
    for part in _chunks(trials):
        count = part.stop - part.start
        v = rng.standard_normal(size=(count, d))
        for layer in range(k + 1):
            if layer > 0:
                W = _matrix_stack(scheme, count, d, rng)
                v = np.einsum("tij,tj->ti", W, activation.gates(v) * v)
            m2[part, layer] = np.sum(v * v, axis=1)
            m4_4[part, layer] = np.sum(v ** 4, axis=1)
    base = m2[:, :1]
    return {
        "m2": m2,
        "m4_2": m2 * m2,
        "m4_4": m4_4,
        "ratio2": m2 / base,
        "ratio4": (m2 / base) ** 2,
    }


def preactivation_statistics(
    scheme: InitScheme,
    activation: Union[str, ActivationKind],
    d: int,
    k: int,
    trials: int,
    rng: np.random.Generator
) -> pd.DataFrame:
    """
    Symmetry statistics of preactivations at layers 1..k.

    Per layer: the first and third moments of coordinate 0, the frequency
    of an open gate at coordinate 0, and the correlation of the squared
    coordinates 0 and 1 normalised by the squared norm of the layer input.
    Trials in which the layer input is exactly zero are left out. Each
    statistic comes with its Monte-Carlo standard error.

    Raises:
        UnsupportedFamilyError: For orthogonal weights (rows are dependent)
        ShapeError: If d < 2
    """
    activation = activation_for(activation)
    if not scheme.iid:
        raise UnsupportedFamilyError("preactivation statistics need i.i.d. weights")
    if d < 2:
        raise ShapeError(f"squared-entry correlation needs d >= 2, got {d}")
    validate_positive_int(k, "layers k")
    validate_positive_int(trials, "trials")

    first = np.full((trials, k), np.nan)
    squares = np.full((trials, k, 2), np.nan)
    for part in _chunks(trials):
        count = part.stop - part.start
        v = rng.standard_normal(size=(count, d))
        for layer in range(k):
            h = activation.gates(v) * v
            W = _matrix_stack(scheme, count, d, rng)
            v = np.einsum("tij,tj->ti", W, h)
            norm2 = np.sum(h * h, axis=1)
            alive = norm2 > 0
            first[part, layer] = np.where(alive, v[:, 0], np.nan)
            with np.errstate(invalid="ignore", divide="ignore"):
                squares[part, layer, 0] = np.where(alive, v[:, 0] ** 2 / norm2, np.nan)
                squares[part, layer, 1] = np.where(alive, v[:, 1] ** 2 / norm2, np.nan)

    rows = []
    for layer in range(k):
        a = first[:, layer]
        a = a[~np.isnan(a)]
        q = squares[:, layer, :]
        q = q[~np.isnan(q[:, 0])]
        n = a.size
        standardized = (q - q.mean(axis=0)) / q.std(axis=0)
        product = standardized[:, 0] * standardized[:, 1]
        gate = activation.gates(a)
        rows.append({
            "layer": layer + 1,
            "n": n,
            "moment1": float(np.mean(a)),
            "moment1_se": float(np.std(a, ddof=1) / math.sqrt(n)),
            "moment3": float(np.mean(a ** 3)),
            "moment3_se": float(np.std(a ** 3, ddof=1) / math.sqrt(n)),
            "gate_frequency": float(np.mean(gate)),
            "gate_frequency_se": float(np.std(gate, ddof=1) / math.sqrt(n)),
            "square_correlation": float(np.mean(product)),
            "square_correlation_se": float(np.std(product, ddof=1) / math.sqrt(n)),
        })
    return pd.DataFrame(rows)


def frobenius_trials(
    scheme: InitScheme,
    activation: Union[str, ActivationKind],
    d: int,
    k: int,
    span: int,
    trials: int,
    rng: np.random.Generator
) -> Dict[str, np.ndarray]:
    """
    Samples of the squared Frobenius norm of a gated product of span layers.

    The gates come from a forward pass of z ~ N(0, I_d) through the first
    k + span layers; the product is W^{k+span} D^{k+span-1} ... W^{k+1} D^k.

    Returns:
        {'frobenius2': ||M||_F^2, 'column2': d ||M e_1||_2^2}, each of
        shape (trials,)
    """
    activation = activation_for(activation)
    validate_positive_int(d, "width d")
    validate_non_negative_int(k, "offset k")
    validate_positive_int(span, "span")
    validate_positive_int(trials, "trials")
    frobenius2 = np.empty(trials)
    column2 = np.empty(trials)
    for part in _chunks(trials):
        count = part.stop - part.start
        v = rng.standard_normal(size=(count, d))
        product = np.broadcast_to(np.eye(d), (count, d, d)).copy()
        for layer in range(k + span):
            gates = activation.gates(v)
            W = _matrix_stack(scheme, count, d, rng)
            v = np.einsum("tij,tj->ti", W, gates * v)
            if layer >= k:
                product = np.einsum("tij,tjk->tik", W * gates[:, np.newaxis, :], product)
        frobenius2[part] = np.sum(product ** 2, axis=(1, 2))
        column2[part] = d * np.sum(product[:, :, 0] ** 2, axis=1)
    return {"frobenius2": frobenius2, "column2": column2}
