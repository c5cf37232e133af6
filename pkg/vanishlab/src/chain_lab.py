#!/usr/bin/env python3
"""
chain_lab.py

Neural chains: depth-L, width-1 linear networks.

This module provides the exact loss, gradient and Hessian of a chain, the
Monte-Carlo sampler of chain forward passes (products of scaled uniforms),
the optimizer testbed (GD, perturbed GD, SGD, RMSprop, Adam) with escape
times, and numerical integration of the symmetric gradient flow.

Skip-products are always built from prefix/suffix product arrays, never
by dividing the full product by a weight, so zero weights are handled
exactly. The inner loops are compiled with numba.

Author: s2659865
Date: October 2026
"""

# ── Imports ───────────────────────────────────────────────────────────────────
import time
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from numba import njit
from scipy import linalg

from vanishlab.src.init_distributions import InitScheme, make_rng, sample_matrix
from vanishlab.utils.validation import (
    ShapeError,
    validate_finite,
    validate_positive_float,
    validate_positive_int,
    validate_proportion,
)

# ── Constants ─────────────────────────────────────────────────────────────────
METHODS = {"gd": 0, "perturbed_gd": 1, "sgd": 2, "rmsprop": 3, "adam": 4}
DECAYS = {"none": 0, "inv_sqrt": 1}
DEFAULT_ESCAPE_FRACTION = 0.1


# ── Value Types ───────────────────────────────────────────────────────────────
@dataclass(frozen=True, eq=False)
class ChainParams:
    """
    Weights of a neural chain together with its scalar dataset.

    Attributes:
        w: Vector of L scalar weights
        xs: Inputs x_i
        ys: Targets y_i
    """
    w: np.ndarray
    xs: np.ndarray
    ys: np.ndarray

    def __post_init__(self):
        w = validate_finite(self.w, "chain weights").reshape(-1).copy()
        xs = validate_finite(self.xs, "chain inputs").reshape(-1).copy()
        ys = validate_finite(self.ys, "chain targets").reshape(-1).copy()
        if w.size < 1:
            raise ShapeError("a chain needs at least one weight")
        if xs.size < 1 or xs.size != ys.size:
            raise ShapeError(f"chain data must be non-empty pairs, got {xs.size} inputs and {ys.size} targets")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)

    @classmethod
    def from_pairs(cls, w: Sequence[float], data: Sequence[Tuple[float, float]]) -> "ChainParams":
        """Build params from a weight vector and a list of (x, y) pairs."""
        pairs = np.asarray(list(data), dtype=np.float64).reshape(-1, 2)
        return cls(np.asarray(w, dtype=np.float64), pairs[:, 0], pairs[:, 1])

    @property
    def L(self) -> int:
        return int(self.w.size)

    @property
    def data(self) -> List[Tuple[float, float]]:
        return [(float(x), float(y)) for x, y in zip(self.xs, self.ys)]

    def with_weights(self, w: np.ndarray) -> "ChainParams":
        return ChainParams(w, self.xs, self.ys)


@dataclass(frozen=True)
class OptimizerSpec:
    """
    Optimizer configuration.

    Attributes:
        method: 'gd', 'perturbed_gd', 'sgd', 'rmsprop' or 'adam'
        lr: Step size
        noise_std: Standard deviation of the injected noise (perturbed_gd)
        beta1: First-moment factor (adam)
        beta2: Second-moment factor (rmsprop, adam)
        eps: Denominator guard
        decay: 'none' or 'inv_sqrt' (step size lr / sqrt(step + 1)); unset means
            'inv_sqrt' for rmsprop and 'none' for every other method
    """
    method: str
    lr: float
    noise_std: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.9
    eps: float = 1e-8
    decay: Optional[str] = None

    def __post_init__(self):
        if self.decay is None:
            object.__setattr__(self, "decay", "inv_sqrt" if self.method == "rmsprop" else "none")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {tuple(METHODS)}, got '{self.method}'")
        if self.decay not in DECAYS:
            raise ValueError(f"decay must be one of {tuple(DECAYS)}, got '{self.decay}'")
        validate_positive_float(self.lr, "learning rate")
        validate_positive_float(self.eps, "eps")
        validate_proportion(self.beta1, "beta1", closed_upper=False)
        validate_proportion(self.beta2, "beta2", closed_upper=False)
        if self.noise_std < 0:
            raise ValueError(f"noise_std must be non-negative, got {self.noise_std}")


@dataclass
class Trajectory:
    """
    Per-step records of an optimizer run; index 0 is the initial state.

    Attributes:
        losses: Full-data loss per record
        grad_inf: Full-data gradient infinity-norm per record
        steps: Number of updates applied (records = steps + 1)
        diverged: True when the run stopped on a non-finite value
        weights: Optional (steps + 1) x L weights
        grads: Optional (steps + 1) x L full-data gradients
        sqrt_v: Optional (steps + 1) x L second-moment filter sqrt(v)
        lam_max: Optional largest Hessian eigenvalue at every hessian_stride records
        wall_clock: Seconds spent in the run
    """
    losses: np.ndarray
    grad_inf: np.ndarray
    steps: int
    diverged: bool = False
    weights: Optional[np.ndarray] = None
    grads: Optional[np.ndarray] = None
    sqrt_v: Optional[np.ndarray] = None
    lam_max: Optional[np.ndarray] = None
    wall_clock: Optional[float] = None


@dataclass(frozen=True)
class ForwardSample:
    """Chain forward pass v kept in log-space."""
    log_v: float

    @property
    def v(self) -> float:
        return float(np.exp(self.log_v))


@dataclass
class FlowTrajectory:
    """Samples of the symmetric gradient flow w(t)."""
    times: np.ndarray
    w: np.ndarray
    diverged: bool
    method: str


# ── Compiled Kernels ──────────────────────────────────────────────────────────
@njit(cache=True)
def _prefix_suffix(w):
    L = w.shape[0]
    prefix = np.ones(L + 1)
    suffix = np.ones(L + 1)
    for i in range(L):
        prefix[i + 1] = prefix[i] * w[i]
    for i in range(L - 1, -1, -1):
        suffix[i] = suffix[i + 1] * w[i]
    return prefix, suffix


@njit(cache=True)
def _loss_kernel(w, xs, ys):
    prod = 1.0
    for i in range(w.shape[0]):
        prod *= w[i]
    total = 0.0
    for i in range(xs.shape[0]):
        r = ys[i] - prod * xs[i]
        total += r * r
    return total / (2.0 * xs.shape[0])


@njit(cache=True)
def _gradient_kernel(w, xs, ys):
    L = w.shape[0]
    prefix, suffix = _prefix_suffix(w)
    prod = prefix[L]
    c = 0.0
    for i in range(xs.shape[0]):
        c += (prod * xs[i] - ys[i]) * xs[i]
    c /= xs.shape[0]
    g = np.empty(L)
    for k in range(L):
        g[k] = prefix[k] * suffix[k + 1] * c
    return g


@njit(cache=True)
def _hessian_kernel(w, xs, ys):
    L = w.shape[0]
    n = xs.shape[0]
    prefix, suffix = _prefix_suffix(w)
    prod = prefix[L]
    sxx = 0.0
    c = 0.0
    for i in range(n):
        sxx += xs[i] * xs[i]
        c += (prod * xs[i] - ys[i]) * xs[i]
    sxx /= n
    c /= n
    H = np.empty((L, L))
    for k in range(L):
        pk = prefix[k] * suffix[k + 1]
        H[k, k] = sxx * pk * pk
        middle = prefix[k]
        for l in range(k + 1, L):
            pl = prefix[l] * suffix[l + 1]
            # middle = w_0 ... w_{k-1} * w_{k+1} ... w_{l-1}
            value = sxx * pk * pl + c * middle * suffix[l + 1]
            H[k, l] = value
            H[l, k] = value
            middle *= w[l]
    return H


@njit(cache=True)
def _entries_batch(W, x, y, ks, ls):
    # One gradient entry, one diagonal and one off-diagonal Hessian entry per row
    n, L = W.shape
    grad = np.empty(n)
    diag = np.empty(n)
    off = np.empty(n)
    for r in range(n):
        prefix, suffix = _prefix_suffix(W[r])
        prod = prefix[L]
        c = (prod * x - y) * x
        k = ks[r]
        l = ls[r]
        pk = prefix[k] * suffix[k + 1]
        grad[r] = pk * c
        diag[r] = x * x * pk * pk
        a = min(k, l)
        b = max(k, l)
        middle = prefix[a]
        for j in range(a + 1, b):
            middle *= W[r, j]
        pa = prefix[a] * suffix[a + 1]
        pb = prefix[b] * suffix[b + 1]
        off[r] = x * x * pa * pb + c * middle * suffix[b + 1]
    return grad, diag, off


@njit(cache=True)
def _optimize_kernel(w0, xs, ys, method, lr, noise, picks, beta1, beta2, eps, decay,
                     steps, keep, stop_loss):
    L = w0.shape[0]
    w = w0.copy()
    losses = np.empty(steps + 1)
    grad_inf = np.empty(steps + 1)
    n_keep = steps + 1 if keep else 1
    weights = np.zeros((n_keep, L))
    grads = np.zeros((n_keep, L))
    filt = np.zeros((n_keep, L))
    m = np.zeros(L)
    v = np.zeros(L)

    g = _gradient_kernel(w, xs, ys)
    losses[0] = _loss_kernel(w, xs, ys)
    grad_inf[0] = np.max(np.abs(g))
    weights[0] = w
    grads[0] = g

    taken = 0
    diverged = False
    if losses[0] < stop_loss:
        steps = 0
    for t in range(steps):
        if method == 2:
            i = picks[t]
            step_grad = _gradient_kernel(w, xs[i:i + 1], ys[i:i + 1])
        else:
            step_grad = g
        rate = lr / np.sqrt(t + 1.0) if decay == 1 else lr

        if method == 0 or method == 2:
            w = w - rate * step_grad
        elif method == 1:
            w = w - rate * step_grad + noise[t]
        elif method == 3:
            v = beta2 * v + (1.0 - beta2) * step_grad * step_grad
            w = w - rate * step_grad / (np.sqrt(v) + eps)
        else:
            m = beta1 * m + (1.0 - beta1) * step_grad
            v = beta2 * v + (1.0 - beta2) * step_grad * step_grad
            m_hat = m / (1.0 - beta1 ** (t + 1))
            v_hat = v / (1.0 - beta2 ** (t + 1))
            w = w - rate * m_hat / (np.sqrt(v_hat) + eps)

        loss = _loss_kernel(w, xs, ys)
        if not np.isfinite(loss) or not np.all(np.isfinite(w)):
            diverged = True
            break
        g = _gradient_kernel(w, xs, ys)
        taken += 1
        losses[taken] = loss
        grad_inf[taken] = np.max(np.abs(g))
        if keep:
            weights[taken] = w
            grads[taken] = g
            filt[taken] = np.sqrt(v)
        if loss < stop_loss:
            break

    n_out = taken + 1 if keep else 1
    return (losses[:taken + 1], grad_inf[:taken + 1], weights[:n_out], grads[:n_out],
            filt[:n_out], taken, diverged)


@njit(cache=True)
def _flow_rhs(w, L, x, y):
    return -x * w ** (2 * L - 1) + y * w ** (L - 1)


@njit(cache=True)
def _flow_kernel(w0, L, x, y, dt, n_steps, rk4):
    out = np.empty(n_steps + 1)
    out[0] = w0
    w = w0
    taken = 0
    diverged = False
    for _ in range(n_steps):
        if rk4:
            k1 = _flow_rhs(w, L, x, y)
            k2 = _flow_rhs(w + 0.5 * dt * k1, L, x, y)
            k3 = _flow_rhs(w + 0.5 * dt * k2, L, x, y)
            k4 = _flow_rhs(w + dt * k3, L, x, y)
            w_new = w + dt * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
        else:
            w_new = w + dt * _flow_rhs(w, L, x, y)
        if not np.isfinite(w_new):
            diverged = True
            break
        w = w_new
        taken += 1
        out[taken] = w
    return out[:taken + 1], diverged


# ── Loss, Gradient, Hessian ───────────────────────────────────────────────────
def chain_loss(params: ChainParams) -> float:
    """Loss sum_i (y_i - w_L ... w_1 x_i)^2 / (2n)."""
    return float(_loss_kernel(params.w, params.xs, params.ys))


def chain_gradient(params: ChainParams) -> np.ndarray:
    """
    Analytic gradient of chain_loss.

    Entry k is prod_{j != k} w_j * mean((P x - y) x) with P the full product.
    """
    return _gradient_kernel(params.w, params.xs, params.ys)


def chain_hessian(params: ChainParams) -> np.ndarray:
    """
    Analytic L x L Hessian of chain_loss.

    H_kk = mean(x^2) P_k^2 and H_kl = mean(x^2) P_k P_l + mean((P x - y) x) P_kl
    with P_k, P_kl the single and double skip-products.
    """
    return _hessian_kernel(params.w, params.xs, params.ys)


def chain_entry_samples(
    tau: float, L: int, n: int, rng: np.random.Generator, x: float = 1.0, y: float = 1.0
) -> Dict[str, np.ndarray]:
    """
    Gradient and Hessian entries of n chains drawn with w ~ U[-tau, tau].

    For each chain one layer k and one pair (k', l') with k' != l' are drawn
    uniformly, giving one gradient entry, one diagonal and one off-diagonal
    Hessian entry per chain.

    Args:
        tau: Initialization range
        L: Depth, at least 2
        n: Number of chains
        rng: Random generator
        x: Input
        y: Target

    Returns:
        Dict with 'gradient', 'hessian_diag' and 'hessian_offdiag' arrays
    """
    validate_positive_int(n, "number of chains")
    if L < 2:
        raise ShapeError(f"off-diagonal entries need L >= 2, got {L}")
    W = sample_matrix(InitScheme("uniform", "range", tau), n, L, rng)
    ks = rng.integers(0, L, size=n)
    first = rng.integers(0, L, size=n)
    offset = rng.integers(1, L, size=n)
    second = (first + offset) % L
    grad, diag, _ = _entries_batch(W, float(x), float(y), ks, ks)
    _, _, off = _entries_batch(W, float(x), float(y), first, second)
    return {"gradient": grad, "hessian_diag": diag, "hessian_offdiag": off}


# ── Forward-Pass Sampling ─────────────────────────────────────────────────────
def sample_forward(tau: float, L: int, rng: np.random.Generator) -> ForwardSample:
    """
    Sample v = prod_{k=1}^{L} tau w_k with w_k ~ U(0, 1].

    Returns:
        ForwardSample holding ln v
    """
    validate_positive_float(tau, "tau")
    validate_positive_int(L, "depth L")
    u = 1.0 - rng.random(L)
    return ForwardSample(float(np.sum(np.log(tau) + np.log(u))))


def sample_forward_batch(tau: float, L: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw n independent values of ln v, accumulated layer by layer."""
    validate_positive_float(tau, "tau")
    validate_positive_int(L, "depth L")
    validate_positive_int(n, "number of samples")
    log_v = np.zeros(n)
    log_tau = np.log(tau)
    for _ in range(L):
        log_v += log_tau + np.log1p(-rng.random(n))
    return log_v


def sample_chain_init(L: int, r: float, rng: np.random.Generator) -> np.ndarray:
    """Initial chain weights w ~ U[-r, r]^L."""
    return sample_matrix(InitScheme("uniform", "range", r), 1, L, rng)[0]


# ── Optimizer Testbed ─────────────────────────────────────────────────────────
def run_optimizer(
    params0: ChainParams,
    spec: OptimizerSpec,
    steps: int,
    rng: np.random.Generator,
    keep_records: bool = False,
    hessian_stride: int = 0,
    stop_loss: Optional[float] = None
) -> Trajectory:
    """
    Run an optimizer on a chain.

    GD steps w <- w - lr g. Perturbed GD adds isotropic Gaussian noise with
    standard deviation noise_std to the update itself, w <- w - lr g + xi,
    so the noise is not scaled by the step size or its decay.
    SGD uses one uniformly drawn data point per step. RMSprop keeps
    v <- beta2 v + (1 - beta2) g^2 and steps lr g / (sqrt(v) + eps); Adam
    adds a bias-corrected first-moment filter. All randomness is drawn from
    rng up front, so a run is a pure function of its inputs and seed.

    Args:
        params0: Initial weights and data
        spec: Optimizer configuration
        steps: Maximum number of updates
        rng: Random generator
        keep_records: Keep weights, gradients and sqrt(v) per step
        hessian_stride: Record the largest Hessian eigenvalue every this
            many records (0 disables)
        stop_loss: Stop once the loss drops below this value

    Returns:
        Trajectory; truncated with diverged=True on a non-finite loss
    """
    validate_positive_int(steps, "steps")
    L = params0.L
    method = METHODS[spec.method]
    noise = np.zeros((1, L))
    picks = np.zeros(1, dtype=np.int64)
    if spec.method == "perturbed_gd":
        noise = spec.noise_std * rng.standard_normal(size=(steps, L))
    elif spec.method == "sgd":
        picks = rng.integers(0, params0.xs.size, size=steps).astype(np.int64)

    keep = keep_records or hessian_stride > 0
    start = time.perf_counter()
    losses, grad_inf, weights, grads, filt, taken, diverged = _optimize_kernel(
        params0.w, params0.xs, params0.ys, method, float(spec.lr), noise, picks,
        float(spec.beta1), float(spec.beta2), float(spec.eps), DECAYS[spec.decay],
        int(steps), keep, -np.inf if stop_loss is None else float(stop_loss)
    )
    elapsed = time.perf_counter() - start

    traj = Trajectory(losses=losses, grad_inf=grad_inf, steps=int(taken), diverged=bool(diverged),
                      wall_clock=elapsed)
    if hessian_stride > 0:
        idx = range(0, weights.shape[0], hessian_stride)
        traj.lam_max = np.array([
            linalg.eigh(_hessian_kernel(weights[i], params0.xs, params0.ys), eigvals_only=True)[-1]
            for i in idx
        ])
    if keep_records:
        traj.weights, traj.grads, traj.sqrt_v = weights, grads, filt
    return traj


def escape_time(trajectory: Trajectory, loss_threshold: float) -> Optional[int]:
    """
    First record index whose loss is below the threshold.

    Returns:
        The step index, or None if the loss never drops below it
    """
    validate_positive_float(loss_threshold, "loss threshold")
    below = np.flatnonzero(trajectory.losses < loss_threshold)
    return int(below[0]) if below.size else None


def settled_escape_time(trajectory: Trajectory, loss_threshold: float, window: int) -> Optional[int]:
    """
    First record index from which the loss stays below the threshold for
    `window` consecutive records.

    Noisy runs cross a threshold by chance long before they settle under it;
    a run that ends inside an unfinished window has not settled.
    """
    validate_positive_float(loss_threshold, "loss threshold")
    validate_positive_int(window, "window")
    below = (trajectory.losses < loss_threshold).astype(np.int64)
    if below.size < window:
        return None
    counts = np.convolve(below, np.ones(window, dtype=np.int64), mode="valid")
    settled = np.flatnonzero(counts == window)
    return int(settled[0]) if settled.size else None


def relative_threshold(trajectory: Trajectory, fraction: float = DEFAULT_ESCAPE_FRACTION) -> float:
    """Escape threshold as a fraction of the initial loss."""
    return fraction * float(trajectory.losses[0])


def filter_lag_holds(trajectory: Trajectory, rtol: float = 1e-12) -> bool:
    """
    Check the RMSprop filter lag while gradients grow.

    Along any prefix where every |g_k| is non-decreasing, the filter after
    step t obeys sqrt(v_{t+1}) <= |g_t|, so the effective step
    lr |g| / sqrt(v) never falls below lr.

    Returns:
        True when the inequality holds on the growth prefix
    """
    if trajectory.grads is None or trajectory.sqrt_v is None:
        raise ValueError("filter_lag_holds needs a trajectory run with keep_records=True")
    mags = np.abs(trajectory.grads)
    growing = np.all(np.diff(mags, axis=0) >= 0, axis=1)
    prefix = int(np.argmin(growing)) if not np.all(growing) else growing.size
    lhs = trajectory.sqrt_v[1:prefix + 1]
    rhs = mags[:prefix]
    return bool(np.all(lhs <= rhs * (1.0 + rtol)))


def grid_search(
    params0: ChainParams,
    spec: OptimizerSpec,
    grid: Sequence[float],
    steps: int,
    rng_seed: int,
    fraction: float = DEFAULT_ESCAPE_FRACTION
) -> Tuple[float, Optional[int], Dict[float, Optional[int]]]:
    """
    Pick the learning rate with the earliest escape.

    Every rate is run from the same seed. Ties keep the earlier rate in the
    grid.

    Returns:
        (best rate, its escape step or None, escape step per rate)
    """
    escapes: Dict[float, Optional[int]] = {}
    threshold = fraction * chain_loss(params0)
    for lr in grid:
        trial_spec = OptimizerSpec(spec.method, lr, spec.noise_std, spec.beta1, spec.beta2, spec.eps, spec.decay)
        traj = run_optimizer(params0, trial_spec, steps, make_rng(rng_seed), stop_loss=threshold)
        escapes[lr] = escape_time(traj, threshold)
    best = None
    for lr in grid:
        esc = escapes[lr]
        if esc is not None and (best is None or esc < escapes[best]):
            best = lr
    if best is None:
        return grid[0], None, escapes
    return best, escapes[best], escapes


# ── Gradient Flow ─────────────────────────────────────────────────────────────
def flow_stationary_point(x: float, y: float, L: int) -> float:
    """Positive fixed point w* = (y / x)^{1/L} of the symmetric flow."""
    validate_positive_float(x, "x")
    validate_positive_float(y, "y")
    return float((y / x) ** (1.0 / L))


def integrate_flow(
    w0: float, L: int, x: float, y: float, dt: float, t_max: float, method: str = "euler"
) -> FlowTrajectory:
    """
    Integrate w' = -w^{2L-1} x + w^{L-1} y for a symmetric chain.

    With method 'euler' and dt = lr, the samples coincide with gradient
    descent on the chain loss with x = 1 (step k at time lr * k).

    Args:
        w0: Initial weight shared by all layers
        L: Depth
        x: Input
        y: Target
        dt: Step of the integrator
        t_max: Horizon
        method: 'euler' or 'rk4'

    Returns:
        FlowTrajectory sampled every dt; truncated with diverged=True when a
        step produces a non-finite value
    """
    validate_positive_float(dt, "dt")
    validate_positive_int(L, "depth L")
    if method not in ("euler", "rk4"):
        raise ValueError(f"method must be 'euler' or 'rk4', got '{method}'")
    if t_max < 0:
        raise ValueError(f"t_max must be non-negative, got {t_max}")
    n_steps = int(np.floor(t_max / dt + 1e-9))
    w, diverged = _flow_kernel(float(w0), int(L), float(x), float(y), float(dt), n_steps, method == "rk4")
    times = dt * np.arange(w.size)
    return FlowTrajectory(times=times, w=w, diverged=bool(diverged), method=method)
