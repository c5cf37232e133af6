#!/usr/bin/env python3
"""
theory_oracle.py

Closed-form population statistics of randomly initialized deep networks.

The functions here never sample. They cover the neural chain (moments of
products of uniforms, the Erlang law of their logarithm, the median
bracket, derivative decay rates and the gradient-flow envelope) and the
width-d network (variance recursion, the fourth-moment recursion matrix,
layer-by-layer moment propagation, Frobenius norms of matrix products, the
minimum width stabilizing the median, gradient/Hessian scaling rates and
Gershgorin discs).

Products of per-layer factors are accumulated in log-space so that depths
up to 10^4 stay finite.

Author: s2659865
Date: October 2026
"""

# ── Imports ───────────────────────────────────────────────────────────────────
import math
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np
from scipy import optimize, special

from vanishlab.utils.validation import (
    DomainError,
    UnsupportedDepthError,
    UnsupportedOrderError,
    NonFiniteError,
    validate_positive_float,
    validate_positive_int,
    validate_non_negative_int,
)

# ξ above which the Erlang partial sum is accumulated with log-sum-exp
ERLANG_LOG_SWITCH = 700.0

ArrayLike = Union[float, np.ndarray]


# ── Value Types ───────────────────────────────────────────────────────────────
@dataclass(frozen=True)
class MomentState:
    """
    Population norms of a random vector.

    Attributes:
        m2: E||x||_2^2
        m4_2: E||x||_2^4
        m4_4: E||x||_4^4
    """
    m2: float
    m4_2: float
    m4_4: float

    def __post_init__(self):
        for name in ("m2", "m4_2", "m4_4"):
            value = getattr(self, name)
            if math.isnan(value) or value < 0:
                raise ValueError(f"MomentState.{name} must be non-negative, got {value}")
        if self.m4_4 > self.m4_2 * (1.0 + 1e-9) + 1e-300:
            raise ValueError(f"MomentState needs m4_4 <= m4_2, got m4_4={self.m4_4}, m4_2={self.m4_2}")

    @classmethod
    def of_vector(cls, x: np.ndarray) -> "MomentState":
        """MomentState of a deterministic vector."""
        x = np.asarray(x, dtype=np.float64)
        sq = float(np.dot(x, x))
        return cls(m2=sq, m4_2=sq * sq, m4_4=float(np.sum(x ** 4)))

    def as_tuple(self) -> Tuple[float, float, float]:
        return (self.m2, self.m4_2, self.m4_4)


@dataclass(frozen=True)
class ScalingReport:
    """
    Asymptotic log-scale rates of gradient and Hessian magnitudes.

    Attributes:
        grad_exponent: ln of the gradient envelope
        offdiag_exponent: ln of the off-diagonal Hessian block envelope
        diag_exponent: ln of the diagonal Hessian block envelope
        eig_bound: order bound on E|lambda_max|
    """
    grad_exponent: float
    offdiag_exponent: float
    diag_exponent: float
    eig_bound: float


@dataclass(frozen=True)
class FlowBound:
    """
    Upper envelope of the symmetric chain gradient flow.

    Attributes:
        w0: Initial weight
        L: Depth
        y: Target
        t_e: Blow-up time of the envelope
        t_star: Time at which the envelope reaches w = 1
    """
    w0: float
    L: int
    y: float
    t_e: float
    t_star: float

    def bound(self, t: ArrayLike) -> ArrayLike:
        """Evaluate the envelope at time(s) t in [0, t_e)."""
        return gradient_flow_bound(self.w0, self.L, self.y, t)


# ── Neural Chain ──────────────────────────────────────────────────────────────
def chain_log_moment(tau: float, L: int, m: int) -> float:
    """
    Natural log of E[v^m] for v = prod_k tau*w_k with w_k ~ U(0, 1].

    Raises:
        UnsupportedOrderError: If m is not 1, 2 or 3
    """
    if m not in (1, 2, 3):
        raise UnsupportedOrderError(f"chain moments are implemented for orders 1, 2, 3, got {m}")
    validate_positive_float(tau, "tau")
    validate_positive_int(L, "depth L")
    return L * (m * math.log(tau) - math.log(m + 1))


def chain_moment(tau: float, L: int, m: int) -> float:
    """
    E[v^m] = (tau^m / (m+1))^L for the chain forward pass v.

    Args:
        tau: Range of the uniform initialization
        L: Depth
        m: Order (1, 2 or 3)

    Returns:
        The moment, exponentiated from log-space
    """
    return math.exp(chain_log_moment(tau, L, m))


def chain_log_cdf(tau: float, L: int, zeta: ArrayLike) -> ArrayLike:
    """
    P(-ln v <= zeta) for the chain forward pass v.

    -ln v + L ln tau follows an Erlang(L, 1) law, so with xi = zeta + L ln tau
    the CDF is 1 - e^{-xi} sum_{k<L} xi^k / k!, and 0 for xi <= 0.

    Args:
        tau: Range of the uniform initialization
        L: Depth
        zeta: Point(s) at which to evaluate

    Returns:
        Probability, with the shape of zeta
    """
    validate_positive_float(tau, "tau")
    validate_positive_int(L, "depth L")
    scalar = np.ndim(zeta) == 0
    xi = np.atleast_1d(np.asarray(zeta, dtype=np.float64)) + L * math.log(tau)
    out = np.zeros_like(xi)

    # Multiplicative term recurrence for moderate xi
    mid = (xi > 0) & (xi <= ERLANG_LOG_SWITCH)
    if np.any(mid):
        x = xi[mid]
        term = np.ones_like(x)
        partial = np.ones_like(x)
        for k in range(1, L):
            term = term * x / k
            partial = partial + term
        out[mid] = 1.0 - np.exp(-x) * partial

    # Log-sum-exp accumulation where xi^k / k! overflows
    big = xi > ERLANG_LOG_SWITCH
    if np.any(big):
        x = xi[big]
        ks = np.arange(L, dtype=np.float64)
        log_terms = ks[np.newaxis, :] * np.log(x)[:, np.newaxis] - special.gammaln(ks + 1.0)[np.newaxis, :]
        log_partial = special.logsumexp(log_terms, axis=1)
        out[big] = -np.expm1(log_partial - x)

    out = np.clip(out, 0.0, 1.0)
    return float(out[0]) if scalar else out


def chain_median_bounds(tau: float, L: int) -> Tuple[float, float]:
    """
    Bracket for the median of the chain forward pass v.

    The Erlang(L, 1) median lies in [L - 1/3, L - 1 + ln 2], which maps to
    [e^{L ln tau - (L - 1 + ln 2)}, e^{L ln tau - (L - 1/3)}] for v.

    Returns:
        (lower, upper) with lower <= upper
    """
    validate_positive_float(tau, "tau")
    validate_positive_int(L, "depth L")
    log_tau_l = L * math.log(tau)
    a = math.exp(log_tau_l - (L - 1 + math.log(2.0)))
    b = math.exp(log_tau_l - (L - 1.0 / 3.0))
    return (min(a, b), max(a, b))


def chain_median(tau: float, L: int) -> float:
    """
    Exact median of v by bisection on chain_log_cdf.

    Returns:
        median[v] = e^{-zeta*} where chain_log_cdf(tau, L, zeta*) = 1/2
    """
    validate_positive_float(tau, "tau")
    validate_positive_int(L, "depth L")
    shift = L * math.log(tau)
    # The Erlang median lies in [L - 1/3, L - 1 + ln 2] so this bracket is safe
    lo = max(L - 1.0, 0.0) - shift
    hi = L + 1.0 - shift
    zeta = optimize.bisect(lambda z: chain_log_cdf(tau, L, z) - 0.5, lo, hi, xtol=1e-14, maxiter=500)
    return math.exp(-zeta)


def chain_derivative_rate(tau: float, L: int, kind: str) -> float:
    """
    Natural-log envelope of chain derivatives at a typical initialization.

    Args:
        tau: Range of the uniform initialization
        L: Depth (at least 2)
        kind: 'gradient', 'hessian_offdiag' or 'hessian_diag'

    Returns:
        -(L-1)(1 - ln tau) for gradients and off-diagonal Hessian entries,
        twice that for diagonal Hessian entries
    """
    validate_positive_float(tau, "tau")
    if L < 2:
        raise UnsupportedDepthError(f"derivative rates need L >= 2, got {L}")
    rate = -(L - 1) * (1.0 - math.log(tau))
    if kind in ("gradient", "hessian_offdiag"):
        return rate
    if kind == "hessian_diag":
        return 2.0 * rate
    raise ValueError(f"kind must be 'gradient', 'hessian_offdiag' or 'hessian_diag', got '{kind}'")


# ── Gradient-Flow Envelope ───────────────────────────────────────────────────
def _check_flow_args(w0: float, L: int, y: float) -> None:
    if L < 3:
        raise UnsupportedDepthError(f"the flow envelope is singular for L < 3, got {L}")
    validate_positive_float(w0, "w0")
    validate_positive_float(y, "y")


def blowup(w0: float, L: int, y: float = 1.0) -> FlowBound:
    """
    Blow-up data of the symmetric chain flow envelope.

    Dropping the negative term of w' = -x w^{2L-1} + y w^{L-1} gives an ODE
    whose solution explodes at t_e = w0^{2-L} / ((L - 2) y).

    Args:
        w0: Initial weight (all layers)
        L: Depth, at least 3
        y: Target

    Returns:
        FlowBound with t_e and t_star
    """
    _check_flow_args(w0, L, y)
    t_e = w0 ** (2 - L) / (L - 2)
    return FlowBound(
        w0=w0, L=L, y=y,
        t_e=t_e / y,
        t_star=(t_e - 1.0 / (L - 2)) / y,
    )


def gradient_flow_bound(w0: float, L: int, y: float, t: ArrayLike) -> ArrayLike:
    """
    Upper envelope [(L-2)(t_e - y t)]^{-1/(L-2)} of the symmetric chain flow.

    Raises:
        UnsupportedDepthError: If L < 3
        DomainError: If any t is negative or at/after the blow-up time
    """
    _check_flow_args(w0, L, y)
    t_e = w0 ** (2 - L) / (L - 2)
    t_arr = np.asarray(t, dtype=np.float64)
    if np.any(t_arr < 0):
        raise DomainError("flow time must be non-negative")
    remaining = t_e - y * t_arr
    if np.any(remaining <= 0):
        raise DomainError(f"the envelope has blown up: t must be < {t_e / y}")
    value = ((L - 2) * remaining) ** (-1.0 / (L - 2))
    return float(value) if np.ndim(t) == 0 else value


def chain_escape_prediction(w0: float, L: int, y: float, lr: float) -> float:
    """Number of gradient steps of size lr predicted to reach w = 1 (t_star / lr)."""
    validate_positive_float(lr, "learning rate")
    return blowup(w0, L, y).t_star / lr


# ── Width-d Networks ──────────────────────────────────────────────────────────
def variance_recursion(d: int, sigma2: float, p: float, L: int) -> float:
    """
    Scale (p d sigma2)^L of the expected squared norm across L layers.

    Equal to 1 exactly when sigma2 = 1/(p d).
    """
    validate_positive_int(d, "width d")
    validate_positive_float(sigma2, "sigma2")
    validate_non_negative_int(L, "depth L")
    return math.exp(L * math.log(p * d * sigma2))


def q_matrix(d: int, kappa: float, p: float) -> np.ndarray:
    """
    Recursion matrix of the fourth moments.

    Q = [[d + 2, (kappa - 3 + (1 - p)(d + 2)) / p], [3, (kappa - 3p) / p]]

    Args:
        d: Width
        kappa: Kurtosis of the weights
        p: Gate probability (1 linear, 1/2 ReLU)

    Returns:
        2 x 2 array
    """
    validate_positive_int(d, "width d")
    if kappa < 1:
        raise DomainError(f"kurtosis must be at least 1, got {kappa}")
    if p not in (1.0, 0.5):
        raise DomainError(f"gate probability must be 1 or 1/2, got {p}")
    return np.array([
        [d + 2.0, (kappa - 3.0 + (1.0 - p) * (d + 2.0)) / p],
        [3.0, (kappa - 3.0 * p) / p],
    ])


def one_layer_activation_step(p: float, state: MomentState) -> MomentState:
    """Moments after applying gates that are open with probability p."""
    return MomentState(
        m2=p * state.m2,
        m4_2=p * p * state.m4_2 + (p - p * p) * state.m4_4,
        m4_4=p * state.m4_4,
    )


def one_layer_matrix_step(d: int, sigma2: float, kappa: float, state: MomentState) -> MomentState:
    """
    Moments after multiplication by a d x d matrix with i.i.d. entries.

    Args:
        d: Number of rows
        sigma2: Entry variance
        kappa: Entry kurtosis
        state: Moments of the (independent) input vector

    Returns:
        Moments of the product
    """
    s4 = sigma2 * sigma2
    return MomentState(
        m2=d * sigma2 * state.m2,
        m4_2=d * (d + 2) * s4 * state.m4_2 + (kappa - 3.0) * d * s4 * state.m4_4,
        m4_4=3.0 * d * s4 * state.m4_2 + (kappa - 3.0) * d * s4 * state.m4_4,
    )


def forward_moments(d: int, sigma2: float, kappa: float, p: float, k: int, state: MomentState) -> MomentState:
    """
    Propagate moments through k layers (gates then matrix, k times).

    m2 is scaled by (d sigma2 p) per layer and (m4_2, m4_4) by
    (p^2 d sigma2^2) Q per layer, with k explicit matrix-vector steps, so
    that forward_moments(a + b) equals forward_moments(b) after
    forward_moments(a) bit for bit.

    Args:
        d: Width
        sigma2: Weight variance
        kappa: Weight kurtosis
        p: Gate probability
        k: Number of layers
        state: Input moments

    Returns:
        Moments after k layers
    """
    validate_non_negative_int(k, "layers k")
    q = q_matrix(d, kappa, p)
    scale2 = d * sigma2 * p
    scale4 = p * p * d * sigma2 * sigma2
    m2, a, b = state.m2, state.m4_2, state.m4_4
    for _ in range(k):
        m2 = scale2 * m2
        a, b = scale4 * (q[0, 0] * a + q[0, 1] * b), scale4 * (q[1, 0] * a + q[1, 1] * b)
    return MomentState(m2=m2, m4_2=a, m4_4=b)


def log_forward_moments(
    d: int, sigma2: float, kappa: float, p: float, k: int, state: MomentState
) -> Tuple[float, float, float]:
    """
    Natural logs of the moments after k layers, renormalised every step.

    Returns:
        (ln m2, ln m4_2, ln m4_4); finite for depths where the linear-scale
        values would overflow
    """
    validate_non_negative_int(k, "layers k")
    q = q_matrix(d, kappa, p)
    log_scale2 = math.log(d * sigma2 * p)
    log_scale4 = math.log(p * p * d * sigma2 * sigma2)
    a, b = state.m4_2, state.m4_4
    norm = max(a, b)
    a, b = a / norm, b / norm
    log_norm = math.log(norm)
    for _ in range(k):
        a, b = q[0, 0] * a + q[0, 1] * b, q[1, 0] * a + q[1, 1] * b
        top = max(abs(a), abs(b))
        a, b = a / top, b / top
        log_norm += log_scale4 + math.log(top)
    log_a = math.log(a) if a > 0 else -math.inf
    log_b = math.log(b) if b > 0 else -math.inf
    return (math.log(state.m2) + k * log_scale2, log_norm + log_a, log_norm + log_b)


def frobenius_propagation(
    d: int, sigma2: float, p: float, span: int, moment: int, kappa: float = 3.0
) -> float:
    """
    Expected Frobenius norm power of a product of span random layers.

    E||W_phi^{l:k+1}||_F^2 = d (d sigma2 p)^span, and
    E||W_phi^{l:k+1}||_F^4 = d^2 E||W_phi^{l:k+1} e_1||_2^4 with the
    canonical-vector moment taken from forward_moments.

    Args:
        d: Width
        sigma2: Weight variance
        p: Gate probability
        span: Number of layers l - k
        moment: 2 or 4
        kappa: Weight kurtosis (only used for moment 4)

    Raises:
        UnsupportedOrderError: If moment is not 2 or 4
    """
    validate_non_negative_int(span, "span")
    if moment == 2:
        return d * math.exp(span * math.log(d * sigma2 * p))
    if moment == 4:
        unit = MomentState(1.0, 1.0, 1.0)
        return d * d * forward_moments(d, sigma2, kappa, p, span, unit).m4_2
    raise UnsupportedOrderError(f"Frobenius propagation is implemented for moments 2 and 4, got {moment}")


def min_width_for_median(alpha: float, L: int) -> int:
    """
    Smallest width for which the median of ||W^{L:1} z||^2 / ||z||^2 lies in
    [1 - alpha, 1 + alpha] under the variance-preserving initialization.

    Args:
        alpha: Tolerance in (0, 1]
        L: Depth

    Returns:
        ceil(2 / ((alpha^2 + 1)^{1/L} - 1))

    Raises:
        DomainError: If alpha is not in (0, 1]
    """
    if not (0 < alpha <= 1):
        raise DomainError(f"alpha must lie in (0, 1], got {alpha}")
    validate_positive_int(L, "depth L")
    width = 2.0 / math.expm1(math.log1p(alpha * alpha) / L)
    nearest = round(width)
    if abs(width - nearest) <= 1e-9 * max(1.0, width):
        return int(nearest)
    return int(math.ceil(width))


def grad_hessian_scaling(d: int, sigma2: float, p: float, L: int, constant: float = 1.0) -> ScalingReport:
    """
    Log-scale rates of gradient and Hessian blocks of a depth-L MLP.

    With b = d sigma2 p: gradients and off-diagonal blocks scale as
    b^{L/2}, diagonal blocks as b^L, and E|lambda_max| <= L d C b^{L/2}.

    Args:
        d: Width
        sigma2: Weight variance
        p: Gate probability
        L: Depth, at least 2
        constant: Prefactor C of the eigenvalue order bound
    """
    validate_positive_int(d, "width d")
    validate_positive_float(sigma2, "sigma2")
    if L < 2:
        raise UnsupportedDepthError(f"scaling needs L >= 2, got {L}")
    log_b = math.log(d * sigma2 * p)
    half = 0.5 * L * log_b
    return ScalingReport(
        grad_exponent=half,
        offdiag_exponent=half,
        diag_exponent=L * log_b,
        eig_bound=L * d * constant * math.exp(half),
    )


# ── Gershgorin Discs ──────────────────────────────────────────────────────────
def gershgorin_discs(H: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Centres and radii of the Gershgorin discs of a square matrix.

    Returns:
        (diagonal entries, off-diagonal absolute row sums)
    """
    H = np.asarray(H, dtype=np.float64)
    if not np.all(np.isfinite(H)):
        raise NonFiniteError("matrix contains non-finite entries")
    centres = np.diag(H).copy()
    radii = np.sum(np.abs(H), axis=1) - np.abs(centres)
    return centres, radii


def gershgorin_contains(H: np.ndarray, eigenvalues: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
    """
    Whether each (real) eigenvalue lies in the union of Gershgorin discs.

    Args:
        H: Square matrix
        eigenvalues: Eigenvalues to test
        rtol: Slack relative to the largest disc extent

    Returns:
        Boolean array, one entry per eigenvalue
    """
    centres, radii = gershgorin_discs(H)
    slack = rtol * max(1.0, float(np.max(np.abs(centres) + radii)))
    lam = np.asarray(eigenvalues, dtype=np.float64)[:, np.newaxis]
    return np.any(np.abs(lam - centres[np.newaxis, :]) <= radii[np.newaxis, :] + slack, axis=1)
