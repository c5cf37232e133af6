#!/usr/bin/env python3
"""
test_theory_oracle.py

Tests for the closed-form predictions: chain laws, flow envelope,
moment recursion, scaling rates and Gershgorin discs.

Author: s2659865
Date: October 2026
"""

import math

import numpy as np
import pytest
from scipy import stats

from vanishlab.src import theory_oracle as oracle
from vanishlab.src.theory_oracle import MomentState
from vanishlab.utils.validation import DomainError, NonFiniteError, UnsupportedDepthError, UnsupportedOrderError


# ─── Neural Chain ─────────────────────────────────────────────────────────────
class TestChainLaws:
    """Moments, CDF, median and derivative rates of the chain forward pass."""

    @pytest.mark.parametrize("tau, L, m, expected", [
        (math.sqrt(3.0), 10, 2, 1.0),
        (2.0, 5, 1, 1.0),
        (math.sqrt(3.0), 10, 1, (math.sqrt(3.0) / 2.0) ** 10),
    ])
    def test_moment(self, tau: float, L: int, m: int, expected: float) -> None:
        assert oracle.chain_moment(tau, L, m) == pytest.approx(expected, rel=1e-12)

    def test_third_moment_explodes_at_unit_variance(self) -> None:
        tau = math.sqrt(3.0)
        assert oracle.chain_moment(tau, 40, 3) > oracle.chain_moment(tau, 20, 3) > 1.0

    def test_unsupported_order(self) -> None:
        with pytest.raises(UnsupportedOrderError):
            oracle.chain_moment(2.0, 3, 4)

    @pytest.mark.parametrize("L", [1, 3, 8, 64])
    def test_cdf_matches_erlang(self, L: int) -> None:
        tau = 2.0
        zeta = np.linspace(-L * math.log(tau) + 0.01, 3.0 * L, 25)
        expected = stats.gamma(a=L).cdf(zeta + L * math.log(tau))
        assert np.allclose(oracle.chain_log_cdf(tau, L, zeta), expected, atol=1e-10)

    def test_cdf_is_zero_below_support_and_monotone(self) -> None:
        assert oracle.chain_log_cdf(2.0, 4, -10.0) == 0.0
        values = oracle.chain_log_cdf(2.0, 4, np.linspace(-2.0, 20.0, 200))
        assert np.all(np.diff(values) >= 0.0)

    def test_cdf_log_space_branch_is_finite(self) -> None:
        value = oracle.chain_log_cdf(1.0, 512, 800.0)
        assert 0.0 <= value <= 1.0
        assert value == pytest.approx(stats.gamma(a=512).cdf(800.0), abs=1e-9)

    @pytest.mark.parametrize("tau", [math.sqrt(3.0), 2.0, math.e])
    @pytest.mark.parametrize("L", [2, 8, 64])
    def test_median_inside_bracket(self, tau: float, L: int) -> None:
        lower, upper = oracle.chain_median_bounds(tau, L)
        median = oracle.chain_median(tau, L)
        assert lower <= median * (1 + 1e-12) and median <= upper * (1 + 1e-12)
        assert oracle.chain_log_cdf(tau, L, -math.log(median)) == pytest.approx(0.5, abs=1e-10)

    def test_single_layer_median(self) -> None:
        assert oracle.chain_median(2.0, 1) == pytest.approx(1.0, rel=1e-10)

    def test_derivative_rates(self) -> None:
        tau = math.sqrt(3.0)
        gradient = oracle.chain_derivative_rate(tau, 9, "gradient")
        assert gradient == pytest.approx(-8.0 * (1.0 - math.log(tau)))
        assert oracle.chain_derivative_rate(tau, 9, "hessian_offdiag") == gradient
        assert oracle.chain_derivative_rate(tau, 9, "hessian_diag") == pytest.approx(2.0 * gradient)
        with pytest.raises(UnsupportedDepthError):
            oracle.chain_derivative_rate(tau, 1, "gradient")


# ─── Flow Envelope ────────────────────────────────────────────────────────────
class TestFlowEnvelope:
    """Blow-up time and upper envelope of the symmetric chain flow."""

    @pytest.mark.parametrize("w0, L", [(0.3, 4), (0.5, 6), (0.5, 10)])
    def test_blowup_time(self, w0: float, L: int) -> None:
        bound = oracle.blowup(w0, L)
        assert bound.t_e == w0 ** (2 - L) / (L - 2)
        assert bound.t_star == pytest.approx(bound.t_e - 1.0 / (L - 2))
        assert oracle.gradient_flow_bound(w0, L, 1.0, 0.0) == pytest.approx(w0)
        assert oracle.gradient_flow_bound(w0, L, 1.0, bound.t_star) == pytest.approx(1.0)

    def test_envelope_increases(self) -> None:
        bound = oracle.blowup(0.5, 6)
        t = np.linspace(0.0, 0.99 * bound.t_e, 50)
        assert np.all(np.diff(oracle.gradient_flow_bound(0.5, 6, 1.0, t)) > 0)

    def test_domain(self) -> None:
        bound = oracle.blowup(0.5, 6)
        with pytest.raises(DomainError):
            oracle.gradient_flow_bound(0.5, 6, 1.0, bound.t_e)
        with pytest.raises(DomainError):
            oracle.gradient_flow_bound(0.5, 6, 1.0, -1.0)
        with pytest.raises(UnsupportedDepthError):
            oracle.blowup(0.5, 2)

    def test_escape_prediction(self) -> None:
        bound = oracle.blowup(0.5, 10)
        assert oracle.chain_escape_prediction(0.5, 10, 1.0, 0.1) == pytest.approx(bound.t_star / 0.1)


# ─── Width-d Recursions ───────────────────────────────────────────────────────
class TestMomentRecursion:
    """Variance and fourth-moment recursions of gated random products."""

    def test_variance_preserving_scale(self) -> None:
        assert oracle.variance_recursion(10, 0.2, 0.5, 50) == pytest.approx(1.0, rel=1e-12)
        assert oracle.variance_recursion(10, 0.1, 0.5, 2) == pytest.approx(0.25)

    def test_q_matrix_linear_gaussian(self) -> None:
        assert np.array_equal(oracle.q_matrix(4, 3.0, 1.0), np.array([[6.0, 0.0], [3.0, 0.0]]))

    def test_q_matrix_domain(self) -> None:
        with pytest.raises(DomainError):
            oracle.q_matrix(4, 0.5, 1.0)
        with pytest.raises(DomainError):
            oracle.q_matrix(4, 3.0, 0.3)

    def test_one_gaussian_layer_matches_chi_square(self) -> None:
        # ||W e_1||^2 with W_ij ~ N(0, 1/d) is chi^2_d / d
        d = 5
        state = oracle.forward_moments(d, 1.0 / d, 3.0, 1.0, 1, MomentState(1.0, 1.0, 1.0))
        assert state.m2 == pytest.approx(1.0)
        assert state.m4_2 == pytest.approx((d * d + 2 * d) / d ** 2)
        assert state.m4_4 == pytest.approx(3.0 / d)

    def test_step_composition_matches_recursion(self) -> None:
        start = MomentState(3.0, 15.0, 9.0)
        d, sigma2, kappa, p = 3, 1.0 / 1.5, 1.8, 0.5
        state = start
        for _ in range(4):
            state = oracle.one_layer_matrix_step(d, sigma2, kappa, oracle.one_layer_activation_step(p, state))
        direct = oracle.forward_moments(d, sigma2, kappa, p, 4, start)
        assert np.allclose(state.as_tuple(), direct.as_tuple(), rtol=1e-12)

    def test_recursion_composes_exactly(self) -> None:
        start = MomentState(10.0, 120.0, 30.0)
        args = (10, 0.2, 1.8, 0.5)
        split = oracle.forward_moments(*args, 5, oracle.forward_moments(*args, 7, start))
        assert split == oracle.forward_moments(*args, 12, start)

    def test_log_moments_match_linear_scale(self) -> None:
        start = MomentState(3.0, 15.0, 9.0)
        linear = oracle.forward_moments(3, 1.0 / 3.0, 1.8, 1.0, 6, start)
        logs = oracle.log_forward_moments(3, 1.0 / 3.0, 1.8, 1.0, 6, start)
        assert np.allclose(logs, np.log(linear.as_tuple()), rtol=1e-12)

    def test_log_moments_survive_deep_products(self) -> None:
        logs = oracle.log_forward_moments(3, 1.0 / 3.0, 3.0, 1.0, 5000, MomentState(3.0, 15.0, 9.0))
        assert all(math.isfinite(v) for v in logs)
        assert logs[1] > 100.0

    def test_invalid_state(self) -> None:
        with pytest.raises(ValueError):
            MomentState(1.0, 1.0, 2.0)

    def test_frobenius(self) -> None:
        assert oracle.frobenius_propagation(4, 0.25, 1.0, 3, 2) == pytest.approx(4.0)
        assert oracle.frobenius_propagation(4, 0.25, 1.0, 1, 4) == pytest.approx(16.0 * (4 * 6) / 16.0)
        with pytest.raises(UnsupportedOrderError):
            oracle.frobenius_propagation(4, 0.25, 1.0, 3, 3)

    def test_min_width(self) -> None:
        width = oracle.min_width_for_median(0.5, 10)
        assert width == math.ceil(2.0 / ((1.25) ** 0.1 - 1.0))
        assert oracle.min_width_for_median(0.5, 20) > width
        with pytest.raises(DomainError):
            oracle.min_width_for_median(0.0, 10)

    def test_scaling_report(self) -> None:
        report = oracle.grad_hessian_scaling(8, 1.0 / 24.0, 1.0, 8)
        assert report.diag_exponent == pytest.approx(8.0 * math.log(1.0 / 3.0))
        assert report.offdiag_exponent == pytest.approx(0.5 * report.diag_exponent)
        assert report.grad_exponent == report.offdiag_exponent
        assert report.eig_bound == pytest.approx(64.0 * math.exp(report.grad_exponent))


# ─── Gershgorin Discs ─────────────────────────────────────────────────────────
class TestGershgorin:
    """Disc construction and eigenvalue containment."""

    def test_discs(self) -> None:
        H = np.array([[2.0, -1.0], [0.5, -3.0]])
        centres, radii = oracle.gershgorin_discs(H)
        assert np.array_equal(centres, [2.0, -3.0])
        assert np.array_equal(radii, [1.0, 0.5])

    def test_symmetric_eigenvalues_contained(self, rng: np.random.Generator) -> None:
        M = rng.standard_normal((12, 12))
        H = M + M.T
        assert np.all(oracle.gershgorin_contains(H, np.linalg.eigvalsh(H)))
        assert not oracle.gershgorin_contains(H, [1e6])[0]

    def test_non_finite_rejected(self) -> None:
        with pytest.raises(NonFiniteError):
            oracle.gershgorin_discs(np.array([[np.nan]]))
