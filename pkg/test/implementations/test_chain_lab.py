#!/usr/bin/env python3
"""
test_chain_lab.py

Tests for the scalar neural chain: loss derivatives against central
differences, the optimizer testbed, escape detection and the gradient
flow integrator.

Author: s2659865
Date: October 2026
"""

import os
import sys
import math
import pytest

import numpy as np

# Add the project root to the path so imports work correctly
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))))

from test.utils.test_utilities import central_difference, relative_error
from vanishlab.src import theory_oracle as oracle
from vanishlab.src.chain_lab import (
    ChainParams,
    OptimizerSpec,
    Trajectory,
    chain_entry_samples,
    chain_gradient,
    chain_hessian,
    chain_loss,
    escape_time,
    filter_lag_holds,
    flow_stationary_point,
    grid_search,
    integrate_flow,
    relative_threshold,
    run_optimizer,
    sample_chain_init,
    sample_forward,
    sample_forward_batch,
    settled_escape_time,
)
from vanishlab.src.init_distributions import make_rng
from vanishlab.utils.validation import ShapeError


def symmetric_chain(L: int, w0: float) -> ChainParams:
    """Chain with every weight equal to w0 and the single pair (1, 1)."""
    return ChainParams.from_pairs(np.full(L, w0), [(1.0, 1.0)])


# ─── Derivatives ──────────────────────────────────────────────────────────────
class TestChainDerivatives:
    """Closed-form loss, gradient and Hessian of the chain."""

    def test_loss_value(self) -> None:
        params = ChainParams.from_pairs([2.0, 3.0], [(1.0, 1.0)])
        assert chain_loss(params) == pytest.approx(12.5)

    def test_loss_averages_over_pairs(self) -> None:
        params = ChainParams.from_pairs([0.5, 2.0], [(1.0, 0.0), (2.0, 4.0)])
        assert chain_loss(params) == pytest.approx((1.0 + 4.0) / 4.0)

    @pytest.mark.parametrize("L", [1, 2, 5, 9])
    def test_gradient_matches_central_differences(self, L: int, rng: np.random.Generator) -> None:
        params = ChainParams.from_pairs(rng.uniform(-1.2, 1.2, L), [(1.0, 1.0), (-0.5, 2.0), (1.5, 0.3)])
        numeric = central_difference(lambda w: chain_loss(params.with_weights(w)), params.w)
        assert relative_error(chain_gradient(params), numeric) < 1e-7

    @pytest.mark.parametrize("L", [2, 4, 7])
    def test_hessian_matches_central_differences(self, L: int, rng: np.random.Generator) -> None:
        params = ChainParams.from_pairs(rng.uniform(-1.2, 1.2, L), [(1.0, 1.0), (0.7, -0.4)])
        H = chain_hessian(params)
        numeric = np.stack([
            central_difference(lambda w: chain_gradient(params.with_weights(w))[k], params.w)
            for k in range(L)
        ])
        assert np.array_equal(H, H.T)
        assert relative_error(H, numeric) < 1e-6

    def test_zero_weight_kills_other_gradients(self) -> None:
        params = ChainParams.from_pairs([0.0, 0.8, 1.1, 0.9], [(1.0, 1.0)])
        g = chain_gradient(params)
        assert g[0] != 0.0
        assert np.all(g[1:] == 0.0)

    @pytest.mark.parametrize("w, data", [([], [(1.0, 1.0)]), ([1.0], [])])
    def test_empty_chain_rejected(self, w, data) -> None:
        with pytest.raises(ShapeError):
            ChainParams.from_pairs(w, data)

    def test_non_finite_weights_rejected(self) -> None:
        with pytest.raises(ValueError):
            ChainParams.from_pairs([1.0, np.nan], [(1.0, 1.0)])


# ─── Sampling ─────────────────────────────────────────────────────────────────
class TestChainSampling:
    """Forward-pass draws, derivative entries and initial weights."""

    def test_forward_sample_in_support(self, rng: np.random.Generator) -> None:
        sample = sample_forward(2.0, 6, rng)
        assert 0.0 < sample.v <= 2.0 ** 6
        assert sample.v == pytest.approx(math.exp(sample.log_v))

    def test_batch_log_mean(self, rng: np.random.Generator) -> None:
        # E[ln U] = -1 for U ~ U(0, 1]
        tau, L = math.sqrt(3.0), 8
        log_v = sample_forward_batch(tau, L, 20_000, rng)
        assert np.mean(log_v) == pytest.approx(L * (math.log(tau) - 1.0), abs=0.1)
        assert np.all(log_v <= L * math.log(tau))

    def test_batch_repeats_under_seed(self) -> None:
        first = sample_forward_batch(2.0, 5, 100, make_rng(9))
        assert np.array_equal(first, sample_forward_batch(2.0, 5, 100, make_rng(9)))

    def test_entry_samples(self, rng: np.random.Generator) -> None:
        entries = chain_entry_samples(2.0, 6, 500, rng)
        assert set(entries) == {"gradient", "hessian_diag", "hessian_offdiag"}
        assert all(values.shape == (500,) for values in entries.values())
        assert np.all(entries["hessian_diag"] >= 0.0)

    def test_entry_samples_need_two_layers(self, rng: np.random.Generator) -> None:
        with pytest.raises(ShapeError):
            chain_entry_samples(2.0, 1, 10, rng)

    def test_init_range(self, rng: np.random.Generator) -> None:
        w = sample_chain_init(50, 0.2, rng)
        assert w.shape == (50,)
        assert np.max(np.abs(w)) <= 0.2


# ─── Optimizers ───────────────────────────────────────────────────────────────
class TestOptimizers:
    """Runs of the optimizer testbed from a small symmetric init."""

    def test_spec_validation(self) -> None:
        with pytest.raises(ValueError):
            OptimizerSpec("lbfgs", 1e-3)
        with pytest.raises(ValueError):
            OptimizerSpec("gd", 0.0)
        with pytest.raises(ValueError):
            OptimizerSpec("perturbed_gd", 1e-3, noise_std=-0.1)
        with pytest.raises(ValueError):
            OptimizerSpec("rmsprop", 1e-3, beta2=1.0)

    @pytest.mark.parametrize("method", ["gd", "perturbed_gd", "sgd", "rmsprop", "adam"])
    def test_runs_repeat_under_seed(self, method: str) -> None:
        params = ChainParams.from_pairs(np.full(4, 0.6), [(1.0, 1.0), (0.5, 0.8)])
        spec = OptimizerSpec(method, 1e-2, noise_std=0.01)
        first = run_optimizer(params, spec, 200, make_rng(3))
        second = run_optimizer(params, spec, 200, make_rng(3))
        assert np.array_equal(first.losses, second.losses)
        assert first.steps == 200 and first.losses.size == 201

    def test_noise_changes_the_path(self) -> None:
        params = symmetric_chain(4, 0.6)
        plain = run_optimizer(params, OptimizerSpec("gd", 1e-2), 50, make_rng(1))
        noisy = run_optimizer(params, OptimizerSpec("perturbed_gd", 1e-2, noise_std=0.1), 50, make_rng(1))
        assert plain.losses[0] == noisy.losses[0]
        assert not np.array_equal(plain.losses, noisy.losses)

    @pytest.mark.parametrize("method,decay", [
        ("gd", "none"), ("perturbed_gd", "none"), ("sgd", "none"), ("adam", "none"), ("rmsprop", "inv_sqrt"),
    ])
    def test_default_decay_depends_on_method(self, method: str, decay: str) -> None:
        assert OptimizerSpec(method, 1e-3).decay == decay
        assert OptimizerSpec(method, 1e-3, decay="none").decay == "none"

    @pytest.mark.parametrize("decay", ["none", "inv_sqrt"])
    def test_injected_noise_is_not_scaled_by_the_step(self, decay: str) -> None:
        # Every partial derivative vanishes at w = 0, so one step moves the weights by the noise alone
        params = ChainParams.from_pairs(np.zeros(4000), [(1.0, 1.0)])
        spec = OptimizerSpec("perturbed_gd", 1e-3, noise_std=0.5, decay=decay)
        traj = run_optimizer(params, spec, 1, make_rng(11), keep_records=True)
        moves = traj.weights[1] - traj.weights[0]
        assert np.all(traj.grads[0] == 0.0)
        assert np.std(moves) == pytest.approx(0.5, rel=0.05)
        assert abs(np.mean(moves)) < 0.05

    def test_default_eps_dominates_tiny_gradients(self) -> None:
        # Depth-10 chain at 0.07 has partial derivatives near 4e-11
        params = symmetric_chain(10, 0.07)
        first_moves = {}
        for eps in (1e-8, 1e-16):
            spec = OptimizerSpec("rmsprop", 1e-3, beta2=0.9, eps=eps, decay="none")
            traj = run_optimizer(params, spec, 1, make_rng(0), keep_records=True)
            first_moves[eps] = float(np.max(np.abs(traj.weights[1] - traj.weights[0])))
        assert first_moves[1e-16] == pytest.approx(1e-3 / np.sqrt(0.1), rel=1e-4)
        assert first_moves[1e-8] < 1e-2 * 1e-3

    def test_rmsprop_escapes_where_gd_stalls(self) -> None:
        params = symmetric_chain(8, 0.5)
        threshold = relative_threshold(Trajectory(np.array([chain_loss(params)]), np.zeros(1), 0))
        gd = run_optimizer(params, OptimizerSpec("gd", 1e-2, decay="none"), 500, make_rng(0))
        rmsprop = run_optimizer(params, OptimizerSpec("rmsprop", 1e-2, decay="none"), 500, make_rng(0))
        assert escape_time(gd, threshold) is None
        assert escape_time(rmsprop, threshold) is not None
        assert not rmsprop.diverged

    def test_filter_lag(self) -> None:
        traj = run_optimizer(symmetric_chain(8, 0.5), OptimizerSpec("rmsprop", 1e-3, decay="none"), 100,
                             make_rng(0), keep_records=True)
        assert traj.weights.shape == (101, 8)
        assert filter_lag_holds(traj)

    def test_filter_lag_needs_records(self) -> None:
        traj = run_optimizer(symmetric_chain(3, 0.5), OptimizerSpec("rmsprop", 1e-3), 10, make_rng(0))
        with pytest.raises(ValueError):
            filter_lag_holds(traj)

    def test_stop_loss_truncates(self) -> None:
        params = symmetric_chain(8, 0.5)
        spec = OptimizerSpec("rmsprop", 1e-2, decay="none")
        full = run_optimizer(params, spec, 500, make_rng(0))
        stopped = run_optimizer(params, spec, 500, make_rng(0), stop_loss=0.1 * full.losses[0])
        assert stopped.steps == escape_time(full, 0.1 * full.losses[0])
        assert np.array_equal(stopped.losses, full.losses[:stopped.steps + 1])

    def test_divergence_is_reported(self) -> None:
        traj = run_optimizer(symmetric_chain(6, 3.0), OptimizerSpec("gd", 10.0, decay="none"), 100, make_rng(0))
        assert traj.diverged
        assert np.all(np.isfinite(traj.losses))
        assert traj.steps < 100

    def test_hessian_stride(self) -> None:
        traj = run_optimizer(symmetric_chain(4, 0.6), OptimizerSpec("gd", 1e-2), 20, make_rng(0), hessian_stride=5)
        assert traj.lam_max.shape == (5,)
        assert traj.weights is None


# ─── Escape Detection ─────────────────────────────────────────────────────────
class TestEscape:
    """Escape time, thresholds and learning-rate search."""

    def test_escape_time(self) -> None:
        traj = Trajectory(np.array([1.0, 0.5, 0.05, 0.01]), np.zeros(4), 3)
        assert escape_time(traj, 0.1) == 2
        assert escape_time(traj, 1e-3) is None
        assert relative_threshold(traj, 0.1) == pytest.approx(0.1)

    def test_escape_time_needs_positive_threshold(self) -> None:
        with pytest.raises(ValueError):
            escape_time(Trajectory(np.ones(2), np.zeros(2), 1), 0.0)

    def test_settled_escape_time(self) -> None:
        traj = Trajectory(np.array([1.0, 0.05, 1.0, 0.05, 0.05, 0.05, 1.0]), np.zeros(7), 6)
        assert escape_time(traj, 0.1) == 1
        assert settled_escape_time(traj, 0.1, 1) == 1
        assert settled_escape_time(traj, 0.1, 3) == 3
        assert settled_escape_time(traj, 0.1, 4) is None
        assert settled_escape_time(traj, 0.1, 20) is None

    def test_settled_escape_time_arguments(self) -> None:
        traj = Trajectory(np.ones(3), np.zeros(3), 2)
        with pytest.raises(ValueError):
            settled_escape_time(traj, 0.0, 2)
        with pytest.raises(ValueError):
            settled_escape_time(traj, 0.1, 0)

    def test_grid_search_picks_escaping_rate(self) -> None:
        spec = OptimizerSpec("rmsprop", 1e-3, decay="none")
        best, escape, escapes = grid_search(symmetric_chain(8, 0.5), spec, [1e-5, 1e-2], 500, rng_seed=4)
        assert best == 1e-2
        assert escapes[1e-5] is None
        assert escape is not None
        assert escape == escapes[1e-2]

    def test_grid_search_without_escape(self) -> None:
        spec = OptimizerSpec("gd", 1e-3, decay="none")
        best, escape, escapes = grid_search(symmetric_chain(8, 0.5), spec, [1e-4, 1e-3], 50, rng_seed=4)
        assert (best, escape) == (1e-4, None)
        assert set(escapes) == {1e-4, 1e-3}


# ─── Gradient Flow ────────────────────────────────────────────────────────────
class TestGradientFlow:
    """Symmetric flow integration against descent and the blow-up envelope."""

    def test_euler_matches_gradient_descent(self) -> None:
        L, w0, lr, steps = 4, 0.7, 1e-2, 300
        traj = run_optimizer(symmetric_chain(L, w0), OptimizerSpec("gd", lr, decay="none"), steps,
                             make_rng(0), keep_records=True)
        flow = integrate_flow(w0, L, 1.0, 1.0, lr, lr * steps, method="euler")
        assert flow.w.size == steps + 1
        assert np.allclose(traj.weights[:, 0], flow.w, rtol=1e-10, atol=0.0)

    @pytest.mark.parametrize("L", [4, 6, 10])
    def test_flow_stays_below_envelope(self, L: int) -> None:
        w0 = 0.5
        bound = oracle.blowup(w0, L)
        flow = integrate_flow(w0, L, 1.0, 1.0, 1e-3, 0.95 * bound.t_e, method="rk4")
        envelope = oracle.gradient_flow_bound(w0, L, 1.0, flow.times)
        assert not flow.diverged
        assert np.all(flow.w <= envelope * (1.0 + 1e-9))

    def test_flow_reaches_stationary_point(self) -> None:
        flow = integrate_flow(0.5, 6, 1.0, 1.0, 1e-3, 50.0, method="rk4")
        assert flow.w[-1] == pytest.approx(flow_stationary_point(1.0, 1.0, 6), abs=1e-6)
        assert flow_stationary_point(1.0, 8.0, 3) == pytest.approx(2.0)

    def test_flow_arguments(self) -> None:
        with pytest.raises(ValueError):
            integrate_flow(0.5, 4, 1.0, 1.0, 1e-2, 1.0, method="leapfrog")
        with pytest.raises(ValueError):
            integrate_flow(0.5, 4, 1.0, 1.0, 1e-2, -1.0)
        assert integrate_flow(0.5, 4, 1.0, 1.0, 1e-2, 0.0).w.size == 1
