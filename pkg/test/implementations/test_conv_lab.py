#!/usr/bin/env python3
"""
test_conv_lab.py

Tests for fully convolutional networks: circulant structure, the dense
expansion, shift equivariance under circular padding and the kernel
gradient.

Author: s2659865
Date: October 2026
"""

import os
import sys
import pytest
from dataclasses import replace

import numpy as np

# Add the project root to the path so imports work correctly
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))))

from test.utils.test_utilities import relative_error
from vanishlab.src import conv_lab
from vanishlab.src.conv_lab import (
    ConvConfig,
    ConvState,
    build_conv_state,
    circulant_matrix,
    conv_forward,
    conv_gradient,
    conv_loss,
    cyclic_shift,
    effective_width,
    expand_dense,
    finite_difference_gradient,
    fold_dense_gradient,
    kink_distance,
    neighbor_table,
    sampled_hessian_entries,
)
from vanishlab.src.init_distributions import LINEAR, RELU, InitScheme, make_rng
from vanishlab.utils.validation import ShapeError, UnsupportedFamilyError


def linear_line(size: int = 6, c: int = 2, L: int = 3, padding: str = "circular") -> ConvConfig:
    """Linear line network with one input channel."""
    return ConvConfig("line", size, c, 3, padding, L, LINEAR, InitScheme("gaussian", "he"))


# ─── Configuration ────────────────────────────────────────────────────────────
class TestConvConfig:
    """Validation and derived sizes."""

    def test_derived_sizes(self, line_conv_config: ConvConfig) -> None:
        assert line_conv_config.in_channels == 1
        assert line_conv_config.taps == 3
        assert line_conv_config.n_params == 2 * 2 * 2 * 3
        assert effective_width(line_conv_config) == 6
        grid = ConvConfig("grid", 4, 5, 3, "zero", 2)
        assert (grid.in_channels, grid.positions, effective_width(grid)) == (3, 16, 45)

    @pytest.mark.parametrize("kwargs", [
        {"k": 4},
        {"padding": "reflect"},
        {"spatial": "volume"},
        {"c": 0},
    ])
    def test_invalid_config(self, line_conv_config: ConvConfig, kwargs) -> None:
        with pytest.raises(ValueError):
            replace(line_conv_config, **kwargs)

    def test_orthogonal_kernels_rejected(self) -> None:
        with pytest.raises(UnsupportedFamilyError):
            ConvConfig("line", 5, 2, 3, "zero", 1, init=InitScheme("orthogonal"))

    def test_channel_rule(self, line_conv_config: ConvConfig) -> None:
        config = replace(line_conv_config, channel_rule="linear:0.25").at_depth(16)
        assert (config.L, config.c) == (16, 4)

    def test_zero_padding_table_has_sentinel(self) -> None:
        table = neighbor_table(linear_line(size=5, padding="zero"))
        assert table.shape == (5, 3)
        assert table[0, 0] == 5 and table[4, 2] == 5
        assert list(table[2]) == [1, 2, 3]


# ─── Circulant Structure ──────────────────────────────────────────────────────
class TestCirculant:
    """Single-channel circular convolutions as circulant matrices."""

    def test_first_row(self) -> None:
        assert np.array_equal(circulant_matrix([1.0, 2.0, 3.0])[0], [2.0, 3.0, 1.0])

    def test_matches_cross_correlation(self, rng: np.random.Generator) -> None:
        h, n = rng.standard_normal(5), 8
        x = rng.standard_normal(n)
        expected = np.array([sum(h[j] * x[(p + j - 2) % n] for j in range(5)) for p in range(n)])
        assert np.allclose(circulant_matrix(h, n) @ x, expected, rtol=1e-12, atol=1e-14)

    def test_kernel_validation(self) -> None:
        with pytest.raises(ValueError):
            circulant_matrix([1.0, 2.0])
        with pytest.raises(ShapeError):
            circulant_matrix([1.0, 2.0, 3.0], 2)

    def test_dense_expansion_is_circulant(self, rng: np.random.Generator) -> None:
        config = ConvConfig("line", 7, 1, 3, "circular", 1, LINEAR)
        state = build_conv_state(config, rng)
        dense = expand_dense(config, state)
        assert np.allclose(dense["W"][0], circulant_matrix(state.W[0, 0, 0], 7), rtol=0.0, atol=0.0)


# ─── Dense Equivalence ────────────────────────────────────────────────────────
class TestDenseEquivalence:
    """A linear network equals the product of its dense expansions."""

    @pytest.mark.parametrize("padding", ["circular", "zero"])
    def test_forward(self, padding: str, rng: np.random.Generator) -> None:
        config = linear_line(padding=padding)
        state = build_conv_state(config, rng)
        x = rng.standard_normal((config.positions, 1))
        dense = expand_dense(config, state)
        v = dense["A"] @ x.reshape(-1)
        for W in dense["W"]:
            v = W @ v
        output, _ = conv_forward(config, state, x)
        assert np.allclose(output.reshape(-1), dense["B"] @ v, rtol=1e-10, atol=1e-12)

    @pytest.mark.parametrize("padding", ["circular", "zero"])
    def test_folded_gradient(self, padding: str, rng: np.random.Generator) -> None:
        config = linear_line(padding=padding)
        state = build_conv_state(config, rng)
        x = rng.standard_normal((config.positions, 1))
        dense = expand_dense(config, state)
        L = config.L
        forward = [dense["A"] @ x.reshape(-1)]
        for W in dense["W"]:
            forward.append(W @ forward[-1])
        residual = dense["B"] @ forward[-1] - x.reshape(-1)
        dense_grad = np.empty(dense["W"].shape)
        back = dense["B"].T @ residual
        for j in range(L - 1, -1, -1):
            dense_grad[j] = np.outer(back, forward[j])
            back = dense["W"][j].T @ back
        folded = fold_dense_gradient(config, dense_grad)
        assert relative_error(folded, conv_gradient(config, state, x)) < 1e-10


# ─── Symmetry ─────────────────────────────────────────────────────────────────
class TestShiftEquivariance:
    """Circular padding commutes with cyclic shifts; zero padding does not."""

    @pytest.mark.parametrize("shift", [1, 2, -3])
    def test_circular_line(self, line_conv_config: ConvConfig, shift: int, rng: np.random.Generator) -> None:
        state = build_conv_state(line_conv_config, rng)
        x = rng.standard_normal((line_conv_config.positions, 1))
        shifted, _ = conv_forward(line_conv_config, state, cyclic_shift(x, line_conv_config, shift))
        output, _ = conv_forward(line_conv_config, state, x)
        assert np.allclose(shifted, cyclic_shift(output, line_conv_config, shift), rtol=1e-12, atol=1e-14)

    def test_circular_grid(self, rng: np.random.Generator) -> None:
        config = ConvConfig("grid", 4, 2, 3, "circular", 2, RELU)
        state = build_conv_state(config, rng)
        x = rng.standard_normal((3, config.positions, 3))
        shifted, _ = conv_forward(config, state, cyclic_shift(x, config, (1, -2)))
        output, _ = conv_forward(config, state, x)
        assert np.allclose(shifted, cyclic_shift(output, config, (1, -2)), rtol=1e-12, atol=1e-14)

    def test_zero_padding_breaks_equivariance(self, rng: np.random.Generator) -> None:
        config = linear_line(padding="zero")
        state = build_conv_state(config, rng)
        x = rng.standard_normal((config.positions, 1))
        shifted, _ = conv_forward(config, state, cyclic_shift(x, config, 1))
        output, _ = conv_forward(config, state, x)
        assert not np.allclose(shifted, cyclic_shift(output, config, 1))

    def test_grid_shift_inverts(self, rng: np.random.Generator) -> None:
        config = ConvConfig("grid", 3, 1, 3, "circular", 1)
        x = rng.standard_normal((9, 2))
        assert np.array_equal(cyclic_shift(cyclic_shift(x, config, (1, 2)), config, (-1, -2)), x)


# ─── Gradient and Hessian ─────────────────────────────────────────────────────
class TestConvDerivatives:
    """Kernel gradient and sampled Hessian entries."""

    def test_gradient_matches_finite_differences(self, line_conv_config: ConvConfig) -> None:
        gen = make_rng(31)
        state = build_conv_state(line_conv_config, gen)
        x = gen.standard_normal((line_conv_config.positions, 1))
        if kink_distance(line_conv_config, state, x) < 1e-3:
            pytest.skip("a preactivation sits too close to a ReLU kink for finite differences")
        analytic = conv_gradient(line_conv_config, state, x).reshape(-1)
        numeric = finite_difference_gradient(line_conv_config, state, x, range(line_conv_config.n_params))
        assert relative_error(analytic, numeric) < 1e-6

    def test_batch_gradient_is_mean(self, rng: np.random.Generator) -> None:
        config = linear_line()
        state = build_conv_state(config, rng)
        x = rng.standard_normal((2, config.positions, 1))
        mean = 0.5 * (conv_gradient(config, state, x[0]) + conv_gradient(config, state, x[1]))
        assert np.allclose(conv_gradient(config, state, x), mean, rtol=1e-12, atol=1e-15)
        assert conv_loss(config, state, x) == pytest.approx(
            0.5 * (conv_loss(config, state, x[0]) + conv_loss(config, state, x[1])))

    def test_sampled_hessian_is_symmetric(self, rng: np.random.Generator) -> None:
        config = linear_line(L=2)
        state = build_conv_state(config, rng)
        x = rng.standard_normal((config.positions, 1))
        upper = sampled_hessian_entries(config, state, x, [(0, 5), (3, 17), (8, 22)])
        lower = sampled_hessian_entries(config, state, x, [(5, 0), (17, 3), (22, 8)])
        assert np.allclose(upper, lower, rtol=1e-5, atol=1e-8)
        with pytest.raises(ShapeError):
            sampled_hessian_entries(config, state, x, [(0, config.n_params)])

    def test_shape_errors(self, line_conv_config: ConvConfig, rng: np.random.Generator) -> None:
        state = build_conv_state(line_conv_config, rng)
        with pytest.raises(ShapeError):
            conv_forward(line_conv_config, state, np.zeros((4, 1)))
        bad = ConvState(state.A, state.W[:1], state.B)
        with pytest.raises(ShapeError):
            conv_forward(line_conv_config, bad, np.zeros((5, 1)))
        with pytest.raises(ShapeError):
            conv_gradient(line_conv_config, state, np.zeros((5, 1)), target=np.zeros((2, 5, 1)))

    def test_kink_distance_linear(self, rng: np.random.Generator) -> None:
        config = linear_line()
        state = build_conv_state(config, rng)
        assert kink_distance(config, state, np.ones((6, 1))) == np.inf


# ─── Depth Scans ──────────────────────────────────────────────────────────────
class TestConvScans:
    """Scan trials on synthetic and image inputs."""

    def test_trial_observables(self, line_conv_config: ConvConfig) -> None:
        values = conv_lab.scan_trial(line_conv_config, make_rng(2), hessian_pairs=4)
        assert set(values) == {"loss", "grad.frobenius", "grad.first_layer", "grad.layer_mean_log",
                               "hessian.sampled_mean_abs"}
        assert values["grad.frobenius"] >= values["grad.first_layer"]

    def test_image_inputs(self, line_conv_config: ConvConfig, rng: np.random.Generator) -> None:
        images = rng.standard_normal((2, 1, 1, 5))
        first = conv_lab.scan_trial(line_conv_config, make_rng(2), images=images, trial=0)
        third = conv_lab.scan_trial(line_conv_config, make_rng(2), images=images, trial=2)
        assert first == third
        with pytest.raises(ShapeError):
            conv_lab.scan_trial(line_conv_config, make_rng(2), images=rng.standard_normal((1, 1, 1, 4)))

    def test_depth_scan_table(self, line_conv_config: ConvConfig) -> None:
        config = replace(line_conv_config, channel_rule="sqrt_depth")
        table = conv_lab.depth_scan(config, [1, 4], 2, master_seed=5)
        assert list(table.columns) == ["depth", "width", "trial", "sub_seed", "observable", "value"]
        assert sorted(table["width"].unique()) == [3, 6]
        with pytest.raises(ValueError):
            conv_lab.depth_scan(config, [2], 1)
