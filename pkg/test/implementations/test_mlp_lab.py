#!/usr/bin/env python3
"""
test_mlp_lab.py

Tests for random MLPs: the cached forward pass, analytic derivatives
against finite differences, Hessian block statistics, depth scans and the
Monte-Carlo forward protocols.

Author: s2659865
Date: October 2026
"""

import os
import sys
import math
import pytest
from typing import Tuple

import numpy as np

# Add the project root to the path so imports work correctly
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))))

from test.utils.test_utilities import relative_error
from vanishlab.src import mlp_lab
from vanishlab.src import theory_oracle as oracle
from vanishlab.src.init_distributions import LINEAR, RELU, InitScheme, make_rng
from vanishlab.src.mlp_lab import (
    HOLLOWNESS_SATURATION,
    MlpConfig,
    MlpDataset,
    MlpState,
    block_norms,
    build_state,
    eigenspectrum,
    finite_difference_gradient,
    forward,
    forward_norm_trials,
    frobenius_trials,
    gradient,
    hessian,
    hessian_vector_product,
    hollowness,
    kink_distance,
    loss,
    preactivation_statistics,
    random_block_pairs,
    sampled_hessian_entries,
    standard_normal_moments,
    teacher_dataset,
    width_for,
)
from vanishlab.utils.validation import (
    HessianSizeError,
    NonFiniteError,
    ShapeError,
    StaleCacheError,
    UnsupportedFamilyError,
)

Network = Tuple[MlpState, MlpDataset]


def skip_near_kinks(state: MlpState, dataset: MlpDataset, margin: float = 1e-3) -> None:
    """Finite differences across a ReLU kink are meaningless."""
    if kink_distance(state, dataset) < margin:
        pytest.skip("a preactivation sits too close to a ReLU kink for finite differences")


# ─── Configuration ────────────────────────────────────────────────────────────
class TestConfiguration:
    """Width rules, config validation and state construction."""

    @pytest.mark.parametrize("rule, L, expected", [
        ("constant", 16, 4),
        ("constant:7", 16, 7),
        ("sqrt_depth", 16, 4),
        ("sqrt_depth", 17, 5),
        ("linear", 8, 8),
        ("linear:0.5", 9, 5),
        ("linear:0.25", 1, 1),
    ])
    def test_width_rules(self, rule: str, L: int, expected: int) -> None:
        assert width_for(rule, L, 4) == expected

    @pytest.mark.parametrize("rule", ["square", "linear:-1", "linear:abc"])
    def test_invalid_width_rule(self, rule: str) -> None:
        with pytest.raises(ValueError):
            width_for(rule, 4, 4)

    def test_at_depth_follows_rule(self) -> None:
        config = MlpConfig(L=2, d=3, width_rule="sqrt_depth").at_depth(36)
        assert (config.L, config.d, config.n_params) == (36, 6, 36 * 36)

    def test_orthogonal_needs_square_maps(self) -> None:
        with pytest.raises(ShapeError):
            MlpConfig(L=2, d=3, d_in=1, init=InitScheme("orthogonal"))

    def test_state_shapes(self, rng: np.random.Generator) -> None:
        config = MlpConfig(L=3, d=5, d_in=2, d_out=1, activation=RELU)
        state = build_state(config, rng)
        assert state.A.shape == (5, 2)
        assert state.W.shape == (3, 5, 5)
        assert state.B.shape == (1, 5)
        with pytest.raises(ShapeError):
            state.set_weights(np.zeros(10))

    def test_teacher_dataset_shapes(self, rng: np.random.Generator) -> None:
        config = MlpConfig(L=2, d=6, d_in=3, d_out=2)
        data = teacher_dataset(config, 5, rng)
        assert data.X.shape == (5, 3) and data.Y.shape == (5, 2)

    def test_dataset_validation(self) -> None:
        with pytest.raises(ShapeError):
            MlpDataset(np.zeros((3, 2)), np.zeros((2, 2)))
        with pytest.raises(NonFiniteError):
            MlpDataset(np.array([[np.inf]]), np.zeros((1, 1)))


# ─── Forward Pass and Gradient ────────────────────────────────────────────────
class TestForwardAndGradient:
    """Forward cache discipline and the backward pass."""

    def test_linear_forward_is_matrix_product(self, small_linear_mlp: Network) -> None:
        state, data = small_linear_mlp
        product = state.B @ state.W[2] @ state.W[1] @ state.W[0] @ state.A
        assert np.allclose(forward(state, data.X), data.X @ product.T, rtol=1e-12, atol=1e-14)

    def test_single_input_shape(self, small_relu_mlp: Network) -> None:
        state, data = small_relu_mlp
        assert forward(state, data.X[0]).shape == (4,)
        with pytest.raises(ShapeError):
            forward(state, np.zeros(3))

    @pytest.mark.parametrize("fixture", ["small_linear_mlp", "small_relu_mlp"])
    def test_gradient_matches_finite_differences(self, fixture: str, request) -> None:
        state, data = request.getfixturevalue(fixture)
        skip_near_kinks(state, data)
        loss(state, data)
        analytic = gradient(state, data).reshape(-1)
        numeric = finite_difference_gradient(state, data, range(state.config.n_params))
        assert relative_error(analytic, numeric) < 1e-6

    def test_gradient_needs_forward_pass(self, small_linear_mlp: Network) -> None:
        state, data = small_linear_mlp
        with pytest.raises(StaleCacheError):
            gradient(state, data)

    def test_weight_change_invalidates_cache(self, small_linear_mlp: Network) -> None:
        state, data = small_linear_mlp
        loss(state, data)
        state.set_weights(state.parameters() * 0.5)
        with pytest.raises(StaleCacheError):
            gradient(state, data)

    def test_other_inputs_invalidate_cache(self, small_linear_mlp: Network) -> None:
        state, data = small_linear_mlp
        loss(state, data)
        other = MlpDataset(data.X + 1.0, data.Y)
        with pytest.raises(StaleCacheError):
            gradient(state, other)

    def test_kink_distance(self, small_linear_mlp: Network, small_relu_mlp: Network) -> None:
        assert kink_distance(*small_linear_mlp) == math.inf
        distance = kink_distance(*small_relu_mlp)
        assert 0.0 <= distance < math.inf


# ─── Hessian ──────────────────────────────────────────────────────────────────
class TestHessian:
    """Analytic Hessian against the finite-difference oracle."""

    @pytest.mark.parametrize("fixture", ["small_linear_mlp", "small_relu_mlp"])
    def test_analytic_matches_finite_differences(self, fixture: str, request) -> None:
        state, data = request.getfixturevalue(fixture)
        skip_near_kinks(state, data)
        analytic = hessian(state, data)
        numeric = hessian(state, data, method="finite_difference")
        assert np.allclose(analytic, analytic.T, rtol=1e-12, atol=1e-14)
        assert relative_error(analytic, numeric) < 1e-6

    def test_single_layer_is_gauss_newton(self, rng: np.random.Generator) -> None:
        config = MlpConfig(L=1, d=3)
        state = build_state(config, rng)
        data = teacher_dataset(config, 2, rng)
        H = hessian(state, data)
        assert np.all(np.linalg.eigvalsh(H) >= -1e-12)

    def test_cap(self, small_linear_mlp: Network) -> None:
        state, data = small_linear_mlp
        with pytest.raises(HessianSizeError):
            hessian(state, data, cap=10)

    def test_unknown_method(self, small_linear_mlp: Network) -> None:
        with pytest.raises(ValueError):
            hessian(*small_linear_mlp, method="autodiff")

    def test_vector_product_and_sampled_entries(self, small_linear_mlp: Network, rng: np.random.Generator) -> None:
        state, data = small_linear_mlp
        H = hessian(state, data)
        v = rng.standard_normal(H.shape[0])
        assert relative_error(hessian_vector_product(state, data, v), H @ v) < 1e-6
        pairs = [(0, 0), (4, 20), (26, 3), (13, 13)]
        entries = sampled_hessian_entries(state, data, pairs)
        assert np.allclose(entries, [H[p, q] for p, q in pairs], rtol=1e-5, atol=1e-8)
        with pytest.raises(ShapeError):
            sampled_hessian_entries(state, data, [(0, 27)])

    def test_block_pairs_land_in_requested_blocks(self, rng: np.random.Generator) -> None:
        L, d = 4, 3
        for p, q in random_block_pairs(L, d, 50, rng, diagonal=True):
            assert p // (d * d) == q // (d * d)
        for p, q in random_block_pairs(L, d, 50, rng, diagonal=False):
            assert p // (d * d) != q // (d * d)
        assert random_block_pairs(1, d, 5, rng, diagonal=False) == []


# ─── Block Statistics ─────────────────────────────────────────────────────────
class TestBlockStatistics:
    """Spectrum order, hollowness and block norms."""

    def test_spectrum_descends(self, rng: np.random.Generator) -> None:
        M = rng.standard_normal((9, 9))
        eigs = eigenspectrum(M + M.T)
        assert np.all(np.diff(eigs) <= 0.0)
        assert np.allclose(np.sort(eigs), np.linalg.eigvalsh(M + M.T))

    def test_spectrum_rejects_non_finite(self) -> None:
        with pytest.raises(NonFiniteError):
            eigenspectrum(np.array([[1.0, np.nan], [np.nan, 1.0]]))
        with pytest.raises(ShapeError):
            eigenspectrum(np.zeros((2, 3)))

    def test_hollowness_ratio(self) -> None:
        H = np.array([
            [2.0, -2.0, 1.0, 1.0],
            [2.0, 2.0, -1.0, 1.0],
            [1.0, 1.0, 2.0, 2.0],
            [1.0, -1.0, 2.0, -2.0],
        ])
        assert hollowness(H, 2) == pytest.approx(2.0)

    def test_hollowness_edge_cases(self) -> None:
        assert hollowness(np.eye(4), 2) == HOLLOWNESS_SATURATION
        assert math.isnan(hollowness(np.zeros((4, 4)), 2))
        with pytest.raises(ShapeError):
            hollowness(np.eye(5), 2)

    def test_block_norms(self) -> None:
        H = np.kron(np.array([[1.0, 2.0], [2.0, 3.0]]), np.ones((4, 4)))
        norms = block_norms(H, 2, 2)
        assert np.allclose(norms["frobenius"], [[4.0, 8.0], [8.0, 12.0]])
        assert np.allclose(norms["mean_abs"], [[1.0, 2.0], [2.0, 3.0]])
        with pytest.raises(ShapeError):
            block_norms(H, 2, 3)


# ─── Depth Scans ──────────────────────────────────────────────────────────────
class TestScans:
    """One scan trial and the depth sweep."""

    def test_dense_trial_observables(self) -> None:
        config = MlpConfig(L=3, d=2, d_in=1, d_out=1, activation=LINEAR, init=InitScheme("uniform", "lecun"))
        values = mlp_lab.scan_trial(config, make_rng(5), ("forward", "gradient", "hessian", "spectrum"))
        for key in ("loss", "forward.m2", "grad.frobenius", "grad.first_layer", "hessian.hollowness",
                    "hessian.offdiag_block_log", "spectrum.max", "spectrum.gershgorin"):
            assert key in values
        assert values["spectrum.gershgorin"] == 1.0
        assert values["spectrum.max"] >= values["spectrum.min"]

    def test_sampled_trial_beyond_cap(self) -> None:
        config = MlpConfig(L=3, d=2, d_in=1, d_out=1)
        values = mlp_lab.scan_trial(config, make_rng(5), ("hessian",), cap=4, sampled_pairs=8)
        assert "hessian.sampled_diag_mean_abs" in values
        assert "hessian.sampled_offdiag_mean_abs" in values
        assert "hessian.hollowness" not in values

    def test_unknown_observable(self) -> None:
        with pytest.raises(ValueError):
            mlp_lab.scan_trial(MlpConfig(L=2, d=2), make_rng(0), ("curvature",))

    def test_trial_repeats_under_seed(self) -> None:
        config = MlpConfig(L=4, d=3, d_in=1, d_out=1, activation=RELU, init=InitScheme("gaussian", "he"))
        # NaN entries (a dead ReLU network) must compare equal too
        np.testing.assert_equal(mlp_lab.scan_trial(config, make_rng(8)), mlp_lab.scan_trial(config, make_rng(8)))

    def test_norm_scan_table(self) -> None:
        config = MlpConfig(L=2, d=2, d_in=1, d_out=1, width_rule="sqrt_depth")
        table = mlp_lab.norm_scan(config, [4, 9], 2, ("gradient",), master_seed=3)
        assert list(table.columns) == ["depth", "width", "trial", "sub_seed", "observable", "value"]
        assert sorted(table["width"].unique()) == [2, 3]
        with pytest.raises(ValueError):
            mlp_lab.norm_scan(config, [4], 1)


# ─── Monte-Carlo Protocols ────────────────────────────────────────────────────
class TestForwardProtocols:
    """Monte-Carlo forward norms against the moment recursion."""

    @pytest.mark.parametrize("init, activation, p", [
        ("xavier", LINEAR, 1.0),
        ("he", RELU, 0.5),
    ])
    def test_mean_norms_match_recursion(self, init: str, activation, p: float, rng: np.random.Generator) -> None:
        d, k = 4, 3
        scheme = InitScheme("gaussian", init)
        samples = forward_norm_trials(scheme, activation, d, k, 40_000, rng)
        sigma2 = 1.0 / d if init == "xavier" else 2.0 / d
        expected = oracle.forward_moments(d, sigma2, 3.0, p, k, standard_normal_moments(d))
        assert np.mean(samples["m2"][:, k]) == pytest.approx(expected.m2, rel=0.05)
        assert samples["m2"].shape == (40_000, k + 1)

    def test_orthogonal_linear_preserves_norms(self, rng: np.random.Generator) -> None:
        samples = forward_norm_trials(InitScheme("orthogonal"), LINEAR, 5, 4, 50, rng)
        assert np.allclose(samples["ratio2"], 1.0, rtol=1e-12)

    def test_standard_normal_moments(self) -> None:
        assert standard_normal_moments(4).as_tuple() == (4.0, 24.0, 12.0)

    def test_preactivation_symmetry(self, rng: np.random.Generator) -> None:
        table = preactivation_statistics(InitScheme("gaussian", "he"), RELU, 4, 2, 20_000, rng)
        assert list(table["layer"]) == [1, 2]
        assert np.all(np.abs(table["moment1"]) < 5.0 * table["moment1_se"])
        assert np.all(np.abs(table["gate_frequency"] - 0.5) < 5.0 * table["gate_frequency_se"])

    def test_preactivation_statistics_domain(self, rng: np.random.Generator) -> None:
        with pytest.raises(UnsupportedFamilyError):
            preactivation_statistics(InitScheme("orthogonal"), RELU, 4, 2, 10, rng)
        with pytest.raises(ShapeError):
            preactivation_statistics(InitScheme("gaussian", "he"), RELU, 1, 2, 10, rng)

    def test_frobenius_mean(self, rng: np.random.Generator) -> None:
        d, span = 4, 3
        samples = frobenius_trials(InitScheme("gaussian", "xavier"), LINEAR, d, 0, span, 20_000, rng)
        expected = oracle.frobenius_propagation(d, 1.0 / d, 1.0, span, 2)
        assert np.mean(samples["frobenius2"]) == pytest.approx(expected, rel=0.05)
