#!/usr/bin/env python3
"""
test_init_distributions.py

Tests for initialization schemes, moment profiles, seeds and sampling.

Author: s2659865
Date: October 2026
"""

import math

import numpy as np
import pytest

from vanishlab.src.init_distributions import (
    LINEAR,
    RELU,
    InitScheme,
    MomentProfile,
    activation_for,
    derive_sub_seed,
    format_scheme,
    kurtosis_of,
    make_rng,
    moment_profile,
    parse_scheme,
    range_for_uniform,
    sample_entries,
    sample_matrix,
    sample_orthogonal,
    variance_for,
)
from vanishlab.utils.validation import ShapeError, UnsupportedFamilyError


# ─── Textual Form ─────────────────────────────────────────────────────────────
class TestSchemeText:
    """Parsing and formatting of the canonical scheme text."""

    @pytest.mark.parametrize("text", [
        "uniform:he", "gaussian:xavier", "uniform:lecun", "uniform:range=1.5", "gaussian:var=0.2", "orthogonal",
    ])
    def test_canonical_text_is_stable(self, text: str) -> None:
        assert format_scheme(parse_scheme(text)) == text

    def test_parse_ignores_case_and_spaces(self) -> None:
        assert parse_scheme("  Gaussian:HE ") == InitScheme("gaussian", "he")

    @pytest.mark.parametrize("text", ["uniform", "laplace:he", "gaussian:range=1.0", "uniform:var=abc", "gaussian:var=-1"])
    def test_invalid_text_rejected(self, text: str) -> None:
        with pytest.raises(ValueError):
            parse_scheme(text)

    def test_activation_lookup(self) -> None:
        assert activation_for("ReLU") == RELU
        assert activation_for(LINEAR) is LINEAR
        assert (LINEAR.p, RELU.p) == (1.0, 0.5)
        with pytest.raises(ValueError):
            activation_for("tanh")


# ─── Moments ──────────────────────────────────────────────────────────────────
class TestMoments:
    """Variance rules, kurtosis and moment profiles."""

    @pytest.mark.parametrize("rule, expected", [("lecun", 1.0 / 30.0), ("xavier", 0.1), ("he", 0.2)])
    def test_variance_rules(self, rule: str, expected: float) -> None:
        assert variance_for(InitScheme("uniform", rule), 10) == pytest.approx(expected, rel=1e-15)

    def test_custom_range_and_variance(self) -> None:
        assert variance_for(InitScheme("uniform", "range", 0.6), 7) == pytest.approx(0.12)
        assert variance_for(InitScheme("gaussian", "var", 0.25), 7) == 0.25
        assert variance_for(InitScheme("orthogonal"), 8) == pytest.approx(1.0 / 8.0)

    def test_uniform_range_inverts_variance(self) -> None:
        assert range_for_uniform(1.0 / 3.0) == pytest.approx(1.0)

    def test_kurtosis(self) -> None:
        assert kurtosis_of("uniform") == pytest.approx(1.8)
        assert kurtosis_of("gaussian") == 3.0
        with pytest.raises(UnsupportedFamilyError):
            kurtosis_of("orthogonal")

    def test_profile(self) -> None:
        profile = moment_profile(InitScheme("uniform", "xavier"), 4)
        assert profile.sigma2 == pytest.approx(0.25)
        assert profile.kappa == pytest.approx(1.8)
        with pytest.raises(UnsupportedFamilyError):
            moment_profile(InitScheme("orthogonal"), 4)

    def test_profile_rejects_impossible_fourth_moment(self) -> None:
        with pytest.raises(ValueError):
            MomentProfile(sigma2=1.0, mu4=0.5)

    def test_zero_fan_in_rejected(self) -> None:
        with pytest.raises(ValueError):
            variance_for(InitScheme("gaussian", "he"), 0)


# ─── Seeds and Sampling ───────────────────────────────────────────────────────
class TestSeedsAndSampling:
    """Sub-seed derivation and samplers."""

    def test_sub_seed_is_pure(self) -> None:
        assert derive_sub_seed(42, 3) == derive_sub_seed(42, 3)
        assert derive_sub_seed(42, 3) != derive_sub_seed(42, 4)
        assert derive_sub_seed(42, 3) != derive_sub_seed(43, 3)
        assert 0 <= derive_sub_seed(2 ** 64 - 1, 0) < 2 ** 64

    def test_negative_seed_rejected(self) -> None:
        with pytest.raises(ValueError):
            derive_sub_seed(-1, 0)

    def test_generator_streams_repeat(self) -> None:
        assert np.array_equal(make_rng(5).random(8), make_rng(5).random(8))

    @pytest.mark.parametrize("family", ["uniform", "gaussian"])
    def test_entry_variance_and_kurtosis(self, family: str, rng: np.random.Generator) -> None:
        x = sample_entries(InitScheme(family, "var", 0.5), 400_000, 0.5, rng)
        assert np.var(x) == pytest.approx(0.5, rel=0.01)
        kurtosis = np.mean(x ** 4) / np.var(x) ** 2
        assert kurtosis == pytest.approx(kurtosis_of(family), rel=0.03)

    def test_uniform_support(self, rng: np.random.Generator) -> None:
        x = sample_entries(InitScheme("uniform", "range", 0.2), 10_000, 0.2 ** 2 / 3.0, rng)
        assert np.max(np.abs(x)) <= 0.2

    def test_orthogonal(self, rng: np.random.Generator) -> None:
        q = sample_orthogonal(6, rng)
        assert np.allclose(q.T @ q, np.eye(6), atol=1e-12)
        with pytest.raises(ShapeError):
            sample_matrix(InitScheme("orthogonal"), 3, 4, rng)

    def test_fan_in_override(self, rng: np.random.Generator) -> None:
        m = sample_matrix(InitScheme("gaussian", "xavier"), 2000, 50, rng, fan_in=1)
        assert np.var(m) == pytest.approx(1.0, rel=0.02)
        assert math.isclose(np.var(sample_matrix(InitScheme("gaussian", "xavier"), 2000, 50, rng)), 0.02, rel_tol=0.02)
