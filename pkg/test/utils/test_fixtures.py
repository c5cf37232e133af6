#!/usr/bin/env python3
"""
test_fixtures.py

Test fixtures for vanishlab tests.
This module provides reusable pytest fixtures that are shared across
multiple test modules to maintain consistency and reduce duplication.

Author: s2659865
Date: October 2026
"""

import os
import pytest
from typing import Any, Callable, Dict, Tuple

import numpy as np

from vanishlab.src.conv_lab import ConvConfig
from vanishlab.src.init_distributions import LINEAR, RELU, InitScheme, make_rng
from vanishlab.src.mlp_lab import MlpConfig, MlpDataset, MlpState, build_state, teacher_dataset
from test.utils.test_utilities import write_spec


@pytest.fixture
def rng() -> np.random.Generator:
    """A fresh seeded generator per test."""
    return make_rng(20261019)


@pytest.fixture
def small_linear_mlp() -> Tuple[MlpState, MlpDataset]:
    """
    A depth-3, width-3 linear network with Xavier weights and three teacher samples.

    Returns:
        (state, dataset); the state carries no forward cache yet
    """
    config = MlpConfig(L=3, d=3, activation=LINEAR, init=InitScheme("gaussian", "xavier"))
    gen = make_rng(7)
    state = build_state(config, gen)
    return state, teacher_dataset(config, 3, gen)


@pytest.fixture
def small_relu_mlp() -> Tuple[MlpState, MlpDataset]:
    """A depth-3, width-4 He ReLU network with four teacher samples."""
    config = MlpConfig(L=3, d=4, activation=RELU, init=InitScheme("gaussian", "he"))
    gen = make_rng(11)
    state = build_state(config, gen)
    return state, teacher_dataset(config, 4, gen)


@pytest.fixture
def line_conv_config() -> ConvConfig:
    """Two-layer, two-channel circular line convolution on 5 cells."""
    return ConvConfig("line", 5, 2, 3, "circular", 2, RELU, InitScheme("gaussian", "he"))


@pytest.fixture
def spec_file(tmp_path) -> Callable[[Dict[str, Any]], str]:
    """
    Factory writing an experiment document to a temporary JSON file.

    Returns:
        Function taking the document and returning the file path
    """
    counter = {"n": 0}

    def _write(document: Dict[str, Any]) -> str:
        counter["n"] += 1
        return write_spec(os.path.join(str(tmp_path), f"spec_{counter['n']}.json"), document)

    return _write


# Small sweeps shared by several test modules
SMALL_DEPTHS = [2, 3, 4]
QUICK_CHECKS = ["flow_bound", "oracle_equivalence"]
