#!/usr/bin/env python3
"""
conftest.py

Shared pytest configuration for the vanishlab suite.
Re-exports the fixtures of test_fixtures.py so test modules can request
`rng`, the small MLPs, the line convolution config and `spec_file`
without importing them, and prints the package version and worker
setting in the report header.

Author: s2659865
Date: October 2026
"""

import os
import sys

# Add the project root to the path so imports work correctly
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from vanishlab.vanishlab_cli import getVersion
from experiment_harness.src.harness_core import THREADS_ENV

# Import fixtures to make them available globally
from test.utils.test_fixtures import rng, small_linear_mlp, small_relu_mlp, line_conv_config, spec_file


def pytest_report_header(config) -> str:
    return f"vanishlab {getVersion()}, {THREADS_ENV}={os.environ.get(THREADS_ENV, 'unset')}"
