"""
Harness tests package.

This package contains tests for experiment specs, statistics, the
parallel runner, the command line and the verify suite.

Author: s2659865
Date: October 2026
"""