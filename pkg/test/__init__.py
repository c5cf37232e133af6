"""
test - Automated tests for the vanishlab project.

This package contains tests for the vanishlab library and its
experiment harness.

Author: s2659865
Date: October 2026
"""