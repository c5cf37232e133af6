"""
Implementation tests package.

This package contains tests for the chain, MLP and convolution
engines of vanishlab.

Author: s2659865
Date: October 2026
"""