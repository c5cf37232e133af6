"""
Test utilities package.

This package contains utility functions and fixtures for testing
vanishlab.

Author: s2659865
Date: October 2026
"""