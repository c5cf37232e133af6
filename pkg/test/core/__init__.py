"""
Core tests package.

This package contains tests for the initialization schemes and the
closed-form theory oracle of vanishlab.

Author: s2659865
Date: October 2026
"""