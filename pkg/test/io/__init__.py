"""
Input/output tests package.

This package contains tests for the result and raw tensor
file handling of vanishlab.

Author: s2659865
Date: October 2026
"""