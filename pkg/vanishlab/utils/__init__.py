"""
Utility modules for vanishlab.

Author: s2659865
Date: October 2026
"""
