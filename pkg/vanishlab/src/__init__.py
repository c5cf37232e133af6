"""
Source modules for vanishlab.

This package contains the weight distributions, the closed-form theory
oracle, and the chain, MLP and convolutional laboratories.

Author: s2659865
Date: October 2026
"""
