"""
vanishlab - A verification laboratory for vanishing gradients and curvature.

This package implements the closed-form statistics of randomly initialized
deep networks (forward-pass moments, chain distributions, gradient and
Hessian scaling, escape-time bounds) together with an empirical engine of
random chains, MLPs and convolutional nets that checks each formula by
Monte-Carlo and oracle comparison.

Version: 1.0

Author: s2659865
Date: October 2026
"""
