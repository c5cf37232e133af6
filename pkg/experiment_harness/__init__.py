"""
experiment_harness - Configuration-driven experiment runner for vanishlab.

This package turns the vanishlab laboratories into reproducible CSV/JSON
artifacts: experiment specs, sub-seed management, parallel trial fan-out,
bootstrap statistics, sidecar metadata and the verification suite.

Author: s2659865
Date: October 2026
"""
