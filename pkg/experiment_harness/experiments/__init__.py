"""
Experiment implementations, one run_*_experiment entry point per kind.

Author: s2659865
Date: October 2026
"""
