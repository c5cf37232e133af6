"""
Core source code for the experiment harness.

This package contains the shared configuration, the trial runner, the
statistics and the reporting tools.

Author: s2659865
Date: October 2026
"""
