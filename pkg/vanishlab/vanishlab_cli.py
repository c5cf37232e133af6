#!/usr/bin/env python3
"""
vanishlab_cli.py

Vanishing gradient and curvature laboratory. Chains, MLPs and FCNs.

Version 1.0, last updated in October 2026.

This module is the command-line entry point of vanishlab. It forwards the
subcommands predict, chain, mlp, conv and verify to the experiment
harness, which evaluates closed forms, runs random-network scans and
checks theory against simulation.

Author: s2659865
Date: October 2026
"""
import sys
from typing import List, Optional


def getVersion():
    """Return the version number of vanishlab."""
    return 1.0


def main(argv: Optional[List[str]] = None) -> int:
    """
    Run one subcommand.

    Args:
        argv: Arguments without the program name (defaults to sys.argv[1:])

    Returns:
        Process exit code
    """
    from experiment_harness.experiment_harness import main as harness_main
    return harness_main(sys.argv[1:] if argv is None else argv)


def vanishCommLineIntf():
    """Command-line interface for vanishlab; exits with the subcommand's code."""
    sys.exit(main())


if __name__ == "__main__":
    vanishCommLineIntf()
