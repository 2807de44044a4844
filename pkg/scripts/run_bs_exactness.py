#!/usr/bin/env python3
"""Bohr-Sommerfeld lattice exactness for the complex harmonic oscillator.

Compares the truncated-operator spectrum, the lattice predictor with the
half-integer Maslov offset, and the action-density count integral.
"""
import json
import sys

from bsweyl.experiments import BSExactnessConfig, run_bs_exactness

if __name__ == "__main__":
    outdir = sys.argv[1] if len(sys.argv) > 1 else "out-bs-exactness"
    report = run_bs_exactness(BSExactnessConfig(), outdir)
    print(json.dumps(report, indent=2))
    sys.exit(0 if report["pass"] else 1)
