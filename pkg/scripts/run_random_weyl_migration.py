#!/usr/bin/env python3
"""Random perturbations push eigenvalue counts toward the Weyl law.

Quantizes the deformed oscillator, perturbs it with seeded complex
Gaussian matrices, and compares eigenvalue counts in a fixed window
against the phase-space volume prediction, seed by seed.
"""
import json
import sys

from bsweyl.experiments import (RandomWeylMigrationConfig,
                                run_random_weyl_migration)

if __name__ == "__main__":
    outdir = sys.argv[1] if len(sys.argv) > 1 else "out-random-weyl-migration"
    report = run_random_weyl_migration(RandomWeylMigrationConfig(), outdir)
    print(json.dumps(report, indent=2))
    sys.exit(0 if report["pass"] else 1)
