#!/usr/bin/env python3
"""Reproduce the bundled demo sweep: three viscosity solves on the paper4
medium with decreasing eps, relative errors against the characteristic
reference written to out/paper4_sweep/sweep.csv."""

import os
import sys

from raytransport.cli import run

HERE = os.path.dirname(os.path.abspath(__file__))

if __name__ == "__main__":
    cfg = os.path.join(HERE, "..", "configs", "paper4_sweep.cfg")
    sys.exit(run(["run", cfg, *sys.argv[1:]]))
