#!/usr/bin/env python3
"""Print the smallness-of-refraction margins for the bundled media and the
discrete coercivity estimate of a small assembled system."""

import os
import sys

from raytransport.cli import run
from raytransport.refractive import affine_model, coercivity_margin

HERE = os.path.dirname(os.path.abspath(__file__))

if __name__ == "__main__":
    rep = coercivity_margin(affine_model(2.0, [1.0, 0.0]), alpha0=0.4)
    print(
        f"affine n = 2 + x1, alpha0 = 0.4: sup_riemannian = {rep.sup_riemannian:.6g}, "
        f"sup_euclidean = {rep.sup_euclidean:.6g}, satisfied={str(rep.satisfied).lower()}"
    )
    cfg = os.path.join(HERE, "..", "configs", "paper4_coercivity.cfg")
    sys.exit(run(["run", cfg, *sys.argv[1:]]))
