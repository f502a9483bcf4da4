"""Worst-case cost of certainty-equivalent vs robust LQR as uncertainty grows.

For a few random 3-state systems we place a ball of radius r around the
nominal model, design both controllers from the nominal point, and evaluate
each on sampled members of the ball. A cost of ``inf`` means some member
was destabilized (or, for the robust design, the program was infeasible).
"""

import numpy as np

from robust_explore import bench

radii = np.round(np.linspace(0.0, 1.2, 13), 2)
rows = bench.radius_compare(n_systems=3, radii=radii, n_perturb=100, seed=1)

for k in range(3):
    print(f"system {k}")
    for r in (row for row in rows if row["system"] == k):
        print(f"  r = {r['radius']:.2f}   CEC {r['cec_cost']:10.3g}   robust {r['robust_cost']:10.3g}")
    print(f"  CEC stable up to r = {bench.stabilized_radius(rows, k, 'cec_cost'):g}, "
          f"robust up to r = {bench.stabilized_radius(rows, k, 'robust_cost'):g}")
