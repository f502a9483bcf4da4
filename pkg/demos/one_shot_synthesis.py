"""Synthesize controllers for a hand-written credibility region.

Shows the four programs side by side and checks the robust certificate by
sampling the region boundary.
"""

import numpy as np

from robust_explore import (
    CostModel,
    EllipsoidRegion,
    minmax_controller,
    relaxed_sls,
    robust_lqr,
    robust_sls,
    strong_stability,
    verify_stabilizes,
)

region = EllipsoidRegion(
    A_hat=[[1.01, 0.01, 0.0], [0.01, 1.01, 0.01], [0.0, 0.01, 1.01]],
    B_hat=np.eye(3),
    D=400.0 * np.eye(6),
)
cost = CostModel.identity(3, 3)

sls = robust_sls(region)
lqr = robust_lqr(region, cost, sigma_w_sq=1.0)
print("robust SLS :", sls.status)
print("robust LQR :", lqr.status)

if lqr.feasible:
    cert = lqr.certificate
    print("K =\n", np.round(cert.K, 4))
    check = verify_stabilizes(region, cert.K)
    print(f"sampled worst spectral radius {check['max_spectral_radius']:.4f} over "
          f"{check['samples']} members, violations {check['violations']}")
    ss = strong_stability(cert, 1.0)
    print(f"strong stability: kappa {ss.kappa:.3f}, gamma {ss.gamma:.4f}")

_, t = relaxed_sls(region)
K_mm, t_mm = minmax_controller(region)
print(f"relaxed SLS multiplier {t:.4f}; min-max bound on ||A + B K|| {t_mm:.4f}")
