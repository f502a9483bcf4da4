"""Known-system LQR: Riccati iteration, closed-loop cost, CEC, and the covariance SDP."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_discrete_lyapunov

from .linalg import DimensionError, as_matrix, spectral_radius, STABILITY_MARGIN
from .sdp import LmiProblem, NUMERICAL_FAILURE, INFEASIBLE
from .sim import CostModel, LinearSystem

__all__ = [
    "DareError",
    "SdpFailure",
    "RiccatiSolution",
    "ClosedLoopCost",
    "NominalSdpResult",
    "riccati_map",
    "solve_dare",
    "controller_cost",
    "cec_controller",
    "nominal_lqr_sdp",
]

DIVERGENCE_NORM = 1e12


class DareError(RuntimeError):
    """Riccati iteration did not converge (typically a non-stabilizable pair)."""


class SdpFailure(RuntimeError):
    """The conic solver reported infeasibility or failed numerically."""

    def __init__(self, status: str, message: str = ""):
        super().__init__(message or status)
        self.status = status


@dataclass
class RiccatiSolution:
    P: np.ndarray
    K_star: np.ndarray
    iterations: int
    residual: float


@dataclass
class ClosedLoopCost:
    """Average infinite-horizon cost of a static controller.

    ``stable`` is False when the closed loop is not Schur stable; ``value``
    and ``P`` are then ``None``.
    """

    stable: bool
    value: float | None = None
    P: np.ndarray | None = None


@dataclass
class NominalSdpResult:
    Sigma: np.ndarray
    K: np.ndarray
    objective: float
    tightness: float


def riccati_map(P, A, B, Q, R) -> np.ndarray:
    """``Q + A'PA - A'PB (R + B'PB)^{-1} B'PA``."""
    BtPA = B.T @ P @ A
    G = R + B.T @ P @ B
    out = Q + A.T @ P @ A - BtPA.T @ np.linalg.solve(G, BtPA)
    return 0.5 * (out + out.T)


def _gain(P, A, B, R) -> np.ndarray:
    return -np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)


def solve_dare(sys: LinearSystem, cost: CostModel, tol: float = 1e-12,
               max_iter: int = 100_000) -> RiccatiSolution:
    """Value iteration ``P <- riccati_map(P)`` started at ``P = Q``.

    Stops when ``||P_next - P||_F <= tol (1 + ||P||_F)``.  Raises
    :class:`DareError` when ``||P||_F`` exceeds 1e12 or the iteration budget
    runs out.
    """
    A, B, Q, R = sys.A, sys.B, cost.Q, cost.R
    if Q.shape[0] != sys.dx or R.shape[0] != sys.du:
        raise DimensionError("cost does not conform to the system")
    P = Q.copy()
    for it in range(1, max_iter + 1):
        P_next = riccati_map(P, A, B, Q, R)
        norm = np.linalg.norm(P_next)
        if not np.isfinite(norm) or norm > DIVERGENCE_NORM:
            raise DareError(f"Riccati iteration diverged after {it} steps")
        residual = np.linalg.norm(P_next - P)
        P = P_next
        if residual <= tol * (1.0 + norm):
            final = float(np.linalg.norm(riccati_map(P, A, B, Q, R) - P))
            return RiccatiSolution(P, _gain(P, A, B, R), it, final)
    raise DareError(f"Riccati iteration did not converge in {max_iter} steps")


def controller_cost(sys: LinearSystem, cost: CostModel, K, sigma_w_sq: float) -> ClosedLoopCost:
    """``sigma_w^2 tr(P_K)`` with ``P_K = Q + K'RK + (A+BK)' P_K (A+BK)``."""
    K = as_matrix(K, "K")
    if K.shape != (sys.du, sys.dx):
        raise DimensionError("K does not conform to the system")
    Acl = sys.A + sys.B @ K
    if spectral_radius(Acl) >= 1.0 - STABILITY_MARGIN:
        return ClosedLoopCost(False)
    P = solve_discrete_lyapunov(Acl.T, cost.Q + K.T @ cost.R @ K)
    P = 0.5 * (P + P.T)
    return ClosedLoopCost(True, float(sigma_w_sq * np.trace(P)), P)


def cec_controller(region, cost: CostModel) -> np.ndarray | None:
    """Certainty-equivalent gain for the region's center, or ``None`` if the DARE fails."""
    try:
        return solve_dare(region.nominal, cost).K_star
    except DareError:
        return None


def nominal_lqr_sdp(sys: LinearSystem, cost: CostModel, sigma_w_sq: float,
                    tol: float = 1e-9) -> NominalSdpResult:
    """Minimize ``tr(diag(Q, R) Sigma)`` s.t. ``Sigma_xx >= (A B) Sigma (A B)' + sigma_w^2 I``.

    The gain is ``Sigma_ux Sigma_xx^{-1}``.  ``tightness`` is the largest
    absolute eigenvalue of ``Sigma_xx - (A B) Sigma (A B)' - sigma_w^2 I``,
    which vanishes at the optimum.
    """
    dx, du = sys.dx, sys.du
    AB = sys.AB
    prob = LmiProblem()
    Sigma = prob.symmetric("Sigma", dx + du)
    prob.add_psd(Sigma, "Sigma")
    Sxx = Sigma[:dx, :dx]
    prob.add_psd(Sxx - AB @ Sigma @ AB.T - sigma_w_sq * np.eye(dx), "lyapunov")
    prob.minimize((cost.block @ Sigma).trace())
    sol = prob.solve(tol=tol)
    if not sol.optimal:
        status = INFEASIBLE if sol.status == INFEASIBLE else NUMERICAL_FAILURE
        raise SdpFailure(status, f"nominal LQR SDP: {sol.solver_status}")
    S = sol["Sigma"]
    K = np.linalg.solve(S[:dx, :dx].T, S[dx:, :dx].T).T
    gap = S[:dx, :dx] - AB @ S @ AB.T - sigma_w_sq * np.eye(dx)
    tight = float(np.max(np.abs(np.linalg.eigvalsh(0.5 * (gap + gap.T)))))
    return NominalSdpResult(S, K, sol.objective, tight)
