"""Robust controller synthesis over ellipsoidal uncertainty.

All programs act on a region ``Theta = {(A, B) : Delta' D Delta <= I}``
centered at ``(A_hat, B_hat)``.  Notation used below:

* ``AB = (A_hat B_hat)``, shape ``(dx, dx + du)``
* ``F(K) = [I; K]``, so that ``A + B K = (A B) F(K)``

Two feasibility-equivalent stabilizing programs are provided:

robust SLS
    find ``X >= I, S, t in (0, 1)`` with
    ``[[X - I, A_hat X + B_hat S, 0], [*, X, [X; S]'], [0, [X; S], t D]] >= 0``,
    ``K = S X^{-1}``.

robust LQR
    minimize ``tr(diag(Q, R) Sigma)`` over ``Sigma >= 0, t >= 0`` with
    ``[[Sigma_xx - AB Sigma AB' - (t + sigma_w^2) I, AB Sigma], [*, t D - Sigma]] >= 0``,
    ``K = Sigma_ux Sigma_xx^{-1}``.

Every controller leaving this module has been checked against sampled
members of the region it claims to stabilize.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import (
    DimensionError,
    STABILITY_MARGIN,
    UnstableMatrixError,
    as_matrix,
    hinf_resolvent_norm,
    matrix_to_json,
    psd_sqrt,
    spectral_radius,
)
from .lqr import SdpFailure
from .sdp import INFEASIBLE, NUMERICAL_FAILURE, OPTIMAL, Affine, LmiProblem, bmat
from .sim import CostModel, LinearSystem
from .sysid import EllipsoidRegion, boundary_deltas, interior_deltas

__all__ = [
    "MU",
    "VERIFY_SAMPLES",
    "SynthesisCertificate",
    "SynthesisOutcome",
    "StrongStability",
    "robust_sls",
    "robust_lqr",
    "relaxed_sls",
    "minmax_controller",
    "bound_controller_norm",
    "sls_lmi",
    "sls_u_lmi",
    "lqr_lmi",
    "sls_to_lqr_solution",
    "lqr_to_sls_solution",
    "project_sigma",
    "sls_variables_from_lqr",
    "strong_stability",
    "feasibility_diagnostic",
    "verify_stabilizes",
    "closed_loop_samples",
]

MU = 1e-6
VERIFY_SAMPLES = 1000
VERIFY_SEED = 7
FEASIBLE = "feasible"


@dataclass
class SynthesisCertificate:
    """A controller together with the program values that certify it.

    ``variables`` holds ``X, S, t`` for the SLS programs and ``Sigma, t`` for
    robust LQR.  ``certified`` is True when ``K`` provably stabilizes the
    whole region (always for robust SLS/LQR; ``t < 1`` for relaxed SLS).
    """

    method: str
    K: np.ndarray
    region: EllipsoidRegion
    variables: dict
    objective: float
    certified: bool = True
    verification: dict = field(default_factory=dict)

    @property
    def t(self) -> float:
        return float(self.variables["t"])

    def to_json(self) -> dict:
        raw = {}
        for k, v in self.variables.items():
            raw[k] = matrix_to_json(v) if isinstance(v, np.ndarray) else float(v)
        return {
            "method": self.method,
            "K": matrix_to_json(self.K),
            "variables": raw,
            "objective": float(self.objective),
            "certified": bool(self.certified),
            "verification": self.verification,
            "region": self.region.to_json(),
        }


@dataclass
class SynthesisOutcome:
    """Result of a stabilizing synthesis attempt.

    ``status`` is ``"feasible"``, ``"infeasible"`` or ``"numerical-failure"``.
    ``marginal`` flags solver verdicts reached only at reduced accuracy.
    """

    status: str
    certificate: SynthesisCertificate | None = None
    marginal: bool = False
    solver_status: str = ""
    solve_time: float = 0.0

    @property
    def feasible(self) -> bool:
        return self.status == FEASIBLE


@dataclass
class StrongStability:
    kappa: float
    gamma: float
    H: np.ndarray
    L: np.ndarray
    slacks: dict = field(default_factory=dict)


def _F(K: np.ndarray) -> np.ndarray:
    return np.vstack([np.eye(K.shape[1]), K])


def closed_loop_samples(region: EllipsoidRegion, K, deltas) -> np.ndarray:
    """Stack of ``A + B K`` for ``(A B) = AB_hat + Delta'`` over ``deltas``."""
    F = _F(as_matrix(K))
    return (region.AB_hat @ F)[None] + np.transpose(deltas, (0, 2, 1)) @ F[None]


def verify_stabilizes(region: EllipsoidRegion, K, n_samples: int = VERIFY_SAMPLES,
                      rng=None, interior: bool = True) -> dict:
    """Spectral radii of ``A + B K`` over sampled members of ``region``.

    Samples ``n_samples`` boundary points (and as many interior points when
    ``interior``) plus the center.
    """
    rng = np.random.default_rng(VERIFY_SEED) if rng is None else rng
    K = as_matrix(K)
    parts = [np.zeros((1, region.D.shape[0], region.dx)),
             boundary_deltas(region, n_samples, rng)]
    if interior:
        parts.append(interior_deltas(region, n_samples, rng))
    loops = closed_loop_samples(region, K, np.concatenate(parts))
    radii = np.max(np.abs(np.linalg.eigvals(loops)), axis=1)
    violations = int(np.sum(radii >= 1.0 - STABILITY_MARGIN))
    return {
        "samples": int(loops.shape[0]),
        "max_spectral_radius": float(radii.max()),
        "violations": violations,
        "passed": violations == 0,
    }


def _solve_K(lhs: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    # K lhs = rhs  ->  lhs' K' = rhs'
    return np.linalg.solve(lhs.T, rhs.T).T


# -- LMI matrices evaluated at given values ---------------------------------

def sls_lmi(region: EllipsoidRegion, X, S, t) -> np.ndarray:
    """Robust SLS block matrix at numeric ``(X, S, t)``."""
    dx, n = region.dx, region.D.shape[0]
    XS = np.vstack([X, S])
    M = region.A_hat @ X + region.B_hat @ S
    return np.block([
        [X - np.eye(dx), M, np.zeros((dx, n))],
        [M.T, X, XS.T],
        [np.zeros((n, dx)), XS, t * region.D],
    ])


def sls_u_lmi(region: EllipsoidRegion, U, s) -> np.ndarray:
    """SLS program rewritten in ``U = F X F'``; PSD iff ``(U, s)`` is SLS feasible."""
    dx = region.dx
    AB = region.AB_hat
    return np.block([
        [U[:dx, :dx] - AB @ U @ AB.T - np.eye(dx), AB @ U],
        [U @ AB.T, s * region.D - U],
    ])


def lqr_lmi(region: EllipsoidRegion, Sigma, t, sigma_w_sq: float) -> np.ndarray:
    dx = region.dx
    AB = region.AB_hat
    return np.block([
        [Sigma[:dx, :dx] - AB @ Sigma @ AB.T - (t + sigma_w_sq) * np.eye(dx), AB @ Sigma],
        [Sigma @ AB.T, t * region.D - Sigma],
    ])


def _min_eig(M) -> float:
    return float(np.linalg.eigvalsh(0.5 * (M + M.T))[0])


# -- programs ----------------------------------------------------------------

def _sls_problem(region: EllipsoidRegion, mu: float, t_upper: float | None):
    dx, du, n = region.dx, region.du, region.D.shape[0]
    prob = LmiProblem()
    X = prob.symmetric("X", dx)
    S = prob.matrix("S", du, dx)
    t = prob.scalar("t", lower=mu, upper=t_upper)
    XS = bmat([[X], [S]])
    M = region.A_hat @ X + region.B_hat @ S
    prob.add_psd(bmat([
        [X - np.eye(dx), M, np.zeros((dx, n))],
        [M.T, X, XS.T],
        [np.zeros((n, dx)), XS, _scalar_times(t, region.D)],
    ]), "sls")
    prob.add_psd(X - mu * np.eye(dx), "X_pd")
    return prob, t


def _scalar_times(t_expr, M):
    """``t * M`` for a 1x1 affine ``t`` and constant matrix ``M``."""
    M = np.asarray(M, dtype=float)
    return Affine(t_expr.const[0, 0] * M, {k: C[0, 0] * M for k, C in t_expr.coeffs.items()})


def _outcome_from(sol, cert_builder) -> SynthesisOutcome:
    if sol.status == INFEASIBLE:
        return SynthesisOutcome(INFEASIBLE, None, sol.marginal, sol.solver_status, sol.solve_time)
    if sol.status != OPTIMAL:
        return SynthesisOutcome(NUMERICAL_FAILURE, None, sol.marginal, sol.solver_status,
                                sol.solve_time)
    cert = cert_builder(sol)
    if not cert.verification.get("passed", False):
        return SynthesisOutcome(NUMERICAL_FAILURE, cert, True, sol.solver_status, sol.solve_time)
    return SynthesisOutcome(FEASIBLE, cert, sol.marginal, sol.solver_status, sol.solve_time)


def robust_sls(region: EllipsoidRegion, mu: float = MU, tol: float = 1e-9,
               verify_samples: int = VERIFY_SAMPLES) -> SynthesisOutcome:
    """Feasibility form of the robust SLS program (constant objective).

    Strict constraints are tightened by ``mu``: ``X >= mu I`` and
    ``t in [mu, 1 - mu]``.
    """
    prob, _ = _sls_problem(region, mu, 1.0 - mu)
    sol = prob.solve(tol=tol)

    def build(sol):
        X, S = sol["X"], sol["S"]
        K = _solve_K(X, S)
        cert = SynthesisCertificate("robust_sls", K, region,
                                    {"X": X, "S": S, "t": sol["t"]}, 0.0)
        cert.verification = verify_stabilizes(region, K, verify_samples)
        return cert

    return _outcome_from(sol, build)


def robust_lqr(region: EllipsoidRegion, cost: CostModel, sigma_w_sq: float,
               tol: float = 1e-9, verify_samples: int = VERIFY_SAMPLES) -> SynthesisOutcome:
    """Robust LQR program; the objective bounds the worst-case cost over the region."""
    dx, n = region.dx, region.D.shape[0]
    if cost.Q.shape[0] != dx or cost.R.shape[0] != region.du:
        raise DimensionError("cost does not conform to the region")
    AB = region.AB_hat
    prob = LmiProblem()
    Sigma = prob.symmetric("Sigma", n)
    t = prob.scalar("t", lower=0.0)
    prob.add_psd(Sigma, "Sigma_psd")
    top = Sigma[:dx, :dx] - AB @ Sigma @ AB.T - _scalar_times(t, np.eye(dx)) \
        - sigma_w_sq * np.eye(dx)
    off = AB @ Sigma
    prob.add_psd(bmat([[top, off], [off.T, _scalar_times(t, region.D) - Sigma]]), "robust_lqr")
    prob.minimize((cost.block @ Sigma).trace())
    sol = prob.solve(tol=tol)

    def build(sol):
        Sig = sol["Sigma"]
        K = _solve_K(Sig[:dx, :dx], Sig[dx:, :dx])
        cert = SynthesisCertificate("robust_lqr", K, region,
                                    {"Sigma": Sig, "t": sol["t"]}, sol.objective)
        cert.verification = verify_stabilizes(region, K, verify_samples)
        return cert

    return _outcome_from(sol, build)


def relaxed_sls(region: EllipsoidRegion, mu: float = MU, tol: float = 1e-9,
                verify_samples: int = VERIFY_SAMPLES) -> tuple[SynthesisCertificate, float]:
    """Minimize ``t >= 0`` subject to the SLS block inequality.

    For ``t < 1`` the controller is certified on the full region.  Otherwise
    it is certified only on the shrunken ellipsoid with shape ``t D``; the
    verification is run against that smaller region.  Raises
    :class:`~robust_explore.lqr.SdpFailure` when the solver fails, which
    happens when the center itself is not stabilizable.
    """
    prob, t = _sls_problem(region, mu, None)
    prob.minimize(t)
    sol = prob.solve(tol=tol)
    if sol.status != OPTIMAL:
        raise SdpFailure(sol.status, f"relaxed SLS: {sol.solver_status}")
    X, S, tv = sol["X"], sol["S"], sol["t"]
    K = _solve_K(X, S)
    certified = tv <= 1.0 - mu
    check_region = region if certified else region.scaled(tv / (1.0 - mu))
    cert = SynthesisCertificate("relaxed_sls", K, region, {"X": X, "S": S, "t": tv}, tv,
                                certified=certified)
    cert.verification = verify_stabilizes(check_region, K, verify_samples)
    if not cert.verification["passed"]:
        raise SdpFailure(NUMERICAL_FAILURE, "relaxed SLS controller failed verification")
    return cert, tv


def _minmax_problem(region: EllipsoidRegion, K_fixed=None):
    dx, du, n = region.dx, region.du, region.D.shape[0]
    prob = LmiProblem()
    t = prob.scalar("t", lower=0.0)
    lam = prob.scalar("lam", lower=0.0)
    if K_fixed is None:
        K = prob.matrix("K", du, dx)
        F = bmat([[np.eye(dx)], [K]])
        C = region.A_hat + region.B_hat @ K
    else:
        K_fixed = as_matrix(K_fixed, "K")
        if K_fixed.shape != (du, dx):
            raise DimensionError("K does not conform to the region")
        F = _F(K_fixed)
        C = region.A_hat + region.B_hat @ K_fixed
    tI = _scalar_times(t, np.eye(dx))
    prob.add_psd(bmat([
        [tI, C.T, F.T],
        [C, tI - _scalar_times(lam, np.eye(dx)), np.zeros((dx, n))],
        [F, np.zeros((n, dx)), _scalar_times(lam, region.D)],
    ]), "minmax")
    prob.minimize(t)
    return prob


def minmax_controller(region: EllipsoidRegion, tol: float = 1e-9) -> tuple[np.ndarray, float]:
    """Gain minimizing the worst-case ``||A + B K||_2`` over the region.

    Returns ``(K, t)`` with ``||A + B K||_2 <= t`` on the whole region.
    """
    sol = _minmax_problem(region).solve(tol=tol)
    if sol.status != OPTIMAL:
        raise SdpFailure(sol.status, f"minmax: {sol.solver_status}")
    return np.atleast_2d(sol["K"]), float(sol["t"])


def bound_controller_norm(region: EllipsoidRegion, K, tol: float = 1e-9) -> float:
    """Smallest ``t`` with ``||A + B K||_2 <= t`` certified on the region for fixed ``K``."""
    sol = _minmax_problem(region, K).solve(tol=tol)
    if sol.status != OPTIMAL:
        raise SdpFailure(sol.status, f"norm bound: {sol.solver_status}")
    return float(sol["t"])


# -- solution maps between the two programs ----------------------------------

def sls_to_lqr_solution(cert: SynthesisCertificate, sigma_w_sq: float):
    """Map an SLS certificate ``(X, S, s)`` to a robust LQR point ``(Sigma, t)``.

    ``U = F X F'``, ``Sigma = sigma_w^2 / (1 - s) U``, ``t = s sigma_w^2 / (1 - s)``.
    """
    s = cert.t
    if not s < 1.0:
        raise ValueError("SLS multiplier must be below 1")
    F = _F(cert.K)
    U = F @ cert.variables["X"] @ F.T
    scale = sigma_w_sq / (1.0 - s)
    return scale * U, s * scale


def lqr_to_sls_solution(Sigma, t: float, sigma_w_sq: float):
    """``U = Sigma / (t + sigma_w^2)``, ``s = t / (t + sigma_w^2)``."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    denom = t + sigma_w_sq
    return np.asarray(Sigma) / denom, t / denom


def project_sigma(Sigma, dx: int) -> np.ndarray:
    """Replace ``Sigma`` by ``F Sigma_xx F'`` with ``K = Sigma_ux Sigma_xx^{-1}``.

    The projection drops the Schur complement of ``Sigma_xx`` from the input
    block; it keeps the robust LQR inequality and never raises the cost.
    """
    Sigma = np.asarray(Sigma)
    K = _solve_K(Sigma[:dx, :dx], Sigma[dx:, :dx])
    F = _F(K)
    return F @ Sigma[:dx, :dx] @ F.T


def sls_variables_from_lqr(Sigma, t: float, sigma_w_sq: float, dx: int):
    """Robust SLS variables ``(X, S, s)`` built from a robust LQR solution."""
    U, s = lqr_to_sls_solution(project_sigma(Sigma, dx), t, sigma_w_sq)
    return U[:dx, :dx], U[dx:, :dx], s


# -- strong stability ---------------------------------------------------------

def strong_stability(cert: SynthesisCertificate, sigma_w_sq: float,
                     n_samples: int = 200, rng=None) -> StrongStability:
    """``(kappa, gamma)``-strong stability parameters from a robust LQR solution.

    ``kappa^2 = tr(Sigma) / sigma_w^2``, ``gamma = 1 / (2 kappa^2)``,
    ``H = Sigma_xx^{1/2}``, ``L = H^{-1} (A_hat + B_hat K) H``.  SLS
    certificates are first mapped to the LQR form.  ``slacks`` records each
    defining inequality as ``bound - value`` at the center and the worst case
    over sampled members of the region.
    """
    if "Sigma" in cert.variables:
        Sigma = cert.variables["Sigma"]
    else:
        Sigma, _ = sls_to_lqr_solution(cert, sigma_w_sq)
    region = cert.region
    dx = region.dx
    Sxx = Sigma[:dx, :dx]
    if np.linalg.eigvalsh(0.5 * (Sxx + Sxx.T))[0] <= 1e-12 * (1 + np.abs(Sxx).max()):
        raise np.linalg.LinAlgError("Sigma_xx is singular")
    kappa = float(np.sqrt(np.trace(Sigma) / sigma_w_sq))
    gamma = 1.0 / (2.0 * kappa ** 2)
    H = psd_sqrt(Sxx)
    H_inv = np.linalg.inv(H)
    K = cert.K
    L = H_inv @ (region.A_hat + region.B_hat @ K) @ H

    rng = np.random.default_rng(VERIFY_SEED) if rng is None else rng
    deltas = np.concatenate([boundary_deltas(region, n_samples, rng),
                             interior_deltas(region, n_samples, rng)])
    loops = closed_loop_samples(region, K, deltas)
    L_samples = H_inv[None] @ loops @ H[None]
    worst_L = float(np.max(np.linalg.norm(L_samples, ord=2, axis=(1, 2))))
    slacks = {
        "K_norm": kappa - float(np.linalg.norm(K, 2)),
        "L_norm": (1.0 - gamma) - float(np.linalg.norm(L, 2)),
        "L_norm_region": (1.0 - gamma) - worst_L,
        "H_condition": kappa - float(np.linalg.norm(H, 2) * np.linalg.norm(H_inv, 2)),
        "similarity": float(np.linalg.norm(H @ L @ H_inv - (region.A_hat + region.B_hat @ K))),
    }
    return StrongStability(kappa, gamma, H, L, slacks)


# -- sufficient condition -----------------------------------------------------

def feasibility_diagnostic(sys: LinearSystem, K, region: EllipsoidRegion,
                           grid_points: int = 2048) -> tuple[float, float, bool]:
    """One-sided feasibility test ``lhs <= lambda_min(D)``.

    ``lhs = ((1 + sqrt 2)(1 + ||K||_2) ||(zI - A - B K)^{-1}||_Hinf)^2`` for a
    gain ``K`` stabilizing ``sys``, the system the region is meant to cover.
    A True verdict implies robust SLS is feasible; False implies nothing.
    """
    K = as_matrix(K, "K")
    Acl = sys.A + sys.B @ K
    if spectral_radius(Acl) >= 1.0 - STABILITY_MARGIN:
        raise UnstableMatrixError("K does not stabilize the system")
    hinf = hinf_resolvent_norm(Acl, grid_points)
    lhs = ((1.0 + np.sqrt(2.0)) * (1.0 + np.linalg.norm(K, 2)) * hinf) ** 2
    rhs = region.min_eig()
    return float(lhs), float(rhs), bool(lhs <= rhs)
