"""Online exploration: probe the system until a robust controller is certified.

At every step the learner plays an action, updates the ridge estimate and
its credibility ellipsoid, and tries a robust synthesis on the region.  The
first feasible (and verified) synthesis ends the run.

Randomness comes from two generators derived from ``NoiseModel.seed``: one
drives the trajectory (probing and process noise), the other the boundary
samples used by verification and by the CEC stopping rule.  Runs that share
a seed and a probing policy therefore see the same trajectory regardless of
the stopping rule, which makes stopping times directly comparable.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .linalg import is_stabilizing, matrix_to_json, STABILITY_MARGIN
from .lqr import SdpFailure, cec_controller, solve_dare, DareError
from .sim import CostModel, LinearSystem, NoiseModel, Trajectory, stage_cost, step, total_exploration_cost
from .synthesis import (
    VERIFY_SAMPLES,
    closed_loop_samples,
    minmax_controller,
    relaxed_sls,
    robust_lqr,
    robust_sls,
)
from .sysid import GramianAccumulator, ball_region_from, boundary_deltas, credibility_region

__all__ = [
    "POLICIES",
    "ProbingPolicy",
    "StepRecord",
    "ExplorationLog",
    "run_exploration",
    "cec_stopping_run",
]

POLICIES = ("vanilla", "cec", "minmax", "relaxed_sls")
CERTIFIED = "certified"
HORIZON_CAP = "horizon-cap"
SOLVER_FAILURE = "solver-failure"
MAX_CONDITION = 1e12
POLICY_VERIFY_SAMPLES = 200


@dataclass(frozen=True)
class ProbingPolicy:
    """``u ~ N(K_i x, sigma_u^2 I)`` where ``K_i`` depends on ``variant``.

    ``vanilla`` uses ``K_i = 0``; ``cec``, ``minmax`` and ``relaxed_sls``
    recompute ``K_i`` from the current credibility region every step and fall
    back to ``K_i = 0`` when that computation fails.
    """

    variant: str = "vanilla"
    sigma_u_sq: float = 1.0

    def __post_init__(self):
        if self.variant not in POLICIES:
            raise ValueError(f"unknown policy {self.variant!r}; choose from {POLICIES}")
        if not self.sigma_u_sq > 0:
            raise ValueError("sigma_u_sq must be positive")

    def gain(self, region, cost: CostModel) -> tuple[np.ndarray, float | None, bool]:
        """``(K_i, t_value, fell_back)`` for the current region."""
        zero = np.zeros((region.du, region.dx))
        if self.variant == "vanilla":
            return zero, None, False
        try:
            if self.variant == "cec":
                K = cec_controller(region, cost)
                return (zero, None, True) if K is None else (K, None, False)
            if self.variant == "minmax":
                K, t = minmax_controller(region)
                return K, t, False
            cert, t = relaxed_sls(region, verify_samples=POLICY_VERIFY_SAMPLES)
            return cert.K, t, False
        except (SdpFailure, DareError, np.linalg.LinAlgError):
            return zero, None, True


@dataclass
class StepRecord:
    step: int
    state: np.ndarray
    input: np.ndarray
    stage_cost: float
    synthesis_status: str
    t_value: float | None
    min_eig_D: float
    policy_fallback: bool = False


@dataclass
class ExplorationLog:
    records: list = field(default_factory=list)
    outcome: str = HORIZON_CAP
    steps: int = 0
    K: np.ndarray | None = None
    certificate: object = None
    total_cost: float = float("nan")
    stabilizes_true_system: bool | None = None
    trajectory: Trajectory | None = None
    final_region: object = None
    config: dict = field(default_factory=dict)

    @property
    def certified(self) -> bool:
        return self.outcome == CERTIFIED

    @property
    def log_cost(self) -> float:
        return float(np.log(self.total_cost)) if self.total_cost > 0 else float("nan")

    def to_json(self) -> dict:
        cert = self.certificate
        return {
            "config": self.config,
            "outcome": self.outcome,
            "steps": self.steps,
            "total_cost": self.total_cost,
            "log_cost": self.log_cost,
            "K": None if self.K is None else matrix_to_json(self.K),
            "stabilizes_true_system": self.stabilizes_true_system,
            "certificate": cert.to_json() if hasattr(cert, "to_json") else cert,
            "records": [
                {
                    "step": r.step,
                    "state": [float(v) for v in r.state],
                    "input": [float(v) for v in r.input],
                    "stage_cost": r.stage_cost,
                    "synthesis_status": r.synthesis_status,
                    "t_value": r.t_value,
                    "min_eig_D": r.min_eig_D,
                    "policy_fallback": r.policy_fallback,
                }
                for r in self.records
            ],
        }

    def save_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1))

    def save_csv(self, path) -> None:
        with open(Path(path), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "state_norm", "stage_cost", "min_eig_D",
                             "synthesis_status", "t_value"])
            for r in self.records:
                writer.writerow([r.step, repr(float(np.linalg.norm(r.state))),
                                 repr(r.stage_cost), repr(r.min_eig_D), r.synthesis_status,
                                 "" if r.t_value is None else repr(float(r.t_value))])


def _generators(seed: int):
    traj_seq, check_seq = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(traj_seq), np.random.default_rng(check_seq)


def _terminal_P(sys: LinearSystem, cost: CostModel) -> np.ndarray:
    return solve_dare(sys, cost).P


def _explore(sys, cost, noise, policy, delta, lam, max_horizon, stop_rule, config):
    """Shared loop; ``stop_rule(region, check_rng) -> (status, K, cert, t)``."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    traj_rng, check_rng = _generators(noise.seed)
    P_true = _terminal_P(sys, cost)
    dx, du = sys.dx, sys.du
    acc = GramianAccumulator.empty(dx, du, lam)
    region = credibility_region(acc, noise, delta)
    x = np.zeros(dx)
    traj = Trajectory(states=[x])
    log = ExplorationLog(trajectory=traj, config=config)
    sigma_u = np.sqrt(policy.sigma_u_sq)

    for i in range(max_horizon):
        K_i, t_policy, fell_back = policy.gain(region, cost)
        u = K_i @ x + sigma_u * traj_rng.standard_normal(du)
        x_next = step(sys, x, u, noise, traj_rng)
        c = stage_cost(cost, x, u)
        traj.append(u, x_next, c)
        if not np.all(np.isfinite(x_next)):
            log.outcome = SOLVER_FAILURE
            log.steps = i + 1
            break
        acc.absorb(x, u, x_next)
        region = credibility_region(acc, noise, delta)

        if acc.condition_number() < MAX_CONDITION:
            status, K, cert, t_stop = stop_rule(region, check_rng)
        else:
            status, K, cert, t_stop = "skipped", None, None, None
        t_val = t_stop if t_stop is not None else t_policy
        log.records.append(StepRecord(i + 1, x, u, c, status, t_val, region.min_eig(),
                                      fell_back))
        x = x_next
        if K is not None:
            log.outcome = CERTIFIED
            log.steps = i + 1
            log.K = K
            log.certificate = cert
            break
    else:
        log.steps = max_horizon

    log.final_region = region
    if np.all(np.isfinite(traj.states[-1])):
        log.total_cost = total_exploration_cost(traj, P_true)
    else:
        log.total_cost = float("inf")
    if log.K is not None:
        log.stabilizes_true_system = is_stabilizing(log.K, sys)
    return log


def run_exploration(sys: LinearSystem, cost: CostModel, noise: NoiseModel,
                    policy: ProbingPolicy, delta: float = 0.1, lam: float = 1.0,
                    synthesis: str = "robust_lqr", region_kind: str = "ellipsoid",
                    max_horizon: int = 2000) -> ExplorationLog:
    """Explore until ``synthesis`` is feasible on the credibility region.

    ``synthesis`` is ``"robust_sls"`` or ``"robust_lqr"``; ``region_kind``
    ``"ball"`` replaces each ellipsoid by its circumscribed spectral-norm ball
    before the stopping test (the policy still sees the ellipsoid).
    """
    if synthesis not in ("robust_sls", "robust_lqr"):
        raise ValueError(f"unknown synthesis {synthesis!r}")
    if region_kind not in ("ellipsoid", "ball"):
        raise ValueError(f"unknown region kind {region_kind!r}")

    def stop_rule(region, check_rng):
        target = ball_region_from(region) if region_kind == "ball" else region
        if synthesis == "robust_sls":
            out = robust_sls(target)
        else:
            out = robust_lqr(target, cost, noise.sigma_w_sq)
        if out.feasible:
            cert = out.certificate
            return out.status, cert.K, cert, cert.t
        return out.status, None, None, None

    config = {"policy": policy.variant, "synthesis": synthesis, "region": region_kind,
              "delta": delta, "lambda": lam, "seed": noise.seed, "max_horizon": max_horizon}
    return _explore(sys, cost, noise, policy, delta, lam, max_horizon, stop_rule, config)


def cec_stopping_run(sys: LinearSystem, cost: CostModel, noise: NoiseModel,
                     policy: ProbingPolicy, delta: float = 0.1, lam: float = 1.0,
                     n_boundary: int = VERIFY_SAMPLES, max_horizon: int = 2000) -> ExplorationLog:
    """Baseline stopping rule: stop once the CEC gain stabilizes ``n_boundary``
    sampled boundary systems of the current ellipsoid.

    The returned gain carries no robust certificate; sampling can miss
    destabilized members of the region.
    """

    def stop_rule(region, check_rng):
        K = cec_controller(region, cost)
        if K is None:
            return "dare-failure", None, None, None
        loops = closed_loop_samples(region, K, boundary_deltas(region, n_boundary, check_rng))
        radii = np.max(np.abs(np.linalg.eigvals(loops)), axis=1)
        worst = float(radii.max())
        if worst < 1.0 - STABILITY_MARGIN:
            return "cec-stable", K, {"method": "cec_sampled", "max_spectral_radius": worst,
                                     "samples": n_boundary}, None
        return "cec-unstable", None, None, None

    config = {"policy": policy.variant, "synthesis": "cec", "region": "ellipsoid",
              "delta": delta, "lambda": lam, "seed": noise.seed, "max_horizon": max_horizon,
              "n_boundary": n_boundary}
    return _explore(sys, cost, noise, policy, delta, lam, max_horizon, stop_rule, config)
