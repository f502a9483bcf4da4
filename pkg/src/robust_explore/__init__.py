"""Robust stabilizing controllers for unknown linear systems from one trajectory."""

from .explore import ExplorationLog, ProbingPolicy, cec_stopping_run, run_exploration
from .linalg import (
    DimensionError,
    SymmetryError,
    UnstableMatrixError,
    hinf_resolvent_norm,
    is_stabilizing,
    min_eigenvalue_sym,
    spectral_radius,
)
from .lqr import (
    DareError,
    SdpFailure,
    cec_controller,
    controller_cost,
    nominal_lqr_sdp,
    solve_dare,
)
from .sim import CostModel, LinearSystem, NoiseModel, Trajectory, step, total_exploration_cost
from .synthesis import (
    SynthesisCertificate,
    SynthesisOutcome,
    bound_controller_norm,
    feasibility_diagnostic,
    lqr_to_sls_solution,
    minmax_controller,
    relaxed_sls,
    robust_lqr,
    robust_sls,
    sls_to_lqr_solution,
    strong_stability,
    verify_stabilizes,
)
from .sysid import (
    EllipsoidRegion,
    GramianAccumulator,
    ball_region_from,
    chi2_quantile,
    credibility_region,
    lambda_heuristic,
    region_contains,
    rls_estimate,
    sample_boundary,
    sample_interior,
)

__version__ = "0.1.0"
