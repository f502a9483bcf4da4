import numpy as np
import pytest

from robust_explore.linalg import is_stabilizing
from robust_explore.lqr import controller_cost
from robust_explore.sim import CostModel, LinearSystem
from robust_explore.synthesis import (
    bound_controller_norm,
    closed_loop_samples,
    feasibility_diagnostic,
    lqr_lmi,
    lqr_to_sls_solution,
    minmax_controller,
    relaxed_sls,
    robust_lqr,
    robust_sls,
    sls_lmi,
    sls_to_lqr_solution,
    sls_variables_from_lqr,
    strong_stability,
    verify_stabilizes,
)
from robust_explore.sysid import EllipsoidRegion, boundary_deltas, sample_boundary, sample_interior

COST1 = CostModel.identity(1, 1)


def scalar_region(scale):
    return EllipsoidRegion([[1.5]], [[1.8]], scale * np.eye(2))


def rand_region(rng, dx, du, scale):
    n = dx + du
    G = rng.normal(size=(n, n))
    return EllipsoidRegion(rng.normal(scale=0.8, size=(dx, dx)), rng.normal(size=(dx, du)),
                           scale * (G @ G.T / n + np.eye(n)))


def min_eig(M):
    return np.linalg.eigvalsh(0.5 * (M + M.T))[0]


def test_robust_sls_scalar_examples():
    out = robust_sls(scalar_region(1e6))
    assert out.feasible
    rng = np.random.default_rng(0)
    assert all(is_stabilizing(out.certificate.K, s) for s in sample_boundary(scalar_region(1e6), 1000, rng))
    assert robust_sls(scalar_region(1e-6)).status == "infeasible"


def test_robust_sls_stable_center_tiny_region():
    region = EllipsoidRegion([[0.3, 0.1], [0.0, 0.5]], [[5.0], [-2.0]], 1e8 * np.eye(3))
    out = robust_sls(region)
    assert out.feasible
    assert is_stabilizing(np.zeros((1, 2)), region.nominal)


def test_robust_lqr_degenerate_region_reduces_to_nominal():
    out = robust_lqr(EllipsoidRegion([[0.0]], [[1.0]], 1e9 * np.eye(2)), COST1, 1.0)
    assert out.feasible
    assert out.certificate.objective == pytest.approx(1.0, abs=1e-4)
    assert abs(out.certificate.K[0, 0]) < 1e-3


def test_robust_lqr_objective_bounds_sampled_costs():
    rng = np.random.default_rng(1)
    region = scalar_region(100.0)
    out = robust_lqr(region, COST1, 1.0)
    assert out.feasible
    K = out.certificate.K
    systems = sample_boundary(region, 50, rng) + sample_interior(region, 50, rng)
    for s in systems:
        res = controller_cost(s, COST1, K, 1.0)
        assert res.stable and res.value <= out.certificate.objective + 1e-3


@pytest.mark.parametrize("scale", [1e-6, 10.0, 20.0, 100.0, 1e6])
def test_scalar_verdicts_match(scale):
    assert robust_sls(scalar_region(scale)).feasible == robust_lqr(scalar_region(scale), COST1, 1.0).feasible


def test_relaxed_sls_examples():
    _, t_big = relaxed_sls(scalar_region(1e-6))
    assert t_big >= 1.0
    cert, t_small = relaxed_sls(scalar_region(1e6))
    assert t_small < 1.0 and cert.certified
    ts = [relaxed_sls(scalar_region(c))[1] for c in (30.0, 300.0, 3000.0)]
    assert ts[0] >= ts[1] >= ts[2]


def test_relaxed_below_one_whenever_sls_feasible():
    rng = np.random.default_rng(2)
    for _ in range(10):
        region = rand_region(rng, 2, 1, 10 ** rng.uniform(0, 3))
        if robust_sls(region).feasible:
            assert relaxed_sls(region)[1] < 1.0


def test_minmax_near_exact_cancellation():
    K, t = minmax_controller(scalar_region(1e8))
    assert t <= 0.01
    assert K[0, 0] == pytest.approx(-1.5 / 1.8, abs=1e-3)


def test_minmax_bounds_samples_and_is_monotone():
    rng = np.random.default_rng(3)
    region = rand_region(rng, 2, 2, 50.0)
    K, t = minmax_controller(region)
    loops = closed_loop_samples(region, K, boundary_deltas(region, 1000, rng))
    assert t >= np.linalg.norm(loops, ord=2, axis=(1, 2)).max() - 1e-6
    _, t_tight = minmax_controller(region.scaled(4.0))
    assert t_tight <= t + 1e-7


def test_bound_controller_norm_consistency():
    rng = np.random.default_rng(4)
    region = rand_region(rng, 2, 1, 30.0)
    K, t = minmax_controller(region)
    assert bound_controller_norm(region, K) == pytest.approx(t, abs=1e-4)
    exact = EllipsoidRegion(region.A_hat, region.B_hat, 1e10 * np.eye(3))
    nominal = np.linalg.norm(region.A_hat + region.B_hat @ K, 2)
    assert bound_controller_norm(exact, K) == pytest.approx(nominal, abs=1e-4)


def test_solution_map_examples():
    U = np.array([[2.0, 0.4], [0.4, 1.0]])
    Sigma, t = 2 * U, 1.0
    U_back, s = lqr_to_sls_solution(Sigma, t, 1.0)
    assert s == pytest.approx(0.5) and np.allclose(U_back, U)
    assert lqr_to_sls_solution(Sigma, 0.0, 1.0)[1] == 0.0


def test_certificates_transfer_between_programs():
    rng = np.random.default_rng(5)
    checked = 0
    while checked < 10:
        region = rand_region(rng, int(rng.integers(1, 4)), int(rng.integers(1, 4)), 10 ** rng.uniform(1, 4))
        sls = robust_sls(region)
        lqr = robust_lqr(region, CostModel.identity(region.dx, region.du), 1.0)
        if not (sls.feasible and lqr.feasible):
            continue
        Sigma, t = sls_to_lqr_solution(sls.certificate, 1.0)
        M = lqr_lmi(region, Sigma, t, 1.0)
        assert min_eig(M) >= -1e-6 * (1 + np.abs(M).max())
        c = lqr.certificate
        X, S, s = sls_variables_from_lqr(c.variables["Sigma"], c.t, 1.0, region.dx)
        M = sls_lmi(region, X, S, s)
        assert min_eig(M) >= -1e-6 * (1 + np.abs(M).max())
        assert s < 1.0
        checked += 1


def test_strong_stability_nominal_example():
    out = robust_lqr(EllipsoidRegion([[0.0]], [[1.0]], 1e9 * np.eye(2)), COST1, 1.0)
    ss = strong_stability(out.certificate, 1.0)
    assert ss.kappa == pytest.approx(1.0, abs=1e-3)
    assert ss.gamma == pytest.approx(0.5, abs=1e-3)
    assert min(ss.slacks.values()) >= -1e-8 or ss.slacks["similarity"] < 1e-8


def test_strong_stability_random_certs():
    rng = np.random.default_rng(6)
    for _ in range(10):
        region = rand_region(rng, 2, 2, 10 ** rng.uniform(1.5, 3))
        out = robust_lqr(region, CostModel.identity(2, 2), 1.0)
        if not out.feasible:
            continue
        ss = strong_stability(out.certificate, 1.0)
        assert ss.kappa >= 1.0
        assert np.linalg.norm(ss.L, 2) <= 1 - ss.gamma + 1e-8
        for key in ("K_norm", "L_norm", "L_norm_region", "H_condition"):
            assert ss.slacks[key] >= -1e-8, key


def test_feasibility_diagnostic_examples():
    sys = LinearSystem([[1.5]], [[1.8]])
    K = [[-1.5 / 1.8]]
    lhs, rhs, pred = feasibility_diagnostic(sys, K, scalar_region(100.0))
    assert lhs == pytest.approx(((1 + np.sqrt(2)) * (1 + 5 / 6)) ** 2, rel=1e-9)
    assert pred and robust_sls(scalar_region(100.0)).feasible
    assert not feasibility_diagnostic(sys, K, scalar_region(10.0))[2]


def test_verification_reports_violations():
    region = scalar_region(1e-2)
    report = verify_stabilizes(region, [[-1.5 / 1.8]], 100)
    assert report["violations"] > 0 and not report["passed"]
