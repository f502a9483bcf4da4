import math

import numpy as np
import pytest

from robust_explore.linalg import is_stabilizing
from robust_explore.lqr import (
    DareError,
    cec_controller,
    controller_cost,
    nominal_lqr_sdp,
    riccati_map,
    solve_dare,
)
from robust_explore.sim import CostModel, LinearSystem
from robust_explore.sysid import EllipsoidRegion

from conftest import random_stabilizable


def scalar_riccati(a, b, q=1.0, r=1.0):
    # positive root of b^2 P^2 + (r - q b^2 - a^2 r) P - q r = 0
    lin = r - q * b * b - a * a * r
    return (-lin + math.sqrt(lin * lin + 4 * b * b * q * r)) / (2 * b * b)


def lyapunov_by_kron(Acl, W):
    n = Acl.shape[0]
    vec = np.linalg.solve(np.eye(n * n) - np.kron(Acl.T, Acl.T), W.reshape(-1, order="F"))
    return vec.reshape(n, n, order="F")


def test_dare_trivial():
    sol = solve_dare(LinearSystem([[0.0]], [[1.0]]), CostModel.identity(1, 1))
    assert sol.P[0, 0] == pytest.approx(1.0)
    assert sol.K_star[0, 0] == pytest.approx(0.0)


def test_dare_scalar_closed_form():
    sol = solve_dare(LinearSystem([[1.5]], [[1.8]]), CostModel.identity(1, 1))
    assert sol.P[0, 0] == pytest.approx(scalar_riccati(1.5, 1.8), abs=1e-8)


def test_dare_dean(dean):
    sol = solve_dare(dean, CostModel.identity(3, 3))
    assert sol.residual < 1e-9
    assert is_stabilizing(sol.K_star, dean)
    assert np.allclose(riccati_map(sol.P, dean.A, dean.B, np.eye(3), np.eye(3)), sol.P, atol=1e-9)


def test_dare_diverges_on_unstabilizable():
    with pytest.raises(DareError):
        solve_dare(LinearSystem([[2.0]], [[0.0]]), CostModel.identity(1, 1))


def test_controller_cost_examples():
    cost = CostModel.identity(1, 1)
    res = controller_cost(LinearSystem([[0.0]], [[1.0]]), cost, [[0.0]], 1.0)
    assert res.stable and res.value == pytest.approx(1.0)
    assert not controller_cost(LinearSystem([[1.5]], [[1.8]]), cost, [[0.0]], 1.0).stable


def test_controller_cost_matches_dare_and_kron_oracle():
    rng = np.random.default_rng(0)
    for _ in range(10):
        sys = random_stabilizable(rng, 3, 2)
        cost = CostModel.identity(3, 2)
        sol = solve_dare(sys, cost)
        res = controller_cost(sys, cost, sol.K_star, 2.0)
        assert res.value == pytest.approx(2.0 * np.trace(sol.P), rel=1e-6)
        Acl = sys.A + sys.B @ sol.K_star
        P = lyapunov_by_kron(Acl, np.eye(3) + sol.K_star.T @ sol.K_star)
        assert np.allclose(res.P, P, atol=1e-8 * (1 + np.abs(P).max()))


def test_cec_controller_examples():
    cost = CostModel.identity(2, 1)
    K = cec_controller(EllipsoidRegion(np.zeros((2, 2)), np.zeros((2, 1)), np.eye(3)), cost)
    assert np.allclose(K, 0.0)
    rng = np.random.default_rng(1)
    for _ in range(10):
        sys = random_stabilizable(rng, 2, 1)
        region = EllipsoidRegion(sys.A, sys.B, np.eye(3))
        K = cec_controller(region, cost)
        assert np.allclose(K, solve_dare(sys, cost).K_star)
        assert is_stabilizing(K, sys)


def test_cec_controller_failure_is_none():
    region = EllipsoidRegion([[2.0]], [[0.0]], np.eye(2))
    assert cec_controller(region, CostModel.identity(1, 1)) is None


def test_nominal_sdp_trivial():
    res = nominal_lqr_sdp(LinearSystem([[0.0]], [[1.0]]), CostModel.identity(1, 1), 1.0)
    assert res.objective == pytest.approx(1.0, abs=1e-6)
    assert res.K[0, 0] == pytest.approx(0.0, abs=1e-5)


def test_nominal_sdp_matches_dare_on_2x2():
    rng = np.random.default_rng(2)
    for _ in range(8):
        sys = random_stabilizable(rng, 2, 2)
        cost = CostModel.identity(2, 2)
        sol = solve_dare(sys, cost)
        res = nominal_lqr_sdp(sys, cost, 1.0)
        assert res.objective == pytest.approx(np.trace(sol.P), rel=1e-4)
        assert np.abs(res.K - sol.K_star).max() < 1e-3
        assert res.tightness < 1e-5 * (1 + np.abs(res.Sigma).max())
