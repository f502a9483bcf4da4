import numpy as np
import pytest

from robust_explore.linalg import DimensionError
from robust_explore.sim import (
    CostModel,
    LinearSystem,
    NoiseModel,
    Trajectory,
    load_trajectory_csv,
    save_trajectory_csv,
    stage_cost,
    step,
    total_exploration_cost,
)


def test_step_exact_with_noise_hook():
    sys = LinearSystem([[1.5]], [[1.8]])
    rng = np.random.default_rng(0)
    state = rng.bit_generator.state
    assert step(sys, [1.0], [1.0], NoiseModel(), rng, w=[0.0])[0] == pytest.approx(3.3)
    assert rng.bit_generator.state == state  # hook leaves the generator alone
    z = step(LinearSystem(np.eye(2), np.eye(2)), np.zeros(2), np.zeros(2), NoiseModel(), rng,
             w=np.zeros(2))
    assert np.array_equal(z, np.zeros(2))


def test_step_replay_is_bitwise():
    sys = LinearSystem(np.eye(2) * 1.1, np.ones((2, 1)))

    def run(seed):
        rng = NoiseModel(seed=seed).generator()
        x = np.zeros(2)
        out = []
        for _ in range(30):
            x = step(sys, x, rng.standard_normal(1), NoiseModel(), rng)
            out.append(x)
        return np.array(out)

    assert np.array_equal(run(4), run(4))
    assert not np.array_equal(run(4), run(5))


def test_step_noise_variance():
    sys = LinearSystem(np.zeros((1, 1)), np.zeros((1, 1)))
    rng = np.random.default_rng(1)
    w = np.array([step(sys, [0.0], [0.0], NoiseModel(sigma_w_sq=4.0), rng)[0]
                  for _ in range(20000)])
    assert w.var() == pytest.approx(4.0, rel=0.05)


def test_step_dimension_error():
    with pytest.raises(DimensionError):
        step(LinearSystem(np.eye(2), np.eye(2)), np.zeros(3), np.zeros(2), NoiseModel(),
             np.random.default_rng(0))


def test_stage_cost_examples():
    assert stage_cost(CostModel.identity(2, 1), [0, 0], [0]) == 0.0
    assert stage_cost(CostModel.identity(2, 1), [1, 1], [2]) == pytest.approx(6.0)
    assert stage_cost(CostModel([[2.0]], [[1.0]]), [3.0], [1.0]) == pytest.approx(19.0)


def test_cost_model_rejects_indefinite():
    with pytest.raises(ValueError):
        CostModel([[-1.0]], [[1.0]])


def test_total_cost_examples():
    zero = Trajectory(states=[np.zeros(2)])
    zero.append(np.zeros(1), np.zeros(2), 0.0)
    assert total_exploration_cost(zero, np.eye(2)) == 0.0
    one = Trajectory(states=[np.array([1.0, 1.0])])
    one.append(np.array([2.0]), np.zeros(2), 6.0)
    assert total_exploration_cost(one, np.eye(2)) == pytest.approx(6.0)
    tail = Trajectory(states=[np.zeros(1)])
    tail.append(np.zeros(1), np.array([2.0]), 0.0)
    assert total_exploration_cost(tail, [[3.0]]) == pytest.approx(12.0)


def test_trajectory_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(2)
    traj = Trajectory(states=[rng.normal(size=2)])
    for _ in range(5):
        traj.append(rng.normal(size=1), rng.normal(size=2), float(rng.uniform()))
    path = tmp_path / "traj.csv"
    save_trajectory_csv(traj, path)
    back = load_trajectory_csv(path)
    assert len(back) == 5
    assert all(np.array_equal(a, b) for a, b in zip(traj.states, back.states))
    assert all(np.array_equal(a, b) for a, b in zip(traj.inputs, back.inputs))
    assert back.stage_costs == traj.stage_costs
