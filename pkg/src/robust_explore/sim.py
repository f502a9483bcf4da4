"""Linear system simulation and cost accounting.

Noise is drawn from :class:`numpy.random.Generator` (PCG64 bit generator,
ziggurat method for normals).  Every function that consumes randomness takes
the generator explicitly, so a run is replayed bit for bit from its seed.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .linalg import DimensionError, as_matrix, check_symmetric, min_eigenvalue_sym

__all__ = [
    "LinearSystem",
    "NoiseModel",
    "CostModel",
    "Trajectory",
    "step",
    "stage_cost",
    "total_exploration_cost",
    "save_trajectory_csv",
    "load_trajectory_csv",
]


@dataclass(frozen=True)
class LinearSystem:
    """Transition pair ``(A, B)`` of ``x' = A x + B u + w``."""

    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        A = as_matrix(self.A, "A")
        B = as_matrix(self.B, "B")
        if A.shape[0] != A.shape[1]:
            raise DimensionError(f"A must be square, got {A.shape}")
        if B.shape[0] != A.shape[0]:
            raise DimensionError(f"B has {B.shape[0]} rows, A has {A.shape[0]}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def dx(self) -> int:
        return self.A.shape[0]

    @property
    def du(self) -> int:
        return self.B.shape[1]

    @property
    def AB(self) -> np.ndarray:
        """The stacked ``(A B)`` matrix, shape ``(dx, dx + du)``."""
        return np.hstack([self.A, self.B])

    @classmethod
    def from_AB(cls, AB, dx: int) -> "LinearSystem":
        AB = as_matrix(AB)
        return cls(AB[:, :dx], AB[:, dx:])


@dataclass(frozen=True)
class NoiseModel:
    sigma_w_sq: float = 1.0
    sigma_u_sq: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not (self.sigma_w_sq > 0 and self.sigma_u_sq > 0):
            raise ValueError("noise variances must be positive")

    def generator(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)


@dataclass(frozen=True)
class CostModel:
    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        Q = check_symmetric(self.Q, "Q")
        R = check_symmetric(self.R, "R")
        if min_eigenvalue_sym(Q) <= 0 or min_eigenvalue_sym(R) <= 0:
            raise ValueError("Q and R must be positive definite")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)

    @classmethod
    def identity(cls, dx: int, du: int) -> "CostModel":
        return cls(np.eye(dx), np.eye(du))

    @property
    def block(self) -> np.ndarray:
        """``diag(Q, R)``."""
        dx, du = self.Q.shape[0], self.R.shape[0]
        out = np.zeros((dx + du, dx + du))
        out[:dx, :dx] = self.Q
        out[dx:, dx:] = self.R
        return out


@dataclass
class Trajectory:
    """States ``x_0..x_T``, inputs ``u_0..u_{T-1}`` and their stage costs."""

    states: list = field(default_factory=list)
    inputs: list = field(default_factory=list)
    stage_costs: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.inputs)

    def append(self, u, x_next, cost: float) -> None:
        self.inputs.append(np.asarray(u, dtype=float))
        self.states.append(np.asarray(x_next, dtype=float))
        self.stage_costs.append(float(cost))


def _vec(v, n: int, name: str) -> np.ndarray:
    arr = np.asarray(v, dtype=float).reshape(-1)
    if arr.shape[0] != n:
        raise DimensionError(f"{name} has length {arr.shape[0]}, expected {n}")
    return arr


def step(sys: LinearSystem, x, u, noise: NoiseModel, rng: np.random.Generator,
         w=None) -> np.ndarray:
    """Advance the system one step.

    ``w`` overrides the sampled process noise; tests pass zeros here to make
    the dynamics exact.  When ``w`` is given the generator is not touched.
    """
    x = _vec(x, sys.dx, "x")
    u = _vec(u, sys.du, "u")
    if w is None:
        w = np.sqrt(noise.sigma_w_sq) * rng.standard_normal(sys.dx)
    else:
        w = _vec(w, sys.dx, "w")
    return sys.A @ x + sys.B @ u + w


def stage_cost(cost: CostModel, x, u) -> float:
    x = _vec(x, cost.Q.shape[0], "x")
    u = _vec(u, cost.R.shape[0], "u")
    return float(x @ cost.Q @ x + u @ cost.R @ u)


def total_exploration_cost(traj: Trajectory, terminal_P) -> float:
    """Sum of stage costs plus the terminal penalty ``x_T' P x_T``."""
    if len(traj.states) == 0:
        raise ValueError("empty trajectory")
    P = check_symmetric(terminal_P, "terminal_P")
    if min_eigenvalue_sym(P) < -1e-9 * (1 + np.abs(P).max()):
        raise ValueError("terminal_P must be positive semidefinite")
    xT = np.asarray(traj.states[-1], dtype=float)
    return float(sum(traj.stage_costs) + xT @ P @ xT)


def save_trajectory_csv(traj: Trajectory, path) -> None:
    """Columns: ``step, x0..x{dx-1}, u0..u{du-1}, stage_cost``.

    Row ``i`` holds ``x_i``, ``u_i`` and ``c_i``; the final row holds ``x_T``
    with empty input and cost fields.
    """
    dx = len(traj.states[0])
    du = len(traj.inputs[0]) if traj.inputs else 0
    header = ["step"] + [f"x{j}" for j in range(dx)] + [f"u{j}" for j in range(du)]
    header.append("stage_cost")
    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i, x in enumerate(traj.states):
            row = [i] + [repr(float(v)) for v in x]
            if i < len(traj.inputs):
                row += [repr(float(v)) for v in traj.inputs[i]]
                row.append(repr(traj.stage_costs[i]))
            else:
                row += [""] * (du + 1)
            writer.writerow(row)


def load_trajectory_csv(path) -> Trajectory:
    with open(Path(path), newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        dx = sum(1 for h in header if h.startswith("x"))
        du = sum(1 for h in header if h.startswith("u"))
        traj = Trajectory()
        for row in reader:
            traj.states.append(np.array([float(v) for v in row[1:1 + dx]]))
            if row[1 + dx] != "":
                traj.inputs.append(np.array([float(v) for v in row[1 + dx:1 + dx + du]]))
                traj.stage_costs.append(float(row[-1]))
    return traj
