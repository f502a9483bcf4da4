"""Linear matrix inequality problems solved with an interior-point conic solver.

Every decision variable is flattened into scalar coordinates.  An affine
matrix expression stores one coefficient matrix per coordinate it touches
plus a constant term; an LMI block is such an expression required to be
positive semidefinite.  Assembly maps each block to a PSD cone in the
solver's scaled-triangle layout, which is exactly :func:`svec`.

The backend is Clarabel.  Everything solver specific sits in
:func:`_solve_clarabel`; the rest of the package only sees
:class:`LmiProblem` and :class:`ConicSolution`.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
import scipy.sparse as sp

from .linalg import SymmetryError, check_symmetric, min_eigenvalue_sym

__all__ = [
    "AssemblyError",
    "Affine",
    "LmiProblem",
    "ConicSolution",
    "svec",
    "smat",
    "bmat",
    "OPTIMAL",
    "INFEASIBLE",
    "NUMERICAL_FAILURE",
    "DEFAULT_TOL",
    "FEAS_TOL",
]

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
NUMERICAL_FAILURE = "numerical-failure"

DEFAULT_TOL = 1e-8
FEAS_TOL = 1e-7

_SQRT2 = np.sqrt(2.0)


class AssemblyError(ValueError):
    """A malformed problem; distinct from an infeasible one."""


def svec(M) -> np.ndarray:
    """Scaled lower-triangular stacking, row by row.

    Off-diagonal entries are multiplied by sqrt(2) so that
    ``svec(X) @ svec(Y) == trace(X @ Y)``.
    """
    M = check_symmetric(M)
    rows, cols = np.tril_indices(M.shape[0])
    scale = np.where(rows == cols, 1.0, _SQRT2)
    return M[rows, cols] * scale


def smat(v) -> np.ndarray:
    v = np.asarray(v, dtype=float).reshape(-1)
    n = int(round((np.sqrt(8 * v.size + 1) - 1) / 2))
    if n * (n + 1) // 2 != v.size:
        raise ValueError(f"length {v.size} is not a triangular number")
    rows, cols = np.tril_indices(n)
    vals = v / np.where(rows == cols, 1.0, _SQRT2)
    M = np.zeros((n, n))
    M[rows, cols] = vals
    M[cols, rows] = vals
    return M


class Affine:
    """Matrix-valued affine function of the scalar coordinates of a problem.

    ``value(x) = const + sum_k x[k] * coeffs[k]``.  Supports the handful of
    operations needed to write block LMIs: sums, products with constant
    matrices, transposes, scalar multiples and block assembly via :func:`bmat`.
    """

    __slots__ = ("const", "coeffs")
    # make ndarray @ Affine and ndarray + Affine dispatch to the reflected methods
    __array_ufunc__ = None

    def __init__(self, const, coeffs: Mapping[int, np.ndarray] | None = None):
        self.const = np.atleast_2d(np.asarray(const, dtype=float))
        self.coeffs = dict(coeffs) if coeffs else {}

    @property
    def shape(self) -> tuple[int, int]:
        return self.const.shape

    @classmethod
    def constant(cls, M) -> "Affine":
        return cls(M)

    @staticmethod
    def _lift(other, shape) -> "Affine":
        if isinstance(other, Affine):
            return other
        arr = np.asarray(other, dtype=float)
        if arr.ndim == 0:
            arr = np.full(shape, float(arr))
        return Affine(arr)

    def __add__(self, other) -> "Affine":
        other = self._lift(other, self.shape)
        if other.shape != self.shape:
            raise AssemblyError(f"shape mismatch {self.shape} + {other.shape}")
        coeffs = dict(self.coeffs)
        for k, C in other.coeffs.items():
            coeffs[k] = coeffs[k] + C if k in coeffs else C
        return Affine(self.const + other.const, coeffs)

    __radd__ = __add__

    def __neg__(self) -> "Affine":
        return Affine(-self.const, {k: -C for k, C in self.coeffs.items()})

    def __sub__(self, other) -> "Affine":
        return self + (-self._lift(other, self.shape))

    def __rsub__(self, other) -> "Affine":
        return self._lift(other, self.shape) + (-self)

    def __mul__(self, c) -> "Affine":
        """Scalar multiple, or ``t * M`` for a 1x1 expression ``t`` and constant ``M``."""
        arr = np.asarray(c, dtype=float)
        if arr.ndim == 0:
            c = float(arr)
            return Affine(c * self.const, {k: c * C for k, C in self.coeffs.items()})
        if self.shape != (1, 1):
            raise AssemblyError("only 1x1 expressions can scale a matrix")
        M = np.atleast_2d(arr)
        return Affine(self.const[0, 0] * M, {k: C[0, 0] * M for k, C in self.coeffs.items()})

    __rmul__ = __mul__

    def __matmul__(self, M) -> "Affine":
        M = np.atleast_2d(np.asarray(M, dtype=float))
        return Affine(self.const @ M, {k: C @ M for k, C in self.coeffs.items()})

    def __rmatmul__(self, M) -> "Affine":
        M = np.atleast_2d(np.asarray(M, dtype=float))
        return Affine(M @ self.const, {k: M @ C for k, C in self.coeffs.items()})

    @property
    def T(self) -> "Affine":
        return Affine(self.const.T, {k: C.T for k, C in self.coeffs.items()})

    def trace(self) -> "Affine":
        return Affine([[np.trace(self.const)]],
                      {k: np.array([[np.trace(C)]]) for k, C in self.coeffs.items()})

    def __getitem__(self, idx) -> "Affine":
        return Affine(self.const[idx], {k: np.atleast_2d(C[idx]) for k, C in self.coeffs.items()})

    def value(self, x) -> np.ndarray:
        out = self.const.copy()
        for k, C in self.coeffs.items():
            out += x[k] * C
        return out


def bmat(blocks) -> Affine:
    """Assemble a block matrix from Affine objects, arrays, or ``None`` (zeros)."""
    rows = len(blocks)
    cols = len(blocks[0])
    heights = [None] * rows
    widths = [None] * cols
    for i, row in enumerate(blocks):
        if len(row) != cols:
            raise AssemblyError("ragged block layout")
        for j, b in enumerate(row):
            if b is None:
                continue
            shape = b.shape if isinstance(b, Affine) else np.atleast_2d(b).shape
            if heights[i] not in (None, shape[0]) or widths[j] not in (None, shape[1]):
                raise AssemblyError("inconsistent block dimensions")
            heights[i], widths[j] = shape[0], shape[1]
    if None in heights or None in widths:
        raise AssemblyError("every block row and column needs one sized entry")
    r_off = np.concatenate([[0], np.cumsum(heights)])
    c_off = np.concatenate([[0], np.cumsum(widths)])
    const = np.zeros((r_off[-1], c_off[-1]))
    coeffs: dict[int, np.ndarray] = {}
    for i, row in enumerate(blocks):
        for j, b in enumerate(row):
            if b is None:
                continue
            rs = slice(r_off[i], r_off[i + 1])
            cs = slice(c_off[j], c_off[j + 1])
            b = b if isinstance(b, Affine) else Affine(b)
            const[rs, cs] = b.const
            for k, C in b.coeffs.items():
                if k not in coeffs:
                    coeffs[k] = np.zeros_like(const)
                coeffs[k][rs, cs] = C
    return Affine(const, coeffs)


@dataclass
class _Variable:
    name: str
    kind: str  # "scalar" | "symmetric" | "matrix"
    shape: tuple[int, int]
    index: np.ndarray  # coordinate index for each entry, same shape


@dataclass
class ConicSolution:
    status: str
    values: dict = field(default_factory=dict)
    objective: float = float("nan")
    dual_objective: float = float("nan")
    max_primal_residual: float = float("nan")
    min_block_eig: float = float("nan")
    solve_time: float = 0.0
    iterations: int = 0
    marginal: bool = False
    solver_status: str = ""

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL

    def __getitem__(self, name):
        return self.values[name]


class LmiProblem:
    """A semidefinite program in named matrix and scalar variables.

    Example
    -------
    >>> prob = LmiProblem()
    >>> t = prob.scalar("t")
    >>> prob.add_psd(t * np.eye(1) - np.array([[2.0]]))
    >>> prob.minimize(t)
    >>> round(prob.solve()["t"], 6)
    2.0
    """

    def __init__(self):
        self._vars: dict[str, _Variable] = {}
        self._n = 0
        self.blocks: list[tuple[str, Affine]] = []
        self.equalities: list[tuple[str, Affine]] = []
        self.bounds: list[tuple[int, float, float]] = []  # (coord, sign, offset): sign*x - offset >= 0
        self.objective: Affine | None = None

    @property
    def n_coords(self) -> int:
        return self._n

    def _new(self, name, kind, shape, index) -> None:
        if name in self._vars:
            raise AssemblyError(f"duplicate variable {name!r}")
        self._vars[name] = _Variable(name, kind, shape, index)

    def scalar(self, name: str, lower: float | None = None,
               upper: float | None = None) -> Affine:
        k = self._n
        self._n += 1
        self._new(name, "scalar", (1, 1), np.array([[k]]))
        if lower is not None:
            self.bounds.append((k, 1.0, float(lower)))
        if upper is not None:
            self.bounds.append((k, -1.0, -float(upper)))
        return Affine(np.zeros((1, 1)), {k: np.ones((1, 1))})

    def symmetric(self, name: str, n: int) -> Affine:
        index = np.zeros((n, n), dtype=int)
        coeffs = {}
        for i in range(n):
            for j in range(i + 1):
                k = self._n
                self._n += 1
                index[i, j] = index[j, i] = k
                E = np.zeros((n, n))
                E[i, j] = E[j, i] = 1.0
                coeffs[k] = E
        self._new(name, "symmetric", (n, n), index)
        return Affine(np.zeros((n, n)), coeffs)

    def matrix(self, name: str, rows: int, cols: int) -> Affine:
        index = np.zeros((rows, cols), dtype=int)
        coeffs = {}
        for i in range(rows):
            for j in range(cols):
                k = self._n
                self._n += 1
                index[i, j] = k
                E = np.zeros((rows, cols))
                E[i, j] = 1.0
                coeffs[k] = E
        self._new(name, "matrix", (rows, cols), index)
        return Affine(np.zeros((rows, cols)), coeffs)

    def add_psd(self, expr: Affine, name: str | None = None) -> None:
        expr = expr if isinstance(expr, Affine) else Affine(expr)
        r, c = expr.shape
        if r != c:
            raise AssemblyError(f"LMI block must be square, got {expr.shape}")
        for k in expr.coeffs:
            if k >= self._n:
                raise AssemblyError("block references an undeclared variable")
        try:
            check_symmetric(expr.const)
            for C in expr.coeffs.values():
                check_symmetric(C)
        except SymmetryError as exc:
            raise AssemblyError(f"LMI block {name!r} is not symmetric") from exc
        self.blocks.append((name or f"block{len(self.blocks)}", expr))

    def add_equal(self, expr: Affine, name: str | None = None) -> None:
        """Constrain every entry of ``expr`` to zero."""
        self.equalities.append((name or f"eq{len(self.equalities)}", expr))

    def minimize(self, expr) -> None:
        expr = expr if isinstance(expr, Affine) else Affine(expr)
        if expr.shape != (1, 1):
            raise AssemblyError("objective must be scalar")
        self.objective = expr

    def maximize(self, expr) -> None:
        self.minimize(-expr)

    def _objective_vector(self) -> tuple[np.ndarray, float]:
        q = np.zeros(self._n)
        if self.objective is None:
            return q, 0.0
        for k, C in self.objective.coeffs.items():
            q[k] += C[0, 0]
        return q, float(self.objective.const[0, 0])

    def extract(self, x) -> dict:
        out = {}
        for name, var in self._vars.items():
            vals = np.asarray(x)[var.index]
            out[name] = float(vals[0, 0]) if var.kind == "scalar" else vals
        return out

    def evaluate_blocks(self, x) -> list[np.ndarray]:
        return [expr.value(x) for _, expr in self.blocks]

    def verify(self, x, feas_tol: float = FEAS_TOL) -> tuple[bool, float, float]:
        """Independent check of a candidate point.

        Returns ``(ok, worst_scaled_violation, min_eigenvalue)``; each block's
        minimum eigenvalue is compared to ``-feas_tol * (1 + max|block|)``.
        """
        worst = 0.0
        min_eig = np.inf
        for F in self.evaluate_blocks(x):
            F = 0.5 * (F + F.T)
            lam = min_eigenvalue_sym(F)
            min_eig = min(min_eig, lam)
            worst = max(worst, -lam / (1.0 + np.abs(F).max()))
        for k, sign, offset in self.bounds:
            viol = -(sign * x[k] - offset)
            worst = max(worst, viol / (1.0 + abs(offset)))
        for _, expr in self.equalities:
            E = expr.value(x)
            worst = max(worst, np.abs(E).max() / (1.0 + np.abs(expr.const).max()))
        return worst <= feas_tol, float(worst), float(min_eig)

    def solve(self, tol: float = DEFAULT_TOL, feas_tol: float = FEAS_TOL,
              max_iter: int = 200) -> ConicSolution:
        if self._n == 0:
            raise AssemblyError("problem has no variables")
        if not self.blocks and not self.bounds and not self.equalities:
            raise AssemblyError("problem has no constraints")
        return _solve_clarabel(self, tol, feas_tol, max_iter)

    def to_json(self) -> str:
        """Debug dump: variables, dense block coefficients, bounds and objective."""

        def aff(expr: Affine) -> dict:
            return {
                "const": expr.const.tolist(),
                "terms": [[int(k), C.tolist()] for k, C in sorted(expr.coeffs.items())],
            }

        doc = {
            "n_coords": self._n,
            "variables": [
                {"name": v.name, "kind": v.kind, "shape": list(v.shape),
                 "index": v.index.tolist()}
                for v in self._vars.values()
            ],
            "bounds": [{"coord": k, "sign": s, "offset": o} for k, s, o in self.bounds],
            "blocks": [{"name": n, **aff(e)} for n, e in self.blocks],
            "equalities": [{"name": n, **aff(e)} for n, e in self.equalities],
            "objective": aff(self.objective) if self.objective is not None else None,
        }
        return json.dumps(doc)


def _assemble(problem: LmiProblem):
    """Standard form ``A x + s = b, s in K`` for the backend."""
    import clarabel

    rows, cols, vals = [], [], []
    b_parts = []
    cones = []
    offset = 0

    if problem.equalities:
        n_eq = 0
        for _, expr in problem.equalities:
            m = expr.const.size
            b_parts.append(-expr.const.ravel())
            for k, C in expr.coeffs.items():
                nz = np.nonzero(C.ravel())[0]
                rows.extend(offset + n_eq + nz)
                cols.extend([k] * nz.size)
                vals.extend(C.ravel()[nz])
            n_eq += m
        cones.append(clarabel.ZeroConeT(n_eq))
        offset += n_eq

    if problem.bounds:
        # sign * x - offset >= 0  ->  -sign * x + s = -offset
        for i, (k, sign, off) in enumerate(problem.bounds):
            rows.append(offset + i)
            cols.append(k)
            vals.append(-sign)
        b_parts.append(np.array([-off for _, _, off in problem.bounds]))
        cones.append(clarabel.NonnegativeConeT(len(problem.bounds)))
        offset += len(problem.bounds)

    for _, expr in problem.blocks:
        m = expr.shape[0]
        length = m * (m + 1) // 2
        # s = svec(F0 + sum x_k F_k)  ->  -sum x_k svec(F_k) + s = svec(F0)
        b_parts.append(svec(expr.const))
        for k, C in expr.coeffs.items():
            v = svec(C)
            nz = np.nonzero(v)[0]
            rows.extend(offset + nz)
            cols.extend([k] * nz.size)
            vals.extend(-v[nz])
        cones.append(clarabel.PSDTriangleConeT(m))
        offset += length

    A = sp.csc_matrix((vals, (rows, cols)), shape=(offset, problem.n_coords))
    b = np.concatenate(b_parts) if b_parts else np.zeros(0)
    return A, b, cones


def _solve_clarabel(problem: LmiProblem, tol: float, feas_tol: float,
                    max_iter: int) -> ConicSolution:
    import clarabel

    A, b, cones = _assemble(problem)
    q, q0 = problem._objective_vector()
    P = sp.csc_matrix((problem.n_coords, problem.n_coords))

    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.max_iter = max_iter
    settings.tol_feas = tol
    settings.tol_gap_abs = tol
    settings.tol_gap_rel = tol
    settings.tol_infeas_abs = tol
    settings.tol_infeas_rel = tol

    t0 = time.perf_counter()
    raw = clarabel.DefaultSolver(P, q, A, b, cones, settings).solve()
    elapsed = time.perf_counter() - t0
    code = str(raw.status)
    x = np.asarray(raw.x, dtype=float)

    sol = ConicSolution(status=NUMERICAL_FAILURE, solve_time=elapsed,
                        iterations=int(raw.iterations), solver_status=code)
    if code in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
        sol.status = INFEASIBLE
        sol.marginal = code.startswith("Almost")
        return sol
    if code not in ("Solved", "AlmostSolved") or not np.all(np.isfinite(x)):
        return sol

    ok, worst, min_eig = problem.verify(x, feas_tol)
    sol.values = problem.extract(x)
    sol.objective = float(q @ x + q0)
    sol.dual_objective = float(raw.obj_val_dual + q0)
    sol.max_primal_residual = worst
    sol.min_block_eig = min_eig
    sol.marginal = code.startswith("Almost")
    sol.status = OPTIMAL if ok else NUMERICAL_FAILURE
    return sol
