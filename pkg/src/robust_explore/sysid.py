"""Regularized least-squares identification and Bayesian credibility ellipsoids.

With the isotropic prior ``vec(A B) ~ N(0, sigma_w^2 / lambda I)`` the
posterior mean is the ridge estimate ``(A B) = M' (V + lambda I)^{-1}`` and
the credibility region is the matrix ellipsoid

    Theta = {(A, B) : Delta' D Delta <= I},  Delta' = (A B) - (A_hat B_hat),
    D = (V + lambda I) / (c_delta sigma_w^2),

with ``c_delta`` the upper ``delta`` quantile of a chi-square law with
``dx (dx + du)`` degrees of freedom.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaincc

from .linalg import (
    DimensionError,
    as_matrix,
    check_symmetric,
    matrix_from_json,
    matrix_to_json,
    psd_inv_sqrt,
)
from .sim import LinearSystem, NoiseModel

__all__ = [
    "GramianAccumulator",
    "EllipsoidRegion",
    "absorb",
    "rls_estimate",
    "chi2_quantile",
    "credibility_region",
    "region_contains",
    "ball_region_from",
    "lambda_heuristic",
    "sample_boundary",
    "sample_interior",
]

CONTAINS_TOL = 1e-9


@dataclass
class GramianAccumulator:
    """Running sums ``V = sum z z'`` and ``M = sum z x_next'`` with ``z = (x, u)``."""

    V: np.ndarray
    M: np.ndarray
    lam: float
    n_samples: int = 0

    @classmethod
    def empty(cls, dx: int, du: int, lam: float) -> "GramianAccumulator":
        if not lam > 0:
            raise ValueError("lambda must be positive")
        n = dx + du
        return cls(np.zeros((n, n)), np.zeros((n, dx)), float(lam))

    @property
    def dx(self) -> int:
        return self.M.shape[1]

    @property
    def du(self) -> int:
        return self.M.shape[0] - self.M.shape[1]

    @property
    def regularized(self) -> np.ndarray:
        return self.V + self.lam * np.eye(self.V.shape[0])

    def condition_number(self) -> float:
        w = np.linalg.eigvalsh(self.regularized)
        return float(w[-1] / w[0])

    def absorb(self, x, u, x_next) -> "GramianAccumulator":
        x = np.asarray(x, dtype=float).reshape(-1)
        u = np.asarray(u, dtype=float).reshape(-1)
        x_next = np.asarray(x_next, dtype=float).reshape(-1)
        if x.size != self.dx or u.size != self.du or x_next.size != self.dx:
            raise DimensionError("transition does not conform to the accumulator")
        z = np.concatenate([x, u])
        self.V += np.outer(z, z)
        self.M += np.outer(z, x_next)
        self.n_samples += 1
        return self

    def copy(self) -> "GramianAccumulator":
        return GramianAccumulator(self.V.copy(), self.M.copy(), self.lam, self.n_samples)


def absorb(acc: GramianAccumulator, x, u, x_next) -> GramianAccumulator:
    """Return a new accumulator with the transition ``(x, u) -> x_next`` added."""
    return acc.copy().absorb(x, u, x_next)


def rls_estimate(acc: GramianAccumulator) -> tuple[np.ndarray, np.ndarray]:
    # (A B)' = (V + lam I)^{-1} M.  Explosive trajectories give V entries
    # spanning dozens of orders of magnitude, so equilibrate symmetrically
    # with the diagonal before solving.
    G = acc.regularized
    s = 1.0 / np.sqrt(np.diag(G))
    AB = (s[:, None] * np.linalg.solve(s[:, None] * G * s[None, :], s[:, None] * acc.M)).T
    return AB[:, :acc.dx], AB[:, acc.dx:]


def chi2_quantile(dof: int, delta: float) -> float:
    """``c`` with ``P(Z > c) = delta`` for ``Z ~ chi2(dof)``.

    Bisection on the regularized upper incomplete gamma function
    ``Q(dof/2, c/2)``, stopped at 1e-12 relative bracket width.
    """
    if int(dof) != dof or dof < 1:
        raise ValueError("dof must be a positive integer")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    k = 0.5 * dof

    def tail(c):
        return gammaincc(k, 0.5 * c)

    lo, hi = 0.0, max(1.0, float(dof))
    while tail(hi) > delta:
        lo, hi = hi, 2.0 * hi
    while hi - lo > 1e-12 * hi:
        mid = 0.5 * (lo + hi)
        if tail(mid) > delta:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class EllipsoidRegion:
    """Matrix ellipsoid ``{(A, B) : Delta' D Delta <= I}`` around ``(A_hat, B_hat)``."""

    A_hat: np.ndarray
    B_hat: np.ndarray
    D: np.ndarray
    delta: float | None = None
    c_delta: float | None = None

    def __post_init__(self):
        A = as_matrix(self.A_hat, "A_hat")
        B = as_matrix(self.B_hat, "B_hat")
        D = check_symmetric(self.D, "D")
        if A.shape[0] != A.shape[1] or B.shape[0] != A.shape[0]:
            raise DimensionError("estimates do not conform")
        if D.shape[0] != A.shape[0] + B.shape[1]:
            raise DimensionError("D must have size dx + du")
        if np.linalg.eigvalsh(D)[0] <= 0:
            raise ValueError("D must be positive definite")
        object.__setattr__(self, "A_hat", A)
        object.__setattr__(self, "B_hat", B)
        object.__setattr__(self, "D", 0.5 * (D + D.T))

    @property
    def dx(self) -> int:
        return self.A_hat.shape[0]

    @property
    def du(self) -> int:
        return self.B_hat.shape[1]

    @property
    def AB_hat(self) -> np.ndarray:
        return np.hstack([self.A_hat, self.B_hat])

    @property
    def nominal(self) -> LinearSystem:
        return LinearSystem(self.A_hat, self.B_hat)

    def min_eig(self) -> float:
        return float(np.linalg.eigvalsh(self.D)[0])

    def scaled(self, c: float) -> "EllipsoidRegion":
        """Same center, shape ``c D`` (radii divided by ``sqrt(c)``)."""
        return EllipsoidRegion(self.A_hat, self.B_hat, c * self.D, self.delta, self.c_delta)

    def to_json(self) -> dict:
        return {
            "A_hat": matrix_to_json(self.A_hat),
            "B_hat": matrix_to_json(self.B_hat),
            "D": matrix_to_json(self.D),
            "delta": self.delta,
            "c_delta": self.c_delta,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "EllipsoidRegion":
        return cls(
            matrix_from_json(obj["A_hat"]),
            matrix_from_json(obj["B_hat"]),
            matrix_from_json(obj["D"]),
            obj.get("delta"),
            obj.get("c_delta"),
        )


def credibility_region(acc: GramianAccumulator, noise: NoiseModel,
                       delta: float) -> EllipsoidRegion:
    A_hat, B_hat = rls_estimate(acc)
    c = chi2_quantile(acc.dx * (acc.dx + acc.du), delta)
    D = acc.regularized / (c * noise.sigma_w_sq)
    return EllipsoidRegion(A_hat, B_hat, D, delta, c)


def region_contains(region: EllipsoidRegion, sys: LinearSystem) -> bool:
    if sys.A.shape != region.A_hat.shape or sys.B.shape != region.B_hat.shape:
        raise DimensionError("system does not conform to the region")
    Delta = (sys.AB - region.AB_hat).T
    return float(np.linalg.eigvalsh(Delta.T @ region.D @ Delta)[-1]) <= 1.0 + CONTAINS_TOL


def ball_region_from(region: EllipsoidRegion) -> EllipsoidRegion:
    """Smallest spectral-norm ball around the center containing the ellipsoid."""
    n = region.D.shape[0]
    return EllipsoidRegion(region.A_hat, region.B_hat, region.min_eig() * np.eye(n),
                           region.delta, region.c_delta)


def lambda_heuristic(C: float, dx: int, du: int, sigma_w_sq: float) -> float:
    """Prior precision ``2 sigma_w^2 Gamma(n/2 + 1) / C^2`` with ``n = dx (dx + du)``.

    Chosen so the Gaussian prior density stays below the uniform density on
    the Frobenius ball of radius ``C``.
    """
    if not C > 0:
        raise ValueError("C must be positive")
    n = dx * (dx + du)
    # lgamma keeps large n from overflowing before the division
    return float(math.exp(math.log(2.0 * sigma_w_sq) + math.lgamma(0.5 * n + 1.0)
                          - 2.0 * math.log(C)))


def _random_unit_spectral(rng, n: int, dx: int, count: int) -> np.ndarray:
    W = rng.standard_normal((count, n, dx))
    norms = np.linalg.norm(W, ord=2, axis=(1, 2))
    return W / norms[:, None, None]


def _systems_from_deltas(region: EllipsoidRegion, deltas) -> list[LinearSystem]:
    AB = region.AB_hat
    return [LinearSystem.from_AB(AB + d.T, region.dx) for d in deltas]


def _random_stiefel(rng, n: int, dx: int, count: int) -> np.ndarray:
    # Haar-distributed n x dx matrices with orthonormal columns (sign-fixed QR)
    Q, R = np.linalg.qr(rng.standard_normal((count, n, dx)))
    return Q * np.sign(np.diagonal(R, axis1=1, axis2=2))[:, None, :]


def boundary_deltas(region: EllipsoidRegion, count: int, rng) -> np.ndarray:
    """Stack of ``Delta`` matrices on the extreme boundary ``Delta' D Delta = I``.

    ``Delta = D^{-1/2} W`` with ``W`` uniform on the matrices with orthonormal
    columns.  These are the extreme points of the region, where every
    direction of ``Delta`` is at full radius; for ``dx = 1`` they coincide with
    the whole boundary surface.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    W = _random_stiefel(rng, region.D.shape[0], region.dx, count)
    return psd_inv_sqrt(region.D)[None] @ W


def sample_boundary(region: EllipsoidRegion, count: int, rng) -> list[LinearSystem]:
    """Systems on the extreme boundary of the ellipsoid (see :func:`boundary_deltas`)."""
    return _systems_from_deltas(region, boundary_deltas(region, count, rng))


def interior_deltas(region: EllipsoidRegion, count: int, rng) -> np.ndarray:
    """Points inside the region: a Gaussian direction normalized to unit
    spectral norm, shrunk by ``u^(1/n)`` with ``u`` uniform."""
    if count < 1:
        raise ValueError("count must be at least 1")
    n, dx = region.D.shape[0], region.dx
    W = _random_unit_spectral(rng, n, dx, count)
    radii = rng.uniform(size=count) ** (1.0 / (n * dx))
    return psd_inv_sqrt(region.D)[None] @ (W * radii[:, None, None])


def sample_interior(region: EllipsoidRegion, count: int, rng) -> list[LinearSystem]:
    return _systems_from_deltas(region, interior_deltas(region, count, rng))
