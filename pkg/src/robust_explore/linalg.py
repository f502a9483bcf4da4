"""Dense linear-algebra helpers and spectral diagnostics.

All functions take and return plain :class:`numpy.ndarray` objects; nothing
here keeps state, so the helpers are safe to call from concurrent trial
runners.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "DimensionError",
    "SymmetryError",
    "UnstableMatrixError",
    "STABILITY_MARGIN",
    "as_matrix",
    "check_square",
    "check_symmetric",
    "spectral_radius",
    "hinf_resolvent_norm",
    "min_eigenvalue_sym",
    "is_stabilizing",
    "psd_sqrt",
    "psd_inv_sqrt",
    "matrix_to_json",
    "matrix_from_json",
]

STABILITY_MARGIN = 1e-9
DEFAULT_GRID = 2048


class DimensionError(ValueError):
    """Raised when matrix shapes do not conform."""


class SymmetryError(ValueError):
    """Raised when a matrix required to be symmetric is not."""


class UnstableMatrixError(ValueError):
    """Raised when an operation needs a Schur-stable matrix."""


def as_matrix(M, name: str = "matrix") -> np.ndarray:
    """Coerce scalars, vectors and nested lists into a finite 2-D float array."""
    arr = np.asarray(M, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    return arr


def check_square(M, name: str = "matrix") -> np.ndarray:
    arr = as_matrix(M, name)
    if arr.shape[0] != arr.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {arr.shape}")
    return arr


def check_symmetric(M, name: str = "matrix") -> np.ndarray:
    """Return ``M`` as an array after checking the symmetry tolerance.

    The tolerance is ``1e-9 * (1 + max|M|)`` on the entrywise asymmetry.
    """
    arr = check_square(M, name)
    scale = 1.0 + np.max(np.abs(arr), initial=0.0)
    if np.max(np.abs(arr - arr.T), initial=0.0) > 1e-9 * scale:
        raise SymmetryError(f"{name} is not symmetric")
    return arr


def spectral_radius(M) -> float:
    """Largest eigenvalue modulus of a square matrix."""
    arr = check_square(M)
    return float(np.max(np.abs(np.linalg.eigvals(arr))))


def hinf_resolvent_norm(M, grid_points: int = DEFAULT_GRID, left=None) -> float:
    """Grid estimate of the H-infinity norm of ``z -> left @ (zI - M)^{-1}``.

    The supremum over the unit circle is replaced by a maximum over
    ``grid_points`` equispaced angles starting at 0, so the value is a lower
    bound that increases towards the true norm as the grid is refined (grids
    of size N and 2N are nested).

    Parameters
    ----------
    M : array_like
        Square matrix with spectral radius below one.
    grid_points : int
        Number of angles; at least 64.
    left : array_like, optional
        Constant left factor; identity when omitted.
    """
    arr = check_square(M)
    if grid_points < 64:
        raise ValueError("grid_points must be at least 64")
    if spectral_radius(arr) >= 1.0:
        raise UnstableMatrixError("resolvent is unbounded on the unit circle")
    n = arr.shape[0]
    theta = 2.0 * np.pi * np.arange(grid_points) / grid_points
    z = np.exp(1j * theta)
    pencil = z[:, None, None] * np.eye(n)[None] - arr[None]
    resolvents = np.linalg.inv(pencil)
    if left is not None:
        L = as_matrix(left, "left")
        if L.shape[1] != n:
            raise DimensionError("left factor does not conform")
        resolvents = L[None] @ resolvents
    sv = np.linalg.svd(resolvents, compute_uv=False)
    return float(np.max(sv[:, 0]))


def min_eigenvalue_sym(M) -> float:
    arr = check_symmetric(M)
    return float(np.linalg.eigvalsh(0.5 * (arr + arr.T))[0])


def is_stabilizing(K, sys) -> bool:
    """True when ``rho(A + B K) < 1 - 1e-9`` for ``sys = (A, B)``."""
    A, B = sys.A, sys.B
    K = as_matrix(K, "K")
    if K.shape != (B.shape[1], A.shape[0]):
        raise DimensionError(
            f"K has shape {K.shape}, expected {(B.shape[1], A.shape[0])}"
        )
    return spectral_radius(A + B @ K) < 1.0 - STABILITY_MARGIN


def psd_sqrt(M, floor: float = 0.0) -> np.ndarray:
    """Symmetric square root via eigen-decomposition, eigenvalues clipped at ``floor``."""
    arr = check_symmetric(M)
    w, V = np.linalg.eigh(0.5 * (arr + arr.T))
    w = np.maximum(w, floor)
    return (V * np.sqrt(w)) @ V.T


def psd_inv_sqrt(M, floor: float = 1e-12) -> np.ndarray:
    arr = check_symmetric(M)
    w, V = np.linalg.eigh(0.5 * (arr + arr.T))
    w = np.maximum(w, floor)
    return (V / np.sqrt(w)) @ V.T


def matrix_to_json(M) -> dict:
    arr = as_matrix(M)
    return {
        "rows": int(arr.shape[0]),
        "cols": int(arr.shape[1]),
        "data": [float(v) for v in arr.ravel()],
    }


def matrix_from_json(obj: dict) -> np.ndarray:
    rows, cols, data = obj["rows"], obj["cols"], obj["data"]
    if rows * cols != len(data):
        raise DimensionError("rows * cols does not match the data length")
    return as_matrix(np.asarray(data, dtype=float).reshape(rows, cols))
