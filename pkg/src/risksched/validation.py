"""Input validation helpers.

Public entry points validate their array arguments through these helpers so
that shape or conditioning mistakes fail fast with a named argument instead
of propagating NaNs into a recursion.
"""

import numpy as np

from .exceptions import ContractError


def as_vector(x, dim=None, name="x"):
    """Coerce to a float 1-d array, optionally checking its length."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise ContractError(f"{name} must be 1-d, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise ContractError(f"{name} must have length {dim}, got {arr.shape[0]}")
    return arr


def as_matrix(a, shape=None, name="A"):
    """Coerce to a float 2-d array, optionally checking its shape."""
    arr = np.asarray(a, dtype=float)
    if arr.ndim != 2:
        raise ContractError(f"{name} must be 2-d, got shape {arr.shape}")
    if shape is not None:
        rows, cols = shape
        if rows is not None and arr.shape[0] != rows:
            raise ContractError(f"{name} must have {rows} rows, got {arr.shape[0]}")
        if cols is not None and arr.shape[1] != cols:
            raise ContractError(f"{name} must have {cols} columns, got {arr.shape[1]}")
    return arr


def check_finite(arr, name="array"):
    if not np.all(np.isfinite(arr)):
        raise ContractError(f"{name} contains non-finite entries")
    return arr


def check_symmetric(a, tol=1e-12, name="matrix"):
    arr = as_matrix(a, name=name)
    if arr.shape[0] != arr.shape[1]:
        raise ContractError(f"{name} must be square, got shape {arr.shape}")
    if arr.size and np.max(np.abs(arr - arr.T)) > tol * max(1.0, np.max(np.abs(arr))):
        raise ContractError(f"{name} is not symmetric within {tol}")
    return arr


def check_psd(a, tol=1e-12, name="matrix"):
    """Check symmetry and that eigenvalues are >= -tol."""
    arr = check_symmetric(a, tol=max(tol, 1e-12), name=name)
    if arr.size:
        w = np.linalg.eigvalsh(0.5 * (arr + arr.T))
        if w[0] < -tol * max(1.0, abs(w[-1])):
            raise ContractError(
                f"{name} is not positive semidefinite "
                f"(smallest eigenvalue {w[0]:.3e})"
            )
    return arr


def symmetrize(a):
    """Average a square matrix with its transpose (float-drift control)."""
    return 0.5 * (a + a.T)
