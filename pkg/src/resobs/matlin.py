"""Minimal dense linear algebra and ODE stepping used by every other module.

Matrices are plain 2-D float64 numpy arrays with finite entries and at least
one row and column. The eigensolver is a cyclic Jacobi rotation scheme and
the SPD solver an unblocked Cholesky, both adequate for the small dense
problems arising here (dimensions up to a couple hundred). All operations
are pure functions on their inputs and safe to call concurrently.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DefinitenessError, DimensionError, IntegrationError


def as_matrix(a, name="matrix"):
    """Coerce to a 2-D float64 array, validating shape and finiteness."""
    m = np.asarray(a, dtype=float)
    if m.ndim != 2:
        raise DimensionError(f"{name}: expected a 2-D array, got ndim={m.ndim}")
    if m.shape[0] < 1 or m.shape[1] < 1:
        raise DimensionError(f"{name}: empty dimension in shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise DimensionError(f"{name}: contains non-finite entries")
    return np.ascontiguousarray(m)


@dataclass
class SymEigResult:
    """Eigenvalues (ascending) and orthonormal eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def sym_eig(m) -> SymEigResult:
    """Eigendecomposition of a symmetric matrix.

    The input is symmetrized as (m + m') / 2 before factorization, so mild
    asymmetry from accumulated roundoff is tolerated. Raises
    :class:`DimensionError` for non-square input.
    """
    a = as_matrix(m, "sym_eig input")
    if a.shape[0] != a.shape[1]:
        raise DimensionError(
            f"sym_eig: matrix must be square, got shape {a.shape}"
        )
    sym = 0.5 * (a + a.T)
    w, v, _ = kernels.jacobi_eigh(sym)
    return SymEigResult(eigenvalues=w, eigenvectors=v)


def eig_range(m):
    """(lambda_min, lambda_max) of a symmetric matrix, values only."""
    a = as_matrix(m, "eig_range input")
    if a.shape[0] != a.shape[1]:
        raise DimensionError(
            f"eig_range: matrix must be square, got shape {a.shape}"
        )
    return kernels.eig_range(0.5 * (a + a.T))


def cholesky_spd(m, context=None):
    """Lower Cholesky factor of an SPD matrix.

    Raises :class:`DefinitenessError` naming the failing pivot index when the
    matrix is not positive definite.
    """
    a = as_matrix(m, context or "cholesky input")
    if a.shape[0] != a.shape[1]:
        raise DimensionError(
            f"cholesky: matrix must be square, got shape {a.shape}"
        )
    low, fail = kernels.chol_lower(0.5 * (a + a.T))
    if fail >= 0:
        where = f" in {context}" if context else ""
        raise DefinitenessError(
            f"matrix{where} is not positive definite "
            f"(Cholesky pivot {fail} failed)",
            pivot=fail,
            context=context,
        )
    return low


def solve_spd(m, rhs, context=None):
    """Solve ``m x = rhs`` for symmetric positive definite ``m``.

    ``rhs`` may be a vector or a matrix; the result matches its shape.
    """
    low = cholesky_spd(m, context)
    b = np.asarray(rhs, dtype=float)
    if b.ndim == 1:
        if b.shape[0] != low.shape[0]:
            raise DimensionError(
                f"solve_spd: rhs length {b.shape[0]} does not match "
                f"matrix dimension {low.shape[0]}"
            )
        return kernels.chol_solve(low, np.ascontiguousarray(b[:, None]))[:, 0]
    if b.ndim != 2 or b.shape[0] != low.shape[0]:
        raise DimensionError(
            f"solve_spd: rhs shape {b.shape} does not match "
            f"matrix dimension {low.shape[0]}"
        )
    return kernels.chol_solve(low, np.ascontiguousarray(b))


def spd_inverse(m, context=None):
    """Inverse of an SPD matrix via Cholesky."""
    low = cholesky_spd(m, context)
    return kernels.chol_solve(low, np.eye(low.shape[0]))


def rk4_step(f, t, y, h):
    """One classical fourth-order Runge-Kutta step.

    ``f(t, y)`` must return an array of the same shape as ``y``. Raises
    :class:`IntegrationError` carrying the offending stage time when a
    derivative evaluation is non-finite. ``h`` must be positive.
    """
    if h <= 0:
        raise IntegrationError(f"rk4_step: step size must be positive, got {h}")
    y = np.asarray(y, dtype=float)

    def eval_stage(ts, ys):
        d = np.asarray(f(ts, ys), dtype=float)
        if not np.all(np.isfinite(d)):
            raise IntegrationError(
                f"rk4_step: non-finite derivative at t={ts}", t=ts
            )
        return d

    k1 = eval_stage(t, y)
    k2 = eval_stage(t + 0.5 * h, y + 0.5 * h * k1)
    k3 = eval_stage(t + 0.5 * h, y + 0.5 * h * k2)
    k4 = eval_stage(t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
