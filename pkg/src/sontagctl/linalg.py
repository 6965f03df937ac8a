"""Dense linear algebra kernels for small control-design problems.

All routines operate on float64 numpy arrays at desk scale (dimensions
of order ten) and certify their own results: linear solves check pivot
magnitudes, positive definiteness is certified by an actual Cholesky
factorization, and the Hurwitz test goes through a Lyapunov equation
instead of an eigensolver.
"""

from __future__ import annotations

import warnings

import numpy as np
import scipy.linalg


class LinalgError(Exception):
    """Base class for failures of the numerical kernels."""


class SingularMatrix(LinalgError):
    """Pivoting detected numerical rank deficiency."""


class NotSymmetric(LinalgError):
    """A matrix required to be symmetric is not, beyond tolerance."""


class NotPositiveDefinite(LinalgError):
    """Cholesky factorization hit a nonpositive pivot."""


#: Pivots below this fraction of the largest pivot count as zero.
PIVOT_RTOL = 1e-12
#: Allowed relative asymmetry of inputs that must be symmetric.
SYMMETRY_RTOL = 1e-12


def as_matrix(value, name: str = "matrix") -> np.ndarray:
    M = np.asarray(value, dtype=float)
    if M.ndim != 2 or M.shape[0] < 1 or M.shape[1] < 1:
        raise ValueError(f"{name} must be 2-d with at least one row and column")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} has non-finite entries")
    return M


def as_square(value, name: str = "matrix") -> np.ndarray:
    M = as_matrix(value, name)
    if M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be square, got shape {M.shape}")
    return M


def as_vector(value, name: str = "vector") -> np.ndarray:
    v = np.asarray(value, dtype=float)
    if v.ndim != 1 or v.shape[0] < 1:
        raise ValueError(f"{name} must be 1-d with at least one entry")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} has non-finite entries")
    return v


def max_abs(a) -> float:
    """Largest entry magnitude; the infinity norm used throughout."""
    a = np.asarray(a, dtype=float)
    return float(np.max(np.abs(a))) if a.size else 0.0


def row_sum_norm(M) -> float:
    """Induced infinity norm (max absolute row sum); bounds the spectrum."""
    M = np.asarray(M, dtype=float)
    return float(np.max(np.sum(np.abs(M), axis=1)))


def symmetrize(M) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    return 0.5 * (M + M.T)


def _check_symmetric(M: np.ndarray, name: str) -> None:
    dev = max_abs(M - M.T)
    if dev > SYMMETRY_RTOL * max(max_abs(M), np.finfo(float).tiny):
        raise NotSymmetric(f"{name} deviates from symmetry by {dev:.3e}")


def _lu_factor(A: np.ndarray):
    """LU with partial pivoting; raises SingularMatrix on tiny pivots."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(A, check_finite=False)
    pivots = np.abs(np.diag(lu))
    largest = float(pivots.max())
    if largest == 0.0 or float(pivots.min()) < PIVOT_RTOL * largest:
        raise SingularMatrix("pivot below rank-deficiency threshold")
    return lu, piv


def solve_linear(A, b) -> np.ndarray:
    """Solve A x = b for square A by partially pivoted LU."""
    A = as_square(A, "A")
    b = as_vector(b, "b")
    if b.shape[0] != A.shape[0]:
        raise ValueError("right-hand side does not conform with A")
    return scipy.linalg.lu_solve(_lu_factor(A), b, check_finite=False)


def solve_many(A, B) -> np.ndarray:
    """Solve A X = B with a matrix right-hand side."""
    A = as_square(A, "A")
    B = as_matrix(B, "B")
    if B.shape[0] != A.shape[0]:
        raise ValueError("right-hand side does not conform with A")
    return scipy.linalg.lu_solve(_lu_factor(A), B, check_finite=False)


def cholesky_pd(M) -> np.ndarray:
    """Lower Cholesky factor of a symmetric positive definite matrix.

    Raises NotSymmetric when the input is visibly asymmetric and
    NotPositiveDefinite when a pivot fails; success doubles as the
    positive-definiteness certificate used throughout the package.
    """
    M = as_square(M, "M")
    _check_symmetric(M, "M")
    try:
        return np.linalg.cholesky(symmetrize(M))
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("matrix is not positive definite") from exc


def is_positive_definite(M) -> bool:
    try:
        cholesky_pd(M)
    except (NotPositiveDefinite, NotSymmetric):
        return False
    return True


def solve_lyapunov(A, W) -> np.ndarray:
    """Solve A' X + X A = -W for symmetric W.

    Uses the dense vectorized form (kron(A', I) + kron(I, A')) vec(X) =
    -vec(W), which is singular exactly when two eigenvalues of A sum to
    zero. The result is symmetrized before returning.
    """
    A = as_square(A, "A")
    W = as_square(W, "W")
    if A.shape != W.shape:
        raise ValueError("A and W must have identical shapes")
    _check_symmetric(W, "W")
    n = A.shape[0]
    eye = np.eye(n)
    system = np.kron(A.T, eye) + np.kron(eye, A.T)
    x = scipy.linalg.lu_solve(_lu_factor(system), -W.reshape(-1), check_finite=False)
    return symmetrize(x.reshape(n, n))


def is_hurwitz(A) -> bool:
    """Whether all eigenvalues of A lie in the open left half plane.

    Certified through the Lyapunov equation A' X + X A = -I: A is
    Hurwitz exactly when the equation is solvable with X positive
    definite, so solver singularity maps to False.
    """
    A = as_square(A, "A")
    try:
        X = solve_lyapunov(A, np.eye(A.shape[0]))
    except SingularMatrix:
        return False
    return is_positive_definite(X)
