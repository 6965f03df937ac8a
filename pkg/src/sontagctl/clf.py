"""Control Lyapunov functions and their Lie derivatives.

Two families are provided: plain quadratic functions built from a
Riccati solution, and quadratic-in-transformed-coordinates functions
for feedback-linearizable models. Both expose batch-capable ``value``
and ``grad``; states outside a transformed CLF's domain evaluate to
NaN on the batch path, while the scalar operations below raise
``DomainViolation``.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .linalg import as_square, as_vector, cholesky_pd, max_abs, solve_many, symmetrize
from .model import DomainViolation, FeedbackLinearization, SystemModel, fd_jacobian

#: Base absolute tolerance for treating the input-direction derivative as zero.
B_TOL_BASE = 1e-9
#: Tolerance scale for the drift-decay test in the CLF condition.
A_TOL = 1e-9


class QuadraticClf:
    """V(x) = x' P x / 2 with P symmetric positive definite."""

    def __init__(self, P):
        P = as_square(P, "P")
        cholesky_pd(P)
        self.P = symmetrize(P)
        self.p_norm = max_abs(self.P)

    def in_domain(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.ones(x.shape[:-1], dtype=bool)

    def value(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return 0.5 * ((X @ self.P) * X).sum(axis=-1)

    def grad(self, X) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.P


class TransformedClf:
    """V(x) = T(x)' P_tilde T(x) / 2 on the linearization domain."""

    def __init__(self, P_tilde, fbl: FeedbackLinearization):
        P_tilde = as_square(P_tilde, "P_tilde")
        cholesky_pd(P_tilde)
        self.P_tilde = symmetrize(P_tilde)
        self.fbl = fbl
        self.p_norm = max_abs(self.P_tilde)

    def in_domain(self, x) -> np.ndarray:
        Z = np.asarray(self.fbl.T(np.asarray(x, dtype=float)), dtype=float)
        return self.fbl.domain.contains(Z)

    def value(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        Z = np.asarray(self.fbl.T(X), dtype=float)
        ok = self.fbl.domain.contains(Z)
        v = 0.5 * ((Z @ self.P_tilde) * Z).sum(axis=-1)
        return np.where(ok, v, np.nan)

    def grad(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        Z = np.asarray(self.fbl.T(X), dtype=float)
        ok = self.fbl.domain.contains(Z)
        Pz = Z @ self.P_tilde
        if self.fbl.T_jac is not None:
            J = np.asarray(self.fbl.T_jac(X), dtype=float)
        else:
            J = fd_jacobian(self.fbl.T, X)
        g = (J * Pz[..., :, None]).sum(axis=-2)
        return np.where(ok[..., None], g, np.nan)


class LieDerivatives(NamedTuple):
    """Directional derivatives of a CLF along the drift and the inputs."""

    a: float
    b: np.ndarray


def clf_value_grad(clf, x) -> tuple[float, np.ndarray]:
    """Value and gradient of the CLF at a single state."""
    x = as_vector(x, "x")
    if not bool(np.all(clf.in_domain(x))):
        raise DomainViolation("state outside the CLF domain")
    return float(clf.value(x)), np.asarray(clf.grad(x), dtype=float)


def lie_derivatives(clf, sys: SystemModel, x) -> LieDerivatives:
    """a = grad V . f(x) and b = grad V . G(x) at a single state."""
    _, g = clf_value_grad(clf, x)
    a = float(g @ np.asarray(sys.f(x), dtype=float))
    b = g @ np.asarray(sys.G(x), dtype=float)
    return LieDerivatives(a=a, b=np.asarray(b, dtype=float))


def transform_P(P, J_T0) -> np.ndarray:
    """Pull a quadratic-form matrix back through the linearized
    coordinate change: returns J_T0^{-T} P J_T0^{-1}."""
    P = as_square(P, "P")
    cholesky_pd(P)
    J = as_square(J_T0, "J_T0")
    Y = solve_many(J.T, P)            # J^{-T} P
    Pt = solve_many(J.T, Y.T).T       # (J^{-T} Y')' = Y J^{-1}
    return symmetrize(Pt)


def b_tolerance(clf, x) -> float:
    """Scale-aware threshold below which b(x) counts as zero."""
    x = np.asarray(x, dtype=float)
    xn = float(np.sqrt(np.sum(np.square(x))))
    return B_TOL_BASE * (1.0 + clf.p_norm * xn)


def clf_condition_at(clf, sys: SystemModel, x, tol_b: float | None = None,
                     tol_a: float = A_TOL) -> bool:
    """Pointwise CLF decrease condition at a nonzero state.

    True when some input direction is available (b nonzero beyond
    tolerance) or the drift alone decays V (a sufficiently negative).
    """
    x = as_vector(x, "x")
    ld = lie_derivatives(clf, sys, x)
    if tol_b is None:
        tol_b = b_tolerance(clf, x)
    if max_abs(ld.b) > tol_b:
        return True
    return ld.a < -tol_a * float(x @ x)


def build_lqr_clf(design) -> QuadraticClf:
    """Quadratic CLF from the value function of an LQR design."""
    return QuadraticClf(design.P)


def build_global_clf(design, fbl: FeedbackLinearization) -> TransformedClf:
    """CLF quadratic in the transformed coordinates whose quadratic
    Taylor part at the origin matches the LQR value function.

    On a bounded linearization domain the resulting function is a CLF
    on that domain only; the domain is carried along and enforced.
    """
    return TransformedClf(transform_P(design.P, fbl.J_T0), fbl)


__all__ = [
    "A_TOL",
    "B_TOL_BASE",
    "LieDerivatives",
    "QuadraticClf",
    "TransformedClf",
    "b_tolerance",
    "build_global_clf",
    "build_lqr_clf",
    "clf_condition_at",
    "clf_value_grad",
    "lie_derivatives",
    "transform_P",
]
