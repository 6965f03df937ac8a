"""State-feedback controllers: Sontag-type, LQR, feedback-linearizing.

The Sontag-type law scales the input direction R^{-1} b(x)' by a
state-dependent factor chosen so that the loop both enforces Lyapunov
decay and, whenever the CLF satisfies the Hamilton-Jacobi-Bellman
equation (in particular for LTI systems with the LQR value function),
reproduces the optimal feedback exactly. The factor

    lam = (a + sqrt(a^2 + q * beta)) / beta,   q = x'Qx, beta = b R^{-1} b'

admits the algebraically equal form q / (sqrt(a^2 + q*beta) - a); the
implementation picks the branch that avoids cancellation based on the
sign of a. Where b(x) vanishes the control is zero, the factor is
undefined, and a flag records whether the CLF decrease condition broke
down there.

All controllers evaluate on stacked states ((..., n) -> (..., m)); the
feedback-linearizing controller marks states with singular gamma by
NaN on the batch path and raises on the scalar one.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .clf import B_TOL_BASE, build_global_clf, build_lqr_clf, lie_derivatives
from .linalg import as_matrix, as_square, as_vector, cholesky_pd, max_abs, solve_linear, solve_many, symmetrize
from .model import DomainViolation, FeedbackLinearization, SystemModel, fd_jacobian, linearize
from .riccati import LqrDesign, solve_care

#: Below this pivot magnitude the input transformation counts as singular.
GAMMA_PIVOT_TOL = 1e-12


class NonFinite(Exception):
    """A control evaluation overflowed."""


class Branch(enum.Enum):
    """Which case of the Sontag-type law produced an evaluation."""

    NONZERO = "b_nonzero"
    ZERO = "b_zero"


@dataclass(frozen=True)
class ControlEval:
    """One Sontag-type evaluation: input, scaling factor, branch taken.

    ``lam`` is None on the zero branch, where the factor is undefined.
    ``clf_violation`` marks a zero branch with nonnegative drift
    derivative at a nonzero state, i.e. a point where the CLF decrease
    condition failed.
    """

    u: np.ndarray
    lam: float | None
    branch: Branch
    clf_violation: bool = False


def _lambda_array(a, q, beta):
    """Vectorized scaling factor; callers guard beta > 0 on used lanes.

    Selecting numerator and denominator by the sign of a picks the
    cancellation-free branch and keeps every denominator positive, so
    no masked division is needed.
    """
    a = np.asarray(a, dtype=float)
    q = np.asarray(q, dtype=float)
    beta = np.asarray(beta, dtype=float)
    s = np.sqrt(a * a + q * beta)
    neg = a < 0.0
    num = np.where(neg, q, a + s)
    denom = np.where(neg, s - a, beta)
    return num / denom


def lambda_factor(a: float, q: float, beta: float) -> float:
    """Scaling factor of the Sontag-type law for scalar arguments.

    Requires beta > 0 and q >= 0. The result is nonnegative, strictly
    positive when q > 0, and equals 1 exactly when a = (beta - q) / 2,
    the relation the Riccati equation enforces along LQR value
    functions.
    """
    if not (np.isfinite(a) and np.isfinite(q) and np.isfinite(beta)):
        raise ValueError("lambda_factor arguments must be finite")
    if beta <= 0.0:
        raise ValueError("beta must be positive")
    if q < 0.0:
        raise ValueError("q must be nonnegative")
    with np.errstate(over="ignore", invalid="ignore"):
        lam = float(_lambda_array(a, q, beta))
    if not np.isfinite(lam):
        raise NonFinite("lambda factor overflowed")
    return lam


class SontagController:
    """Sontag-type feedback built from a CLF and quadratic weights."""

    def __init__(self, clf, sys: SystemModel, Q, R):
        Q = as_square(Q, "Q")
        R = as_square(R, "R")
        if Q.shape[0] != sys.n or R.shape[0] != sys.m:
            raise ValueError("weight dimensions do not match the system")
        cholesky_pd(Q)
        cholesky_pd(R)
        self.clf = clf
        self.sys = sys
        self.Q = symmetrize(Q)
        self.R = symmetrize(R)
        self.R_inv = symmetrize(solve_many(self.R, np.eye(sys.m)))
        self._tol_scale = B_TOL_BASE * self.clf.p_norm

    def _parts(self, X, with_dynamics: bool = False):
        X = np.asarray(X, dtype=float)
        grad = np.asarray(self.clf.grad(X), dtype=float)
        fX = np.asarray(self.sys.f(X), dtype=float)
        GX = np.asarray(self.sys.G(X), dtype=float)
        a = (grad * fX).sum(axis=-1)
        b = (grad[..., :, None] * GX).sum(axis=-2)
        Rb = b @ self.R_inv
        beta = (b * Rb).sum(axis=-1)
        q = ((X @ self.Q) * X).sum(axis=-1)
        x_norm = np.sqrt((X * X).sum(axis=-1))
        tol = B_TOL_BASE + self._tol_scale * x_norm
        nonzero = np.abs(b).max(axis=-1) > tol
        ok = np.isfinite(grad).all(axis=-1)
        lam = _lambda_array(a, q, np.where(nonzero, beta, 1.0))
        U = np.where(nonzero[..., None], -lam[..., None] * Rb, 0.0)
        U = np.where(ok[..., None], U, np.nan)
        if with_dynamics:
            return U, lam, nonzero, ok, a, x_norm, fX, GX
        return U, lam, nonzero, ok, a, x_norm

    def u(self, X) -> np.ndarray:
        """Control input for stacked states; NaN outside the CLF domain."""
        return self._parts(X)[0]

    def closed_loop_deriv(self, X) -> np.ndarray:
        """f(x) + G(x) u(x) in one pass, reusing the model evaluations
        already needed for the Lie derivatives."""
        U, _, _, _, _, _, fX, GX = self._parts(X, with_dynamics=True)
        return fX + (GX * U[..., None, :]).sum(axis=-1)

    def evaluate(self, x) -> ControlEval:
        """Full evaluation at one state, with branch and factor."""
        x = as_vector(x, "x")
        U, lam, nonzero, ok, a, x_norm = self._parts(x)
        if not bool(ok):
            raise DomainViolation("state outside the CLF domain")
        U = np.asarray(U, dtype=float)
        if bool(nonzero):
            return ControlEval(u=U, lam=float(lam), branch=Branch.NONZERO)
        violation = bool(a >= 0.0) and float(x_norm) > 0.0
        return ControlEval(u=U, lam=None, branch=Branch.ZERO, clf_violation=violation)


class LqrController:
    """Linear state feedback u = -K x."""

    def __init__(self, K):
        self.K = as_matrix(K, "K")

    def u(self, X) -> np.ndarray:
        return -(np.asarray(X, dtype=float) @ self.K.T)


class FblController:
    """Cancels the model nonlinearity through the input transformation
    and applies a linear gain in the transformed coordinates."""

    def __init__(self, fbl: FeedbackLinearization, K_fbl):
        self.fbl = fbl
        self.K_fbl = as_matrix(K_fbl, "K_fbl")

    def _eval(self, X):
        X = np.asarray(X, dtype=float)
        Z = np.asarray(self.fbl.T(X), dtype=float)
        rhs = -(np.asarray(self.fbl.psi(Z), dtype=float) + Z @ self.K_fbl.T)
        gam = np.asarray(self.fbl.gamma(Z), dtype=float)
        ok = self.fbl.domain.contains(Z)
        m = self.K_fbl.shape[0]
        if m == 1:
            g = gam[..., 0, 0]
            ok = ok & (np.abs(g) > GAMMA_PIVOT_TOL)
            U = rhs / np.where(ok, g, 1.0)[..., None]
        else:
            det = np.linalg.det(gam)
            ok = ok & (np.abs(det) > GAMMA_PIVOT_TOL)
            safe = np.where(ok[..., None, None], gam, np.eye(m))
            U = np.linalg.solve(safe, rhs[..., None])[..., 0]
        return np.where(ok[..., None], U, np.nan), ok

    def u(self, X) -> np.ndarray:
        """Control input for stacked states; NaN where gamma is singular
        or the state left the linearization domain."""
        return self._eval(X)[0]


def sontag_control(ctrl: SontagController, x) -> ControlEval:
    """Evaluate the Sontag-type law at a single state."""
    return ctrl.evaluate(x)


def lqr_control(K, x) -> np.ndarray:
    """Linear feedback u = -K x."""
    K = as_matrix(K, "K")
    x = as_vector(x, "x")
    return -(K @ x)


def fbl_control(ctrl: FblController, x) -> np.ndarray:
    """Evaluate the feedback-linearizing law at a single state.

    Raises DomainViolation when gamma is singular within pivot
    tolerance or the state left the linearization domain.
    """
    x = as_vector(x, "x")
    U, ok = ctrl._eval(x)
    if not bool(ok):
        raise DomainViolation("state outside the feedback-linearization domain")
    return np.asarray(U, dtype=float)


def fbl_gain_design(fbl: FeedbackLinearization, design: LqrDesign) -> np.ndarray:
    """Gain on the transformed coordinates that makes the full
    feedback-linearizing law match the LQR gain to first order at the
    origin: K = gamma(0) K_lqr J_T0^{-1} - dpsi/dz(0).

    The returned gain is verified by finite-differencing the assembled
    control law at the origin against -R^{-1} B' P.
    """
    n = design.A.shape[0]
    zero = np.zeros(n)
    gamma0 = np.asarray(fbl.gamma(zero), dtype=float)
    if fbl.psi_jac is not None:
        dpsi0 = np.asarray(fbl.psi_jac(zero), dtype=float)
    else:
        dpsi0 = fd_jacobian(fbl.psi, zero)
    KJ = solve_many(fbl.J_T0.T, design.K.T).T   # K_lqr J_T0^{-1}
    K_fbl = gamma0 @ KJ - dpsi0
    ctrl = FblController(fbl, K_fbl)
    jac = fd_jacobian(ctrl.u, zero)
    target = -design.K
    if max_abs(jac - target) > 1e-6 * (1.0 + max_abs(target)):
        raise ValueError("feedback-linearizing gain failed its local-optimality check")
    return K_fbl


def hjb_residual(clf, sys: SystemModel, Q, R, x) -> float:
    """Residual of the Hamilton-Jacobi-Bellman equation at one state:
    x'Qx/2 + a(x) - b(x) R^{-1} b(x)'/2. Zero exactly where the CLF
    agrees with the optimal value function."""
    Q = as_square(Q, "Q")
    R = as_square(R, "R")
    x = as_vector(x, "x")
    ld = lie_derivatives(clf, sys, x)
    return float(0.5 * (x @ Q @ x) + ld.a - 0.5 * (ld.b @ solve_linear(R, ld.b)))


DESIGN_SELECTORS = ("i", "ii", "iii", "iv")

DESIGN_LABELS = {
    "i": "sontag, quadratic clf",
    "ii": "sontag, transformed clf",
    "iii": "feedback linearization",
    "iv": "lqr",
}


@dataclass(frozen=True)
class SynthesisResult:
    """Everything produced for one controller design."""

    selector: str
    label: str
    lqr: LqrDesign
    clf: object | None
    controller: object


def synthesize_design(selector: str, sys: SystemModel,
                      fbl: FeedbackLinearization | None, Q, R) -> SynthesisResult:
    """Run the synthesis pipeline for one benchmark design.

    Linearizes the model, gates on stabilizability through the Riccati
    solve, and assembles the selected controller:

    - i:   Sontag-type law with the quadratic LQR-value-function CLF;
    - ii:  Sontag-type law with the transformed-coordinates CLF;
    - iii: pure feedback linearization with a locally optimal gain;
    - iv:  the LQR itself.
    """
    if selector not in DESIGN_SELECTORS:
        raise ValueError(f"unknown design selector {selector!r}")
    if selector in ("ii", "iii") and fbl is None:
        raise ValueError(f"design {selector} needs a feedback-linearization structure")
    A, B = linearize(sys)
    design = solve_care(A, B, Q, R)
    if selector == "i":
        clf = build_lqr_clf(design)
        controller = SontagController(clf, sys, design.Q, design.R)
    elif selector == "ii":
        clf = build_global_clf(design, fbl)
        controller = SontagController(clf, sys, design.Q, design.R)
    elif selector == "iii":
        clf = None
        controller = FblController(fbl, fbl_gain_design(fbl, design))
    else:
        clf = None
        controller = LqrController(design.K)
    return SynthesisResult(selector=selector, label=DESIGN_LABELS[selector],
                           lqr=design, clf=clf, controller=controller)


__all__ = [
    "Branch",
    "ControlEval",
    "DESIGN_LABELS",
    "DESIGN_SELECTORS",
    "FblController",
    "GAMMA_PIVOT_TOL",
    "LqrController",
    "NonFinite",
    "SontagController",
    "SynthesisResult",
    "fbl_control",
    "fbl_gain_design",
    "hjb_residual",
    "lambda_factor",
    "lqr_control",
    "sontag_control",
    "synthesize_design",
]
