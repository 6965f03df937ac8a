"""Fixed-step closed-loop simulation and cost evaluation.

Integration is classical 4th-order Runge-Kutta with the controller
re-evaluated at every stage state (continuous feedback); an optional
zero-order hold freezes the input over each step instead. Costs use
the step-start samples only, matching a zero-order-hold discretization
of the running quadratic cost.

All pathologies become per-step flags rather than exceptions: a state
beyond the divergence guard or a control evaluation that comes back
non-finite halts recording with the corresponding flag, and a halted
trajectory carries an infinite cost so sweep rows stay comparable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .control import SontagController
from .linalg import as_square, as_vector, max_abs
from .model import DomainViolation, SystemModel, apply_input

#: Recording halts once the state norm passes this bound.
DIVERGENCE_GUARD = 1e6
#: A run counts as stabilized when the final state norm is below this.
STABILIZATION_TOL = 1e-2

FLAG_CLF_VIOLATION = "clf_violation"
FLAG_DOMAIN = "domain_violation"
FLAG_DIVERGENCE = "divergence"


class NonPositiveLambda(Exception):
    """A recorded scaling factor was nonpositive, signalling a CLF
    condition breach along the trajectory."""


@dataclass(frozen=True)
class SimConfig:
    """Fixed-step simulation settings."""

    h: float = 0.01
    n_steps: int = 1500
    x0: np.ndarray | None = None
    record_clf: bool = True
    zoh: bool = False

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("step size must be positive")
        if self.n_steps < 1:
            raise ValueError("need at least one step")


@dataclass
class Trajectory:
    """A recorded closed-loop run.

    For a completed run of N steps there are N+1 states and N inputs
    with times[k] = k*h; a halted run is truncated at the offending
    step, whose state row carries the halt flag. ``lambdas`` holds the
    Sontag scaling factor at step starts with NaN where undefined, and
    is None for controllers without one.
    """

    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray
    clf_values: np.ndarray | None
    lambdas: np.ndarray | None
    flags: list[str] = field(default_factory=list)
    diverged: bool = False
    stabilized: bool = False
    h: float = 0.01


@dataclass(frozen=True)
class CostReport:
    """Quadratic and inverse-optimal cost of one run."""

    j_quadratic: float
    j_distorted: float
    lambda_fallback_count: int
    stabilized: bool


def rk4_step(sys: SystemModel, controller, x, h: float, *, u0=None, zoh: bool = False):
    """One classical Runge-Kutta step of xdot = f(x) + G(x) u(x).

    The controller is re-evaluated at each stage state unless ``zoh``
    holds the step-start input; ``u0`` optionally supplies a
    precomputed step-start input. Accepts stacked states.
    """
    x = np.asarray(x, dtype=float)

    def deriv(xs, us):
        return np.asarray(sys.f(xs), dtype=float) + apply_input(sys.G(xs), us)

    if zoh:
        u1 = controller.u(x) if u0 is None else np.asarray(u0, dtype=float)
        k1 = deriv(x, u1)
        k2 = deriv(x + (0.5 * h) * k1, u1)
        k3 = deriv(x + (0.5 * h) * k2, u1)
        k4 = deriv(x + h * k3, u1)
    else:
        fused = getattr(controller, "closed_loop_deriv", None)

        def stage(xs):
            if fused is not None:
                return fused(xs)
            return deriv(xs, controller.u(xs))

        k1 = deriv(x, np.asarray(u0, dtype=float)) if u0 is not None else stage(x)
        k2 = stage(x + (0.5 * h) * k1)
        k3 = stage(x + (0.5 * h) * k2)
        k4 = stage(x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def simulate(sys: SystemModel, controller, cfg: SimConfig, clf=None) -> Trajectory:
    """Run a closed loop from cfg.x0 and record everything.

    Inputs are sampled at step starts (these are the samples the costs
    integrate); the CLF value is recorded at every state when a CLF is
    supplied, and the Sontag scaling factor at step starts when the
    controller has one.
    """
    x0 = np.zeros(sys.n) if cfg.x0 is None else as_vector(cfg.x0, "x0")
    if x0.shape[0] != sys.n:
        raise ValueError("x0 dimension does not match the system")
    record_v = clf is not None and cfg.record_clf
    is_sontag = isinstance(controller, SontagController)

    states = [x0]
    inputs: list[np.ndarray] = []
    lams: list[float] = []
    values = [float(clf.value(x0))] if record_v else None
    flags: list[list[str]] = [[]]
    diverged = False
    x = x0
    for _ in range(cfg.n_steps):
        u_k = None
        lam_k = np.nan
        try:
            if is_sontag:
                ev = controller.evaluate(x)
                u_k = ev.u
                lam_k = np.nan if ev.lam is None else ev.lam
                if ev.clf_violation:
                    flags[-1].append(FLAG_CLF_VIOLATION)
            else:
                u_k = controller.u(x)
        except DomainViolation:
            u_k = None
        if u_k is None or not np.all(np.isfinite(u_k)):
            flags[-1].append(FLAG_DOMAIN)
            diverged = True
            break
        inputs.append(np.asarray(u_k, dtype=float))
        if is_sontag:
            lams.append(lam_k)
        x_next = rk4_step(sys, controller, x, cfg.h, u0=u_k, zoh=cfg.zoh)
        if not np.all(np.isfinite(x_next)):
            flags[-1].append(FLAG_DIVERGENCE)
            diverged = True
            break
        states.append(x_next)
        flags.append([])
        if record_v:
            values.append(float(clf.value(x_next)))
        x = x_next
        if max_abs(x_next) > DIVERGENCE_GUARD:
            flags[-1].append(FLAG_DIVERGENCE)
            diverged = True
            break

    k = len(states)
    complete = (not diverged) and k == cfg.n_steps + 1
    return Trajectory(
        times=cfg.h * np.arange(k),
        states=np.array(states),
        inputs=np.array(inputs, dtype=float).reshape(len(inputs), sys.m),
        clf_values=np.array(values) if record_v else None,
        lambdas=np.array(lams) if is_sontag else None,
        flags=[";".join(f) for f in flags],
        diverged=diverged,
        stabilized=bool(complete and max_abs(states[-1]) < STABILIZATION_TOL),
        h=cfg.h,
    )


def cost_index(traj: Trajectory, Q, R, h: float) -> float:
    """Discrete quadratic performance index (h/2) sum x'Qx + u'Ru over
    the step-start samples. Diverged runs cost +inf."""
    Q = as_square(Q, "Q")
    R = as_square(R, "R")
    if traj.diverged:
        return float("inf")
    X = traj.states[:-1]
    U = traj.inputs
    qx = ((X @ Q) * X).sum(axis=-1)
    ru = ((U @ R) * U).sum(axis=-1)
    return float(0.5 * h * np.sum(qx + ru))


def distorted_cost(traj: Trajectory, Q, R, h: float) -> tuple[float, int]:
    """Inverse-optimal cost: the quadratic running cost weighted by the
    reciprocal scaling factor, with 1 substituted where the factor is
    undefined. Returns the cost and the substitution count.

    Raises NonPositiveLambda when a recorded factor is nonpositive.
    """
    Q = as_square(Q, "Q")
    R = as_square(R, "R")
    n_inputs = traj.inputs.shape[0]
    if traj.lambdas is None:
        lam = np.full(n_inputs, np.nan)
    else:
        lam = np.asarray(traj.lambdas, dtype=float)
    undefined = ~np.isfinite(lam)
    if np.any(lam[~undefined] <= 0.0):
        raise NonPositiveLambda("recorded scaling factor is nonpositive")
    fallback = int(undefined.sum())
    if traj.diverged:
        return float("inf"), fallback
    X = traj.states[:-1]
    U = traj.inputs
    qx = ((X @ Q) * X).sum(axis=-1)
    ru = ((U @ R) * U).sum(axis=-1)
    w = np.where(undefined, 1.0, lam)
    return float(0.5 * h * np.sum((qx + ru) / w)), fallback


def make_cost_report(traj: Trajectory, Q, R) -> CostReport:
    j_dist, fallback = distorted_cost(traj, Q, R, traj.h)
    return CostReport(
        j_quadratic=cost_index(traj, Q, R, traj.h),
        j_distorted=j_dist,
        lambda_fallback_count=fallback,
        stabilized=traj.stabilized,
    )


def lyap_decay_check(traj: Trajectory, clf, sys: SystemModel, Q, R) -> float:
    """Largest normalized mismatch between the finite-difference CLF
    decay rate along the trajectory and the closed-form rate of the
    Sontag-type law.

    At each interior step the central difference (V[k+1] - V[k-1]) /
    (2h) is compared with -sqrt(a^2 + x'Qx * b R^{-1} b') (or a where b
    vanishes); the mismatch is normalized by 1 + |closed form|.
    """
    if traj.clf_values is None:
        raise ValueError("trajectory was recorded without CLF values")
    if traj.states.shape[0] < 3:
        return 0.0
    ctrl = SontagController(clf, sys, Q, R)
    interior = traj.states[1:-1]
    _, lam, nonzero, _, a, _ = ctrl._parts(interior)
    grad = np.asarray(clf.grad(interior), dtype=float)
    b = (grad[..., :, None] * np.asarray(sys.G(interior), dtype=float)).sum(axis=-2)
    beta = (b @ ctrl.R_inv * b).sum(axis=-1)
    q = ((interior @ ctrl.Q) * interior).sum(axis=-1)
    rhs = np.where(nonzero, -np.sqrt(a * a + q * beta), a)
    V = traj.clf_values
    fd = (V[2:] - V[:-2]) / (2.0 * traj.h)
    mismatch = np.abs(fd - rhs) / (1.0 + np.abs(rhs))
    return float(mismatch.max())


def rollout_costs(sys: SystemModel, controller, X0, Q, R, h: float, n_steps: int,
                  *, zoh: bool = False):
    """Quadratic costs of many closed-loop runs at once.

    X0 has one initial state per row. Rows whose run diverges (state
    guard exceeded, non-finite state, or non-finite control) are frozen
    and reported with infinite cost. Returns (costs, stabilized,
    diverged) arrays over rows.
    """
    Q = as_square(Q, "Q")
    R = as_square(R, "R")
    X = np.array(X0, dtype=float)
    n_rows = X.shape[0]
    costs = np.zeros(n_rows)
    active = np.ones(n_rows, dtype=bool)
    ever_bad = np.zeros(n_rows, dtype=bool)
    for _ in range(n_steps):
        U = np.asarray(controller.u(X), dtype=float)
        bad_u = ~np.isfinite(U).all(axis=-1)
        U_safe = np.where(bad_u[:, None], 0.0, U)
        step_cost = ((X @ Q) * X).sum(axis=-1) + ((U_safe @ R) * U_safe).sum(axis=-1)
        costs += np.where(active & ~bad_u, 0.5 * h * step_cost, 0.0)
        with np.errstate(over="ignore", invalid="ignore"):
            X_new = rk4_step(sys, controller, X, h, u0=U_safe, zoh=zoh)
        bad_x = ~np.isfinite(X_new).all(axis=-1) | (np.abs(X_new).max(axis=-1) > DIVERGENCE_GUARD)
        bad = bad_u | bad_x
        newly_bad = active & bad
        ever_bad |= newly_bad
        X = np.where((active & ~bad)[:, None], X_new, X)
        active &= ~bad
        if not active.any():
            break
    costs = np.where(ever_bad, np.inf, costs)
    stabilized = active & (np.abs(X).max(axis=-1) < STABILIZATION_TOL)
    return costs, stabilized, ever_bad


def write_trajectory_csv(traj: Trajectory, path) -> None:
    """Write a run as CSV: t, states, inputs, V, lambda, flags.

    Floats carry 17 significant digits; the lambda field is empty where
    the factor is undefined, and input/lambda fields are empty on the
    final state row.
    """
    n = traj.states.shape[1]
    m = traj.inputs.shape[1] if traj.inputs.size else 1
    header = (["t"] + [f"x{i + 1}" for i in range(n)]
              + [f"u{j + 1}" for j in range(m)] + ["V", "lambda", "flags"])
    n_inputs = traj.inputs.shape[0]
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for k in range(traj.states.shape[0]):
            row = [f"{traj.times[k]:.17g}"]
            row += [f"{v:.17g}" for v in traj.states[k]]
            if k < n_inputs:
                row += [f"{v:.17g}" for v in traj.inputs[k]]
            else:
                row += [""] * m
            if traj.clf_values is not None:
                row.append(f"{traj.clf_values[k]:.17g}")
            else:
                row.append("")
            lam_txt = ""
            if traj.lambdas is not None and k < len(traj.lambdas) and np.isfinite(traj.lambdas[k]):
                lam_txt = f"{traj.lambdas[k]:.17g}"
            row.append(lam_txt)
            row.append(traj.flags[k] if k < len(traj.flags) else "")
            fh.write(",".join(row) + "\n")


__all__ = [
    "CostReport",
    "DIVERGENCE_GUARD",
    "FLAG_CLF_VIOLATION",
    "FLAG_DIVERGENCE",
    "FLAG_DOMAIN",
    "NonPositiveLambda",
    "STABILIZATION_TOL",
    "SimConfig",
    "Trajectory",
    "cost_index",
    "distorted_cost",
    "lyap_decay_check",
    "make_cost_report",
    "rk4_step",
    "rollout_costs",
    "simulate",
    "write_trajectory_csv",
]
