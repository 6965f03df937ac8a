"""Grid certification of attraction regions and the initial-angle sweep.

Grid checks here are sampling, not formal certificates: membership and
violation reports are exact at the sampled points and say nothing in
between. Sublevel constants come from a bisection over the sampled
CLF values, and sweep rows are produced in deterministic angle order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .linalg import as_matrix, as_square, as_vector, symmetrize
from .model import FeedbackLinearization, SystemModel, apply_input
from .sim import SimConfig, rollout_costs

#: Grid membership requires the CLF derivative below this margin.
VDOT_TOL = 1e-12
#: Scale-aware threshold for treating the input direction as zero.
BETA_TOL = 1e-9
#: Bisection iterations for the largest certified sublevel constant.
BISECTION_ITERS = 40


@dataclass(frozen=True)
class GridSpec:
    """A rectangular grid of evaluation points."""

    lower: np.ndarray
    upper: np.ndarray
    points_per_axis: tuple[int, ...]

    def __post_init__(self):
        lower = as_vector(self.lower, "lower")
        upper = as_vector(self.upper, "upper")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "points_per_axis", tuple(int(k) for k in self.points_per_axis))
        if lower.shape != upper.shape or len(self.points_per_axis) != lower.shape[0]:
            raise ValueError("grid bounds and axis counts disagree")
        if not np.all(lower < upper):
            raise ValueError("lower bounds must be strictly below upper bounds")
        if any(k < 2 for k in self.points_per_axis):
            raise ValueError("need at least two points per axis")

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    def axes(self) -> list[np.ndarray]:
        return [np.linspace(lo, hi, k)
                for lo, hi, k in zip(self.lower, self.upper, self.points_per_axis)]

    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack(mesh, axis=-1).reshape(-1, self.dim)


@dataclass(frozen=True)
class RoaCertificate:
    """Grid membership of the sampled attraction-region sets.

    A point is a member when it is nonzero, lies in the sublevel set
    V <= C, and the CLF strictly decays there under the controller.
    """

    C: float
    grid: GridSpec
    points: np.ndarray
    values: np.ndarray
    members_lqr: np.ndarray
    members_sontag: np.ndarray
    subset_holds: bool


@dataclass(frozen=True)
class GlobalClfReport:
    """Sampled check of the transformed-coordinates CLF condition."""

    n_checked: int
    violations: np.ndarray
    ok: bool


@dataclass
class SweepResult:
    """Costs, ratios, and stabilization flags over initial angles."""

    theta0_deg: np.ndarray
    j_sontag: np.ndarray
    j_lqr: np.ndarray
    j_fbl: np.ndarray
    ratio_lqr: np.ndarray
    ratio_fbl: np.ndarray
    stab_sontag: np.ndarray
    stab_lqr: np.ndarray
    stab_fbl: np.ndarray

    def summary_lines(self) -> list[str]:
        lines = []
        for name, stab in (("sontag", self.stab_sontag), ("lqr", self.stab_lqr),
                           ("fbl", self.stab_fbl)):
            if stab.any():
                th = self.theta0_deg[stab]
                lines.append(f"{name}: stabilized {int(stab.sum())}/{stab.size} angles"
                             f" ({th.min():.3g} to {th.max():.3g} deg)")
            else:
                lines.append(f"{name}: stabilized 0/{stab.size} angles")
        for name, ratio in (("ratio_lqr", self.ratio_lqr), ("ratio_fbl", self.ratio_fbl)):
            finite = ratio[np.isfinite(ratio)]
            if finite.size:
                lines.append(f"{name}: min {finite.min():.6g}, max {finite.max():.6g}"
                             f" over {finite.size} rows")
            else:
                lines.append(f"{name}: no finite rows")
        return lines


def _vdot_under(sys: SystemModel, clf, controller, pts: np.ndarray) -> np.ndarray:
    grad = np.asarray(clf.grad(pts), dtype=float)
    U = np.asarray(controller.u(pts), dtype=float)
    xdot = np.asarray(sys.f(pts), dtype=float) + apply_input(sys.G(pts), U)
    return (grad * xdot).sum(axis=-1)


def roa_certify(sys: SystemModel, clf, *, lqr, sontag, grid: GridSpec,
                C: float) -> RoaCertificate:
    """Evaluate membership of every grid point in the sampled
    attraction sets of the LQR and the Sontag-type controller and test
    whether the LQR members are contained in the Sontag members."""
    if C < 0:
        raise ValueError("sublevel constant must be nonnegative")
    pts = grid.points()
    nonzero = np.abs(pts).max(axis=-1) > 0.0
    V = np.asarray(clf.value(pts), dtype=float)
    in_level = nonzero & (V <= C)
    mem_lqr = in_level & (_vdot_under(sys, clf, lqr, pts) < -VDOT_TOL)
    mem_sontag = in_level & (_vdot_under(sys, clf, sontag, pts) < -VDOT_TOL)
    subset = bool(np.all(mem_sontag | ~mem_lqr))
    return RoaCertificate(C=float(C), grid=grid, points=pts, values=V,
                          members_lqr=mem_lqr, members_sontag=mem_sontag,
                          subset_holds=subset)


def _origin_ring(grid: GridSpec, pts: np.ndarray) -> np.ndarray:
    """Indices of the grid nodes immediately surrounding the node
    closest to the origin (the innermost shell of the grid)."""
    shape = grid.points_per_axis
    axes = grid.axes()
    center = tuple(int(np.argmin(np.abs(ax))) for ax in axes)
    offsets = np.stack(np.meshgrid(*([np.array([-1, 0, 1])] * grid.dim),
                                   indexing="ij"), axis=-1).reshape(-1, grid.dim)
    idx = []
    for off in offsets:
        if not off.any():
            continue
        node = tuple(c + o for c, o in zip(center, off))
        if all(0 <= v < s for v, s in zip(node, shape)):
            idx.append(int(np.ravel_multi_index(node, shape)))
    return np.array(sorted(idx), dtype=int)


def largest_certified_sublevel(sys: SystemModel, clf, controller,
                               grid: GridSpec) -> float:
    """Largest C such that every nonzero grid point with V <= C decays
    strictly under the controller, found by bisection over the sampled
    values. Returns 0 when the innermost shell of grid points around
    the origin already fails, or when the certified sublevel contains
    no grid points at all."""
    pts = grid.points()
    nonzero = np.abs(pts).max(axis=-1) > 0.0
    V = np.asarray(clf.value(pts), dtype=float)
    decays = _vdot_under(sys, clf, controller, pts) < -VDOT_TOL

    ring = _origin_ring(grid, pts)
    if ring.size and not bool(np.all(decays[ring])):
        return 0.0

    Vnz = V[nonzero]
    ok = decays[nonzero]
    if bool(np.all(ok)):
        return float(Vnz.max())
    lo, hi = 0.0, float(Vnz.max())
    for _ in range(BISECTION_ITERS):
        mid = 0.5 * (lo + hi)
        if bool(np.all(ok[Vnz <= mid])):
            lo = mid
        else:
            hi = mid
    if not bool(np.any(Vnz <= lo)):
        return 0.0
    return lo


def global_clf_sample_check(fbl: FeedbackLinearization, P_tilde, grid: GridSpec,
                            tol_b: float = BETA_TOL) -> GlobalClfReport:
    """Sample the transformed-coordinates CLF condition on a grid.

    At each nonzero point z the check requires either a strictly
    negative drift quadratic form z'(A'P + PA)z / 2 or an input
    direction z'P B bounded away from zero relative to |z|. Reports
    the violating points (expected: none for a valid construction).
    """
    P = symmetrize(as_square(P_tilde, "P_tilde"))
    A = as_square(fbl.A_tilde, "A_tilde")
    B = as_matrix(fbl.B_tilde, "B_tilde")
    Z = grid.points()
    nonzero = np.abs(Z).max(axis=-1) > 0.0
    M = symmetrize(A.T @ P + P @ A)
    alpha = 0.5 * ((Z @ M) * Z).sum(axis=-1)
    beta = Z @ (P @ B)
    z_norm = np.sqrt((Z * Z).sum(axis=-1))
    has_input = np.abs(beta).max(axis=-1) > tol_b * z_norm
    violating = nonzero & ~(alpha < 0.0) & ~has_input
    return GlobalClfReport(n_checked=int(nonzero.sum()),
                           violations=Z[violating],
                           ok=not bool(violating.any()))


def sweep_initial_angles(sys: SystemModel, designs: Mapping[str, object], Q, R,
                         cfg: SimConfig, n_angles: int = 1000,
                         theta_range_deg: tuple[float, float] = (0.0, 89.0)) -> SweepResult:
    """Simulate each design from rest at equidistant initial angles and
    compare quadratic costs.

    ``designs`` must map 'sontag', 'lqr', and 'fbl' to controllers.
    Ratios are the Sontag cost over the other design's cost, defined
    only where the denominator run stabilized (NaN marks unavailable),
    with the all-zero equilibrium row set to 1 by convention.
    """
    for key in ("sontag", "lqr", "fbl"):
        if key not in designs:
            raise ValueError(f"designs must provide a {key!r} controller")
    if sys.n != 2:
        raise ValueError("the angle sweep expects a (angle, rate) state")
    lo, hi = theta_range_deg
    thetas = np.linspace(lo, hi, n_angles)
    X0 = np.stack([np.radians(thetas), np.zeros(n_angles)], axis=-1)

    J = {}
    stab = {}
    for name in ("sontag", "lqr", "fbl"):
        J[name], stab[name], _ = rollout_costs(
            sys, designs[name], X0, Q, R, cfg.h, cfg.n_steps, zoh=cfg.zoh)

    def ratio_to(denom: str) -> np.ndarray:
        out = np.full(n_angles, np.nan)
        ok = stab[denom] & np.isfinite(J[denom]) & (J[denom] > 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            out[ok] = J["sontag"][ok] / J[denom][ok]
        both_zero = stab[denom] & (J[denom] == 0.0) & (J["sontag"] == 0.0)
        out[both_zero] = 1.0
        return out

    return SweepResult(
        theta0_deg=thetas,
        j_sontag=J["sontag"], j_lqr=J["lqr"], j_fbl=J["fbl"],
        ratio_lqr=ratio_to("lqr"), ratio_fbl=ratio_to("fbl"),
        stab_sontag=stab["sontag"], stab_lqr=stab["lqr"], stab_fbl=stab["fbl"],
    )


def _fmt(v: float) -> str:
    return f"{v:.17g}"


def write_sweep_csv(result: SweepResult, path) -> None:
    """Sweep rows as CSV; +inf costs print as 'inf' and unavailable
    ratios as empty fields."""
    header = ("theta0_deg,J_sontag,J_lqr,J_fbl,ratio_lqr,ratio_fbl,"
              "stab_sontag,stab_lqr,stab_fbl")
    with open(path, "w", newline="") as fh:
        fh.write(header + "\n")
        for i in range(result.theta0_deg.size):
            ratio_l = result.ratio_lqr[i]
            ratio_f = result.ratio_fbl[i]
            row = [
                _fmt(result.theta0_deg[i]),
                _fmt(result.j_sontag[i]),
                _fmt(result.j_lqr[i]),
                _fmt(result.j_fbl[i]),
                _fmt(ratio_l) if np.isfinite(ratio_l) or np.isinf(ratio_l) else "",
                _fmt(ratio_f) if np.isfinite(ratio_f) or np.isinf(ratio_f) else "",
                str(int(result.stab_sontag[i])),
                str(int(result.stab_lqr[i])),
                str(int(result.stab_fbl[i])),
            ]
            fh.write(",".join(row) + "\n")


def write_roa_csv(cert: RoaCertificate, path) -> None:
    """Grid membership as CSV: coordinates, CLF value, member flags."""
    n = cert.points.shape[1]
    header = [f"x{i + 1}" for i in range(n)] + ["V", "member_lqr", "member_sontag"]
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(cert.points.shape[0]):
            row = [_fmt(v) for v in cert.points[i]]
            row.append(_fmt(cert.values[i]))
            row.append(str(int(cert.members_lqr[i])))
            row.append(str(int(cert.members_sontag[i])))
            fh.write(",".join(row) + "\n")


__all__ = [
    "BETA_TOL",
    "BISECTION_ITERS",
    "GlobalClfReport",
    "GridSpec",
    "RoaCertificate",
    "SweepResult",
    "VDOT_TOL",
    "global_clf_sample_check",
    "largest_certified_sublevel",
    "roa_certify",
    "sweep_initial_angles",
    "write_roa_csv",
    "write_sweep_csv",
]
