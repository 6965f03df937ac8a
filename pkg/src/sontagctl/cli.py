"""Command-line interface: synthesize, simulate, sweep, roa.

Exit codes: 0 on completion (including non-stabilized runs, whose
outcome is data), 2 on configuration errors, 3 when the
stabilizability gate of the synthesis pipeline fails.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .analysis import (
    GridSpec,
    largest_certified_sublevel,
    roa_certify,
    sweep_initial_angles,
    write_roa_csv,
    write_sweep_csv,
)
from .clf import build_lqr_clf
from .config import ConfigError, RunConfig, dump_effective, load_config
from .control import synthesize_design
from .linalg import is_hurwitz
from .riccati import BadWeights, NotStabilizable
from .sim import lyap_decay_check, make_cost_report, simulate, write_trajectory_csv

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NOT_STABILIZABLE = 3


def _fmt_matrix(M) -> str:
    return np.array2string(np.asarray(M, dtype=float), precision=12,
                           suppress_small=False, separator=", ")


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    if getattr(args, "design", None):
        cfg.design = args.design
    if getattr(args, "out", None):
        cfg.out_dir = args.out
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "zoh", False):
        cfg.zoh = True
    theta0 = getattr(args, "theta0_deg", None)
    if theta0 is not None:
        system, _ = cfg.build_system()
        if system.n != 2:
            raise ConfigError("--theta0-deg needs a two-state (angle, rate) system")
        cfg.x0 = np.array([np.radians(theta0), 0.0])
    return cfg.resolved()


def _prepare_out(cfg: RunConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.yaml").write_text(dump_effective(cfg))
    return out


def cmd_synthesize(cfg: RunConfig) -> int:
    system, fbl = cfg.build_system()
    result = synthesize_design(cfg.design, system, fbl, cfg.Q, cfg.R)
    design = result.lqr
    rel = design.are_residual / max(np.abs(design.Q).max(), np.finfo(float).tiny)
    print(f"system: {system.name or 'custom'} (n={system.n}, m={system.m})")
    print(f"design: {result.selector} ({result.label})")
    print(f"A =\n{_fmt_matrix(design.A)}")
    print(f"B =\n{_fmt_matrix(design.B)}")
    print(f"P =\n{_fmt_matrix(design.P)}")
    print(f"K =\n{_fmt_matrix(design.K)}")
    print(f"are_residual = {design.are_residual:.6e} (relative {rel:.6e})")
    print(f"closed_loop_hurwitz = {is_hurwitz(design.A - design.B @ design.K)}")
    return EXIT_OK


def cmd_simulate(cfg: RunConfig) -> int:
    system, fbl = cfg.build_system()
    result = synthesize_design(cfg.design, system, fbl, cfg.Q, cfg.R)
    clf = result.clf if result.clf is not None else build_lqr_clf(result.lqr)
    traj = simulate(system, result.controller, cfg.sim_config(), clf=clf)
    out = _prepare_out(cfg)
    csv_path = out / "trajectory.csv"
    write_trajectory_csv(traj, csv_path)
    report = make_cost_report(traj, cfg.Q, cfg.R)
    print(f"design: {result.selector} ({result.label})")
    print(f"x0 = {_fmt_matrix(traj.states[0])}")
    print(f"J_quadratic = {report.j_quadratic:.17g}")
    print(f"J_distorted = {report.j_distorted:.17g}"
          f" (lambda fallbacks = {report.lambda_fallback_count})")
    print(f"stabilized = {report.stabilized}")
    if result.selector in ("i", "ii") and not traj.diverged:
        mismatch = lyap_decay_check(traj, result.clf, system, cfg.Q, cfg.R)
        print(f"max_lyapunov_decay_mismatch = {mismatch:.6e}")
    else:
        print("max_lyapunov_decay_mismatch = n/a")
    raised = sorted({f for row in traj.flags for f in row.split(";") if f})
    print(f"flags: {', '.join(raised) if raised else 'none'}")
    print(f"wrote {csv_path}")
    return EXIT_OK


def cmd_sweep(cfg: RunConfig) -> int:
    system, fbl = cfg.build_system()
    designs = {
        "sontag": synthesize_design("i", system, fbl, cfg.Q, cfg.R).controller,
        "fbl": synthesize_design("iii", system, fbl, cfg.Q, cfg.R).controller,
        "lqr": synthesize_design("iv", system, fbl, cfg.Q, cfg.R).controller,
    }
    result = sweep_initial_angles(
        system, designs, cfg.Q, cfg.R, cfg.sim_config(),
        n_angles=cfg.sweep_n_angles,
        theta_range_deg=(cfg.sweep_theta_min_deg, cfg.sweep_theta_max_deg),
    )
    out = _prepare_out(cfg)
    csv_path = out / "sweep.csv"
    write_sweep_csv(result, csv_path)
    print(f"swept {cfg.sweep_n_angles} initial angles in "
          f"[{cfg.sweep_theta_min_deg:g}, {cfg.sweep_theta_max_deg:g}] deg")
    for line in result.summary_lines():
        print(line)
    print(f"wrote {csv_path}")
    return EXIT_OK


def cmd_roa(cfg: RunConfig) -> int:
    system, fbl = cfg.build_system()
    sontag = synthesize_design("i", system, fbl, cfg.Q, cfg.R)
    lqr = synthesize_design("iv", system, fbl, cfg.Q, cfg.R)
    clf = sontag.clf
    grid = GridSpec(lower=cfg.roa_lower, upper=cfg.roa_upper,
                    points_per_axis=cfg.roa_points_per_axis)
    if cfg.roa_sublevel is None:
        c_lqr = largest_certified_sublevel(system, clf, lqr.controller, grid)
        c_sontag = largest_certified_sublevel(system, clf, sontag.controller, grid)
        C = max(c_lqr, c_sontag)
    else:
        c_lqr = c_sontag = C = cfg.roa_sublevel
    cert = roa_certify(system, clf, lqr=lqr.controller, sontag=sontag.controller,
                       grid=grid, C=C)
    out = _prepare_out(cfg)
    csv_path = out / "roa.csv"
    write_roa_csv(cert, csv_path)
    print(f"C_lqr = {c_lqr:.17g}")
    print(f"C_sontag = {c_sontag:.17g}")
    print(f"members_lqr = {int(cert.members_lqr.sum())}")
    print(f"members_sontag = {int(cert.members_sontag.sum())}")
    print(f"subset_holds = {cert.subset_holds}")
    print(f"wrote {csv_path}")
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sontagctl",
        description="Sontag-type CLF controller synthesis, simulation, and certification.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, design=False, theta0=False, zoh=False):
        p.add_argument("--config", default=None, help="YAML configuration file")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="seed recorded with the run")
        if design:
            p.add_argument("--design", choices=["i", "ii", "iii", "iv"], default=None,
                           help="controller design selector")
        if theta0:
            p.add_argument("--theta0-deg", type=float, default=None, dest="theta0_deg",
                           help="initial angle in degrees (rate starts at zero)")
        if zoh:
            p.add_argument("--zoh", action="store_true",
                           help="hold the input over each integration step")

    p = sub.add_parser("synthesize", help="run the synthesis pipeline and print the design")
    common(p, design=True)
    p = sub.add_parser("simulate", help="closed-loop run with trajectory CSV and cost report")
    common(p, design=True, theta0=True, zoh=True)
    p = sub.add_parser("sweep", help="initial-angle cost sweep over the benchmark designs")
    common(p, zoh=True)
    p = sub.add_parser("roa", help="grid certification of attraction-region membership")
    common(p)
    return parser


_COMMANDS = {
    "synthesize": cmd_synthesize,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "roa": cmd_roa,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _apply_overrides(load_config(args.config), args)
        return _COMMANDS[args.command](cfg)
    except (ConfigError, BadWeights) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NotStabilizable as exc:
        print(f"error: not stabilizable: {exc}", file=sys.stderr)
        return EXIT_NOT_STABILIZABLE


if __name__ == "__main__":
    raise SystemExit(main())
