"""Command-line front end: run, korn, reduce, check.

Exit codes: 0 success, 1 validation error (bad config, incompatible
material, bad arguments), 2 solver failure.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .assembly import Loads
from .config import ConfigError, RunConfig, load_config
from .constitutive import (
    ConstitutiveError,
    MaterialSet,
    check_compatibility,
    reduce_form,
    reduce_heat_conductivity,
)
from .diagnostics import export_csv, export_vtk
from .grid import GridError, build_grid
from .korn import KornError, scaling_study
from .stepper import InitialConditions, NewtonError, SimParams, run as run_sim

COMPAT_TOL = 1e-10


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _print_matrix(label: str, m: np.ndarray, out) -> None:
    print(label, file=out)
    for row in np.atleast_2d(m):
        print("  " + "  ".join(_fmt(v) for v in row), file=out)


def thread_cap() -> int:
    """Worker cap from VKPLATE_THREADS; assembly currently runs one worker."""
    raw = os.environ.get("VKPLATE_THREADS", "1")
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigError(f"VKPLATE_THREADS must be an integer, got {raw!r}") from exc
    if n < 1:
        raise ConfigError(f"VKPLATE_THREADS must be >= 1, got {n}")
    return n


def material_from_config(cfg: RunConfig) -> MaterialSet:
    m = cfg.material
    return MaterialSet.from_3d(
        c3_el=m.c3_el, c3_visc=m.c3_visc, b_full=m.b_full,
        cv_bar=m.cv_bar, k3=m.k3, kappa=m.kappa, alpha=m.alpha,
    )


def loads_from_config(cfg: RunConfig) -> Loads:
    lc = cfg.loads
    gu = None
    if lc.test_only_gu1 is not None or lc.test_only_gu2 is not None:
        g1 = lc.test_only_gu1 or (lambda x, y, t: np.zeros_like(x))
        g2 = lc.test_only_gu2 or (lambda x, y, t: np.zeros_like(x))
        gu = lambda x, y, t: (g1(x, y, t), g2(x, y, t))
    return Loads(f2d=lc.f2d, mu_flat=lc.mu_flat, gu_test=gu)


def ic_from_config(cfg: RunConfig) -> InitialConditions:
    ic = cfg.ic
    u0 = None
    if ic.u0_1 is not None or ic.u0_2 is not None:
        f1 = ic.u0_1 or (lambda x, y, t=0.0: np.zeros_like(x))
        f2 = ic.u0_2 or (lambda x, y, t=0.0: np.zeros_like(x))
        u0 = lambda x, y: (f1(x, y), f2(x, y))
    wrap = lambda f: (None if f is None else (lambda x, y: f(x, y)))
    return InitialConditions(
        u0=u0, v0=wrap(ic.v0), v0_dx=wrap(ic.v0_dx), v0_dy=wrap(ic.v0_dy),
        v0_dxy=wrap(ic.v0_dxy), mu0=wrap(ic.mu0),
    )


def echo_reduced(cfg: RunConfig, out) -> MaterialSet:
    """Print the reduced tensors in Voigt form (17 significant digits)."""
    mat = material_from_config(cfg)
    _print_matrix("reduced elastic tensor (Voigt 3x3):", mat.c_el.voigt(), out)
    _print_matrix("reduced viscous tensor (Voigt 3x3):", mat.c_visc.voigt(), out)
    _print_matrix("reduced heat conductivity K~:", mat.k_tilde, out)
    _print_matrix("thermal stress matrix B'':", mat.b_thermal, out)
    print(f"cv_bar = {_fmt(mat.cv_bar)}", file=out)
    print(f"kappa = {_fmt(mat.kappa)}", file=out)
    print(f"alpha = {_fmt(mat.alpha)}", file=out)
    q2_id = mat.c_el.quad(np.eye(2))
    print(f"diagnostic Q2_el(Id2) = {_fmt(q2_id)}", file=out)
    return mat


def cmd_reduce(args, out) -> int:
    cfg = load_config(args.config)
    echo_reduced(cfg, out)
    return 0


def cmd_check(args, out) -> int:
    cfg = load_config(args.config)
    rep = check_compatibility(cfg.material.c3_el, cfg.material.b_full, tol=args.tol)
    print("elastic tensor:", file=out)
    for line in rep.lines():
        print(line, file=out)
    rep_v = check_compatibility(cfg.material.c3_visc, cfg.material.b_full, tol=args.tol)
    print("viscous tensor:", file=out)
    for line in rep_v.lines():
        print(line, file=out)
    ok = rep.passed and rep_v.passed
    print("overall: " + ("PASS" if ok else "FAIL"), file=out)
    return 0 if ok else 1


def cmd_run(args, out) -> int:
    cfg = load_config(args.config)
    rep_el = check_compatibility(cfg.material.c3_el, cfg.material.b_full, tol=COMPAT_TOL)
    rep_vi = check_compatibility(cfg.material.c3_visc, cfg.material.b_full, tol=COMPAT_TOL)
    if not (rep_el.passed and rep_vi.passed):
        if not args.force:
            print(
                "material violates the compatibility conditions the reduced model "
                "assumes (zero Poisson ratio splitting); rerun `vkplate check` for "
                "details or pass --force to proceed anyway",
                file=sys.stderr,
            )
            return 1
        print("warning: compatibility check FAILED, continuing due to --force", file=out)

    print(f"assembly worker cap: {thread_cap()} (deterministic sequential reduction)", file=out)
    mat = echo_reduced(cfg, out)
    g = cfg.grid
    grid, layout = build_grid(g.nx, g.ny, g.lx, g.ly, set(g.dirichlet_edges))
    loads = loads_from_config(cfg)
    ic = ic_from_config(cfg)
    params = SimParams(
        dt=cfg.sim.dt, t_end=cfg.sim.t_end, newton_tol=cfg.sim.newton_tol,
        newton_max_iter=cfg.sim.newton_max_iter, linear_solver=cfg.sim.linear_solver,
        linear_solver_tol=cfg.sim.linear_solver_tol,
    )
    try:
        traj = run_sim(grid, layout, mat, loads, ic, params)
    except NewtonError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 2

    if cfg.output.csv:
        export_csv(traj.ledger, cfg.output.csv)
        print(f"ledger written to {cfg.output.csv}", file=out)
    if cfg.output.vtk_stride > 0:
        for i, state in enumerate(traj.states):
            if i % cfg.output.vtk_stride == 0 or i == len(traj.states) - 1:
                path = f"{cfg.output.vtk_prefix}_{i:05d}.vtk"
                export_vtk(state, path)
        print(f"vtk snapshots written with prefix {cfg.output.vtk_prefix}", file=out)
    led = traj.ledger
    print(
        f"done: {len(traj.states) - 1} steps to t = {_fmt(traj.states[-1].t)}, "
        f"elastic energy {_fmt(led.elastic[-1])}, "
        f"balance residual {_fmt(led.balance_residual[-1])}, "
        f"min mu {_fmt(min(led.min_mu))}",
        file=out,
    )
    return 0


def cmd_korn(args, out) -> int:
    hs = [float(tok) for tok in args.h.split(",") if tok.strip()]
    study = scaling_study(hs, n=args.n, nz=args.nz, z_kind=args.z)
    lines = [",".join(study.csv_header())]
    for row in study.csv_rows():
        lines.append(",".join(_fmt(v) for v in row))
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        print(f"study written to {args.out}", file=out)
        print(f"summary least-squares slope: {_fmt(study.summary_slope)}", file=out)
    else:
        out.write(text)  # keep stdout machine-readable CSV
        print(f"summary least-squares slope: {_fmt(study.summary_slope)}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="vkplate",
        description="Thermoviscoelastic von Karman plate solver and Korn scaling study",
    )
    sub = p.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="simulate a configured plate problem")
    p_run.add_argument("config")
    p_run.add_argument("--force", action="store_true",
                       help="run even if the compatibility check fails")

    p_korn = sub.add_parser("korn", help="thin-domain Korn constant scaling study")
    p_korn.add_argument("--h", required=True, help="comma-separated decreasing thicknesses")
    p_korn.add_argument("--n", type=int, default=8, help="in-plane elements per side")
    p_korn.add_argument("--nz", type=int, default=3, help="through-thickness elements")
    p_korn.add_argument("--z", choices=("identity", "perturbed"), default="identity")
    p_korn.add_argument("--out", default="", help="CSV output path (default: stdout)")

    p_red = sub.add_parser("reduce", help="print the reduced constitutive tensors")
    p_red.add_argument("config")

    p_chk = sub.add_parser("check", help="compatibility report for the material")
    p_chk.add_argument("config")
    p_chk.add_argument("--tol", type=float, default=COMPAT_TOL)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    out = sys.stdout
    try:
        if args.command == "run":
            return cmd_run(args, out)
        if args.command == "korn":
            return cmd_korn(args, out)
        if args.command == "reduce":
            return cmd_reduce(args, out)
        if args.command == "check":
            return cmd_check(args, out)
        return 1
    except (ConfigError, ConstitutiveError, GridError, KornError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NewtonError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
