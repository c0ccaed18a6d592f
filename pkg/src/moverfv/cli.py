"""Command line interface: mesh export, runs, refinement studies, self checks.

Exit codes: 0 success, 1 validation or run failure, 2 configuration error.
The MOVERFV_THREADS environment variable caps worker parallelism (used by
the refinement study, which runs levels concurrently; each level is computed
single-threaded and deterministically).
"""

import argparse
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import flux as flux_mod
from . import motion as motion_mod
from . import solver as solver_mod
from . import validate as validate_mod
from .config import build_problem, parse_config
from .errors import BlowUpError, ConfigurationError, MoverFVError
from .mesh import build_icosphere, check_manifold, mean_diameter, snapshot
from .validate import eoc_table, l1_error
from .vtkio import write_eoc_csv, write_vtk


def _worker_count():
    env = os.environ.get("MOVERFV_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigurationError(f"MOVERFV_THREADS must be an integer, got '{env}'")
        if n < 1:
            raise ConfigurationError("MOVERFV_THREADS must be at least 1")
        return n
    return os.cpu_count() or 1


def _load_config(path, out_override=None):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = parse_config(fh.read())
    except FileNotFoundError:
        raise ConfigurationError(f"configuration file not found: {path}")
    if out_override:
        cfg.out_dir = out_override
    return cfg


def _parse_levels(text):
    try:
        a, b = text.split("..")
        lo, hi = int(a), int(b)
    except ValueError:
        raise ConfigurationError(f"--levels expects A..B, got '{text}'")
    if lo > hi:
        raise ConfigurationError(f"--levels range {text} is empty")
    return list(range(lo, hi + 1))


def cmd_mesh(args):
    mesh = build_icosphere(args.level)
    report = check_manifold(mesh)
    if not report.passed:
        print(f"mesh check failed: {report.message}", file=sys.stderr)
        return 1
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, f"icosphere_level{args.level}.vtk")
    write_vtk(snapshot(mesh, motion_mod.identity(), 0.0), None, path, title="moverfv surface mesh")
    if not args.quiet:
        print(f"wrote {path} ({mesh.n_triangles} triangles)")
    return 0


def _write_series(problem, trajectory, out_dir, quiet):
    paths = []
    for snap, state in trajectory:
        path = os.path.join(out_dir, f"{problem}_step{state.step_index:06d}.vtk")
        write_vtk(snap, state.values, path, title=f"moverfv {problem} t={state.time!r}")
        paths.append(path)
    if not quiet:
        print(f"wrote {len(paths)} VTK file(s) to {out_dir}")
    return paths


def cmd_run(args):
    cfg = _load_config(args.config, args.out)
    setup = build_problem(cfg)
    setup.solver.store_every = cfg.vtk_every
    os.makedirs(cfg.out_dir, exist_ok=True)
    try:
        trajectory, report = solver_mod.run(
            setup.mesh, setup.motion, setup.model, setup.u0, setup.solver
        )
        failed = False
    except BlowUpError as err:
        print(f"run aborted: {err}", file=sys.stderr)
        trajectory, report, failed = err.trajectory, None, True
    if cfg.vtk_every or failed:
        _write_series(setup.name, trajectory, cfg.out_dir, args.quiet)
    else:
        snap, state = trajectory[-1]
        _write_series(setup.name, [(snap, state)], cfg.out_dir, args.quiet)
    if report is not None:
        lines = [f"problem: {setup.name}", f"mesh_level: {cfg.level}",
                 f"elements: {setup.mesh.n_triangles}"] + report.lines()
        report_path = os.path.join(cfg.out_dir, f"{setup.name}_report.txt")
        with open(report_path, "w", encoding="ascii") as fh:
            fh.write("\n".join(lines) + "\n")
        if not args.quiet:
            print("\n".join(lines))
    return 1 if failed else 0


def _eoc_level(cfg, level):
    setup = build_problem(cfg, level=level)
    if setup.exact is None:
        raise ConfigurationError(f"problem {cfg.problem} has no exact solution for an EOC study")
    trajectory, report = solver_mod.run(
        setup.mesh, setup.motion, setup.model, setup.u0, setup.solver
    )
    snap0, _ = trajectory[0]
    snap, state = trajectory[-1]
    err = l1_error(state, snap, setup.exact, lift=setup.lift(snap.time))
    return setup.mesh.n_triangles, mean_diameter(snap0), err, report


def eoc_study(cfg, levels, max_workers=None):
    """Refinement study over icosphere levels; returns EocRecord rows."""
    workers = max_workers or min(len(levels), _worker_count())
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(lambda lv: _eoc_level(cfg, lv), levels))
    elements = [r[0] for r in results]
    pairs = [(r[1], r[2]) for r in results]
    return eoc_table(pairs, elements)


def cmd_eoc(args):
    cfg = _load_config(args.config, args.out)
    levels = _parse_levels(args.levels)
    records = eoc_study(cfg, levels)
    os.makedirs(cfg.out_dir, exist_ok=True)
    path = os.path.join(cfg.out_dir, f"{cfg.problem}_eoc.csv")
    write_eoc_csv(records, path)
    if not args.quiet:
        print(f"{'elements':>10} {'h_bar':>12} {'l1_error':>14} {'eoc':>6}")
        for rec in records:
            eoc = "" if rec.eoc is None else f"{rec.eoc:.2f}"
            print(f"{rec.elements:>10} {rec.h_bar:>12.6f} {rec.l1_error:>14.8f} {eoc:>6}")
        print(f"wrote {path}")
    return 0


# --- Built-in validation suite ----------------------------------------------

def _checks():
    """(name, callable) pairs; each callable returns (passed, detail)."""

    def mesh_invariants():
        mesh = build_icosphere(2)
        report = check_manifold(mesh)
        if not report.passed:
            return False, report.message
        snap = snapshot(mesh, motion_mod.shrinking_sphere(), 0.4)
        closure = np.einsum("me,mei->mi", snap.edge_length, snap.edge_conormal)
        worst = float(np.abs(closure).max())
        return worst < 1e-12, f"max cell closure defect {worst:.2e}"

    def motion_identity_at_zero():
        mesh = build_icosphere(1)
        for m in (motion_mod.identity(), motion_mod.shrinking_sphere(),
                  motion_mod.pinching_ellipsoid()):
            moved = m.evaluator(mesh.vertices0, 0.0)
            if not np.array_equal(moved, mesh.vertices0):
                return False, f"{m.kind} is not the identity at t=0"
        return True, "all built-in motions are the identity at t=0"

    def flux_tangency():
        rng = np.random.default_rng(7)
        pts = rng.normal(size=(2000, 3))
        pts /= np.linalg.norm(pts, axis=1, keepdims=True)
        worst = 0.0
        for model in (flux_mod.rotation_linear(), flux_mod.projected_burgers(),
                      flux_mod.potential_divfree()):
            f = model.eval(pts, 0.3, 1.3)
            nu = model.surface_normal(pts, 0.3)
            worst = max(worst, float(np.abs(np.einsum("ij,ij->i", f, nu)).max()))
        return worst < 1e-12, f"max |f.nu| = {worst:.2e}"

    def eo_consistency():
        c = solver_mod.EdgeFluxFunction("quadratic", c0=0.3, coeff=-1.7)
        rng = np.random.default_rng(11)
        worst = max(
            abs(solver_mod.numerical_flux_eo(c, u, u) - c.value(u))
            for u in rng.uniform(-3, 3, size=200)
        )
        return worst < 1e-10, f"max |g(u,u) - c(u)| = {worst:.2e}"

    def conservation():
        cfg_text = 'problem = "tp1"\n[mesh]\nlevel = 2\n[solver]\nt_end = 0.1\n'
        setup = build_problem(parse_config(cfg_text))
        _, report = solver_mod.run(setup.mesh, setup.motion, setup.model, setup.u0, setup.solver)
        return report.mass_drift_rel <= 1e-10, f"relative mass drift {report.mass_drift_rel:.2e}"

    def oracle_constant_state():
        state = validate_mod.reduced_1d_run(
            64, validate_mod.LinearFlux1D(), t_end=0.5, u0=lambda phi: 0.0 * phi + 3.0
        )
        err = float(np.abs(state.values - 3.0 * math.exp(2.0 * state.time)).max())
        return err < 1e-13, f"constant-state defect {err:.2e}"

    def oracle_entropy():
        traj = validate_mod.reduced_1d_run(
            128, validate_mod.BurgersFlux1D(), t_end=0.2,
            u0=lambda phi: np.where(phi < math.pi, 1.0, 0.0), return_trajectory=True
        )
        res = validate_mod.entropy_residual_1d(traj, [0.25, 0.5, 0.75], validate_mod.BurgersFlux1D())
        return res < 1e-3, f"max positive entropy residual {res:.2e}"

    def eoc_arithmetic():
        records = eoc_table([(0.21605, 1.86), (0.10613, 1.53)], [632, 2628])
        shown = f"{records[1].eoc:.2f}"
        return shown == "0.27", f"first published order renders as {shown}"

    return [
        ("mesh invariants (closed icosphere, edge closure)", mesh_invariants),
        ("motions are the identity at t=0", motion_identity_at_zero),
        ("flux tangency on the surface", flux_tangency),
        ("monotone flux consistency g(u,u)=c(u)", eo_consistency),
        ("discrete mass conservation on a short run", conservation),
        ("1D oracle reproduces constant states exactly", oracle_constant_state),
        ("1D oracle entropy residual stays near zero", oracle_entropy),
        ("order-table arithmetic matches the published first row", eoc_arithmetic),
    ]


def cmd_validate(args):
    failures = 0
    for name, fn in _checks():
        try:
            passed, detail = fn()
        except MoverFVError as err:
            passed, detail = False, str(err)
        status = "PASS" if passed else "FAIL"
        if not args.quiet or not passed:
            print(f"[{status}] {name}: {detail}")
        failures += 0 if passed else 1
    if failures:
        print(f"{failures} validation check(s) failed", file=sys.stderr)
        return 1
    if not args.quiet:
        print("all validation checks passed")
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="moverfv",
        description="Finite volume solver for scalar conservation laws on moving triangulated surfaces",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_mesh = sub.add_parser("mesh", help="emit an icosphere mesh as legacy VTK")
    p_mesh.add_argument("--level", type=int, required=True)
    p_mesh.add_argument("--out", default="out")
    p_mesh.add_argument("--quiet", action="store_true")
    p_mesh.set_defaults(func=cmd_mesh)

    p_run = sub.add_parser("run", help="simulate a configured problem")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", default=None, help="override output.dir")
    p_run.add_argument("--quiet", action="store_true")
    p_run.set_defaults(func=cmd_run)

    p_eoc = sub.add_parser("eoc", help="refinement study over a level range")
    p_eoc.add_argument("--config", required=True)
    p_eoc.add_argument("--levels", required=True, help="A..B inclusive")
    p_eoc.add_argument("--out", default=None, help="override output.dir")
    p_eoc.add_argument("--quiet", action="store_true")
    p_eoc.set_defaults(func=cmd_eoc)

    p_val = sub.add_parser("validate", help="run the built-in invariant checks")
    p_val.add_argument("--quiet", action="store_true")
    p_val.set_defaults(func=cmd_validate)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return 2
    except MoverFVError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
