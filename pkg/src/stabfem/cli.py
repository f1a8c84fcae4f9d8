"""Command-line front end: run experiments, single solves, mesh utilities,
and the invariant check suite."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3


def _build_parser():
    p = argparse.ArgumentParser(
        prog="stabfem",
        description="Algebraically stabilized P1 FEM on adaptively refined grids",
    )
    sub = p.add_subparsers(dest="command", required=True)

    def add_common(sp, problem=True):
        if problem:
            sp.add_argument(
                "--problem",
                choices=["boundary-layer", "hmm86", "hemker"],
                required=True,
            )
            sp.add_argument(
                "--method", choices=["kuzmin", "bjk", "muas"], default="kuzmin"
            )
            sp.add_argument("--grid", choices=["conforming", "hanging"], default="conforming")
            sp.add_argument("--eps", type=float, default=None)
            sp.add_argument("--eps-thresh", type=float, default=None,
                            help="stopping threshold (default 1e-10; hemker runs use 1e-8)")
            sp.add_argument("--theta", type=float, default=0.5)
            sp.add_argument("--max-dof", type=int, default=30000)
            sp.add_argument("--solver", choices=["direct", "iterative"], default="direct")
        sp.add_argument("--mesh-in", type=str, default=None)
        sp.add_argument("--out", type=str, default=".")
        sp.add_argument("--vtk", action="store_true")
        sp.add_argument("--seed", type=int, default=0)

    run = sub.add_parser("run", help="full adaptive experiment")
    add_common(run)
    run.add_argument("--quiet", action="store_true")

    solve = sub.add_parser("solve", help="one uniform mesh, one method")
    add_common(solve)

    meshp = sub.add_parser("mesh", help="refine / inspect / convert a mesh")
    add_common(meshp, problem=False)
    meshp.add_argument("--refine", type=int, default=0, help="uniform refinements")
    meshp.add_argument("--info", action="store_true")

    check = sub.add_parser("check", help="run the invariant suite")
    add_common(check, problem=False)
    return p


def _cmd_run(args):
    from .bench import run_experiment, write_metrics_csv

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    records, _spec = run_experiment(
        args.problem.replace("-", "_"),
        args.method,
        args.grid,
        max_dof=args.max_dof,
        epsilon=args.eps,
        eps_thresh=args.eps_thresh,
        theta=args.theta,
        solver_mode=args.solver,
        mesh_path=args.mesh_in,
        verbose=not args.quiet,
        vtk_dir=str(out) if args.vtk else None,
    )
    config = dict(
        problem=args.problem,
        method=args.method,
        grid=args.grid,
        eps=args.eps,
        eps_thresh=args.eps_thresh,
        theta=args.theta,
        max_dof=args.max_dof,
        solver=args.solver,
        seed=args.seed,
    )
    write_metrics_csv(records, out / "metrics.csv", config=config)
    print(f"wrote {out / 'metrics.csv'} ({len(records)} levels)")
    return EXIT_OK


def _cmd_solve(args):
    from .adapt import solve_on_mesh
    from .assembly import error_norms
    from .problem import builtin_problem

    spec, mesh, schedule = builtin_problem(
        args.problem.replace("-", "_"), epsilon=args.eps, mesh_path=args.mesh_in
    )
    # uniform refinement while the next level still fits in the dof budget
    while True:
        v = mesh.view()
        next_dof = mesh.n_vertices + v.uedges.shape[0]
        if mesh.n_vertices >= args.max_dof or next_dof > args.max_dof:
            break
        mesh.refine_uniform()
    eps_thresh = args.eps_thresh if args.eps_thresh is not None else schedule.eps_thresh
    values, report, _ctx = solve_on_mesh(
        spec, mesh, args.method, eps_thresh, solver_mode=args.solver
    )
    print(f"level {mesh.level} dof {mesh.n_vertices}")
    print(
        f"iterations {report.iterations} rejections {report.rejections} "
        f"residual {report.final_residual:.3e} converged {report.converged}"
    )
    if spec.exact is not None:
        err = error_norms(values, mesh, spec)
        print(f"l2 {err['l2']:.6e} h1_semi {err['h1_semi']:.6e}")
    if args.vtk:
        from .io import write_vtk

        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_vtk(out / f"solution_{mesh.level}.vtk", mesh, point_data={"u": values})
        print(f"wrote {out / f'solution_{mesh.level}.vtk'}")
    return EXIT_OK if report.converged else EXIT_SOLVER


def _cmd_mesh(args):
    from .io import read_mesh, write_mesh, write_vtk
    from .mesh import unit_square_mesh

    mesh = read_mesh(args.mesh_in) if args.mesh_in else unit_square_mesh()
    for _ in range(args.refine):
        mesh.refine_uniform()
    v = mesh.view()
    if args.info or not args.vtk:
        rep = mesh.delaunay_report() if not v.hanging else None
        print(f"vertices {mesh.n_vertices} cells {v.tris.shape[0]}")
        print(f"hanging {len(v.hanging)} area {mesh.total_area():.12g}")
        if rep is not None:
            print(f"non-delaunay edges {rep.count}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.vtk:
        write_vtk(out / "mesh.vtk", mesh)
        print(f"wrote {out / 'mesh.vtk'}")
    else:
        write_mesh(mesh, out / "mesh.out")
        print(f"wrote {out / 'mesh.out'}")
    return EXIT_OK


def _cmd_check(args):
    from . import checks

    ok = checks.run_all(seed=args.seed)
    return EXIT_OK if ok else 1


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "solve":
            return _cmd_solve(args)
        if args.command == "mesh":
            return _cmd_mesh(args)
        if args.command == "check":
            return _cmd_check(args)
        return EXIT_CONFIG
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # solver and mesh failures
        from .solver import FactorizationError, IterativeSolveError, SolverDivergedError

        if isinstance(exc, (FactorizationError, IterativeSolveError, SolverDivergedError)):
            print(f"solver failure: {exc}", file=sys.stderr)
            return EXIT_SOLVER
        raise


if __name__ == "__main__":
    sys.exit(main())
