"""Command-line front end.

Exit codes: 0 ok, 1 negative monotonicity verdict, 2 configuration error,
3 solver failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path


from expfit import analysis
from expfit.catalog import CATALOG
from expfit.coeff import CoefficientError
from expfit.config import ConfigError, RunConfig, load_config
from expfit.eafe import AssemblyError, assemble
from expfit.expr import ExprError
from expfit.linalg import solve
from expfit.mesh import MeshError, generate_structured, read_mesh, retag_boundary, tag_by_flow
from expfit.vtk import write_vtk

EXIT_OK, EXIT_NEGATIVE, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3

log = logging.getLogger(__name__)


class _Fail(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="INI-style run configuration")
    common.add_argument("--problem", help="built-in problem name")
    common.add_argument("--mesh", type=Path, help="mesh file (text format)")
    common.add_argument("--n", type=int, help="structured subdivisions per axis")
    common.add_argument("--dim", type=int, choices=(2, 3))
    common.add_argument("--out", type=Path, help="output path")
    common.add_argument("--tol", type=float, help="relative residual tolerance")
    common.add_argument("--max-iter", type=int, dest="max_iter")
    common.add_argument("--preconditioner", choices=("jacobi", "ilu", "none"))
    common.add_argument("--deterministic", choices=("on", "off"),
                        help="fixed reduction order (assembly is always ordered)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="expfit", description=__doc__.splitlines()[0])
    parser.add_argument("--list", action="store_true", help="list built-in problems and exit")
    sub = parser.add_subparsers(dest="command")
    sub.add_parser("solve", parents=[common], help="assemble, solve and write a VTK file")
    conv = sub.add_parser("converge", parents=[common], help="convergence study on refined meshes")
    conv.add_argument("--levels", type=int, default=4)
    sub.add_parser("check-monotone", parents=[common], help="edge-weight monotonicity audit")
    return parser


def _config(args) -> RunConfig:
    try:
        cfg = load_config(args.config, args.problem, args.dim)
    except ConfigError as exc:
        msg = str(exc)
        if "unknown problem" in msg:
            msg = f"unknown problem {args.problem!r}; available problems: {', '.join(sorted(CATALOG))}"
        raise _Fail(EXIT_CONFIG, msg) from None
    if args.mesh is not None:
        cfg.mesh_path, cfg.n = args.mesh, None
        if args.n is not None:
            raise _Fail(EXIT_CONFIG, "give either --mesh or --n, not both")
    elif args.n is not None:
        cfg.n, cfg.mesh_path = args.n, None
    elif cfg.mesh_path is None and cfg.n is None:
        cfg.n = 8
    if args.tol is not None:
        cfg.tol = args.tol
    if args.max_iter is not None:
        cfg.max_iter = args.max_iter
    if args.preconditioner is not None:
        cfg.preconditioner = args.preconditioner
    if args.deterministic is not None:
        cfg.deterministic = args.deterministic == "on"
    cfg.out = args.out
    if getattr(args, "levels", None) is not None:
        cfg.levels = args.levels
    try:
        return cfg.validate()
    except ConfigError as exc:
        raise _Fail(EXIT_CONFIG, str(exc)) from None


def _mesh(cfg: RunConfig):
    try:
        if cfg.mesh_path is not None:
            mesh = read_mesh(cfg.mesh_path)
            if mesh.dim != cfg.problem.dim:
                raise _Fail(EXIT_CONFIG, f"{cfg.mesh_path}: mesh is {mesh.dim}D, problem is {cfg.problem.dim}D")
        else:
            mesh = generate_structured(cfg.problem.dim, cfg.n)
    except (MeshError, OSError) as exc:
        raise _Fail(EXIT_CONFIG, f"{cfg.mesh_path}: {exc}") from None
    return mesh


def _coefficients(cfg: RunConfig):
    try:
        return cfg.problem.coefficients()
    except (ExprError, CoefficientError, ValueError) as exc:
        raise _Fail(EXIT_CONFIG, f"coefficients: {exc}") from None


def cmd_solve(cfg: RunConfig) -> int:
    mesh = _mesh(cfg)
    coeffs = _coefficients(cfg)
    if cfg.boundary == "flow":
        mesh = retag_boundary(mesh, tag_by_flow, coeffs.b)
    try:
        system = assemble(mesh, coeffs, cfg.scheme)
    except (AssemblyError, CoefficientError, ExprError) as exc:
        raise _Fail(EXIT_CONFIG, f"assembly failed: {exc}") from None
    u, report = solve(system.matrix, system.rhs, tol=cfg.tol, max_iter=cfg.max_iter,
                      preconditioner=cfg.preconditioner)
    out = cfg.out or Path("solution.vtk")
    write_vtk(mesh, out, {"u": u}, title=f"expfit {cfg.problem.name}")
    print(f"dofs={system.n} {report.summary()} output={out}")
    if cfg.problem.has_exact and cfg.problem.grad_text is not None:
        err = analysis.error_norms(mesh, u, cfg.problem.exact, cfg.problem.exact_grad)
        print(f"err_l2={err.l2:.6e} err_h1={err.h1:.6e} err_interp_h1={err.interp_h1:.6e}")
    if not report.converged:
        print(f"solver did not converge: {report.message}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def cmd_converge(cfg: RunConfig) -> int:
    problem = cfg.problem
    if not problem.has_exact or problem.grad_text is None:
        raise _Fail(EXIT_CONFIG, f"problem {problem.name!r} has no exact solution and gradient")
    if cfg.mesh_path is not None:
        raise _Fail(EXIT_CONFIG, "converge uses structured meshes; give --n for the coarsest level")
    try:
        records = analysis.convergence_study(problem, cfg.levels, n0=cfg.n, options=cfg.scheme,
                                             tol=min(cfg.tol, 1e-10), max_iter=max(cfg.max_iter, 1000),
                                             preconditioner="ilu" if cfg.preconditioner == "jacobi"
                                             else cfg.preconditioner)
        code = EXIT_OK
    except analysis.ConvergenceError as exc:
        print(str(exc), file=sys.stderr)
        records, code = exc.records, EXIT_SOLVER
    except (CoefficientError, ExprError) as exc:
        raise _Fail(EXIT_CONFIG, f"coefficients: {exc}") from None
    if cfg.out is not None:
        cfg.out.write_text(analysis.records_to_csv(records))
        report = sys.stdout
    else:
        analysis.records_to_csv(records, sys.stdout)
        report = sys.stderr
    if len(records) >= 2:
        last = records[-1]
        print(f"final rates: l2={last.rate_l2:.3f} h1={last.rate_h1:.3f} "
              f"interp_h1={last.rate_interp_h1:.3f}", file=report)
    else:
        print("final rates: n/a (single level)", file=report)
    return code


def cmd_check_monotone(cfg: RunConfig) -> int:
    mesh = _mesh(cfg)
    coeffs = _coefficients(cfg)
    try:
        rep = analysis.monotonicity_audit(mesh, coeffs, cfg.scheme.omega_quad)
    except (CoefficientError, ExprError) as exc:
        raise _Fail(EXIT_CONFIG, f"coefficients: {exc}") from None
    print(f"verdict: {'monotone' if rep.verdict else 'not-monotone'}")
    print(f"min_edge_sum: {rep.minimum!r}")
    print(f"edges: {len(rep.edges)}")
    print(f"violators: {len(rep.violators)}")
    for (a, b), s in rep.violators:
        print(f"violator: {a + 1} {b + 1} {s!r}")
    return EXIT_OK if rep.verdict else EXIT_NEGATIVE


COMMANDS = {"solve": cmd_solve, "converge": cmd_converge, "check-monotone": cmd_check_monotone}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    if args.list:
        for name, p in sorted(CATALOG.items()):
            print(f"{name:16s} {p.dim}D  {p.description}")
        return EXIT_OK
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        return COMMANDS[args.command](cfg)
    except _Fail as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
