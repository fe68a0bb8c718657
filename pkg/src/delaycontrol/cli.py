"""Command-line front end: ``delaycontrol {simulate,optimal,verify,spectrum,oracle}``.

Every command writes its outputs into ``--out`` together with
``manifest.json`` (inputs, seed, grid step, library versions). Nothing in the
outputs depends on wall-clock time or paths, so reruns are byte-identical.

Exit codes: 0 success, 2 config error, 3 solver error, 4 verification failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .admissible import assemble_control, assemble_system_control
from .checks import CHECKS, check_null
from .core import ControlSignal, RetardedSystem
from .exceptions import ConfigError, SolverError
from .io import (
    control_rows,
    dumps_json,
    format_float,
    load_config,
    read_generator_csv,
    trajectory_rows,
    write_table,
)
from .optimal import optimal_control
from .oracle import kkt_solve, scalar_program, system_program
from .simulation import null_residual, simulate, simulate_system
from .spectral import find_zeros

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_VERIFY = 0, 2, 3, 4


class VerificationFailed(Exception):
    pass


def _manifest(args, problem, outputs, results=None) -> dict:
    return {
        "command": args.command,
        "config": problem.raw,
        "seed": args.seed,
        "h": problem.h,
        "format": args.format,
        "options": {k: v for k, v in sorted(vars(args).items()) if k not in ("config", "out", "func", "command")},
        "versions": {"delaycontrol": __version__, "numpy": np.__version__, "scipy": scipy.__version__},
        "outputs": sorted(outputs),
        "results": results or {},
    }


def _finish(args, problem, out: Path, written, results=None):
    names = [p.name for p in written]
    (out / "manifest.json").write_text(dumps_json(_manifest(args, problem, names, results)))


def _control(problem, args) -> ControlSignal:
    if args.u == "zero":
        return ControlSignal.zero(problem.horizon, problem.h)
    if args.u == "optimal":
        return optimal_control(problem.model, problem.state, problem.epsilon).control
    if not args.generator:
        raise ConfigError("--u file requires --generator FILE")
    g = read_generator_csv(args.generator, problem.h)
    if isinstance(problem.model, RetardedSystem):
        return assemble_system_control(problem.model, problem.state, g, tol=None)
    return assemble_control(problem.model, problem.state, g, tol=None)


def cmd_simulate(args, problem, out: Path):
    u = _control(problem, args)
    t_end = args.t_end if args.t_end is not None else u.horizon
    if isinstance(problem.model, RetardedSystem):
        traj = simulate_system(problem.model, problem.state, u, t_end)
    else:
        traj = simulate(problem.model, problem.state, u, t_end)
    header, rows = trajectory_rows(traj)
    path = write_table(out / "trajectory.csv", header, rows, args.format)
    results = {"t_end": t_end}
    if t_end >= u.horizon - 1e-12:
        results["null_residual"] = null_residual(traj, u.horizon)
        print(f"null residual on [{u.horizon - 1:g}, {u.horizon:g}]: {results['null_residual']:.6g}")
    _finish(args, problem, out, [path], results)
    return EXIT_OK


def cmd_optimal(args, problem, out: Path):
    sol = optimal_control(problem.model, problem.state, problem.epsilon)
    header, rows = control_rows(sol.control)
    p1 = write_table(out / "control.csv", header, rows, args.format)
    g = sol.generator
    p2 = write_table(out / "generator.csv", ["t", "u0"], [[format_float(t), format_float(v)] for t, v in zip(g.t, g.samples)], args.format)
    summary = sol.summary()
    p3 = out / "summary.json"
    p3.write_text(dumps_json(summary))
    print(f"energy={summary['energy']:.10g} constants={summary['constants']}")
    _finish(args, problem, out, [p1, p2, p3], summary)
    return EXIT_OK


def cmd_verify(args, problem, out: Path):
    names = [c.strip() for c in args.checks.split(",") if c.strip()]
    unknown = [c for c in names if c not in CHECKS]
    if unknown:
        raise ConfigError(f"unknown checks {unknown}; choose from {sorted(CHECKS)}")
    results = []
    for name in names:
        if name == "null":
            gen = read_generator_csv(args.generator, problem.h) if args.generator else None
            res = check_null(problem, gen)
        elif name == "ortho":
            res = CHECKS[name](problem, seed=args.seed)
        elif name == "optimality":
            res = CHECKS[name](problem, samples=args.samples, seed=args.seed)
        else:
            res = CHECKS[name](problem)
        print(res.line())
        results.append(res.as_dict())
    passed = all(r["passed"] for r in results)
    report = {"checks": results, "passed": passed}
    p = out / "report.json"
    p.write_text(dumps_json(report))
    _finish(args, problem, out, [p], {"passed": passed})
    return EXIT_OK if passed else EXIT_VERIFY


def cmd_spectrum(args, problem, out: Path):
    if isinstance(problem.model, RetardedSystem):
        raise ConfigError("spectrum works on scalar equations")
    window = None
    if args.window:
        try:
            window = [float(v) for v in args.window.split(",")]
        except ValueError as exc:
            raise ConfigError(f"--window must be four numbers a,b,c,d: {exc}") from exc
        if len(window) != 4:
            raise ConfigError("--window must be four numbers a,b,c,d")
    sp = find_zeros(problem.model, window)
    rows = [[format_float(z.real), format_float(z.imag), format_float(r)] for z, r in zip(sp.zeros, sp.residual)]
    p = write_table(out / "spectrum.csv", ["re", "im", "residual"], rows, args.format)
    print(sp.localization["text"])
    print(f"{len(sp.zeros)} zeros in window {sp.window}")
    results = {"count": sp.count, "window": list(sp.window), "localization": sp.localization}
    _finish(args, problem, out, [p], results)
    return EXIT_OK


def cmd_oracle(args, problem, out: Path):
    if isinstance(problem.model, RetardedSystem):
        qp = system_program(problem.model, problem.state, problem.epsilon)
    else:
        qp = scalar_program(problem.model, problem.state, problem.epsilon)
    u = kkt_solve(qp)
    res = qp.constraints.residual(u)
    p = write_table(out / "oracle_generator.csv", ["t", "u0"], [[format_float(t), format_float(v)] for t, v in zip(u.t, u.samples)], args.format)
    report = {"moment_residuals": [float(r) for r in res], "objective": qp.objective(u.samples)}
    p2 = out / "oracle_report.json"
    p2.write_text(dumps_json(report))
    print(f"max moment residual {np.max(np.abs(res)):.3g}")
    _finish(args, problem, out, [p, p2], report)
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "optimal": cmd_optimal,
    "verify": cmd_verify,
    "spectrum": cmd_spectrum,
    "oracle": cmd_oracle,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="delaycontrol", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="problem config (JSON)")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--h", type=float, default=None, help="grid step (overrides grid_h)")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        if name == "simulate":
            p.add_argument("--u", choices=("zero", "file", "optimal"), default="zero")
            p.add_argument("--generator", help="CSV t,u0 used with --u file")
            p.add_argument("--t-end", type=float, default=None)
        if name == "verify":
            p.add_argument("--checks", default="null,oracle,ortho,monotone,optimality")
            p.add_argument("--generator", help="replace the optimal generator in the null check")
            p.add_argument("--samples", type=int, default=100, help="alternatives in the optimality check")
        if name == "spectrum":
            p.add_argument("--window", help="re_min,re_max,im_min,im_max")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        problem = load_config(args.config, args.h)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](args, problem, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"solver error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
