"""Command-line entry point: ``dapcg run | validate-schedule | certify | bench``.

Exit codes: 0 success (including not-converged runs), 2 usage or malformed
input, 3 schedule validation failure, 4 solver divergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from dapcg import benchmarks
from dapcg.diagnostics import IterationTrace, certify
from dapcg.io import (
    ConfigError,
    RunManifest,
    check_schema_version,
    load_problem,
    problem_hash,
    read_json,
    read_manifest,
    write_json,
    write_manifest,
)
from dapcg.problem import as_vector
from dapcg.schedules import EXAMPLE2_PARAMS, TABLE1_PARAMS, ScheduleError, ScheduleParams, validate_condition1
from dapcg.solvers import DivergenceError, SolverConfig, run

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_SCHEDULE = 3
EXIT_DIVERGED = 4

NAMED_PARAMS = {"example2": EXAMPLE2_PARAMS, "table1": TABLE1_PARAMS}

log = logging.getLogger("dapcg")


class UsageError(Exception):
    pass


def _tol_list(text: str) -> list[float]:
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad tolerance list {text!r}") from exc
    if not vals or any(v <= 0 for v in vals):
        raise argparse.ArgumentTypeError("tolerances must be positive")
    return vals


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dapcg", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="solve one problem and write its trace")
    p.add_argument("--problem", required=True, help="problem JSON file or builtin:<name>")
    p.add_argument("--algorithm", choices=("incremental", "parallel"), default="incremental")
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--max-iter", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0, help="builtin instance seed; also seeds missing x0/x1")
    p.add_argument("--schedule-file", help="JSON with a 'schedule' object")
    p.add_argument("--bounding", choices=("auto", "none", "project-y", "project-w"), default="auto",
                   help="auto: project-y for builtins, none for files")
    p.add_argument("--override-schedule", action="store_true", help="run even if the schedule fails validation")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True, help="trace CSV path")
    p.add_argument("--report", help="optional JSON report path")

    p = sub.add_parser("validate-schedule", help="check schedule parameters")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--schedule-file")
    src.add_argument("--named", choices=sorted(NAMED_PARAMS), help="built-in parameter set")
    lm = p.add_mutually_exclusive_group()
    lm.add_argument("--l-min", type=float, help="smallest inverse Lipschitz constant")
    lm.add_argument("--problem", help="take L_min from this problem (file or builtin:<name>)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write the verdict JSON here as well as to stdout")

    p = sub.add_parser("certify", help="evaluate certificates on a trace CSV")
    p.add_argument("--trace", required=True)
    p.add_argument("--problem", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--oracle", help="JSON with an 'x' vector; defaults to the problem's known solution")
    p.add_argument("--tol", type=float, help="run tolerance, if the trace has no manifest")
    p.add_argument("--out")

    p = sub.add_parser("bench", help="inertia on/off comparison table")
    p.add_argument("--example", choices=("1", "2"), required=True)
    p.add_argument("--setting", choices=("s1", "s2"), default="s2")
    p.add_argument("--seeds", type=int, default=5, help="number of seeds, 0..seeds-1")
    p.add_argument("--tols", type=_tol_list, default=[1e-4, 1e-5])
    p.add_argument("--max-iter", type=int, default=10_000)
    p.add_argument("--inertia", type=float, default=benchmarks.DEFAULT_THETA1, help="theta_1 of the inertial rows")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    return parser


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------


def _load(spec: str, seed: int):
    """``(problem, x0, x1, builtin_name)`` for a file path or ``builtin:<name>``."""
    if spec.startswith("builtin:"):
        try:
            inst = benchmarks.make_instance(spec, seed)
        except KeyError as exc:
            raise UsageError(str(exc.args[0])) from exc
        return inst.problem, inst.x0, inst.x1, inst.name
    if not Path(spec).exists():
        raise UsageError(f"problem file {spec!r} not found")
    problem, x0, x1 = load_problem(spec)
    if x0 is None or x1 is None:
        d0, d1 = benchmarks.starting_points(seed, problem.dimension)
        x0 = d0 if x0 is None else x0
        x1 = d1 if x1 is None else x1
    return problem, x0, x1, None


def _schedule_from_file(path: str) -> ScheduleParams:
    data = read_json(path)
    check_schema_version(data)
    raw = data.get("schedule")
    if not isinstance(raw, dict):
        raise ConfigError("schedule", "missing or not an object")
    for key, value in raw.items():
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ConfigError(f"schedule.{key}", "must be a number")
    try:
        return ScheduleParams.from_dict(raw)
    except KeyError as exc:
        raise ConfigError("schedule", str(exc.args[0])) from exc
    except ValueError as exc:
        raise ConfigError("schedule", str(exc)) from exc


def _print_json(data) -> None:
    print(json.dumps(data, indent=2))


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def cmd_run(args) -> int:
    problem, x0, x1, builtin = _load(args.problem, args.seed)
    if args.schedule_file:
        params = _schedule_from_file(args.schedule_file)
    elif builtin is not None:
        params = benchmarks.default_params(builtin, problem)
    else:
        raise UsageError("--schedule-file is required for problem files")
    if args.bounding == "auto":
        bounding = benchmarks.default_bounding(builtin) if builtin else "none"
    else:
        bounding = args.bounding.replace("-", "_")
    try:
        config = SolverConfig(
            variant=args.algorithm,
            bounding_mode=bounding,
            tol=args.tol,
            max_iter=args.max_iter,
            record_trace=True,
            schedule_override=args.override_schedule,
            workers=args.workers,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc

    manifest = RunManifest(
        command="run",
        problem={"id": args.problem, "hash": problem_hash(problem), "name": problem.name},
        schedule=params.to_dict(),
        config={
            "variant": config.variant,
            "bounding_mode": config.bounding_mode,
            "tol": config.tol,
            "max_iter": config.max_iter,
            "schedule_override": config.schedule_override,
            "workers": config.workers,
            "x0": as_vector(x0).tolist(),
            "x1": as_vector(x1).tolist(),
            "argv": sys.argv[1:],
        },
        seeds=[args.seed],
        outputs=[args.out] + ([args.report] if args.report else []),
    )
    try:
        report = run(problem, params, config, x0, x1)
    except ScheduleError as exc:
        _print_json(exc.report.to_dict())
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEDULE
    except DivergenceError as exc:
        if exc.trace is not None:
            exc.trace.to_csv(args.out)
            manifest.config["trace_meta"] = exc.trace.meta
            manifest.finish()
            write_manifest(args.out, manifest)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except ValueError as exc:
        raise UsageError(str(exc)) from exc

    report.trace.to_csv(args.out)
    manifest.config["trace_meta"] = report.trace.meta
    manifest.finish()
    write_manifest(args.out, manifest)
    summary = report.to_dict()
    if args.report:
        write_json(args.report, summary)
        write_manifest(args.report, manifest)
    _print_json({k: summary[k] for k in ("converged", "iterations", "final_E", "oracle_gap", "certificates")})
    if not report.converged:
        print(f"warning: not converged after {report.iterations} iterations", file=sys.stderr)
    return EXIT_OK


def cmd_validate(args) -> int:
    params = NAMED_PARAMS[args.named] if args.named else _schedule_from_file(args.schedule_file)
    L_min = args.l_min
    if args.problem:
        problem, *_ = _load(args.problem, args.seed)
        L_min = problem.min_inverse_lipschitz
    if L_min is not None and not L_min > 0:
        raise UsageError("--l-min must be positive")
    report = validate_condition1(params, L_min)
    doc = {"schedule": params.to_dict(), "L_min": L_min, **report.to_dict()}
    _print_json(doc)
    if args.out:
        write_json(args.out, doc)
        write_manifest(args.out, RunManifest(command="validate-schedule", schedule=params.to_dict(),
                                             config={"L_min": L_min, "argv": sys.argv[1:]}, outputs=[args.out]))
    if not report.passed:
        print("schedule validation failed: " + ", ".join(v.name for v in report.failures), file=sys.stderr)
        return EXIT_SCHEDULE
    return EXIT_OK


def cmd_certify(args) -> int:
    if not Path(args.trace).exists():
        raise UsageError(f"trace file {args.trace!r} not found")
    problem, *_ = _load(args.problem, args.seed)
    manifest = read_manifest(args.trace)
    meta = dict(manifest.config.get("trace_meta", {})) if manifest else {}
    if args.tol is not None:
        meta["tol"] = args.tol
    try:
        trace = IterationTrace.from_csv(args.trace, meta)
    except (KeyError, ValueError) as exc:
        raise ConfigError(args.trace, f"unreadable trace: {exc}") from exc
    if args.oracle:
        data = read_json(args.oracle)
        if "x" not in data:
            raise ConfigError("x", "missing")
        try:
            oracle_x = as_vector(data["x"], problem.dimension)
        except ValueError as exc:
            raise ConfigError("x", str(exc)) from exc
    else:
        oracle_x = problem.known_solution
    certs = certify(trace, problem, oracle_x)
    doc = {
        "trace": args.trace,
        "records": len(trace),
        "certificates": [c.to_dict() for c in certs],
    }
    if oracle_x is not None and len(trace):
        doc["oracle"] = {"x": [float(v) for v in oracle_x], "source": "file" if args.oracle else "known_solution"}
    _print_json(doc)
    if args.out:
        write_json(args.out, doc)
        write_manifest(args.out, RunManifest(command="certify", problem={"id": args.problem},
                                             config={"trace_meta": meta, "argv": sys.argv[1:]},
                                             outputs=[args.out]))
    return EXIT_OK


def cmd_bench(args) -> int:
    name = "example1" if args.example == "1" else f"example2-{args.setting}"
    if args.seeds < 2:
        raise UsageError("--seeds must be at least 2")
    if args.max_iter < 0:
        raise UsageError("--max-iter must be nonnegative")
    seeds = list(range(args.seeds))
    table = benchmarks.ablation_theta(
        name,
        seeds,
        tuple(args.tols),
        SolverConfig(bounding_mode=benchmarks.default_bounding(name), max_iter=args.max_iter),
        inertia=args.inertia,
        workers=args.workers,
    )
    table.to_csv(args.out)
    manifest = RunManifest(
        command="bench",
        problem={"id": f"builtin:{name}"},
        config={"tols": list(args.tols), "max_iter": args.max_iter, "inertia": args.inertia,
                "argv": sys.argv[1:]},
        seeds=seeds,
        outputs=[args.out],
    )
    manifest.finish()
    write_manifest(args.out, manifest)
    print(Path(args.out).read_text(), end="")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "validate-schedule": cmd_validate, "certify": cmd_certify, "bench": cmd_bench}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: malformed input at {exc.key}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
