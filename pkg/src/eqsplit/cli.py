"""Command line: ``eqsplit run | verify | probe``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import yaml

from .bifunctions import probe_monotonicity
from .config import OUTPUT_DIR_ENV, ConfigError, RunConfig, load_config
from .problems import check_instance
from .solver import (
    FEASIBILITY_TOL,
    Z_BOUND_SLACK,
    SolveResult,
    Trace,
    fejer_from_trace,
    solve,
)
from .traceio import emit_trace, write_summary

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_MAX_ITERS = 2
_STATUS_EXIT = {"converged": EXIT_OK, "max_iters": EXIT_MAX_ITERS, "error": EXIT_ERROR}


def _overrides(args) -> dict:
    out = {}
    for flag, key in (
        ("max_iters", "solver.max_iters"),
        ("tol", "solver.tol"),
        ("gamma", "solver.gamma"),
        ("beta0", "solver.beta0"),
        ("seed", "seed"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            out[key] = value
    return out


def _trace_path(config_path: Path, out: str | None, many: bool, fmt: str = "csv") -> Path | None:
    if out is None:
        return None
    ext = ".csv" if fmt == "csv" else ".jsonl"
    return Path(out) / (config_path.stem + ext) if many else Path(out)


def _fallback_summary_path(config_path: Path, out: Path | None) -> Path:
    """Where the summary goes when the config itself is invalid."""
    if out is not None:
        return out.with_suffix(".summary.json")
    try:
        trace = yaml.safe_load(config_path.read_text(encoding="utf-8"))["output"]["trace"]
        if isinstance(trace, str):
            return Path(trace).with_suffix(".summary.json")
    except (OSError, yaml.YAMLError, KeyError, TypeError):
        pass
    return Path(os.environ.get(OUTPUT_DIR_ENV, "eqsplit-out")) / (config_path.stem + ".summary.json")


def _load(config_path: Path, args, out: Path | None) -> RunConfig:
    cfg = load_config(config_path, _overrides(args))
    if out is not None:
        cfg = dataclasses.replace(cfg, output=dataclasses.replace(cfg.output, trace=out))
    return cfg


def _write_error_summary(path: Path, message: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps({"status": "error", "message": message}, indent=2) + "\n", encoding="utf-8")


def _run_one(config_path: str, args, many: bool) -> tuple[int, str]:
    """Run one config; returns (exit code, one-line report)."""
    cpath = Path(config_path)
    out = _trace_path(cpath, args.out, many)
    try:
        cfg = _load(cpath, args, out)
    except ConfigError as err:
        summary = _fallback_summary_path(cpath, out)
        try:
            _write_error_summary(summary, str(err))
        except OSError:
            pass
        return EXIT_ERROR, f"error: {err}"
    result = solve(cfg.problem, cfg.solver, cfg.x0)
    try:
        emit_trace(result.trace, cfg.output.format, cfg.output.trace)
    except OSError as err:
        result = dataclasses.replace(result, status="error", message=str(err))
    try:
        write_summary(result, cfg.output.summary, config=str(cpath), problem=cfg.problem.name)
    except OSError as err:
        return EXIT_ERROR, f"error: cannot write summary to {cfg.output.summary}: {err.strerror or err}"
    return _STATUS_EXIT[result.status], _result_line(cpath, result, cfg)


def _fmt(v) -> str:
    return "-" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:.3e}"


def _result_line(cpath: Path, result: SolveResult, cfg: RunConfig) -> str:
    line = (
        f"{cpath}: {result.status} after {result.iterations} iterations, "
        f"x = [{', '.join(f'{v:.6g}' for v in result.x)}], "
        f"residual {_fmt(max(result.residual_T, result.residual_component))}, "
        f"prox residual {_fmt(result.residual_prox)}"
    )
    if result.dist_to_oracle is not None:
        line += f", distance to oracle {_fmt(result.dist_to_oracle)}"
    if result.message:
        line += f" ({result.message})"
    return line + f"; trace {cfg.output.trace}"


def cmd_run(args) -> int:
    many = len(args.configs) > 1
    if args.jobs > 1 and many:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            outcomes = list(pool.map(_run_one, args.configs, [args] * len(args.configs), [many] * len(args.configs)))
    else:
        outcomes = [_run_one(c, args, many) for c in args.configs]
    for code, line in outcomes:
        print(line, file=sys.stderr if code == EXIT_ERROR else sys.stdout)
    codes = [c for c, _ in outcomes]
    if EXIT_ERROR in codes:
        return EXIT_ERROR
    return EXIT_MAX_ITERS if EXIT_MAX_ITERS in codes else EXIT_OK


@dataclasses.dataclass
class InvariantRow:
    name: str
    worst: float
    threshold: float
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.worst <= self.threshold


def verify_invariants(cfg: RunConfig, use_oracle: bool, corrupt_step: int | None = None) -> tuple[list, SolveResult]:
    """Solve with every-iteration tracing and certificates, then check the invariants.

    ``corrupt_step`` adds 1 to the recorded oracle distance at that index
    before the Fejer check, a negative control for the check itself.
    """
    problem = cfg.problem
    solver_cfg = dataclasses.replace(cfg.solver, trace_every=1, certify=True)
    rows = []
    x_star = problem.oracle_solution
    if use_oracle:
        if x_star is None:
            raise ConfigError("--oracle needs an instance with an oracle solution", "problem.oracle", source=cfg.source)
        chk = check_instance(problem, seed=cfg.seed)
        rows.append(InvariantRow("oracle_fixed_point", chk.fixed_point_residual, 1e-8))
        rows.append(InvariantRow("oracle_ep_optimality", -chk.min_ep_value, 1e-6, f"{chk.samples_used} samples"))
    else:
        problem = dataclasses.replace(problem, oracle_solution=None)
    result = solve(problem, solver_cfg, cfg.x0)
    inv = result.invariants
    steps = max(result.iterations, 0)
    if steps:
        rows.append(InvariantRow("lambda_in_(0,1]", inv.lambda_max - 1.0, 0.0, f"min {inv.lambda_min:.3e}"))
        rows.append(InvariantRow("z_bound", inv.z_bound_slack, Z_BOUND_SLACK, f"worst at k={inv.z_bound_index}"))
        rows.append(InvariantRow("prox_certificate", inv.max_certificate, solver_cfg.inner_tol))
    rows.append(InvariantRow("feasibility", inv.feasibility, FEASIBILITY_TOL))
    first = result.trace[0].fixed_point_residual if len(result.trace) else math.nan
    rows.append(
        InvariantRow(
            "residual_decay",
            result.residual_T - max(first, solver_cfg.tol),
            0.0,
            f"{_fmt(first)} -> {_fmt(result.residual_T)}",
        )
    )
    if use_oracle:
        trace = result.trace
        if corrupt_step is not None:
            trace = Trace(list(trace.records))
            if not 0 <= corrupt_step < len(trace):
                raise ValueError(f"--corrupt-step {corrupt_step} is outside the trace (length {len(trace)})")
            rec = trace[corrupt_step]
            trace.records[corrupt_step] = dataclasses.replace(rec, dist_to_oracle=rec.dist_to_oracle + 1.0)
        fej = fejer_from_trace(trace, solver_cfg.gamma, x_star)
        rows.append(InvariantRow("fejer", fej.max_slack, fej.threshold, f"worst at k={fej.worst_index}"))
        rows.append(InvariantRow("distance_to_oracle", result.dist_to_oracle, cfg.oracle_tol))
    if result.status == "error":
        rows.append(InvariantRow("solver_status", math.inf, 0.0, result.message))
    return rows, result


def _table(rows) -> str:
    head = f"{'invariant':<22} {'worst':>12} {'threshold':>12}  result"
    lines = [head, "-" * len(head)]
    for r in rows:
        lines.append(
            f"{r.name:<22} {r.worst:>12.4e} {r.threshold:>12.4e}  {'pass' if r.passed else 'FAIL'}"
            + (f"  ({r.detail})" if r.detail else "")
        )
    return "\n".join(lines)


def cmd_verify(args) -> int:
    cpath = Path(args.config)
    out = Path(args.out) if args.out else None
    try:
        cfg = _load(cpath, args, out)
        rows, result = verify_invariants(cfg, args.oracle, args.corrupt_step)
    except (ConfigError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_ERROR
    print(_table(rows))
    ok = all(r.passed for r in rows)
    report = Path(args.report) if args.report else cfg.output.report
    payload = {
        "config": str(cpath),
        "status": result.status,
        "iterations": result.iterations,
        "passed": ok,
        "invariants": [
            {"name": r.name, "worst": r.worst, "threshold": r.threshold, "passed": r.passed, "detail": r.detail}
            for r in rows
        ],
    }
    try:
        emit_trace(result.trace, cfg.output.format, cfg.output.trace)
        report.parent.mkdir(parents=True, exist_ok=True)
        report.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_ERROR
    print(f"{'all invariants pass' if ok else 'invariant check FAILED'}; report {report}")
    return EXIT_OK if ok else EXIT_ERROR


def cmd_probe(args) -> int:
    try:
        cfg = load_config(args.config, _overrides(args))
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_ERROR
    p = cfg.problem
    box = cfg.probe_box
    if box is None and p.C.bounding_box() is None:
        print("error: C is unbounded; add probe.box to the config", file=sys.stderr)
        return EXIT_ERROR
    for label, f in (("f", p.split), ("f1", p.split.f1), ("f2", p.split.f2)):
        rep = probe_monotonicity(f, p.C, args.samples, seed=cfg.seed, box=box)
        print(f"[{label}]")
        print(rep)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eqsplit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--max-iters", type=int, dest="max_iters")
        p.add_argument("--tol", type=float)
        p.add_argument("--gamma", type=float)
        p.add_argument("--beta0", type=float)
        p.add_argument("--seed", type=int)

    run = sub.add_parser("run", help="solve one or more configs and write traces and summaries")
    run.add_argument("configs", nargs="+", metavar="CONFIG")
    common(run)
    run.add_argument("--out", help="trace path (a directory when several configs are given)")
    run.add_argument("--jobs", type=int, default=1, help="run configs in parallel processes")
    run.set_defaults(func=cmd_run)

    ver = sub.add_parser("verify", help="solve with invariant checking and report per-invariant slack")
    ver.add_argument("config", metavar="CONFIG")
    common(ver)
    ver.add_argument("--oracle", action="store_true", help="also check Fejer monotonicity and distance to the oracle")
    ver.add_argument("--out", help="trace path")
    ver.add_argument("--report", help="report path (default: next to the trace)")
    ver.add_argument("--corrupt-step", type=int, dest="corrupt_step", help=argparse.SUPPRESS)
    ver.set_defaults(func=cmd_verify)

    pr = sub.add_parser("probe", help="sample the bifunctions for monotonicity counterexamples")
    pr.add_argument("config", metavar="CONFIG")
    pr.add_argument("--samples", type=int, required=True)
    pr.add_argument("--seed", type=int)
    pr.set_defaults(func=cmd_probe)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
