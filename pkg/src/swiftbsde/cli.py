"""Command-line front end: single solves, convergence sweeps, and profiling.

Subcommands
-----------
solve     one run, JSON result document
converge  sweep over a P list, CSV table plus a trailing JSON summary line
profile   one run with per-phase wall times

Configuration can come from ``--config file.json`` (fields mirror the flag
names: problem, scheme, variant, J, L, P, P_list, picard_iters,
antireflective, output) with command-line flags taking precedence.  The
``problem`` field is a builtin name or an inline problem document (see
:func:`swiftbsde.problems.problem_from_spec` for the schema).

Exit codes: 0 success, 1 runtime/solver failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from typing import Any, Optional

from .problems import problem_from_spec, scheme_params
from .solver import (
    ConfigError,
    SolverConfig,
    SolverError,
    convergence_sweep,
    solve,
    validate_config,
    _reference_for,
)

_CONFIG_FIELDS = ("problem", "scheme", "variant", "J", "L", "P", "P_list", "picard_iters", "antireflective", "output")


@dataclass
class RunConfig:
    problem: Any
    scheme: Any
    variant: str = "mixed"
    J: int = 512
    L: float = 10.0
    P: Optional[int] = None
    P_list: Optional[list[int]] = None
    picard_iters: int = 5
    antireflective: Any = "off"
    output: dict = field(default_factory=dict)

    def echo(self) -> dict:
        return {
            "problem": self.problem,
            "scheme": self.scheme,
            "variant": self.variant,
            "J": self.J,
            "L": self.L,
            "P": self.P,
            "P_list": self.P_list,
            "picard_iters": self.picard_iters,
            "antireflective": self.antireflective,
            "output": self.output or None,
        }


def _parse_antireflective(value) -> Optional[float]:
    if value is None or value == "off" or value is False:
        return None
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"antireflective must be 'off' or a fraction, got {value!r}")


def _load_config_file(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}")
    if not isinstance(doc, dict):
        raise ConfigError("config file must hold a JSON object")
    unknown = set(doc) - set(_CONFIG_FIELDS)
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    return doc


def _merge_config(args: argparse.Namespace) -> RunConfig:
    doc = _load_config_file(args.config) if args.config else {}
    merged = dict(doc)
    overrides = {
        "problem": args.problem,
        "scheme": args.scheme,
        "variant": args.variant,
        "J": args.J,
        "L": args.L,
        "P": args.P,
        "P_list": [int(p) for p in args.P_list.split(",")] if args.P_list else None,
        "picard_iters": args.picard,
        "antireflective": args.antireflective,
    }
    for key, value in overrides.items():
        if value is not None:
            merged[key] = value
    output = dict(merged.get("output") or {})
    if args.out is not None:
        output["path"] = args.out
    if args.format is not None:
        output["format"] = args.format
    merged["output"] = output

    if merged.get("problem") is None:
        raise ConfigError("a problem must be given via --problem or the config file")
    if merged.get("scheme") is None:
        raise ConfigError("a scheme must be given via --scheme or the config file")
    known = {k: v for k, v in merged.items() if k in _CONFIG_FIELDS}
    return RunConfig(**known)


def _solver_pieces(run: RunConfig, need_P: bool = True, validation_P: Optional[int] = None):
    problem = problem_from_spec(run.problem)
    scheme = scheme_params(run.scheme)
    if need_P:
        if run.P is None:
            raise ConfigError("this command needs --P")
        if run.P <= 0:
            raise ConfigError(f"P must be positive, got {run.P}")
    config = SolverConfig(
        scheme=scheme,
        P=run.P if run.P is not None else validation_P or 1,
        J=int(run.J),
        L=float(run.L),
        picard_iters=int(run.picard_iters),
        variant=run.variant,
        antireflective=_parse_antireflective(run.antireflective),
    )
    validate_config(problem, config)
    return problem, config


def _emit(text: str, output: dict) -> None:
    path = output.get("path")
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _cmd_solve(run: RunConfig) -> int:
    problem, config = _solver_pieces(run)
    result = solve(problem, config)
    doc = {
        "y0": result.y0,
        "z0": result.z0,
        "wall_ms": result.diagnostics.wall_s * 1e3,
        "config": run.echo(),
    }
    try:
        y_ref, z_ref, tag = _reference_for(problem)
        doc["y_error"] = abs(result.y0 - y_ref)
        doc["z_error"] = abs(result.z0 - z_ref)
        doc["reference"] = {"y0": y_ref, "z0": z_ref, "source": tag}
    except ConfigError:
        pass
    _emit(json.dumps(doc, indent=2, sort_keys=True) + "\n", run.output)
    return 0


def _cmd_converge(run: RunConfig) -> int:
    if not run.P_list or len(run.P_list) < 3:
        raise ConfigError("converge needs --P-list with at least 3 step counts")
    if any(P <= 0 for P in run.P_list):
        raise ConfigError(f"all step counts must be positive, got {run.P_list}")
    # validate against the coarsest sweep entry; it is the binding case
    problem, config = _solver_pieces(run, need_P=False, validation_P=min(run.P_list))
    report = convergence_sweep(problem, config, run.P_list)
    T = problem.horizon_T
    summary = {
        "order_y": report.order_y,
        "order_z": report.order_z,
        "reference": {"y0": report.reference[0], "z0": report.reference[1], "source": report.reference_tag},
        "config": run.echo(),
    }
    if run.output.get("format") == "json":
        rows = [
            {"P": P, "dt": T / P, "y0": y, "z0": z, "y_error": ey, "z_error": ez}
            for P, y, z, ey, ez in zip(report.steps, report.y_values, report.z_values, report.errors_y, report.errors_z)
        ]
        _emit(json.dumps({"rows": rows, "summary": summary}, indent=2, sort_keys=True) + "\n", run.output)
        return 0
    lines = ["P,dt,y0,z0,y_error,z_error"]
    for P, y, z, ey, ez in zip(report.steps, report.y_values, report.z_values, report.errors_y, report.errors_z):
        lines.append(f"{P},{T / P!r},{y!r},{z!r},{ey!r},{ez!r}")
    lines.append("# " + json.dumps(summary, sort_keys=True))
    _emit("\n".join(lines) + "\n", run.output)
    return 0


def _cmd_profile(run: RunConfig) -> int:
    problem, config = _solver_pieces(run)
    result = solve(problem, config)
    timings = result.diagnostics.timings
    step_phases = ("kernel", "matvec", "picard", "driver", "adjust")
    step_total = sum(timings.get(k, 0.0) for k in step_phases)
    doc = {
        "phases_ms": {k: v * 1e3 for k, v in sorted(timings.items())},
        "total_ms": result.diagnostics.wall_s * 1e3,
        "step_ms": step_total * 1e3,
        "matvec_share_of_step": (timings.get("matvec", 0.0) / step_total) if step_total > 0 else None,
        "y0": result.y0,
        "z0": result.z0,
        "config": run.echo(),
    }
    _emit(json.dumps(doc, indent=2, sort_keys=True) + "\n", run.output)
    return 0


def _add_common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--problem", help="builtin name (ex1, ex2_call, ex3_spread, ex4)")
    p.add_argument("--config", help="JSON config file; flags override its fields")
    p.add_argument("--scheme", help="scheme label A-D or 'theta1,theta2'")
    p.add_argument("--variant", choices=("quick", "mixed"))
    p.add_argument("--P", type=int, help="number of time steps")
    p.add_argument("--P-list", dest="P_list", help="comma-separated step counts for sweeps")
    p.add_argument("--J", type=int, help="wavelet order (default 512)")
    p.add_argument("--L", type=float, help="domain width multiplier (default 10)")
    p.add_argument("--picard", type=int, help="Picard iterations (default 5)")
    p.add_argument("--antireflective", help="'off' or a boundary fraction in (0, 1/3)")
    p.add_argument("--out", help="output path (default stdout)")
    p.add_argument("--format", choices=("csv", "json"), help="sweep output format (converge only)")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="swiftbsde", description="Wavelet-based FBSDE benchmark solver")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("solve", "single solve; writes a JSON result document"),
        ("converge", "error sweep over --P-list; CSV rows plus a '#'-prefixed JSON summary"),
        ("profile", "single solve with per-phase wall times (JSON)"),
    ):
        p = sub.add_parser(name, help=help_text)
        _add_common_flags(p)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.scheme is not None and "," in args.scheme:
        args.scheme = [float(v) for v in args.scheme.split(",")]
    try:
        run = _merge_config(args)
        command = {"solve": _cmd_solve, "converge": _cmd_converge, "profile": _cmd_profile}[args.command]
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        return command(run)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (SolverError, FloatingPointError, ArithmeticError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
