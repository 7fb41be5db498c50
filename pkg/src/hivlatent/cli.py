"""Command-line front end: ``hivlatent {analyze,simulate,threshold,lyapunov,presets}``.

Exit codes: 0 success, 2 invalid input or configuration, 3 file-system
failure, 4 numeric failure (solver or eigensolver).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import lyapunov, thresholds
from .analysis import EquilibriumKind
from .errors import ConfigError, HivModelError, NumericFailure
from .integrator import integrate
from .model import vector_field_3cm, vector_field_4cm
from .presets import INITIAL_PRESETS, PARAM_PRESETS, params_as_dict
from .scenario import (
    DEFAULT_CONFIG,
    ModelKind,
    Scenario,
    apply_overrides,
    build_report,
    load_scenario,
    parse_config_text,
    sample_times,
    trajectory_rows,
    trajectory_summary,
    write_csv,
)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_IO = 3
EXIT_NUMERIC = 4

OUT_ENV = "HIVLATENT_OUT"


class _IOFailure(Exception):
    pass


def _global_options(suppress: bool) -> argparse.ArgumentParser:
    # the same flags are accepted before and after the subcommand; after wins
    default = argparse.SUPPRESS if suppress else None
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", metavar="PATH", default=default, help="scenario JSON file")
    p.add_argument("--out", metavar="DIR", default=default,
                   help=f"output directory (default: ${OUT_ENV} or the current directory)")
    p.add_argument("--preset", metavar="NAME", default=default, help="parameter preset (see `presets list`)")
    p.add_argument("--set", metavar="KEY=VALUE", action="append", dest="sets_sub" if suppress else "sets",
                   default=default, help="override a config field, e.g. efficacy.epsilon=0.519 (repeatable)")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hivlatent",
        description="HIV dynamics with latently infected cells: analysis, simulation and eradication times.",
        parents=[_global_options(False)],
    )
    sub = parser.add_subparsers(dest="command", required=True)
    common = [_global_options(True)]

    sub.add_parser("analyze", parents=common, help="reproduction numbers, equilibria and stability (JSON to stdout)")

    sim = sub.add_parser("simulate", parents=common, help="integrate the model and write trajectory CSV + JSON")
    sim.add_argument("--model", choices=ModelKind.ALL + ("both",), help="override the scenario model")
    sim.add_argument("--horizon", type=float, help="final time in days")

    thr = sub.add_parser("threshold", parents=common, help="time for the viral load to reach 10^-n")
    thr.add_argument("--metric", choices=["P", "Q"], required=True, help="P: three-component model, Q: latent model")
    thr.add_argument("--n", type=int, default=5, help="threshold exponent (default 5)")
    grid = thr.add_mutually_exclusive_group(required=True)
    grid.add_argument("--r", type=float, action="append", help="target reproduction number (repeatable)")
    grid.add_argument("--r-grid", metavar="START:STOP:STEP",
                      help="inclusive grid, or a comma-separated list; empty string gives an empty grid")
    thr.add_argument("--jobs", type=int, default=None, help="worker processes (default: all CPUs)")

    lya = sub.add_parser("lyapunov", parents=common, help="check Lyapunov descent along a latent-model trajectory")
    lya.add_argument("--which", required=True, type=_parse_which, help="NonInfective or Endemic")
    lya.add_argument("--horizon", type=float, help="final time in days")

    pre = sub.add_parser("presets", parents=common, help="named parameter sets and initial states")
    pre.add_argument("action", choices=["list"])
    return parser


def _parse_which(text: str) -> EquilibriumKind:
    aliases = {"noninfective": EquilibriumKind.NON_INFECTIVE, "ni": EquilibriumKind.NON_INFECTIVE,
               "endemic": EquilibriumKind.ENDEMIC, "i": EquilibriumKind.ENDEMIC}
    try:
        return aliases[text.replace("-", "").replace("_", "").lower()]
    except KeyError:
        raise argparse.ArgumentTypeError(f"expected NonInfective or Endemic, got {text!r}") from None


def parse_r_grid(text: str) -> list[float]:
    """``"a:b:s"`` is the inclusive grid a, a+s, ... <= b; otherwise a comma-separated list."""
    text = text.strip()
    if not text:
        return []
    try:
        if ":" in text:
            start, stop, step = (float(x) for x in text.split(":"))
            if not step > 0:
                raise ValueError("step must be positive")
            count = math.floor((stop - start) / step + 1e-9) + 1
            return [round(start + i * step, 12) for i in range(max(count, 0))]
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"--r-grid {text!r}: {exc}") from None


def _scenario_from_args(args: argparse.Namespace) -> Scenario:
    doc = json.loads(json.dumps(DEFAULT_CONFIG))
    if args.config:
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as exc:
            raise _IOFailure(f"cannot read config {args.config}: {exc.strerror or exc}") from exc
        doc.update(parse_config_text(text, args.config))
    if args.preset:
        params = doc.get("params") or {}
        if not isinstance(params, dict):
            params = {}
        doc["params"] = {**params, "preset": args.preset}
    overrides = (getattr(args, "sets", None) or []) + (getattr(args, "sets_sub", None) or [])
    return load_scenario(apply_overrides(doc, overrides))


def _out_dir(args: argparse.Namespace, required: bool) -> Optional[Path]:
    out = args.out or os.environ.get(OUT_ENV)
    if out is None:
        if not required:
            return None
        out = "."
    path = Path(out)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise _IOFailure(f"cannot create output directory {out}: {exc.strerror or exc}") from exc
    if not os.access(path, os.W_OK):
        raise _IOFailure(f"output directory {out} is not writable")
    return path


def _write_text(path: Path, text: str) -> None:
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise _IOFailure(f"cannot write {path}: {exc.strerror or exc}") from exc


def _write_csv(path: Path, header, rows) -> None:
    try:
        write_csv(path, header, rows)
    except OSError as exc:
        raise _IOFailure(f"cannot write {path}: {exc.strerror or exc}") from exc


def cmd_analyze(args: argparse.Namespace) -> int:
    sc = _scenario_from_args(args)
    report = build_report(sc)
    text = report.to_json()
    out = _out_dir(args, required=False)
    if out is not None:
        _write_text(out / "report.json", text + "\n")
    print(text)
    return EXIT_OK


def _simulate_one(sc: Scenario, model: str, horizon: float, out: Path, suffix: str) -> dict:
    names = ("T", "I", "V") if model == ModelKind.THREE_COMPONENT else ("T", "I", "L", "V")
    if model == ModelKind.THREE_COMPONENT:
        rhs = vector_field_3cm(sc.core, sc.efficacy)
        y0 = (sc.initials.T, sc.initials.I, sc.initials.V)
    else:
        rhs = vector_field_4cm(sc.params, sc.efficacy)
        y0 = tuple(sc.initials)
    events = tuple(
        dataclasses.replace(ev, component=names.index(sc.state_names[ev.component]))
        for ev in sc.output.events
        if sc.state_names[ev.component] in names
    )
    traj = integrate(rhs, y0, dataclasses.replace(sc.solver, t_max=horizon), events)
    extra = [rec.t for rec in traj.events] + list(sc.output.times)
    times = sample_times(horizon, sc.output.samples, sc.output.sampling, extra)
    path = out / f"trajectory{suffix}.csv"
    _write_csv(path, ("t",) + names, trajectory_rows(traj, times))
    summary = trajectory_summary(traj, names)
    summary.update(model=model, csv=path.name, rows=len(times))
    return summary


def cmd_simulate(args: argparse.Namespace) -> int:
    sc = _scenario_from_args(args)
    horizon = sc.horizon if args.horizon is None else args.horizon
    if not (math.isfinite(horizon) and horizon >= 0):
        raise ConfigError(f"--horizon must be finite and nonnegative, got {horizon!r}")
    model = args.model or sc.model
    out = _out_dir(args, required=True)
    report = build_report(sc)
    if model == "both":
        runs = [_simulate_one(sc, m, horizon, out, f"_{m}") for m in ModelKind.ALL]
    else:
        runs = [_simulate_one(sc, model, horizon, out, "")]
    report.extras["simulation"] = {"horizon": horizon, "runs": runs}
    _write_text(out / "simulation.json", report.to_json() + "\n")
    for run in runs:
        print(out / run["csv"])
    return EXIT_OK


def cmd_threshold(args: argparse.Namespace) -> int:
    sc = _scenario_from_args(args)
    grid = args.r if args.r is not None else parse_r_grid(args.r_grid)
    out = _out_dir(args, required=True)
    initials = sc.initials
    rows = thresholds.sweep(args.metric, args.n, grid, sc.params, initials, sc.solver, jobs=args.jobs)
    header = ["r", "epsilon", "time_days"]
    with_errors = any(row.error for row in rows)
    if with_errors:
        header.append("error")
    body = [
        [row.r, row.epsilon, row.time] + ([row.error or ""] if with_errors else [])
        for row in rows
    ]
    path = out / f"threshold_{args.metric}{args.n}.csv"
    _write_csv(path, header, body)
    print(path)
    return EXIT_OK


def cmd_lyapunov(args: argparse.Namespace) -> int:
    sc = _scenario_from_args(args)
    horizon = sc.horizon if args.horizon is None else args.horizon
    if not (math.isfinite(horizon) and horizon > 0):
        raise ConfigError(f"horizon must be positive and finite, got {horizon!r}")
    out = _out_dir(args, required=True)
    traj = integrate(vector_field_4cm(sc.params, sc.efficacy), tuple(sc.initials),
                     dataclasses.replace(sc.solver, t_max=horizon))
    rep = lyapunov.verify_descent(sc.params, sc.efficacy, traj, args.which)
    # forward differences; the last sample reuses the final interval
    fd = np.append(rep.fd_rates, rep.fd_rates[-1:]) if rep.fd_rates.size else np.full(len(rep.samples), math.nan)
    rows = [[s.t, s.u, s.du_dt_analytic, float(d)] for s, d in zip(rep.samples, fd)]
    path = out / f"lyapunov_{args.which.value}.csv"
    _write_csv(path, ("t", "U", "dUdt_analytic", "dUdt_fd"), rows)
    verdict = {
        "which": args.which.value,
        "verdict": "pass" if rep.passed else "fail",
        "passed": rep.passed,
        "max_dUdt_analytic": rep.max_rate_analytic,
        "max_dUdt_fd": rep.max_rate_fd,
        "tolerance": rep.tolerance,
        "samples": len(rep.samples),
        "skipped_nonpositive": rep.skipped,
        "csv": path.name,
    }
    report = build_report(sc)
    report.extras["lyapunov"] = verdict
    _write_text(out / f"lyapunov_{args.which.value}.json", report.to_json() + "\n")
    print(json.dumps(verdict, indent=2))
    return EXIT_OK


def cmd_presets(args: argparse.Namespace) -> int:
    doc = {
        "params": {name: params_as_dict(lp) for name, lp in PARAM_PRESETS.items()},
        "initials": {name: s._asdict() for name, s in INITIAL_PRESETS.items()},
    }
    print(json.dumps(doc, indent=2))
    return EXIT_OK


COMMANDS = {
    "analyze": cmd_analyze,
    "simulate": cmd_simulate,
    "threshold": cmd_threshold,
    "lyapunov": cmd_lyapunov,
    "presets": cmd_presets,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except _IOFailure as exc:
        print(f"hivlatent: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NumericFailure as exc:
        print(f"hivlatent: numeric failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except HivModelError as exc:
        print(f"hivlatent: invalid input ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"hivlatent: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
