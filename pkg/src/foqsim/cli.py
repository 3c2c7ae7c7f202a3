"""``foqsim`` command line: run, analyze, validate.

Exit codes: 0 success, 1 config or argument error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from typing import Any, Dict, List, Optional, TextIO

import numpy as np
import pandas as pd

from analysis.model import (
    StepScenario,
    UnstableGainsError,
    initial_period,
    is_stable,
    poles,
    queue_trajectory,
    step_response_closed_form,
    step_response_recurrence,
)
from config.schema import (
    ConfigError,
    resolve_config,
    save_yaml,
    validate_raw,
    write_resolved_config,
)

from .experiment import config_from_resolved, load_raw, run_experiment, write_outputs
from .logging_utils import setup_logging
from .utils import RunDirectory

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2

DEFAULT_SPEEDUP = 1.28


def parse_override(value: str) -> Any:
    try:
        return json.loads(value)
    except Exception:
        lowered = value.lower()
        if lowered in {"true", "false"}:
            return lowered == "true"
        try:
            if "." in value:
                return float(value)
            return int(value)
        except ValueError:
            return value


def parse_overrides(items: List[str]) -> Dict[str, Any]:
    out: Dict[str, Any] = {}
    for item in items:
        if "=" not in item:
            raise ValueError(f"override must be key=value, got {item!r}")
        key, raw_val = item.split("=", 1)
        out[key.strip()] = parse_override(raw_val.strip())
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="foqsim", description="Feedback output queuing switch simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Run an experiment config")
    run.add_argument("config", help="Experiment YAML")
    run.add_argument("--seed", type=int, default=None, help="Override seed")
    run.add_argument("--out", default=None, help="Path of the windowed metrics CSV")
    run.add_argument("--run-id", default=None, help="Override run_id")
    run.add_argument("--overrides", action="append", default=[], help="key=value overrides")
    run.add_argument("--progress", action="store_true", help="Show a progress bar")

    analyze = sub.add_parser("analyze", help="Step response of the PI feedback loop as CSV")
    analyze.add_argument("--k", type=float, required=True, help="Proportional gain K")
    analyze.add_argument("--ki", type=float, required=True, help="Integral gain K_I")
    analyze.add_argument("--lambda", dest="arrival", type=float, default=None, help="Arrival rate after the step (required unless --poles-only)")
    analyze.add_argument("--ropt", type=float, default=None, help="Desired rate (required unless --poles-only)")
    analyze.add_argument("--sc", type=float, default=None, help="Fabric capacity (default: speedup 1.28 over max(lambda, ropt), reported in the header)")
    analyze.add_argument("--interval", type=float, default=1.0, help="Sampling interval T")
    analyze.add_argument("--horizon", type=int, default=200, help="Number of intervals")
    analyze.add_argument("--recurrence", action="store_true", help="Allow unstable gains, recurrence only")
    analyze.add_argument("--poles-only", action="store_true", help="Print z1,z2 and exit")

    validate = sub.add_parser("validate", help="Check a config and list every violation")
    validate.add_argument("config", help="Experiment YAML")
    validate.add_argument("--overrides", action="append", default=[], help="key=value overrides")
    return parser


def _print_errors(errors: List[str], stream: TextIO) -> None:
    for err in errors:
        stream.write(f"error: {err}\n")


def cmd_validate(args: argparse.Namespace) -> int:
    if not os.path.exists(args.config):
        _print_errors([f"config file not found: {args.config}"], sys.stderr)
        return EXIT_CONFIG
    raw = load_raw(args.config, parse_overrides(args.overrides))
    errors = validate_raw(raw)
    if errors:
        _print_errors(errors, sys.stderr)
        return EXIT_CONFIG
    sys.stdout.write(f"ok: {args.config}\n")
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    if not os.path.exists(args.config):
        _print_errors([f"config file not found: {args.config}"], sys.stderr)
        return EXIT_CONFIG
    overrides = parse_overrides(args.overrides)
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["output_path"] = args.out
    if args.run_id is not None:
        overrides["run_id"] = args.run_id
    raw = load_raw(args.config, overrides)
    errors = validate_raw(raw)
    if errors:
        _print_errors(errors, sys.stderr)
        return EXIT_CONFIG
    resolved = resolve_config(raw)

    run = RunDirectory.create(str(resolved.get("output_dir") or "outputs"), resolved.get("run_id"))
    resolved["run_id"] = run.run_id
    run_dir = run.path

    logger = setup_logging(run.file("logs.txt"))
    for key, value in run.record_provenance().items():
        logger.info("%s=%s", key, value)
    logger.info("config_path=%s", args.config)
    logger.info("overrides=%s", args.overrides)
    save_yaml(raw, run.file("config.yaml"))
    logger.info("resolved_config_path=%s", write_resolved_config(resolved, run_dir))

    try:
        config = config_from_resolved(resolved)
    except (ConfigError, ValueError) as exc:
        logger.error("config_error=%s", exc)
        return EXIT_CONFIG
    logger.info("seed=%d run_dir=%s", config.seed, run_dir)

    try:
        result = run_experiment(config, progress=args.progress)
        paths = write_outputs(config, result, run_dir)
    except Exception:
        logger.exception("run failed")
        return EXIT_RUNTIME
    for name, path in paths.items():
        logger.info("%s_path=%s", name, path)
    if result.violations:
        return EXIT_RUNTIME
    return EXIT_OK


def _fmt(value: Optional[float]) -> str:
    if value is None:
        return "nan"
    if isinstance(value, int):
        return str(value)
    return repr(float(value))


def cmd_analyze(args: argparse.Namespace, out: TextIO) -> int:
    if args.horizon < 1:
        _print_errors([f"--horizon must be >= 1, got {args.horizon}"], sys.stderr)
        return EXIT_CONFIG
    try:
        z1, z2 = poles(args.k, args.ki)
    except ValueError as exc:
        _print_errors([str(exc)], sys.stderr)
        return EXIT_CONFIG
    if args.poles_only:
        out.write(f"{z1!r},{z2!r}\n")
        return EXIT_OK
    missing = [flag for flag, val in (("--lambda", args.arrival), ("--ropt", args.ropt)) if val is None]
    if missing:
        _print_errors([f"{flag} is required for a step response" for flag in missing], sys.stderr)
        return EXIT_CONFIG
    stable = is_stable(args.k, args.ki)
    if not stable and not args.recurrence:
        _print_errors(
            [f"gains K={args.k} K_I={args.ki} outside stability region 0 < K_I < 2(1-K); use --recurrence"],
            sys.stderr,
        )
        return EXIT_CONFIG
    capacity = args.sc if args.sc is not None else DEFAULT_SPEEDUP * max(args.arrival, args.ropt)
    try:
        scenario = StepScenario(
            arrival_rate=args.arrival,
            desired_rate=args.ropt,
            fabric_capacity=capacity,
            gain_p=args.k,
            gain_i=args.ki,
            interval=args.interval,
        )
    except ValueError as exc:
        _print_errors([str(exc)], sys.stderr)
        return EXIT_CONFIG

    n = np.arange(args.horizon)
    header: Dict[str, Optional[float]] = {"z1": z1, "z2": z2, "n0": None, "A1": None, "A2": None}
    header.update({"lambda": args.arrival, "ropt": args.ropt, "sc": capacity, "T": args.interval})
    rho_closed = np.full(args.horizon, np.nan)
    if stable:
        resp = step_response_closed_form(scenario, args.horizon)
        header.update(n0=resp.n0, A1=resp.coeff1, A2=resp.coeff2)
        rho_closed = resp.drop_sequence
        queue = resp.queue_sequence
    else:
        try:
            n0, _, _ = initial_period(scenario)
            header["n0"] = n0
        except UnstableGainsError:
            n0 = args.horizon
        queue = np.zeros(args.horizon)
        if n0 > 0:
            q = np.maximum(queue_trajectory(scenario, min(n0, args.horizon)), 0.0)
            queue[: len(q)] = q
    rho_rec = step_response_recurrence(scenario, args.horizon)

    out.write("# " + " ".join(f"{k}={_fmt(v)}" for k, v in header.items()) + "\n")
    frame = pd.DataFrame({"n": n, "rho_closed": rho_closed, "rho_recurrence": rho_rec, "q_n": queue})
    frame.to_csv(out, index=False, lineterminator="\n", float_format="%.17g")
    return EXIT_OK


def main(argv: Optional[List[str]] = None, out: Optional[TextIO] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        if args.command == "validate":
            return cmd_validate(args)
        if args.command == "run":
            return cmd_run(args)
        return cmd_analyze(args, out or sys.stdout)
    except ValueError as exc:
        _print_errors([str(exc)], sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        logging.getLogger(__name__).exception("foqsim failed")
        _print_errors([str(exc)], sys.stderr)
        return EXIT_RUNTIME
