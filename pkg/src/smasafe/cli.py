"""Command-line front end.

Exit codes: 0 success, 1 invariance certificate false, 2 calibration failure,
3 safety precondition (simulation refused), 64 usage or parse error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from .safety import check_invariance
from .scenario import ScenarioError, bundled_scenario_path, parse_model, parse_scenario
from .sim import TraceLog, run_scenario
from .thermal import (CalibrationError, LumpedThermalParams, LumpedThermalRegressor,
                      TraceFormatError, prbs_duties, read_trace_csv, simulate_trace, write_trace_csv)

EXIT_OK = 0
EXIT_CERT_FALSE = 1
EXIT_CALIBRATION = 2
EXIT_UNSAFE = 3
EXIT_USAGE = 64

log = logging.getLogger("smasafe")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _write_json(obj, path=None):
    text = json.dumps(obj, indent=2) + "\n"
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _resolve_scenario(arg: str) -> str:
    if arg.startswith("bundled:"):
        return str(bundled_scenario_path(arg.split(":", 1)[1]))
    return arg


def cmd_fit(csv_in, json_out=None) -> int:
    try:
        trace = read_trace_csv(csv_in)
    except (OSError, TraceFormatError) as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    try:
        reg = LumpedThermalRegressor().fit_trace(trace[:, 0], trace[:, 1])
    except CalibrationError as exc:
        log.error("calibration failed: %s", exc)
        return EXIT_CALIBRATION
    p = reg.params_
    _write_json({"a1": p.a1, "a2": p.a2, "a3": p.a3, "residual_rms": reg.residual_rms_,
                 "n_samples": int(len(trace))}, json_out)
    return EXIT_OK


def cmd_check_invariance(model_path) -> int:
    try:
        system, cfg = parse_model(_resolve_scenario(model_path))
    except ScenarioError as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    cert = check_invariance(system, cfg)
    print(json.dumps(cert.to_dict()))
    return EXIT_OK if cert.holds else EXIT_CERT_FALSE


def cmd_simulate(scenario_path, trace_out) -> int:
    try:
        scenario = parse_scenario(_resolve_scenario(scenario_path))
    except ScenarioError as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    cert = check_invariance(scenario.system, scenario.safety)
    if not cert.holds:
        log.error("refusing to simulate: invariance certificate failed at block/row/col %s",
                  cert.witness)
        return EXIT_UNSAFE
    trace = run_scenario(scenario)
    trace.to_csv(trace_out)
    _write_json(trace.summary())
    return EXIT_OK


def cmd_summarize(trace_csv) -> int:
    try:
        trace = TraceLog.from_csv(trace_csv)
    except (OSError, ValueError, IndexError) as exc:
        log.error("cannot read trace %s: %s", trace_csv, exc)
        return EXIT_USAGE
    _write_json(trace.summary())
    return EXIT_OK


def cmd_gen_trace(out, a1, a2, a3, steps, noise, seed, t0, pattern) -> int:
    try:
        p = LumpedThermalParams(a1, a2, a3)
    except ValueError as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    rng = np.random.default_rng(seed)
    if pattern == "alternate":
        duties = (np.arange(steps) % 2).astype(float)
    else:
        duties = prbs_duties(steps, rng=rng)
    trace = simulate_trace(p, t0, duties, noise=noise, rng=rng)
    write_trace_csv(out, trace)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="smasafe", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="least-squares fit of lumped thermal coefficients")
    p.add_argument("csv", help="trace with header step,temp_c,duty")
    p.add_argument("-o", "--output", help="JSON output path (default stdout)")

    p = sub.add_parser("check-invariance", help="print the invariance certificate of a model file")
    p.add_argument("model", help="model or scenario YAML file, or bundled:NAME")

    p = sub.add_parser("simulate", help="run a scenario and write its trace CSV")
    p.add_argument("scenario", help="scenario YAML file, or bundled:NAME")
    p.add_argument("-o", "--output", required=True, help="trace CSV path")

    p = sub.add_parser("summarize", help="recompute the run summary from a trace CSV")
    p.add_argument("trace")

    p = sub.add_parser("gen-trace", help="write a synthetic calibration trace")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--a1", type=float, default=0.9)
    p.add_argument("--a2", type=float, default=3.0)
    p.add_argument("--a3", type=float, default=2.0)
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--noise", type=float, default=0.0, help="measurement noise sigma (°C)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--t0", type=float, default=20.0, help="initial temperature (°C)")
    p.add_argument("--pattern", choices=("alternate", "prbs"), default="prbs")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    if args.command == "fit":
        return cmd_fit(args.csv, args.output)
    if args.command == "check-invariance":
        return cmd_check_invariance(args.model)
    if args.command == "simulate":
        return cmd_simulate(args.scenario, args.output)
    if args.command == "summarize":
        return cmd_summarize(args.trace)
    return cmd_gen_trace(args.output, args.a1, args.a2, args.a3, args.steps, args.noise,
                         args.seed, args.t0, args.pattern)


if __name__ == "__main__":
    sys.exit(main())
