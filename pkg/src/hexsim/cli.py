"""Command-line entry point: ``hexsim run | suite | validate | plot``.

Exit codes: 0 success, 2 configuration error, 3 divergence, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from .airframe import AirframeConfig, ConfigError
from .control import ControllerConfig
from .plot import EmptyLogError, write_plots
from .sim import (SCENARIO_DIR, DivergenceDetected, SimLog, load_json, load_scenario,
                  resolve_scenario_path, run_scenario)

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_IO = 0, 2, 3, 4


class _Printer:
    def __init__(self, verbosity: int):
        self.verbosity = verbosity

    def info(self, msg):
        if self.verbosity >= 1:
            print(msg)

    def debug(self, msg):
        if self.verbosity >= 2:
            print(msg)

    @staticmethod
    def error(msg):
        print(f"error: {msg}", file=sys.stderr)

    @staticmethod
    def warn(msg):
        print(f"warning: {msg}", file=sys.stderr)


def default_out_dir() -> Path:
    return Path(os.environ.get("HEXSIM_OUT", "runs"))


def shipped_scenarios() -> list[Path]:
    return sorted(p for p in SCENARIO_DIR.glob("*.json")
                  if not p.stem.endswith("_default"))


def format_metrics(name: str, metrics: dict) -> str:
    settle = metrics["settling_time"]
    return (f"{name}: rms_pos={metrics['rms_position_error']:.4g} m "
            f"max_pos={metrics['max_position_error']:.4g} m "
            f"rms_att={math.degrees(metrics['rms_attitude_error']):.4g} deg "
            f"max_att={math.degrees(metrics['max_attitude_error']):.4g} deg "
            f"settle={'never' if settle is None else f'{settle:.3g} s'} "
            f"sat={metrics['saturation_fraction']:.3g}")


def execute(scenario_path, out_dir, overrides=(), decimation=None) -> dict:
    """Load, run and persist one scenario.

    Returns a summary dict with ``status`` (``ok``, ``config``, ``diverged``
    or ``io``), a message, and the metrics on success. Partial logs of a
    diverged run are still written.
    """
    name = Path(scenario_path).stem
    try:
        scenario = load_scenario(scenario_path, overrides)
    except ConfigError as exc:
        return {"scenario": name, "status": "config", "message": str(exc), "errors": exc.errors}
    except OSError as exc:
        return {"scenario": name, "status": "io", "message": str(exc)}
    if decimation is not None and decimation < 1:
        return {"scenario": name, "status": "config", "message": "decimation must be >= 1"}
    name = scenario.name
    out = Path(out_dir)
    try:
        log, metrics = run_scenario(scenario, decimation)
    except DivergenceDetected as exc:
        try:
            exc.log.write(out)
        except OSError:
            pass
        return {"scenario": name, "status": "diverged", "message": exc.reason}
    try:
        log.write(out)
        (out / "metrics.json").write_text(json.dumps(metrics.to_dict(), indent=2, sort_keys=True))
    except OSError as exc:
        return {"scenario": name, "status": "io", "message": str(exc)}
    return {"scenario": name, "status": "ok", "message": "", "metrics": metrics.to_dict(),
            "out": str(out)}


_STATUS_EXIT = {"ok": EXIT_OK, "config": EXIT_CONFIG, "diverged": EXIT_DIVERGED, "io": EXIT_IO}


def _report(result: dict, pr: _Printer) -> int:
    status = result["status"]
    if status == "ok":
        pr.info(format_metrics(result["scenario"], result["metrics"]))
        pr.debug(f"  wrote {result['out']}")
    elif status == "config":
        for err in result.get("errors", [result["message"]]):
            pr.error(err)
    elif status == "diverged":
        pr.error(f"{result['scenario']} diverged: {result['message']}")
    else:
        pr.error(result["message"])
    return _STATUS_EXIT[status]


def cmd_run(args, pr: _Printer) -> int:
    scenario = args.scenario or args.scenario_pos
    if scenario is None:
        pr.error("run needs a scenario (--scenario PATH)")
        return EXIT_CONFIG
    out = Path(args.out) if args.out else default_out_dir() / Path(scenario).stem
    return _report(execute(scenario, out, args.overrides, args.decimation), pr)


def _suite_worker(job):
    return execute(*job)


def cmd_suite(args, pr: _Printer) -> int:
    scenarios = list(args.scenario or []) + list(args.scenario_pos or [])
    if not scenarios:
        scenarios = [str(p) for p in shipped_scenarios()]
    out = Path(args.out) if args.out else default_out_dir()
    jobs = [(s, out / Path(s).stem, tuple(args.overrides), args.decimation) for s in scenarios]
    with ProcessPoolExecutor(max_workers=min(len(jobs), os.cpu_count() or 1)) as pool:
        results = list(pool.map(_suite_worker, jobs))
    codes = [_report(r, pr) for r in results]
    summary = {"code_version": __version__, "results": results}
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    except OSError as exc:
        pr.error(str(exc))
        return EXIT_IO
    failed = [c for c in codes if c]
    pr.info(f"suite: {len(codes) - len(failed)}/{len(codes)} scenarios ok")
    return max(failed) if failed else EXIT_OK


def classify_config(data: dict) -> str:
    if "trajectory" in data or "duration" in data:
        return "scenario"
    if "mass" in data or "inertia_body" in data:
        return "airframe"
    if "gains" in data or "rate_inner_hz" in data:
        return "controller"
    return "scenario"


def validate_file(path, overrides=()) -> tuple[list[str], list[str]]:
    """Full validation without running: returns ``(errors, warnings)``."""
    path = resolve_scenario_path(path)
    data = load_json(path)
    kind = classify_config(data)
    try:
        if kind == "airframe":
            airframe = AirframeConfig.from_dict(data)
        elif kind == "controller":
            ControllerConfig.from_dict(data)
            return [], []
        else:
            airframe = load_scenario(path, overrides).airframe
    except ConfigError as exc:
        return exc.errors, []
    return [], airframe.warnings()


def cmd_validate(args, pr: _Printer) -> int:
    paths = list(args.scenario or []) + list(args.scenario_pos or [])
    if not paths:
        pr.error("validate needs a config path")
        return EXIT_CONFIG
    code = EXIT_OK
    for p in paths:
        try:
            errors, warnings = validate_file(p, args.overrides)
        except ConfigError as exc:
            errors, warnings = exc.errors, []
        except OSError as exc:
            pr.error(str(exc))
            code = max(code, EXIT_IO)
            continue
        for w in warnings:
            pr.warn(f"{p}: {w}")
        for e in errors:
            pr.error(f"{p}: {e}")
        if errors:
            code = max(code, EXIT_CONFIG)
        else:
            pr.info(f"{p}: ok")
    return code


def cmd_plot(args, pr: _Printer) -> int:
    target = args.log or args.scenario_pos
    if target is None:
        pr.error("plot needs a log path")
        return EXIT_CONFIG
    path = Path(target)
    if path.is_dir():
        path = path / "log.csv"
    out = Path(args.out) if args.out else path.parent
    try:
        log = SimLog.read_csv(path)
        paths = write_plots(log, out)
    except (OSError, ValueError, EmptyLogError) as exc:
        pr.error(f"cannot plot {path}: {exc}")
        return EXIT_IO
    for p in paths:
        pr.info(f"wrote {p}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output directory (default: $HEXSIM_OUT or ./runs)")
    common.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override a dotted config key (repeatable)")
    common.add_argument("--decimation", type=int, help="log every n-th physics tick")
    verb = common.add_mutually_exclusive_group()
    verb.add_argument("-q", "--quiet", action="store_const", dest="verbosity", const=0)
    verb.add_argument("-v", "--verbose", action="store_const", dest="verbosity", const=2)
    common.set_defaults(verbosity=1)

    parser = argparse.ArgumentParser(prog="hexsim",
                                     description="Dual-frame tilting hexacopter simulator")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[common], help="run one scenario")
    p.add_argument("scenario_pos", nargs="?", metavar="SCENARIO")
    p.add_argument("--scenario", help="scenario JSON path or shipped scenario name")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("suite", parents=[common], help="run several scenarios in parallel")
    p.add_argument("scenario_pos", nargs="*", metavar="SCENARIO")
    p.add_argument("--scenario", action="append", help="scenario to include (repeatable)")
    p.set_defaults(func=cmd_suite)

    p = sub.add_parser("validate", parents=[common], help="check config files without running")
    p.add_argument("scenario_pos", nargs="*", metavar="CONFIG")
    p.add_argument("--scenario", action="append", help="config file to check (repeatable)")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("plot", parents=[common], help="render SVG plots from a log")
    p.add_argument("scenario_pos", nargs="?", metavar="LOG")
    p.add_argument("--log", help="log.csv path or run directory")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args, _Printer(args.verbosity))


if __name__ == "__main__":
    sys.exit(main())
