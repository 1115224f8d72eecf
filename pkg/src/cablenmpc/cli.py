"""Command line front end.

    cablenmpc simulate <scenario> [--out DIR] [--duration S]
    cablenmpc report <log.csv> [--format text|csv]
    cablenmpc sweep <scenario> --param path=v1,v2 [--param ...] [--workers K]

``<scenario>`` is a YAML file or the name of a bundled scenario.
Exit codes: 0 ok, 2 configuration error, 3 solver fault, 4 physics fault.
"""
from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import yaml

from .errors import (CableNmpcError, ConfigError, GeometryError, PhysicsError, SolverError,
                     TensionFloorError)
from .report import compute_rmse, format_text, summarize, write_figures, write_summary
from .scenario import Scenario
from .sim import SimLog, SimulationFault, run_scenario

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_PHYSICS = 0, 2, 3, 4
LOG_ENV = "CABLENMPC_LOG_LEVEL"

log = logging.getLogger("cablenmpc")


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, SimulationFault):
        exc = exc.cause
    if isinstance(exc, (ConfigError, GeometryError)):
        return EXIT_CONFIG
    if isinstance(exc, (SolverError, TensionFloorError)):
        return EXIT_SOLVER
    if isinstance(exc, PhysicsError):
        return EXIT_PHYSICS
    return 1


def _write_run(out: Path, simlog: SimLog, summary: dict):
    out.mkdir(parents=True, exist_ok=True)
    simlog.to_csv(out / "log.csv")
    write_summary(summary, out / "summary.json")
    write_figures(simlog, out / "figures")


def cmd_simulate(args) -> int:
    sc = Scenario.load(args.scenario)
    out = Path(args.out or sc.data["output"]["dir"])
    try:
        simlog, summary = run_scenario(sc, args.duration)
    except SimulationFault as exc:
        _write_run(out, exc.partial_log, exc.summary)
        print(f"error: simulation aborted: {exc}", file=sys.stderr)
        print(f"partial log written to {out}", file=sys.stderr)
        return exit_code(exc)
    _write_run(out, simlog, summary)
    print(format_text(summary))
    print(f"wrote {out / 'log.csv'}")
    return EXIT_OK


def _load_log(path: Path) -> SimLog:
    if not path.exists():
        raise ConfigError(f"log file {path} not found")
    start = 0.0
    summ = path.with_name("summary.json")
    if summ.exists():
        start = json.loads(summ.read_text()).get("meta", {}).get("tracking_start_s", 0.0)
    try:
        return SimLog.from_csv(path, tracking_start=start)
    except (ValueError, IndexError) as exc:
        raise ConfigError(f"cannot parse log {path}: {exc}") from exc


def cmd_report(args) -> int:
    simlog = _load_log(Path(args.log))
    if len(simlog) == 0:
        raise ConfigError("log contains no samples")
    if args.format == "csv":
        rmse = compute_rmse(simlog)
        w = csv.writer(sys.stdout)
        w.writerow(["axis", "rmse_m"])
        for a, v in zip("xyz", rmse):
            w.writerow([a, f"{v:.10g}"])
    else:
        summary = summarize(simlog)
        summary["meta"]["scenario"] = Path(args.log).parent.name or "log"
        print(format_text(summary))
    return EXIT_OK


def _parse_param(text: str):
    if "=" not in text:
        raise ConfigError(f"--param expects path=values, got {text!r}")
    path, values = text.split("=", 1)
    try:
        vals = yaml.safe_load(f"[{values}]")
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse values for {path}: {exc}") from exc
    if not vals:
        raise ConfigError(f"no values given for {path}")
    return path.strip(), vals


def _sweep_one(base: Scenario, combo, out: Path, index: int, duration):
    row = {"run": index}
    row.update({p: json.dumps(v) for p, v in combo})
    try:
        sc = base
        for p, v in combo:
            sc = sc.with_override(p, v)
        simlog, summary = run_scenario(sc, duration)
        status = "ok"
    except SimulationFault as exc:
        simlog, summary, status = exc.partial_log, exc.summary, f"fault: {exc}"
    except CableNmpcError as exc:
        row.update(status=f"error: {exc}", code=exit_code(exc))
        return row
    _write_run(out / f"run{index:03d}", simlog, summary)
    r = summary.get("rmse_m", {})
    row.update(status=status, code=EXIT_OK if status == "ok" else EXIT_SOLVER,
               rmse_x_m=r.get("x"), rmse_y_m=r.get("y"), rmse_z_m=r.get("z"),
               min_separation_m=summary.get("min_separation_m"),
               max_commanded_tension_N=summary.get("max_commanded_tension_N"),
               mean_solve_time_s=summary.get("solver", {}).get("mean_solve_time_s"))
    return row


def cmd_sweep(args) -> int:
    base = Scenario.load(args.scenario)
    params = [_parse_param(p) for p in args.param]
    combos = [tuple(zip([p for p, _ in params], vals))
              for vals in itertools.product(*[v for _, v in params])]
    # validate every combination before spending time on any run
    problems = []
    for combo in combos:
        try:
            sc = base
            for p, v in combo:
                sc = sc.with_override(p, v)
        except ConfigError as exc:
            problems += [f"{dict(combo)}: {m}" for m in exc.problems]
    if problems:
        raise ConfigError(problems)
    out = Path(args.out or Path(base.data["output"]["dir"]) / "sweep")
    out.mkdir(parents=True, exist_ok=True)
    with ThreadPoolExecutor(max_workers=args.workers) as pool:
        rows = list(pool.map(lambda ic: _sweep_one(base, ic[1], out, ic[0], args.duration),
                             enumerate(combos)))
    fields = ["run"] + [p for p, _ in params] + ["status", "code", "rmse_x_m", "rmse_y_m",
                                                 "rmse_z_m", "min_separation_m",
                                                 "max_commanded_tension_N", "mean_solve_time_s"]
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        for row in rows:
            w.writerow(row)
    for row in rows:
        print(f"run {row['run']:3d}: {row['status']}")
    print(f"wrote {out / 'sweep.csv'}")
    return max(row["code"] for row in rows)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cablenmpc", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one scenario")
    p.add_argument("scenario")
    p.add_argument("--out", help="output directory (default: scenario output.dir)")
    p.add_argument("--duration", type=float, help="override simulated time [s]")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="tracking metrics of a saved log")
    p.add_argument("log")
    p.add_argument("--format", choices=("text", "csv"), default="text")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("sweep", help="grid over scenario parameters")
    p.add_argument("scenario")
    p.add_argument("--param", action="append", required=True,
                   help="dotted.path=v1,v2,...  ('*' indexes every list item)")
    p.add_argument("--out")
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    p.add_argument("--duration", type=float)
    p.set_defaults(func=cmd_sweep)
    return ap


def run_command(argv=None) -> int:
    level = os.environ.get(LOG_ENV, "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print("error: invalid configuration:", file=sys.stderr)
        for p in exc.problems:
            print(f"  - {p}", file=sys.stderr)
        return EXIT_CONFIG
    except CableNmpcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exit_code(exc)


def main():
    sys.exit(run_command())


if __name__ == "__main__":
    main()
