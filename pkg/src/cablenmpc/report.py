"""Tracking metrics, run summaries and tidy per-figure CSV tables."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np


def compute_rmse(log, start: float | None = None, end: float | None = None) -> np.ndarray:
    """Per-axis position RMSE over ``[start, end]`` (defaults: tracking window)."""
    if log is None or len(log) == 0:
        raise ValueError("cannot compute RMSE of an empty log")
    t = log.time
    lo = log.tracking_start if start is None else start
    hi = t[-1] if end is None else end
    sel = (t >= lo - 1e-9) & (t <= hi + 1e-9)
    if not np.any(sel):
        raise ValueError(f"no samples in tracking window [{lo}, {hi}]")
    err = log.block("x")[sel] - log.block("xref")[sel]
    return np.sqrt(np.mean(err * err, axis=0))


def summarize(log, stats: dict | None = None) -> dict:
    stats = stats or {}
    out = {"samples": len(log), "meta": dict(log.meta)}
    if len(log):
        rmse = compute_rmse(log)
        d = log.distances()
        out.update({
            "rmse_m": {a: float(v) for a, v in zip("xyz", rmse)},
            "tracking_window_s": [float(log.tracking_start), float(log.time[-1])],
            "min_separation_m": float(d.min()) if d.size else float("nan"),
            "max_tension_N": float(max(np.max(log.column(f"mu{k}_norm")) for k in range(log.n))),
            "max_commanded_tension_N": float(max(np.max(log.column(f"mucmd{k}_norm"))
                                                 for k in range(log.n))),
        })
    st = stats.get("solve_times") or []
    if st:
        out["solver"] = {
            "solves": len(st),
            "mean_solve_time_s": float(np.mean(st)),
            "max_solve_time_s": float(np.max(st)),
            "mean_iterations": float(np.mean(stats["iterations"])),
            "max_kkt": float(np.max(stats["kkt"])),
        }
    if "max_commanded_tension" in stats:
        out["max_commanded_tension_N"] = float(stats["max_commanded_tension"])
    if "wall_time" in stats:
        out["wall_time_s"] = float(stats["wall_time"])
    return out


def format_text(summary: dict) -> str:
    lines = [f"scenario: {summary.get('meta', {}).get('scenario', '?')}"]
    if "rmse_m" in summary:
        r = summary["rmse_m"]
        w = summary["tracking_window_s"]
        lines.append(f"rmse [m]: x={r['x']:.4f} y={r['y']:.4f} z={r['z']:.4f} "
                     f"(window {w[0]:.2f}-{w[1]:.2f} s)")
        lines.append(f"min separation [m]: {summary['min_separation_m']:.4f}")
        lines.append(f"max tension [N]: actual {summary['max_tension_N']:.4f}, "
                     f"commanded {summary['max_commanded_tension_N']:.4f}")
    if "solver" in summary:
        s = summary["solver"]
        lines.append(f"nmpc: {s['solves']} solves, mean {1e3 * s['mean_solve_time_s']:.1f} ms, "
                     f"max {1e3 * s['max_solve_time_s']:.1f} ms")
    if "fault" in summary.get("meta", {}):
        lines.append(f"fault: {summary['meta']['fault']}")
    return "\n".join(lines)


def rmse_csv_rows(summary: dict) -> list:
    r = summary["rmse_m"]
    return [["axis", "rmse_m"]] + [[a, f"{r[a]:.10g}"] for a in "xyz"]


def write_summary(summary: dict, path) -> None:
    Path(path).write_text(json.dumps(summary, indent=2, sort_keys=True, default=float) + "\n")


def write_figures(log, out_dir) -> list:
    """Tidy long-format CSVs: tracking, separations, tensions."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t = log.time
    paths = []

    p = out / "tracking.csv"
    x, xr = log.block("x"), log.block("xref")
    with open(p, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "axis", "actual_m", "reference_m"])
        for i in range(len(t)):
            for j, a in enumerate("xyz"):
                w.writerow([f"{t[i]:.10g}", a, f"{x[i, j]:.10g}", f"{xr[i, j]:.10g}"])
    paths.append(p)

    p = out / "separations.csv"
    names = [c for c in log.columns if c.startswith("dist")]
    d = log.distances()
    with open(p, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "pair", "distance_m"])
        for i in range(len(t)):
            for j, c in enumerate(names):
                w.writerow([f"{t[i]:.10g}", f"{c[4]}-{c[5:]}", f"{d[i, j]:.10g}"])
    paths.append(p)

    p = out / "tensions.csv"
    with open(p, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "robot", "actual_N", "commanded_N"])
        act = [log.column(f"mu{k}_norm") for k in range(log.n)]
        cmd = [log.column(f"mucmd{k}_norm") for k in range(log.n)]
        for i in range(len(t)):
            for k in range(log.n):
                w.writerow([f"{t[i]:.10g}", k, f"{act[k][i]:.10g}", f"{cmd[k][i]:.10g}"])
    paths.append(p)
    return paths
