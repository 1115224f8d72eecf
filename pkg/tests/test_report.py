import json

import numpy as np
import pytest

from cablenmpc.report import compute_rmse, format_text, summarize, write_figures, write_summary
from cablenmpc.sim import SimLog
from cablenmpc.sim.engine import log_columns


def synthetic_log(err, t=None, tracking_start=0.0):
    t = np.linspace(0.0, 10.0, err.shape[0]) if t is None else t
    cols = log_columns(3)
    data = np.zeros((t.size, len(cols)))
    data[:, cols.index("t")] = t
    ref = np.column_stack((np.cos(t), np.sin(t), np.full(t.size, 0.5)))
    for j, a in enumerate("xyz"):
        data[:, cols.index(f"xref_{a}")] = ref[:, j]
        data[:, cols.index(f"x_{a}")] = ref[:, j] + err[:, j]
    for k in range(3):
        data[:, cols.index(f"mu{k}_norm")] = 0.7 + 0.01 * k
        data[:, cols.index(f"mucmd{k}_norm")] = 0.75
    for c in ("dist01", "dist02", "dist12"):
        data[:, cols.index(c)] = 0.6
    period = float(t[1] - t[0]) if t.size > 1 else 0.01
    return SimLog(cols, data, 3, period, tracking_start, {"scenario": "synthetic"})


def test_rmse_examples():
    assert np.array_equal(compute_rmse(synthetic_log(np.zeros((100, 3)))), np.zeros(3))
    err = np.zeros((100, 3))
    err[:, 0] = 0.05
    assert np.allclose(compute_rmse(synthetic_log(err)), [0.05, 0, 0], atol=1e-15)


def test_rmse_sinusoid():
    # whole number of periods so the mean of sin^2 is exactly 1/2
    t = np.arange(0, 20000) * (2 * np.pi / 1000)
    A = 0.07
    err = np.column_stack((A * np.sin(t), np.zeros_like(t), A * np.cos(3 * t)))
    r = compute_rmse(synthetic_log(err, t))
    assert abs(r[0] - A / np.sqrt(2)) < 1e-6
    assert abs(r[2] - A / np.sqrt(2)) < 1e-6


def test_rmse_window():
    err = np.zeros((101, 3))
    err[:50, 1] = 1.0
    log = synthetic_log(err, tracking_start=5.0)
    assert np.allclose(compute_rmse(log), 0.0)
    assert compute_rmse(log, start=0.0)[1] > 0.5
    with pytest.raises(ValueError):
        compute_rmse(log, start=11.0)


def test_rmse_empty():
    with pytest.raises(ValueError):
        compute_rmse(synthetic_log(np.zeros((0, 3)), t=np.zeros(0)))


def test_summary_and_figures(tmp_path):
    log = synthetic_log(np.full((50, 3), 0.01))
    stats = {"solve_times": [0.01, 0.03], "iterations": [3, 1], "kkt": [1e-7, 1e-5],
             "max_commanded_tension": 0.8, "wall_time": 1.5}
    s = summarize(log, stats)
    assert s["rmse_m"]["x"] == pytest.approx(0.01)
    assert s["min_separation_m"] == pytest.approx(0.6)
    assert s["max_tension_N"] == pytest.approx(0.72)
    assert s["max_commanded_tension_N"] == 0.8
    assert s["solver"]["mean_solve_time_s"] == pytest.approx(0.02)
    assert "rmse [m]: x=0.0100" in format_text(s)
    write_summary(s, tmp_path / "summary.json")
    assert json.loads((tmp_path / "summary.json").read_text())["samples"] == 50
    paths = write_figures(log, tmp_path / "fig")
    assert [p.name for p in paths] == ["tracking.csv", "separations.csv", "tensions.csv"]
    lines = (tmp_path / "fig" / "separations.csv").read_text().splitlines()
    assert lines[0] == "t,pair,distance_m" and len(lines) == 1 + 50 * 3
    assert lines[1].split(",")[1] == "0-1"
