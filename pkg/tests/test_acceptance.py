"""End-to-end acceptance criteria.

Each test records one PASS/FAIL line; the lines are printed in the terminal
summary by ``conftest.pytest_terminal_summary``.
"""
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from cablenmpc.scenario import BUNDLED, Scenario
from cablenmpc.sim import run_scenario

RESULTS: list[str] = []
RMSE_BOUND = 0.10
SEPARATION = 0.597
SEPARATION_DEADLINE = 5.0
PAYLOAD_ERROR = 0.03
TENSION_SLACK = 1e-3
STEP_BUDGET = 0.050

_runs: dict = {}


def run(name):
    if name not in _runs:
        _runs[name] = run_scenario(Scenario.bundled(name))
    return _runs[name]


def record(name, ok, detail):
    RESULTS.append(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    return ok


@pytest.mark.slow
@pytest.mark.parametrize("name", ["circle", "rectangle"])
def test_tracking_rmse(name):
    _, summary = run(name)
    rmse = summary["rmse_m"]
    ok = all(rmse[a] <= RMSE_BOUND for a in "xyz")
    record(f"{name} tracking RMSE <= {RMSE_BOUND} m", ok,
           "x={x:.4f} y={y:.4f} z={z:.4f}".format(**rmse))
    assert ok, rmse


@pytest.mark.slow
def test_null_space_separation():
    log, _ = run("hover_separation")
    t = log.time
    d = np.column_stack([log.column(c) for c in ("dist01", "dist02", "dist12")])
    dmin = d.min(axis=1)
    reached = np.flatnonzero(dmin >= SEPARATION)
    err = np.linalg.norm(
        np.column_stack([log.column(f"x_{a}") - log.column(f"xref_{a}") for a in "xyz"]), axis=1)
    if reached.size:
        first = reached[0]
        t_reach = t[first]
        held = dmin[first:].min()
    else:
        t_reach, held = np.inf, dmin.max()
    ok = t_reach <= SEPARATION_DEADLINE and held >= SEPARATION and err.max() <= PAYLOAD_ERROR
    record("null-space separation", ok,
           f"reached {SEPARATION} m at t={t_reach:.2f} s, min afterwards {held:.4f} m, "
           f"max payload error {err.max():.2e} m")
    assert t_reach <= SEPARATION_DEADLINE
    assert held >= SEPARATION
    assert err.max() <= PAYLOAD_ERROR


@pytest.mark.slow
@pytest.mark.parametrize("name", BUNDLED)
def test_actuator_constraint(name):
    log, summary = run(name)
    f_max = Scenario.bundled(name).ocp_config().f_max
    commanded = summary["max_commanded_tension_N"]
    actual = max(log.column(f"mu{k}_norm").max() for k in range(log.n))
    ok = commanded <= f_max + TENSION_SLACK and actual <= f_max + TENSION_SLACK
    record(f"{name} tension <= f_max + {TENSION_SLACK} N", ok,
           f"commanded {commanded:.4f} N, simulated {actual:.4f} N, f_max {f_max} N")
    assert commanded <= f_max + TENSION_SLACK
    assert actual <= f_max + TENSION_SLACK


@pytest.mark.slow
@pytest.mark.parametrize("name,null_dim", [("hover_n4", 6), ("hover_n6", 12)])
def test_scalability(name, null_dim):
    _, summary = run(name)
    mean = summary["solver"]["mean_solve_time_s"]
    dim = summary["meta"]["null_dim"]
    ok = mean < STEP_BUDGET and dim == null_dim
    record(f"{name} NMPC step < {STEP_BUDGET * 1e3:.0f} ms", ok,
           f"mean {mean * 1e3:.1f} ms over {summary['solver']['solves']} solves, "
           f"null-space dimension {dim}")
    assert dim == null_dim
    assert mean < STEP_BUDGET


PROPERTY_SUITES = {
    "allocation": [
        "test_allocation.py::test_allocation_randomized_10k",
        "test_allocation.py::test_null_dimension_against_svd",
        "test_allocation.py::test_basis_choice_does_not_change_tensions",
    ],
    "dynamics": [
        "test_payload.py::test_torque_free_conservation",
        "test_sim.py::test_step_rk4_order",
        "test_sim.py::test_hover_sphere_drift",
        "test_robot.py::test_pinned_pendulum_frequency_and_sphere_drift",
    ],
    "nmpc": [
        "test_nmpc.py::test_dynamics_jacobians_fd",
        "test_nmpc.py::test_constraint_jacobians_fd",
        "test_nmpc.py::test_error_jacobian_fd",
        "test_nmpc.py::test_hover_solve_returns_gravity_wrench",
        "test_nmpc.py::test_bitwise_determinism",
    ],
    "controller": [
        "test_robot.py::test_decomposition_orthogonal",
        "test_robot.py::test_attitude_error_antisymmetric",
        "test_robot.py::test_pinned_pendulum_frequency_and_sphere_drift",
    ],
}


@pytest.mark.slow
@pytest.mark.parametrize("suite", PROPERTY_SUITES)
def test_property_suite(suite):
    here = Path(__file__).parent
    nodes = [str(here / n) for n in PROPERTY_SUITES[suite]]
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider",
                           *nodes], capture_output=True, text=True, cwd=here.parent)
    last = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr
    record(f"{suite} property suite", proc.returncode == 0, last)
    assert proc.returncode == 0, proc.stdout[-3000:]
