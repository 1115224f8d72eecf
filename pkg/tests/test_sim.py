import numpy as np
import pytest

from cablenmpc.errors import SolverError
from cablenmpc.geom import quat_exp, quat_to_rot
from cablenmpc.payload import PayloadParams
from cablenmpc.scenario import Scenario
from cablenmpc.sim import (SimLog, SimulationFault, SystemParams, TeamController, WorldState,
                           cable_tensions, equilibrium_world, run_scenario, step,
                           world_derivative)
from cablenmpc.sim import engine
from cablenmpc.sim.dynamics import (coupled_accel, rk4_world_forces, robot_kinematics,
                                    simulate_hold, thrust_forces)

POS = np.array([0.0, 0.0, 0.5])


@pytest.fixture
def system(payload, robots, tri_model):
    return SystemParams.build(payload, robots, tri_model.rho)


def perturbed_world(world, rng, swing=0.2, rate=0.5):
    """Equilibrium world with tilted cables and random velocities."""
    s = world.vector.copy()
    s[3:7] = quat_exp(0.1 * rng.normal(size=3))
    s[7:10] = rng.normal(size=3) * 0.3
    s[10:13] = rng.normal(size=3) * rate
    for k in range(world.n):
        b = 13 + 13 * k
        xi = s[b:b + 3] + swing * rng.normal(size=3)
        xi /= np.linalg.norm(xi)
        v = rng.normal(size=3) * rate
        s[b:b + 3] = xi
        s[b + 3:b + 6] = v - xi * np.dot(xi, v)
        s[b + 10:b + 13] = rng.normal(size=3) * rate
    return WorldState(s)


def equilibrium_forces(world, command, sys):
    return thrust_forces(world.vector, command.thrust, sys.n)


def test_equilibrium_derivative_is_zero(payload, robots, tri_model, system):
    world, cmd = equilibrium_world(POS, payload, robots, tri_model)
    d = world_derivative(world, equilibrium_forces(world, cmd, system), system)
    assert np.max(np.abs(d)) <= 1e-12
    assert world.taut_error(system) <= 1e-12


def test_zero_force_is_free_fall(payload, robots, tri_model, system):
    world, _ = equilibrium_world(POS, payload, robots, tri_model)
    xdd, Omd, xidd, mu = coupled_accel(world.vector, np.zeros((3, 3)), *system.args())
    assert np.allclose(xdd, -payload.gravity, atol=1e-12)
    assert np.allclose(Omd, 0.0, atol=1e-12)
    assert np.allclose(xidd, 0.0, atol=1e-12)
    assert np.allclose(mu, 0.0, atol=1e-12)


def test_newton_third_law(payload, robots, tri_model, system, rng):
    world0, _ = equilibrium_world(POS, payload, robots, tri_model)
    worst_payload = worst_robot = 0.0
    for _ in range(200):
        world = perturbed_world(world0, rng)
        s = world.vector
        u = rng.normal(size=(3, 3)) + [0, 0, 3.0]
        xdd, Omd, xidd, mu = coupled_accel(s, u, *system.args())
        R = quat_to_rot(s[3:7])
        Om = s[10:13]
        mu_L = mu @ R  # rows R^T mu_k
        W = tri_model.P @ mu_L.ravel()
        W_rb = np.r_[R.T @ (payload.mass * (xdd + payload.gravity)),
                     payload.inertia @ Omd + np.cross(Om, payload.inertia @ Om)]
        worst_payload = max(worst_payload, np.max(np.abs(W - W_rb)))
        # each robot feels the opposite tension: m (xdd_k + g) = u_k - mu_k
        for k, rp in enumerate(robots):
            b = 13 + 13 * k
            xi = s[b:b + 3]
            rho = tri_model.rho[k]
            add = xdd + R @ (np.cross(Omd, rho) + np.cross(Om, np.cross(Om, rho)))
            acc = add - rp.cable_length * xidd[k]
            res = rp.mass * (acc + payload.gravity) - (u[k] - mu[k])
            worst_robot = max(worst_robot, np.max(np.abs(res)))
            assert np.allclose(np.cross(mu[k], xi), 0.0, atol=1e-9)  # tension along the cable
    assert worst_payload <= 1e-9
    assert worst_robot <= 1e-9


def test_cable_tensions_match_equilibrium(payload, robots, tri_model, system):
    world, cmd = equilibrium_world(POS, payload, robots, tri_model)
    mu = cable_tensions(world, equilibrium_forces(world, cmd, system), system)
    assert np.allclose(mu, [[0, 0, 0.75864]] * 3, atol=1e-9)


def test_step_equilibrium_unchanged(payload, robots, tri_model, system):
    world, cmd = equilibrium_world(POS, payload, robots, tri_model)
    out = step(world, cmd, 1e-3, system, substeps=1000)
    assert np.max(np.abs(out.vector - world.vector)) <= 1e-9
    assert out.time == pytest.approx(1.0)


def test_step_rk4_order(payload, robots, tri_model, system, rng):
    world0, cmd = equilibrium_world(POS, payload, robots, tri_model)
    world = perturbed_world(world0, rng, swing=0.1, rate=0.3)
    cmd.thrust = cmd.thrust * 1.05

    def final(dt):
        return step(world, cmd, dt, system, substeps=int(round(1.0 / dt))).vector

    ref = final(1.0 / 12800)
    e1 = np.linalg.norm(final(0.01) - ref)
    e2 = np.linalg.norm(final(0.005) - ref)
    assert 14.0 <= e1 / e2 <= 18.0


def test_hover_sphere_drift(payload, robots, tri_model, system, rng):
    world0, cmd = equilibrium_world(POS, payload, robots, tri_model)
    world = perturbed_world(world0, rng, swing=0.05, rate=0.05)
    s, drift = simulate_hold(world.vector, cmd.thrust, cmd.moments, 1e-3, 10_000, *system.args())
    assert drift < 1e-6
    assert np.all(np.isfinite(s))


def test_momentum_with_equilibrium_forces(payload, robots, tri_model, system, rng):
    world0, cmd = equilibrium_world(POS, payload, robots, tri_model)
    u = equilibrium_forces(world0, cmd, system)
    s = perturbed_world(world0, rng, swing=0.1, rate=0.3).vector

    def momentum(s):
        xd = robot_kinematics(s, system.rho, system.l)[3]
        return payload.mass * s[7:10] + sum(rp.mass * xd[k] for k, rp in enumerate(robots))

    p0 = momentum(s)
    for _ in range(10_000):
        s = rk4_world_forces(s, u, cmd.moments, 1e-3, *system.args())
    assert np.max(np.abs(momentum(s) - p0)) <= 1e-6


def test_force_free_energy_conserved(robots, tri_model, rng):
    payload = PayloadParams(0.232, np.diag([2.72e-3, 2.72e-3, 5.43e-3]), gravity=np.zeros(3))
    sys = SystemParams.build(payload, robots, tri_model.rho)
    world0, cmd = equilibrium_world(POS, PayloadParams(0.232, payload.inertia), robots,
                                    tri_model)
    s = perturbed_world(world0, rng, swing=0.1, rate=0.3).vector

    def energy(s):
        _, _, _, xd = robot_kinematics(s, sys.rho, sys.l)
        Om = s[10:13]
        E = 0.5 * payload.mass * s[7:10] @ s[7:10] + 0.5 * Om @ payload.inertia @ Om
        for k, rp in enumerate(robots):
            Ok = s[13 + 13 * k + 10:13 + 13 * k + 13]
            E += 0.5 * rp.mass * xd[k] @ xd[k] + 0.5 * Ok @ rp.inertia @ Ok
        return E

    E0 = energy(s)
    zero = np.zeros((3, 3))
    for _ in range(10_000):
        s = rk4_world_forces(s, zero, zero, 1e-3, *sys.args())
    assert abs(energy(s) - E0) / E0 <= 1e-4


def test_thrust_consistency_at_hover(payload, robots, tri_model, system):
    world, _ = equilibrium_world(POS, payload, robots, tri_model)
    team = TeamController(robots, tri_model, payload, system)
    mu_des = np.tile([0.0, 0.0, 0.75864], (3, 1))
    cmd = team.update(world.vector, mu_des, np.zeros(3), np.zeros(3), 2e-3)
    for k, rp in enumerate(robots):
        assert cmd.thrust[k] == pytest.approx(rp.mass * 9.81 + 0.75864, abs=1e-6)
    assert np.allclose(cmd.moments, 0.0, atol=1e-9)


# ---------------------------------------------------------------- closed loop


def short_run(name="hover_separation", duration=0.5):
    return run_scenario(Scenario.bundled(name), duration)


def test_run_log_schema_and_determinism(tmp_path):
    log1, summary = short_run()
    log2, _ = short_run()
    log1.to_csv(tmp_path / "a.csv")
    log2.to_csv(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert log1.columns == engine.log_columns(3)
    assert np.all(np.diff(log1.time) > 0)
    assert log1.sample_period == pytest.approx(0.01)
    assert len(log1) == 51
    assert summary["meta"]["null_dim"] == 3
    back = SimLog.from_csv(tmp_path / "a.csv")
    assert back.columns == log1.columns
    assert np.allclose(back.data, log1.data, rtol=1e-9)


def test_fault_carries_partial_log(monkeypatch):
    real = engine.PayloadNmpc.solve
    calls = {"n": 0}

    def flaky(self, *a, **kw):
        calls["n"] += 1
        if calls["n"] == 4:
            raise SolverError("injected")
        return real(self, *a, **kw)

    monkeypatch.setattr(engine.PayloadNmpc, "solve", flaky)
    with pytest.raises(SimulationFault) as err:
        short_run(duration=1.0)
    fault = err.value
    assert isinstance(fault.cause, SolverError)
    assert 0 < len(fault.partial_log) < 101
    assert fault.summary["meta"]["fault"].startswith("SolverError")
