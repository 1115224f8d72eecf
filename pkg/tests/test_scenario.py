import numpy as np
import pytest

from cablenmpc.errors import ConfigError
from cablenmpc.scenario import BUNDLED, Scenario


@pytest.mark.parametrize("name", BUNDLED)
def test_bundled_round_trip_byte_identical(name, tmp_path):
    sc = Scenario.bundled(name)
    text = sc.dump()
    assert Scenario.from_yaml(text).dump() == text
    sc.save(tmp_path / "s.yaml")
    assert Scenario.load(tmp_path / "s.yaml").dump() == text


@pytest.mark.parametrize("name,n", [("circle", 3), ("hover_n4", 4), ("hover_n6", 6)])
def test_bundled_dimensions(name, n):
    sc = Scenario.bundled(name)
    assert sc.n == n
    assert sc.allocation().null_dim == 3 * n - 6
    assert sc.ocp_config().input_weight(n).shape == (3 * n, 3 * n)


def test_separation_scenario_geometry():
    sc = Scenario.bundled("hover_separation")
    rho = sc.attach_points()
    d = [np.linalg.norm(rho[i] - rho[j]) for i in range(3) for j in range(i + 1, 3)]
    assert np.allclose(d, 0.53, atol=1e-5)
    assert sc.ocp_config().d_r == 0.6


def test_lambda_dimension_mismatch_named():
    d = Scenario.bundled("circle").to_dict()
    d["nmpc"]["null_space_dim"] = 4
    with pytest.raises(ConfigError) as err:
        Scenario(d)
    assert "Lambda dimension = 3n-6 = 3" in str(err.value)


def test_every_problem_listed():
    d = Scenario.bundled("circle").to_dict()
    d["robots"] = d["robots"][:2]
    d["nmpc"]["horizon_steps"] = 1
    d["trajectory"]["kind"] = "spiral"
    d["sim"]["command_hold"] = "cubic"
    with pytest.raises(ConfigError) as err:
        Scenario(d)
    text = "\n".join(err.value.problems)
    for frag in ("at least 3 robots", "null_space_dim", "horizon", "trajectory.kind",
                 "command_hold"):
        assert frag in text


def test_malformed_inputs():
    with pytest.raises(ConfigError):
        Scenario.from_yaml("payload: [1, 2")
    with pytest.raises(ConfigError):
        Scenario.from_yaml("- just\n- a list\n")
    d = Scenario.bundled("circle").to_dict()
    d["payload"]["mass_kg"] = "heavy"
    with pytest.raises(ConfigError, match="malformed"):
        Scenario(d)
    with pytest.raises(ConfigError):
        Scenario.load("/nonexistent/scenario.yaml")


def test_separation_bound_checked():
    d = Scenario.bundled("hover_separation").to_dict()
    d["nmpc"]["min_robot_distance_m"] = 3.0
    with pytest.raises(ConfigError, match="min attachment spacing"):
        Scenario(d)


def test_rate_checks():
    d = Scenario.bundled("circle").to_dict()
    d["sim"]["controller_rate_hz"] = 300.0
    with pytest.raises(ConfigError, match="controller_rate_hz"):
        Scenario(d)


def test_overrides():
    sc = Scenario.bundled("circle")
    s2 = sc.with_override("robots.*.gains.k_xi", [12.0, 12.0, 12.0])
    assert all(np.array_equal(r.k_xi, [12, 12, 12]) for r in s2.robot_params())
    s3 = sc.with_override("robots.1.mass_kg", 0.3)
    assert [r.mass for r in s3.robot_params()] == [0.25, 0.3, 0.25]
    assert sc.with_override("trajectory.radius_m", 0.5).trajectory().radius == 0.5
    with pytest.raises(ConfigError):
        sc.with_override("robots.7.mass_kg", 0.3)
    with pytest.raises(ConfigError):
        sc.with_override("payload.mass_kg.x", 1.0)
    # original untouched
    assert sc.robot_params()[1].mass == 0.25


def test_defaults_filled():
    sc = Scenario({"robots": [{"attach_point_m": p} for p in
                              ([0.3, 0, 0], [-0.15, 0.26, 0], [-0.15, -0.26, 0])]})
    assert sc.data["sim"]["physics_dt_s"] == 1e-3
    assert sc.data["trajectory"]["kind"] == "hover"
    assert sc.ocp_config().horizon == 20
