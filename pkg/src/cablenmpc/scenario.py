"""Scenario files: one YAML document, units spelled out in every key.

A :class:`Scenario` keeps the canonical nested mapping it was built from,
so ``dump(load(text))`` reproduces a canonical file byte for byte.
"""
from __future__ import annotations

import copy
import itertools
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .allocation import build_allocation
from .errors import ConfigError, GeometryError
from .nmpc import OcpConfig
from .payload import GRAVITY, PayloadParams
from .robot import RobotParams
from .trajectory import KINDS, make_trajectory

BUNDLED = ("circle", "rectangle", "hover_separation", "hover_n4", "hover_n6")

_ROBOT_DEFAULTS = RobotParams()


def _floats(v):
    return [float(x) for x in np.asarray(v, dtype=np.float64).ravel()]


def _matrix(v):
    a = np.asarray(v, dtype=np.float64)
    if a.shape == (3,):
        a = np.diag(a)
    return [[float(x) for x in row] for row in a]


def _canonical(raw: dict) -> dict:
    raw = copy.deepcopy(raw or {})
    problems = []

    def need(section, key, default=None):
        sec = raw.get(section, {}) or {}
        if key in sec:
            return sec[key]
        if default is None:
            problems.append(f"{section}.{key} is required")
        return default

    pl = raw.get("payload", {}) or {}
    payload = {
        "mass_kg": float(need("payload", "mass_kg", 0.232)),
        "inertia_kgm2": _matrix(pl.get("inertia_kgm2", [2.7e-3, 2.7e-3, 5.4e-3])),
        "gravity_mps2": _floats(pl.get("gravity_mps2", [0.0, 0.0, GRAVITY])),
    }

    robots = []
    for i, r in enumerate(raw.get("robots") or []):
        g = r.get("gains", {}) or {}
        try:
            robots.append({
                "mass_kg": float(r.get("mass_kg", _ROBOT_DEFAULTS.mass)),
                "inertia_kgm2": _matrix(r.get("inertia_kgm2", _ROBOT_DEFAULTS.inertia)),
                "cable_length_m": float(r.get("cable_length_m", _ROBOT_DEFAULTS.cable_length)),
                "attach_point_m": _floats(r["attach_point_m"]),
                "gains": {
                    "k_R": _floats(g.get("k_R", _ROBOT_DEFAULTS.k_R)),
                    "k_Omega": _floats(g.get("k_Omega", _ROBOT_DEFAULTS.k_Omega)),
                    "k_xi": _floats(g.get("k_xi", _ROBOT_DEFAULTS.k_xi)),
                    "k_omega": _floats(g.get("k_omega", _ROBOT_DEFAULTS.k_omega)),
                },
            })
        except KeyError as exc:
            problems.append(f"robots[{i}] is missing {exc.args[0]}")

    nm = raw.get("nmpc", {}) or {}
    defaults = OcpConfig()
    nmpc = {
        "horizon_steps": int(nm.get("horizon_steps", defaults.horizon)),
        "dt_s": float(nm.get("dt_s", defaults.dt)),
        "state_weight_diag": _floats(nm.get("state_weight_diag", np.diag(defaults.Q_X))),
        "terminal_weight_diag": _floats(nm.get("terminal_weight_diag",
                                               5.0 * np.asarray(nm.get("state_weight_diag", np.diag(defaults.Q_X))))),
        "wrench_weight": float(nm.get("wrench_weight", defaults.wrench_weight)),
        "lambda_weight": float(nm.get("lambda_weight", defaults.lambda_weight)),
        "min_robot_distance_m": float(nm.get("min_robot_distance_m", defaults.d_r)),
        "max_tension_N": float(nm.get("max_tension_N", defaults.f_max)),
        "min_tension_N": float(nm.get("min_tension_N", defaults.mu_min)),
        "obstacles": [
            {"position_m": _floats(o["position_m"]),
             "robot_clearance_m": float(o["robot_clearance_m"]),
             "payload_clearance_m": float(o["payload_clearance_m"])}
            for o in (nm.get("obstacles") or [])
        ],
        "mode": str(nm.get("mode", defaults.mode)),
        "max_sqp_iter": int(nm.get("max_sqp_iter", defaults.max_sqp_iter)),
        "kkt_tol": float(nm.get("kkt_tol", defaults.kkt_tol)),
        "slack_weight": float(nm.get("slack_weight", defaults.slack_weight)),
        "gravity_compensation": bool(nm.get("gravity_compensation", True)),
    }
    if "null_space_dim" in nm:
        nmpc["null_space_dim"] = int(nm["null_space_dim"])

    traj = dict(raw.get("trajectory") or {"kind": "hover"})
    for k, v in list(traj.items()):
        if isinstance(v, (list, tuple)):
            traj[k] = [_floats(p) if isinstance(p, (list, tuple)) else float(p) for p in v]
        elif isinstance(v, (int, float)) and not isinstance(v, bool):
            traj[k] = float(v)

    sm = raw.get("sim", {}) or {}
    sim = {
        "physics_dt_s": float(sm.get("physics_dt_s", 1e-3)),
        "controller_rate_hz": float(sm.get("controller_rate_hz", 500.0)),
        "nmpc_rate_hz": float(sm.get("nmpc_rate_hz", 20.0)),
        "log_rate_hz": float(sm.get("log_rate_hz", 100.0)),
        "yaw_deg": float(sm.get("yaw_deg", 0.0)),
        "cable_filter_cutoff_hz": float(sm.get("cable_filter_cutoff_hz", 20.0)),
        "command_hold": str(sm.get("command_hold", "foh")),
        "position_noise_m": float(sm.get("position_noise_m", 0.0)),
        "attitude_noise_rad": float(sm.get("attitude_noise_rad", 0.0)),
    }
    if "duration_s" in sm:
        sim["duration_s"] = float(sm["duration_s"])

    out = raw.get("output", {}) or {}
    data = {
        "name": str(raw.get("name", "scenario")),
        "seed": int(raw.get("seed", 0)),
        "payload": payload,
        "robots": robots,
        "nmpc": nmpc,
        "trajectory": traj,
        "sim": sim,
        "output": {"dir": str(out.get("dir", "out"))},
    }
    return data, problems


class Scenario:
    def __init__(self, data: dict):
        if not isinstance(data, dict):
            raise ConfigError("scenario must be a mapping")
        try:
            self.data, problems = _canonical(data)
        except (TypeError, ValueError, AttributeError) as exc:
            raise ConfigError(f"malformed scenario value: {exc}") from exc
        problems += self._validate()
        if problems:
            raise ConfigError(problems)

    # ------------------------------------------------------------ I/O

    @classmethod
    def from_yaml(cls, text: str) -> "Scenario":
        try:
            raw = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"malformed scenario file: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("scenario file must contain a mapping")
        return cls(raw)

    @classmethod
    def load(cls, path) -> "Scenario":
        p = Path(path)
        if not p.exists() and str(path) in BUNDLED:
            return cls.bundled(str(path))
        try:
            text = p.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read scenario {path}: {exc}") from exc
        return cls.from_yaml(text)

    @classmethod
    def bundled(cls, name: str) -> "Scenario":
        return cls.from_yaml(bundled_path(name).read_text())

    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)

    def dump(self) -> str:
        return yaml.safe_dump(self.data, sort_keys=False, default_flow_style=None, width=100)

    def save(self, path):
        Path(path).write_text(self.dump())

    def with_override(self, dotted: str, value) -> "Scenario":
        """Copy with one dotted-path entry replaced; ``*`` matches every list item."""
        d = self.to_dict()
        _assign(d, dotted.split("."), value, dotted)
        return Scenario(d)

    # ------------------------------------------------------------ views

    @property
    def name(self) -> str:
        return self.data["name"]

    @property
    def n(self) -> int:
        return len(self.data["robots"])

    def payload_params(self) -> PayloadParams:
        p = self.data["payload"]
        return PayloadParams(p["mass_kg"], np.array(p["inertia_kgm2"]), np.array(p["gravity_mps2"]))

    def robot_params(self) -> list:
        out = []
        for r in self.data["robots"]:
            g = r["gains"]
            out.append(RobotParams(r["mass_kg"], np.array(r["inertia_kgm2"]), r["cable_length_m"],
                                   np.array(g["k_R"]), np.array(g["k_Omega"]),
                                   np.array(g["k_xi"]), np.array(g["k_omega"])))
        return out

    def attach_points(self) -> np.ndarray:
        return np.array([r["attach_point_m"] for r in self.data["robots"]], dtype=np.float64)

    def cable_lengths(self) -> np.ndarray:
        return np.array([r["cable_length_m"] for r in self.data["robots"]], dtype=np.float64)

    def allocation(self):
        return build_allocation(self.attach_points(), self.cable_lengths(),
                                self.data["nmpc"]["min_tension_N"])

    def ocp_config(self) -> OcpConfig:
        nm = self.data["nmpc"]
        return OcpConfig(
            horizon=nm["horizon_steps"], dt=nm["dt_s"],
            Q_X=np.diag(nm["state_weight_diag"]), Q_XN=np.diag(nm["terminal_weight_diag"]),
            wrench_weight=nm["wrench_weight"], lambda_weight=nm["lambda_weight"],
            d_r=nm["min_robot_distance_m"],
            obstacles=[(o["position_m"], o["robot_clearance_m"], o["payload_clearance_m"])
                       for o in nm["obstacles"]],
            f_max=nm["max_tension_N"], mu_min=nm["min_tension_N"], mode=nm["mode"],
            max_sqp_iter=nm["max_sqp_iter"], kkt_tol=nm["kkt_tol"],
            slack_weight=nm["slack_weight"], gravity_compensation=nm["gravity_compensation"],
        )

    def trajectory(self):
        return make_trajectory(self.data["trajectory"])

    def duration(self) -> float:
        return self.data["sim"].get("duration_s", self.trajectory().duration)

    # ------------------------------------------------------------ checks

    def _validate(self) -> list:
        d = self.data
        problems = []
        n = len(d["robots"])
        if n < 3:
            problems.append(f"need at least 3 robots, got {n}")
        if d["payload"]["mass_kg"] <= 0.0:
            problems.append("payload.mass_kg must be positive")
        try:
            self.payload_params()
        except ValueError as exc:
            problems.append(f"payload: {exc}")
        for i, r in enumerate(d["robots"]):
            if len(r["attach_point_m"]) != 3:
                problems.append(f"robots[{i}].attach_point_m must have 3 entries")
            try:
                RobotParams(r["mass_kg"], np.array(r["inertia_kgm2"]), r["cable_length_m"],
                            *(np.array(r["gains"][k]) for k in ("k_R", "k_Omega", "k_xi", "k_omega")))
            except ValueError as exc:
                problems.append(f"robots[{i}]: {exc}")

        nm = d["nmpc"]
        null_dim = 3 * n - 6
        if "null_space_dim" in nm and nm["null_space_dim"] != null_dim:
            problems.append(f"nmpc.null_space_dim = {nm['null_space_dim']} violates "
                            f"Lambda dimension = 3n-6 = {null_dim} for n = {n} robots")
        if len(nm["state_weight_diag"]) != 12 or len(nm["terminal_weight_diag"]) != 12:
            problems.append("nmpc weight diagonals must have 12 entries")
        try:
            self.ocp_config()
        except ConfigError as exc:
            problems += [f"nmpc: {p}" for p in exc.problems]
        except ValueError as exc:
            problems.append(f"nmpc: {exc}")

        if n >= 3 and not problems:
            rho = self.attach_points()
            try:
                self.allocation()
            except GeometryError as exc:
                problems.append(f"attachment geometry: {exc}")
            spacing = min(np.linalg.norm(rho[i] - rho[j])
                          for i, j in itertools.combinations(range(n), 2))
            reach = spacing + 2.0 * self.cable_lengths().min()
            if not nm["min_robot_distance_m"] < reach:
                problems.append(f"min_robot_distance_m {nm['min_robot_distance_m']} must be below "
                                f"min attachment spacing + 2 l = {reach:.3f} m")

        if d["trajectory"].get("kind") not in KINDS:
            problems.append(f"trajectory.kind must be one of {', '.join(KINDS)}")
        else:
            try:
                self.trajectory()
            except ConfigError as exc:
                problems += exc.problems

        sm = d["sim"]
        if sm["command_hold"] not in ("zoh", "foh"):
            problems.append("sim.command_hold must be 'zoh' or 'foh'")
        if sm["physics_dt_s"] <= 0.0:
            problems.append("sim.physics_dt_s must be positive")
        else:
            for key in ("controller_rate_hz", "nmpc_rate_hz", "log_rate_hz"):
                ratio = 1.0 / (sm[key] * sm["physics_dt_s"]) if sm[key] > 0 else 0.0
                if sm[key] <= 0.0 or abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
                    problems.append(f"sim.{key} must divide the physics rate evenly")
            for key in ("nmpc_rate_hz", "log_rate_hz"):
                if sm[key] > 0 and sm["controller_rate_hz"] > 0:
                    ratio = sm["controller_rate_hz"] / sm[key]
                    if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
                        problems.append(f"sim.{key} must divide controller_rate_hz evenly")
        return problems


def _assign(node, keys, value, dotted):
    key, rest = keys[0], keys[1:]
    if isinstance(node, list):
        if key == "*":
            targets = range(len(node))
        else:
            try:
                targets = [int(key)]
                node[targets[0]]
            except (ValueError, IndexError):
                raise ConfigError(f"bad list index {key!r} in {dotted}") from None
        for i in targets:
            if rest:
                _assign(node[i], rest, value, dotted)
            else:
                node[i] = copy.deepcopy(value)
        return
    if not isinstance(node, dict):
        raise ConfigError(f"cannot descend into {key!r} in {dotted}")
    if rest:
        _assign(node.setdefault(key, {}), rest, value, dotted)
    else:
        node[key] = copy.deepcopy(value)


def bundled_path(name: str) -> Path:
    return Path(str(resources.files("cablenmpc").joinpath("scenarios", f"{name}.yaml")))
