"""Declarative scenario definitions: schema, validation, persistence, builtins.

Scenario documents are human-editable YAML with a fixed schema (see
``docs/scenario_schema.md``). Loading validates every field, rejects unknown
keys, applies defaults, and produces a :class:`~chancegames.models.GameSpec`
plus a :class:`~chancegames.solver.SolverConfig`. ``canonical_yaml`` defines a
byte-stable serialization with all defaults made explicit.
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass, fields as dc_fields
from pathlib import Path

import numpy as np
import yaml

from .constraints import ChanceConstraintSpec, DiscObstacle, PolygonObstacle
from .errors import ScenarioError
from .models import (
    CONTROL_DIM,
    MEASUREMENT_MODELS,
    STATE_DIM,
    GameSpec,
    GaussianBelief,
    NoiseSpec,
    PlayerCost,
    UnicycleDynamics,
)
from .solver import SolverConfig

BUILTIN_NAMES = ("merge", "intersection", "roundabout")

_TOP_KEYS = {
    "name", "horizon_seconds", "steps", "measurement", "agents",
    "obstacles", "constraints", "noise", "solver",
}
_AGENT_KEYS = {
    "initial_state", "lane", "nominal_speed", "lane_weight",
    "speed_weight", "control_weights",
}
_OBSTACLE_KEYS = {"kind", "center", "radius", "vertices"}
_CONSTRAINT_KEYS = {"kind", "agents", "agent", "obstacle", "min_distance", "threshold", "steps"}
_NOISE_KEYS = {"process", "measurement", "initial"}
_SOLVER_KEYS = {f.name for f in dc_fields(SolverConfig)}


def _require(condition: bool, field: str, message: str):
    if not condition:
        raise ScenarioError(f"{field}: {message}")


def _reject_unknown(mapping: dict, allowed: set, where: str):
    if not isinstance(mapping, dict):
        raise ScenarioError(f"{where}: expected a mapping, got {type(mapping).__name__}")
    unknown = set(mapping) - allowed
    if unknown:
        raise ScenarioError(f"{where}: unknown field(s) {sorted(unknown)}")


def _covariance(value, dim: int, field: str) -> np.ndarray:
    """Scalar (times identity) or full matrix covariance from a document value."""
    if isinstance(value, (int, float)):
        _require(value >= 0.0, field, f"scalar covariance must be nonnegative, got {value}")
        return float(value) * np.eye(dim)
    mat = np.asarray(value, dtype=float)
    _require(mat.shape == (dim, dim), field, f"expected a {dim}x{dim} matrix, got shape {mat.shape}")
    _require(bool(np.all(np.abs(mat - mat.T) <= 1e-9)), field, "covariance must be symmetric")
    _require(float(np.linalg.eigvalsh(mat)[0]) >= -1e-9, field, "covariance must be PSD")
    return mat


@dataclass(frozen=True)
class AgentConfig:
    initial_state: tuple
    lane: tuple
    nominal_speed: float
    lane_weight: float
    speed_weight: float
    control_weights: tuple


@dataclass(frozen=True)
class ConstraintConfig:
    kind: str
    threshold: float
    steps: tuple  # inclusive (first, last)
    agents: tuple = None
    min_distance: float = None
    agent: int = None
    obstacle: int = None


@dataclass(frozen=True)
class ScenarioConfig:
    """Validated, fully-defaulted scenario description."""

    name: str
    horizon_seconds: float
    steps: int
    measurement: str
    agents: tuple
    obstacles: tuple
    constraints: tuple
    process_noise: object      # scalar or matrix, as given
    measurement_noise: object
    initial_cov: object
    solver: dict

    @property
    def n_players(self) -> int:
        return len(self.agents)

    @property
    def dt(self) -> float:
        return self.horizon_seconds / self.steps

    @classmethod
    def from_dict(cls, doc: dict) -> "ScenarioConfig":
        _reject_unknown(doc, _TOP_KEYS, "scenario")
        for key in ("name", "horizon_seconds", "steps", "measurement", "agents"):
            _require(key in doc, key, "required field missing")

        name = str(doc["name"])
        horizon_seconds = float(doc["horizon_seconds"])
        steps = int(doc["steps"])
        _require(horizon_seconds > 0.0, "horizon_seconds", "must be positive")
        _require(steps >= 1, "steps", "must be a positive integer")

        measurement = str(doc["measurement"])
        _require(
            measurement in MEASUREMENT_MODELS,
            "measurement",
            f"must be one of {sorted(MEASUREMENT_MODELS)}",
        )

        raw_agents = doc["agents"]
        _require(isinstance(raw_agents, list) and len(raw_agents) >= 1, "agents", "need at least one agent")
        agents = []
        for idx, a in enumerate(raw_agents):
            where = f"agents[{idx}]"
            _reject_unknown(a, _AGENT_KEYS, where)
            for key in _AGENT_KEYS:
                _require(key in a, f"{where}.{key}", "required field missing")
            init = np.asarray(a["initial_state"], dtype=float)
            _require(init.shape == (STATE_DIM,), f"{where}.initial_state", "expected 4 numbers")
            lane = np.asarray(a["lane"], dtype=float)
            _require(lane.ndim == 2 and lane.shape[1] == 2 and lane.shape[0] >= 1,
                     f"{where}.lane", "expected a list of [x, y] points")
            cw = np.asarray(a["control_weights"], dtype=float)
            _require(cw.shape == (CONTROL_DIM,), f"{where}.control_weights", "expected 2 numbers")
            for wname in ("nominal_speed", "lane_weight", "speed_weight"):
                _require(float(a[wname]) >= 0.0, f"{where}.{wname}", "must be nonnegative")
            _require(bool(np.all(cw >= 0.0)), f"{where}.control_weights", "must be nonnegative")
            agents.append(
                AgentConfig(
                    initial_state=tuple(float(v) for v in init),
                    lane=tuple(tuple(float(v) for v in pt) for pt in lane),
                    nominal_speed=float(a["nominal_speed"]),
                    lane_weight=float(a["lane_weight"]),
                    speed_weight=float(a["speed_weight"]),
                    control_weights=tuple(float(v) for v in cw),
                )
            )

        obstacles = []
        for idx, o in enumerate(doc.get("obstacles", []) or []):
            where = f"obstacles[{idx}]"
            _reject_unknown(o, _OBSTACLE_KEYS, where)
            kind = o.get("kind")
            if kind == "disc":
                _require("center" in o and "radius" in o, where, "disc needs center and radius")
                obstacles.append(DiscObstacle(center=np.asarray(o["center"], dtype=float),
                                              radius=float(o["radius"])))
            elif kind == "polygon":
                _require("vertices" in o, where, "polygon needs vertices")
                obstacles.append(PolygonObstacle(vertices=np.asarray(o["vertices"], dtype=float)))
            else:
                raise ScenarioError(f"{where}.kind: must be 'disc' or 'polygon'")

        constraints = []
        for idx, c in enumerate(doc.get("constraints", []) or []):
            where = f"constraints[{idx}]"
            _reject_unknown(c, _CONSTRAINT_KEYS, where)
            _require("threshold" in c, f"{where}.threshold", "required field missing")
            threshold = float(c["threshold"])
            _require(0.5 < threshold < 1.0, f"{where}.threshold",
                     f"must lie in (0.5, 1), got {threshold}")
            if "steps" in c and c["steps"] is not None:
                window = c["steps"]
                _require(
                    isinstance(window, list) and len(window) == 2,
                    f"{where}.steps", "expected [first, last]",
                )
                step_window = (int(window[0]), int(window[1]))
                _require(0 <= step_window[0] <= step_window[1] <= steps,
                         f"{where}.steps", f"window must lie within [0, {steps}]")
            else:
                step_window = (0, steps)
            kind = c.get("kind")
            if kind == "proximity":
                _require("agents" in c and "min_distance" in c, where,
                         "proximity needs agents and min_distance")
                pair = tuple(int(v) for v in c["agents"])
                _require(len(pair) == 2 and pair[0] != pair[1], f"{where}.agents",
                         "expected two distinct agent indices")
                for p in pair:
                    _require(0 <= p < len(agents), f"{where}.agents", f"agent {p} does not exist")
                _require(float(c["min_distance"]) > 0.0, f"{where}.min_distance", "must be positive")
                constraints.append(ConstraintConfig(
                    kind="proximity", threshold=threshold, steps=step_window,
                    agents=pair, min_distance=float(c["min_distance"]),
                ))
            elif kind == "obstacle":
                _require("agent" in c and "obstacle" in c, where, "needs agent and obstacle")
                agent = int(c["agent"])
                obs_idx = int(c["obstacle"])
                _require(0 <= agent < len(agents), f"{where}.agent", f"agent {agent} does not exist")
                _require(0 <= obs_idx < len(obstacles), f"{where}.obstacle",
                         f"obstacle {obs_idx} does not exist")
                constraints.append(ConstraintConfig(
                    kind="obstacle", threshold=threshold, steps=step_window,
                    agent=agent, obstacle=obs_idx,
                ))
            else:
                raise ScenarioError(f"{where}.kind: must be 'proximity' or 'obstacle'")

        noise_doc = doc.get("noise", {}) or {}
        _reject_unknown(noise_doc, _NOISE_KEYS, "noise")
        dim = STATE_DIM * len(agents)
        process = noise_doc.get("process", 0.0)
        measurement_noise = noise_doc.get("measurement", 0.0)
        initial = noise_doc.get("initial", 0.0)
        for field_name, value in (
            ("noise.process", process),
            ("noise.measurement", measurement_noise),
            ("noise.initial", initial),
        ):
            _covariance(value, dim, field_name)

        solver_doc = dict(doc.get("solver", {}) or {})
        _reject_unknown(solver_doc, _SOLVER_KEYS, "solver")
        solver = {f.name: f.default for f in dc_fields(SolverConfig)}
        solver.update(solver_doc)
        try:
            SolverConfig(**solver)
        except Exception as exc:
            raise ScenarioError(f"solver: {exc}") from exc

        return cls(
            name=name,
            horizon_seconds=horizon_seconds,
            steps=steps,
            measurement=measurement,
            agents=tuple(agents),
            obstacles=tuple(obstacles),
            constraints=tuple(constraints),
            process_noise=process,
            measurement_noise=measurement_noise,
            initial_cov=initial,
            solver=solver,
        )

    def to_dict(self) -> dict:
        """Canonical plain-data form with every default made explicit."""

        def plain(value):
            if isinstance(value, np.ndarray):
                return [plain(v) for v in value.tolist()]
            if isinstance(value, (list, tuple)):
                return [plain(v) for v in value]
            if isinstance(value, (np.floating, float)):
                return float(value)
            if isinstance(value, (np.integer, int)):
                return int(value)
            return value

        obstacles = []
        for o in self.obstacles:
            if isinstance(o, DiscObstacle):
                obstacles.append({"kind": "disc", "center": plain(o.center), "radius": float(o.radius)})
            else:
                obstacles.append({"kind": "polygon", "vertices": plain(o.vertices)})
        constraints = []
        for c in self.constraints:
            entry = {"kind": c.kind, "threshold": c.threshold, "steps": [c.steps[0], c.steps[1]]}
            if c.kind == "proximity":
                entry["agents"] = [c.agents[0], c.agents[1]]
                entry["min_distance"] = c.min_distance
            else:
                entry["agent"] = c.agent
                entry["obstacle"] = c.obstacle
            constraints.append(entry)
        return {
            "name": self.name,
            "horizon_seconds": self.horizon_seconds,
            "steps": self.steps,
            "measurement": self.measurement,
            "agents": [
                {
                    "initial_state": plain(a.initial_state),
                    "lane": plain(a.lane),
                    "nominal_speed": a.nominal_speed,
                    "lane_weight": a.lane_weight,
                    "speed_weight": a.speed_weight,
                    "control_weights": plain(a.control_weights),
                }
                for a in self.agents
            ],
            "obstacles": obstacles,
            "constraints": constraints,
            "noise": {
                "process": plain(self.process_noise),
                "measurement": plain(self.measurement_noise),
                "initial": plain(self.initial_cov),
            },
            "solver": {k: plain(v) for k, v in sorted(self.solver.items())},
        }

    def to_game_spec(self) -> GameSpec:
        dim = STATE_DIM * self.n_players
        costs = tuple(
            PlayerCost(
                lane_center=np.asarray(a.lane, dtype=float),
                lane_weight=a.lane_weight,
                nominal_speed=a.nominal_speed,
                speed_weight=a.speed_weight,
                control_weights=np.asarray(a.control_weights, dtype=float),
            )
            for a in self.agents
        )
        constraints = []
        for c in self.constraints:
            if c.kind == "proximity":
                constraints.append(ChanceConstraintSpec(
                    kind="proximity", threshold=c.threshold, pair=c.agents,
                    min_distance=c.min_distance, step_range=c.steps,
                ))
            else:
                constraints.append(ChanceConstraintSpec(
                    kind="obstacle", threshold=c.threshold, agent=c.agent,
                    obstacle=self.obstacles[c.obstacle], step_range=c.steps,
                ))
        mean0 = np.concatenate([np.asarray(a.initial_state, dtype=float) for a in self.agents])
        return GameSpec(
            n_players=self.n_players,
            horizon=self.steps,
            dt=self.dt,
            dynamics=UnicycleDynamics(),
            measurement=MEASUREMENT_MODELS[self.measurement](),
            costs=costs,
            constraints=tuple(constraints),
            noise=NoiseSpec(
                process_cov=_covariance(self.process_noise, dim, "noise.process"),
                measurement_cov=_covariance(self.measurement_noise, dim, "noise.measurement"),
            ),
            initial_belief=GaussianBelief(
                mean=mean0, cov=_covariance(self.initial_cov, dim, "noise.initial")
            ),
        )

    def solver_config(self) -> SolverConfig:
        return SolverConfig(**self.solver)


def canonical_yaml(config: ScenarioConfig) -> str:
    """Byte-stable YAML serialization of the canonical form."""
    return yaml.safe_dump(config.to_dict(), sort_keys=True, default_flow_style=None)


def save_scenario(config: ScenarioConfig, path) -> None:
    Path(path).write_text(canonical_yaml(config))


def load_scenario(source):
    """Load a scenario from a path, YAML text, or plain dict.

    Returns ``(GameSpec, SolverConfig, ScenarioConfig)``.
    """
    if isinstance(source, dict):
        doc = source
    else:
        path = Path(source)
        text = path.read_text() if path.exists() else str(source)
        doc = yaml.safe_load(text)
        if not isinstance(doc, dict):
            raise ScenarioError("scenario document must be a YAML mapping")
    config = ScenarioConfig.from_dict(doc)
    return config.to_game_spec(), config.solver_config(), config


def builtin_scenario(name: str) -> ScenarioConfig:
    """One of the shipped scenario configurations."""
    if name not in BUILTIN_NAMES:
        raise ScenarioError(
            f"unknown scenario {name!r}; valid names: {', '.join(BUILTIN_NAMES)}"
        )
    text = importlib.resources.files("chancegames").joinpath(f"data/{name}.yaml").read_text()
    return ScenarioConfig.from_dict(yaml.safe_load(text))
