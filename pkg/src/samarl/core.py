"""Domain types, scenario configuration and circle-crossing scenario generation."""

from __future__ import annotations

import dataclasses
import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

TWO_PI = 2.0 * math.pi
# extra clearance required between agents at generation time (m)
SPAWN_CLEARANCE = 0.2
GOAL_JITTER = 1.0
MAX_PLACEMENT_TRIES = 1000


class ConfigError(ValueError):
    """Raised for invalid or malformed scenario/training configuration."""


class ScenarioGenerationError(RuntimeError):
    """Raised when rejection sampling cannot place all agents."""


class AgentKind(str, enum.Enum):
    ROBOT = "robot"
    HUMAN = "human"


def wrap_angle(theta: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    if -math.pi < theta <= math.pi:
        return theta
    y = math.fmod(theta + math.pi, TWO_PI)
    if y <= 0.0:
        y += TWO_PI
    return y - math.pi


@dataclass(frozen=True)
class PublicState:
    px: float
    py: float
    vx: float
    vy: float
    rho: float

    def __post_init__(self):
        vals = (self.px, self.py, self.vx, self.vy, self.rho)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite public state {vals}")
        if self.rho <= 0:
            raise ValueError("rho must be positive")

    @property
    def position(self) -> tuple[float, float]:
        return (self.px, self.py)

    @property
    def velocity(self) -> tuple[float, float]:
        return (self.vx, self.vy)

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (self.px, self.py, self.vx, self.vy, self.rho)


@dataclass(frozen=True)
class PrivateState:
    gx: float
    gy: float
    v_pref: float
    theta: float

    def __post_init__(self):
        if not self.v_pref > 0:
            raise ValueError("v_pref must be positive")
        if not -math.pi < self.theta <= math.pi:
            raise ValueError(f"heading {self.theta} outside (-pi, pi]")


@dataclass(frozen=True)
class AgentState:
    kind: AgentKind
    pub: PublicState
    prv: PrivateState
    id: int


@dataclass(frozen=True)
class KinematicLimits:
    a_max: float = 5.0
    dtheta_max: float = math.pi / 12
    r_min: float = 1.0
    v_max: float = 2.0

    def __post_init__(self):
        for f in dataclasses.fields(self):
            if not getattr(self, f.name) > 0:
                raise ConfigError(f"limits.{f.name} must be positive")


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to build one episode of the navigation task.

    ``dt`` is the local-action step, ``macro_period`` the number of local
    steps per macro action and ``t_k_max`` the number of decision epochs,
    so the episode horizon is ``t_k_max * macro_period`` steps.
    """

    n_robots: int = 3
    n_humans: int = 10
    circle_radius: float = 5.0
    fov_deg: float = 360.0
    dt: float = 0.25
    t_k_max: int = 20
    macro_period: int = 5
    seed: int = 0
    limits: KinematicLimits = field(default_factory=KinematicLimits)
    human_radius: float = 0.3
    robot_radius: float = 0.3
    v_pref_range: tuple[float, float] = (0.5, 1.5)
    gamma: float = 0.99

    def __post_init__(self):
        if not 0 < self.fov_deg <= 360:
            raise ConfigError("fov_deg must lie in (0, 360]")
        if not self.dt > 0:
            raise ConfigError("dt must be positive")
        if self.macro_period < 1:
            raise ConfigError("macro_period must be >= 1")
        if self.t_k_max < 1:
            raise ConfigError("t_k_max must be >= 1")
        if self.n_robots < 1:
            raise ConfigError("n_robots must be >= 1")
        if self.n_humans < 0:
            raise ConfigError("n_humans must be >= 0")
        if not (self.circle_radius > 0 and self.human_radius > 0 and self.robot_radius > 0):
            raise ConfigError("radii must be positive")
        lo, hi = self.v_pref_range
        if not 0 < lo <= hi:
            raise ConfigError("v_pref_range must satisfy 0 < min <= max")
        if not 0 <= self.gamma <= 1:
            raise ConfigError("gamma must lie in [0, 1]")

    @property
    def horizon(self) -> int:
        return self.t_k_max * self.macro_period

    @property
    def n_agents(self) -> int:
        return self.n_robots + self.n_humans

    def replace(self, **changes: Any) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["v_pref_range"] = list(self.v_pref_range)
        return d

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ScenarioConfig":
        if not isinstance(data, dict):
            raise ConfigError("scenario config must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(data)
        if "limits" in kwargs:
            lim = kwargs["limits"]
            if not isinstance(lim, dict):
                raise ConfigError("limits must be an object")
            lim_known = {f.name for f in dataclasses.fields(KinematicLimits)}
            bad = set(lim) - lim_known
            if bad:
                raise ConfigError(f"unknown limits keys: {sorted(bad)}")
            kwargs["limits"] = KinematicLimits(**lim)
        if "v_pref_range" in kwargs:
            rng = kwargs["v_pref_range"]
            if len(rng) != 2:
                raise ConfigError("v_pref_range must have two entries")
            kwargs["v_pref_range"] = (float(rng[0]), float(rng[1]))
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ScenarioConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from exc
        return cls.from_dict(data)

    @classmethod
    def load(cls, path: str | Path) -> "ScenarioConfig":
        return cls.from_json(Path(path).read_text())


def _clear(p: np.ndarray, r: float, placed: list[tuple[np.ndarray, float]]) -> bool:
    for q, rq in placed:
        if math.hypot(p[0] - q[0], p[1] - q[1]) <= r + rq + SPAWN_CLEARANCE:
            return False
    return True


def generate_scenario(config: ScenarioConfig, rng: np.random.Generator) -> list[AgentState]:
    """Circle-crossing layout: robots first (ids 0..N-1), then humans.

    Every agent starts on the circle and heads for a jittered antipodal
    goal. Starts are mutually non-overlapping with ``SPAWN_CLEARANCE``
    slack, and so are goals.
    """
    specs = [(AgentKind.ROBOT, config.robot_radius)] * config.n_robots
    specs += [(AgentKind.HUMAN, config.human_radius)] * config.n_humans
    starts: list[tuple[np.ndarray, float]] = []
    goals: list[tuple[np.ndarray, float]] = []
    agents = []
    lo, hi = config.v_pref_range
    for idx, (kind, radius) in enumerate(specs):
        for _ in range(MAX_PLACEMENT_TRIES):
            angle = rng.uniform(0.0, TWO_PI)
            start = config.circle_radius * np.array([math.cos(angle), math.sin(angle)])
            jitter = rng.uniform(-0.5 * GOAL_JITTER, 0.5 * GOAL_JITTER, size=2)
            goal = -start + jitter
            if _clear(start, radius, starts) and _clear(goal, radius, goals):
                break
        else:
            raise ScenarioGenerationError(
                f"could not place agent {idx} after {MAX_PLACEMENT_TRIES} tries"
            )
        starts.append((start, radius))
        goals.append((goal, radius))
        v_pref = float(rng.uniform(lo, hi))
        heading = math.atan2(goal[1] - start[1], goal[0] - start[0])
        agents.append(
            AgentState(
                kind=kind,
                pub=PublicState(float(start[0]), float(start[1]), 0.0, 0.0, radius),
                prv=PrivateState(float(goal[0]), float(goal[1]), v_pref, wrap_angle(heading)),
                id=idx,
            )
        )
    return agents
