"""Multi-robot navigation environment with macro/local action timing.

Robots are agents ``0..N-1``, humans ``N..N+M-1``. Humans run ORCA among
themselves and never see robots. Robots act through acceleration and
heading commands that pass through the actuation limits.
"""

from __future__ import annotations

import enum
import json
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Any, Sequence

import numpy as np

from .core import (
    AgentKind,
    AgentState,
    PrivateState,
    PublicState,
    ScenarioConfig,
    generate_scenario,
    wrap_angle,
)
from .kinematics import LocalAction, RobotPose, constrain_action, integrate
from .pedestrian import OrcaParams, crowd_velocities

LOG_SCHEMA = "samarl.episode/1"
DISCOMFORT_DIST = 0.45
COLLISION_SUBSTEPS = 4
FOV_TOL = 1e-9

REWARD_ALL_SUCCESS = 5.0
REWARD_SUCCESS = 10.0
REWARD_COLLISION = -20.0
DISCOMFORT_FLOOR = -5.0
PROGRESS_GAIN = 2.0


class UsageError(RuntimeError):
    """Raised when the environment is driven outside its contract."""


class Status(str, enum.Enum):
    RUNNING = "running"
    ALL_SUCCESS = "all_success"
    COLLISION = "collision"
    TIMEOUT = "timeout"

    @property
    def terminal(self) -> bool:
        return self is not Status.RUNNING


@dataclass
class World:
    config: ScenarioConfig
    kinds: list[AgentKind]
    pos: np.ndarray
    vel: np.ndarray
    radius: np.ndarray
    goal: np.ndarray
    v_pref: np.ndarray
    theta: np.ndarray
    reached: np.ndarray
    t: int = 0
    status: Status = Status.RUNNING

    @classmethod
    def from_agents(cls, config: ScenarioConfig, agents: Sequence[AgentState]) -> "World":
        return cls(
            config=config,
            kinds=[a.kind for a in agents],
            pos=np.array([[a.pub.px, a.pub.py] for a in agents], dtype=np.float64),
            vel=np.array([[a.pub.vx, a.pub.vy] for a in agents], dtype=np.float64),
            radius=np.array([a.pub.rho for a in agents], dtype=np.float64),
            goal=np.array([[a.prv.gx, a.prv.gy] for a in agents], dtype=np.float64),
            v_pref=np.array([a.prv.v_pref for a in agents], dtype=np.float64),
            theta=np.array([a.prv.theta for a in agents], dtype=np.float64),
            reached=np.zeros(config.n_robots, dtype=bool),
        )

    def copy(self) -> "World":
        return World(
            config=self.config, kinds=list(self.kinds), pos=self.pos.copy(), vel=self.vel.copy(),
            radius=self.radius.copy(), goal=self.goal.copy(), v_pref=self.v_pref.copy(),
            theta=self.theta.copy(), reached=self.reached.copy(), t=self.t, status=self.status,
        )

    @property
    def n_robots(self) -> int:
        return self.config.n_robots

    @property
    def n_agents(self) -> int:
        return len(self.kinds)

    @property
    def t_k(self) -> int:
        return self.t // self.config.macro_period

    @property
    def humans(self) -> range:
        return range(self.n_robots, self.n_agents)

    def public(self, i: int) -> PublicState:
        return PublicState(
            float(self.pos[i, 0]), float(self.pos[i, 1]),
            float(self.vel[i, 0]), float(self.vel[i, 1]), float(self.radius[i]),
        )

    def agent(self, i: int) -> AgentState:
        prv = PrivateState(
            float(self.goal[i, 0]), float(self.goal[i, 1]), float(self.v_pref[i]),
            wrap_angle(float(self.theta[i])),
        )
        return AgentState(self.kinds[i], self.public(i), prv, i)

    @property
    def agents(self) -> list[AgentState]:
        return [self.agent(i) for i in range(self.n_agents)]

    def goal_distance(self) -> np.ndarray:
        n = self.n_robots
        return np.hypot(*(self.pos[:n] - self.goal[:n]).T)

    def human_surface_distance(self) -> np.ndarray:
        """Nearest human surface distance per robot (inf without humans)."""
        n = self.n_robots
        if self.n_agents == n:
            return np.full(n, np.inf)
        d = self.pos[:n, None, :] - self.pos[None, n:, :]
        centre = np.hypot(d[..., 0], d[..., 1])
        return (centre - self.radius[:n, None] - self.radius[None, n:]).min(axis=1)


@dataclass(frozen=True)
class Observation:
    """What one robot perceives: its own full state and in-FOV public states."""

    self_state: AgentState
    visible: tuple[tuple[AgentKind, int, PublicState], ...]
    mask: np.ndarray  # bool over agent ids, False for self and out-of-view agents

    @property
    def n_visible(self) -> int:
        return len(self.visible)


def in_fov(world: World, robot_id: int) -> np.ndarray:
    """Boolean mask of agents whose bearing lies within the robot's FOV sector."""
    n = world.n_agents
    mask = np.ones(n, dtype=bool)
    mask[robot_id] = False
    fov = world.config.fov_deg
    if fov >= 360.0:
        return mask
    half = math.radians(fov) / 2.0
    px, py = world.pos[robot_id]
    heading = float(world.theta[robot_id])
    for j in range(n):
        if j == robot_id:
            continue
        dx = world.pos[j, 0] - px
        dy = world.pos[j, 1] - py
        if dx == 0.0 and dy == 0.0:
            continue
        bearing = wrap_angle(math.atan2(dy, dx) - heading)
        mask[j] = abs(bearing) <= half + FOV_TOL
    return mask


def observe(world: World, robot_id: int) -> Observation:
    if not 0 <= robot_id < world.n_robots:
        raise UsageError(f"robot id {robot_id} out of range")
    mask = in_fov(world, robot_id)
    visible = tuple((world.kinds[j], j, world.public(j)) for j in np.flatnonzero(mask))
    return Observation(world.agent(robot_id), visible, mask)


class HistoryBuffer:
    """Last ``length`` observations of one robot, oldest first, zero padded."""

    def __init__(self, length: int):
        if length < 1:
            raise ValueError("history length must be >= 1")
        self.length = length
        self._items: deque[Any] = deque(maxlen=length)

    def push(self, item: Any) -> None:
        self._items.append(item)

    def clear(self) -> None:
        self._items.clear()

    def __len__(self) -> int:
        return len(self._items)

    def window(self) -> tuple[list[Any | None], np.ndarray]:
        pad = self.length - len(self._items)
        items = [None] * pad + list(self._items)
        valid = np.array([False] * pad + [True] * len(self._items))
        return items, valid


def collisions(before: World, after: World) -> list[tuple[int, int]]:
    """Robot-robot and robot-human pairs that overlap at any substep of the move."""
    n = after.n_robots
    hits: set[tuple[int, int]] = set()
    rad = after.radius
    for k in range(1, COLLISION_SUBSTEPS + 1):
        f = k / COLLISION_SUBSTEPS
        p = before.pos + f * (after.pos - before.pos)
        d = p[:n, None, :] - p[None, :, :]
        surface = np.hypot(d[..., 0], d[..., 1]) - rad[:n, None] - rad[None, :]
        for i, j in zip(*np.nonzero(surface < 0.0)):
            if i != j and not (j < n and j < i):
                hits.add((int(i), int(j)))
    return sorted(hits)


def reward(world_before: World, world_after: World, robot_id: int,
           hits: list[tuple[int, int]] | None = None) -> float:
    """Per-robot step reward; branches are tested in the printed order."""
    if world_before.reached[robot_id]:
        return 0.0
    n = world_after.n_robots
    goal_dist = world_after.goal_distance()
    if np.all(goal_dist < world_after.radius[:n]):
        return REWARD_ALL_SUCCESS
    if goal_dist[robot_id] < world_after.radius[robot_id]:
        return REWARD_SUCCESS
    if hits is None:
        hits = collisions(world_before, world_after)
    if any(robot_id in pair for pair in hits):
        return REWARD_COLLISION
    dis_h = float(world_after.human_surface_distance()[robot_id])
    if dis_h <= DISCOMFORT_DIST:
        if dis_h <= 0.0:
            return DISCOMFORT_FLOOR
        return max(-1.0 / dis_h, DISCOMFORT_FLOOR)
    prev = float(world_before.goal_distance()[robot_id])
    return PROGRESS_GAIN * (prev - float(goal_dist[robot_id]))


def macro_reward(la_rewards: Sequence[float], gamma: float) -> float:
    """Discounted sum of the local rewards realised within one decision epoch."""
    if len(la_rewards) == 0:
        raise UsageError("macro reward needs at least one local reward")
    total = 0.0
    g = 1.0
    for r in la_rewards:
        total += g * r
        g *= gamma
    return total


@dataclass
class StepResult:
    rewards: np.ndarray
    observations: list[Observation]
    status: Status
    info: dict[str, Any] = field(default_factory=dict)


class EpisodeLogger:
    """JSON-lines episode log: one record for the reset, then one per step."""

    def __init__(self, sink: str | Path | IO[str]):
        if isinstance(sink, (str, Path)):
            self._fh: IO[str] = open(sink, "w")
            self._owns = True
        else:
            self._fh = sink
            self._owns = False
        self.records: list[dict[str, Any]] = []

    def write(self, record: dict[str, Any]) -> None:
        self.records.append(record)
        self._fh.write(json.dumps(record, sort_keys=True, separators=(",", ":")) + "\n")

    def close(self) -> None:
        if self._owns:
            self._fh.close()


def _agents_record(world: World) -> list[list[float]]:
    return [
        [float(world.pos[i, 0]), float(world.pos[i, 1]), float(world.vel[i, 0]),
         float(world.vel[i, 1]), float(world.radius[i]), float(world.theta[i])]
        for i in range(world.n_agents)
    ]


def reset_record(world: World, seed: int) -> dict[str, Any]:
    return {
        "schema": LOG_SCHEMA,
        "event": "reset",
        "t": 0,
        "seed": int(seed),
        "config": world.config.to_dict(),
        "kinds": [k.value for k in world.kinds],
        "goals": world.goal.tolist(),
        "v_pref": world.v_pref.tolist(),
        "agents": _agents_record(world),
        "status": world.status.value,
    }


def step_record(world: World, actions: Sequence[LocalAction | None], result: StepResult) -> dict[str, Any]:
    coll = None
    if result.info.get("collisions"):
        i, j = result.info["collisions"][0]
        coll = [float(0.5 * (world.pos[i, 0] + world.pos[j, 0])),
                float(0.5 * (world.pos[i, 1] + world.pos[j, 1]))]
    return {
        "schema": LOG_SCHEMA,
        "event": "step",
        "t": world.t,
        "agents": _agents_record(world),
        "actions": [None if a is None else [a.ax, a.ay, a.theta] for a in actions],
        "rewards": [float(r) for r in result.rewards],
        "reached": [bool(x) for x in world.reached],
        "status": result.status.value,
        "collision": coll,
    }


class NavEnv:
    """Dec-POSMDP environment: reset/step over local actions.

    Decision epochs are tracked through ``world.t_k``; the caller decides
    when to resample macro actions (every ``config.macro_period`` steps).
    """

    def __init__(self, config: ScenarioConfig, orca: OrcaParams | None = None,
                 logger: EpisodeLogger | None = None):
        self.config = config
        self.orca = orca or OrcaParams()
        self.logger = logger
        self.world: World | None = None
        self.seed: int | None = None

    def reset(self, seed: int | None = None) -> list[Observation]:
        self.seed = self.config.seed if seed is None else int(seed)
        rng = np.random.default_rng(self.seed)
        self.world = World.from_agents(self.config, generate_scenario(self.config, rng))
        if self.logger is not None:
            self.logger.write(reset_record(self.world, self.seed))
        return [observe(self.world, i) for i in range(self.config.n_robots)]

    def active_robots(self) -> list[int]:
        w = self._require_world()
        return [i for i in range(w.n_robots) if not w.reached[i]]

    def _require_world(self) -> World:
        if self.world is None:
            raise UsageError("reset() must be called before step()")
        return self.world

    def step(self, actions: Sequence[LocalAction | None]) -> StepResult:
        world = self._require_world()
        if world.status.terminal:
            raise UsageError(f"cannot step a finished episode (status {world.status.value})")
        cfg = self.config
        n = cfg.n_robots
        if len(actions) != n:
            raise UsageError(f"expected {n} actions, got {len(actions)}")
        before = world.copy()
        after = world.copy()
        applied: list[LocalAction | None] = [None] * n

        humans = list(world.humans)
        if humans:
            states = np.column_stack([world.pos, world.vel, world.radius])
            active = np.zeros(world.n_agents, dtype=bool)
            active[humans] = True
            v = crowd_velocities(states, world.goal, world.v_pref, active, humans, self.orca, cfg.dt)
            for h in humans:
                vx, vy = v[h]
                speed = math.hypot(vx, vy)
                if speed > world.v_pref[h]:
                    vx, vy = vx * world.v_pref[h] / speed, vy * world.v_pref[h] / speed
                after.vel[h] = (vx, vy)
                after.pos[h] = world.pos[h] + np.array([vx, vy]) * cfg.dt
                if speed > 0.0:
                    after.theta[h] = math.atan2(vy, vx)

        for i in range(n):
            if world.reached[i]:
                after.vel[i] = 0.0
                continue
            raw = actions[i]
            if raw is None:
                raise UsageError(f"robot {i} is active but got no action")
            pose = RobotPose(world.pos[i, 0], world.pos[i, 1], world.vel[i, 0], world.vel[i, 1],
                             float(world.theta[i]))
            act = constrain_action(raw, pose, cfg.dt, cfg.limits)
            nxt = integrate(pose, act, cfg.dt, cfg.limits.v_max)
            applied[i] = act
            after.pos[i] = (nxt.px, nxt.py)
            after.vel[i] = (nxt.vx, nxt.vy)
            after.theta[i] = nxt.theta

        hits = collisions(before, after)
        rewards = np.array([reward(before, after, i, hits) for i in range(n)])
        goal_dist = after.goal_distance()
        newly = (goal_dist < after.radius[:n]) & ~before.reached
        after.reached = before.reached | newly
        after.vel[:n][after.reached] = 0.0
        after.t = world.t + 1
        if hits:
            after.status = Status.COLLISION
        elif after.reached.all():
            after.status = Status.ALL_SUCCESS
        elif after.t >= cfg.horizon:
            after.status = Status.TIMEOUT
        self.world = after
        obs = [observe(after, i) for i in range(n)]
        info = {
            "collisions": hits,
            "min_human_dist": after.human_surface_distance(),
            "goal_dist": goal_dist,
            "newly_reached": newly,
        }
        result = StepResult(rewards, obs, after.status, info)
        if self.logger is not None:
            self.logger.write(step_record(after, applied, result))
        return result
