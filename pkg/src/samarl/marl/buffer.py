"""Rollout collection under the macro/local action hierarchy.

Each robot samples a macro action (a waypoint) at every decision epoch
and a local action at every step, from its own local observation only.
The centralised inputs the critics need are rebuilt from the recorded
trace at update time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import torch

from ..env import NavEnv, Status, macro_reward
from ..features import EpisodeTrace, build_inputs, from_frame, goal_frame, waypoint_features
from ..kinematics import LocalAction
from .losses import gaussian_log_prob
from .policy import LA_DIM, MA_DIM, SamarlModel


@dataclass
class EpisodeRecord:
    """Per-step arrays for one episode of ``T`` steps and ``N`` robots.

    ``waypoint[t, i]`` is the world-frame waypoint active at step ``t``;
    row ``T`` repeats the last one so critics can be evaluated on the
    final state.
    """

    seed: int
    trace: EpisodeTrace
    active: np.ndarray  # [T, N] robot acted at step t
    ma_start: np.ndarray  # [T, N] macro action sampled at step t
    x_ma: np.ndarray  # [T, N, 2] pre-squash macro sample
    x_la: np.ndarray  # [T, N, 3] pre-squash local sample
    logp_ma: np.ndarray  # [T, N]
    logp_la: np.ndarray  # [T, N]
    waypoint: np.ndarray  # [T + 1, N, 2]
    rewards: np.ndarray  # [T, N]
    status: Status
    reached: np.ndarray  # [N] at the end

    @property
    def length(self) -> int:
        return len(self.rewards)

    @property
    def n_robots(self) -> int:
        return self.rewards.shape[1]

    def bootstrap_mask(self) -> np.ndarray:
        """Robots whose return continues past the last step (timeout, goal not reached)."""
        return (self.status is Status.TIMEOUT) & ~self.reached

    def robot_steps(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.active[:, i])

    def epochs(self, i: int) -> list[np.ndarray]:
        """Realised step indices of each decision epoch of robot ``i``."""
        steps = self.robot_steps(i)
        starts = np.flatnonzero(self.ma_start[:, i])
        out = []
        for k, s in enumerate(starts):
            end = starts[k + 1] if k + 1 < len(starts) else self.length
            out.append(steps[(steps >= s) & (steps < end)])
        return out

    def macro_rewards(self, i: int, gamma: float) -> tuple[np.ndarray, np.ndarray]:
        """MA reward and realised length of each epoch of robot ``i``."""
        eps = self.epochs(i)
        r = np.array([macro_reward(self.rewards[e, i], gamma) for e in eps])
        return r, np.array([len(e) for e in eps])

    def episode_reward(self) -> float:
        return float(self.rewards.sum(axis=0).mean())


@dataclass
class RolloutBuffer:
    """Global buffer of finished episodes; each episode plays the role of N per-robot caches."""

    episodes: list[EpisodeRecord] = field(default_factory=list)

    def add(self, ep: EpisodeRecord) -> None:
        self.episodes.append(ep)

    def __len__(self) -> int:
        return len(self.episodes)

    @property
    def n_steps(self) -> int:
        return sum(e.length for e in self.episodes)

    def success_rate(self) -> float:
        if not self.episodes:
            return 0.0
        return float(np.mean([e.status is Status.ALL_SUCCESS for e in self.episodes]))

    def mean_episode_reward(self) -> float:
        if not self.episodes:
            return 0.0
        return float(np.mean([e.episode_reward() for e in self.episodes]))


class Actor:
    """Decentralised execution: turns one robot's local observation into actions.

    Only ``build_inputs(..., full=False)`` is used here, so action sampling
    never reads agents outside the robot's FOV.
    """

    def __init__(self, model: SamarlModel, history: int, dtype: torch.dtype = torch.float32):
        self.model = model
        self.history = history
        self.dtype = dtype

    @torch.no_grad()
    def features(self, trace: EpisodeTrace, t: int, robots: Sequence[int]):
        ts = np.full(len(robots), t)
        rs = np.asarray(robots, dtype=np.int64)
        h, r = build_inputs(trace, ts, rs, self.history, full=False, dtype=self.dtype)
        y = self.model.encode(h, r, torch.as_tensor(rs))
        return y, ts, rs

    @torch.no_grad()
    def macro(self, y, ts, rs, trace, rng: np.random.Generator | None):
        mean, log_std = self.model.ma_params(y, torch.as_tensor(rs))
        x = _sample(mean, log_std, rng)
        logp = gaussian_log_prob(torch.as_tensor(x, dtype=mean.dtype), mean, log_std).double().numpy()
        c, cos, sin = goal_frame(trace, ts, rs)
        offset = from_frame(self.model.cfg.waypoint_box * np.tanh(x), cos, sin)
        return x, logp, c + offset

    @torch.no_grad()
    def local(self, y, ts, rs, trace, waypoints: np.ndarray, rng: np.random.Generator | None):
        wp = waypoint_features(trace, ts, rs, waypoints[:, None, :])[:, 0]
        wp_t = torch.as_tensor(wp, dtype=y.dtype)
        mean, log_std = self.model.la_params(y, wp_t, torch.as_tensor(rs))
        x = _sample(mean, log_std, rng)
        logp = gaussian_log_prob(torch.as_tensor(x, dtype=mean.dtype), mean, log_std).double().numpy()
        return x, logp


def _sample(mean: torch.Tensor, log_std: torch.Tensor, rng: np.random.Generator | None) -> np.ndarray:
    m = mean.double().numpy()
    if rng is None:
        return m
    return m + np.exp(log_std.double().numpy()) * rng.standard_normal(m.shape)


def local_action(x: np.ndarray, trace: EpisodeTrace, t: int, i: int, theta: float, limits) -> LocalAction:
    """Squash a pre-activation sample into a world-frame raw action."""
    _, cos, sin = goal_frame(trace, np.array([t]), np.array([i]))
    a = from_frame((limits.a_max * np.tanh(x[:2]))[None], cos, sin)[0]
    dtheta = limits.dtheta_max * math.tanh(float(x[2]))
    return LocalAction(float(a[0]), float(a[1]), theta + dtheta)


def run_episode(
    env: NavEnv,
    actor: Actor,
    seed: int,
    rng: np.random.Generator | None,
) -> EpisodeRecord:
    """Play one episode; ``rng=None`` gives the deterministic (mean) policy."""
    cfg = env.config
    n = cfg.n_robots
    env.reset(seed)
    world = env.world
    trace = EpisodeTrace.start(world)
    H = cfg.horizon
    active = np.zeros((H, n), dtype=bool)
    ma_start = np.zeros((H, n), dtype=bool)
    x_ma = np.zeros((H, n, MA_DIM))
    x_la = np.zeros((H, n, LA_DIM))
    logp_ma = np.zeros((H, n))
    logp_la = np.zeros((H, n))
    waypoint = np.zeros((H + 1, n, 2))
    rewards = np.zeros((H, n))
    current_wp = world.pos[:n].copy()

    t = 0
    while True:
        robots = env.active_robots()
        y, ts, rs = actor.features(trace, t, robots)
        if t % cfg.macro_period == 0:
            xm, lm, wps = actor.macro(y, ts, rs, trace, rng)
            x_ma[t, rs] = xm
            logp_ma[t, rs] = lm
            ma_start[t, rs] = True
            current_wp[rs] = wps
        waypoint[t] = current_wp
        xl, ll = actor.local(y, ts, rs, trace, current_wp[rs], rng)
        x_la[t, rs] = xl
        logp_la[t, rs] = ll
        active[t, rs] = True
        actions: list[LocalAction | None] = [None] * n
        for k, i in enumerate(rs):
            actions[i] = local_action(xl[k], trace, t, int(i), float(world.theta[i]), cfg.limits)
        res = env.step(actions)
        world = env.world
        rewards[t] = res.rewards
        trace.record(world)
        t += 1
        if res.status.terminal:
            break
    waypoint[t] = current_wp
    return EpisodeRecord(
        seed=int(seed), trace=trace, active=active[:t], ma_start=ma_start[:t], x_ma=x_ma[:t],
        x_la=x_la[:t], logp_ma=logp_ma[:t], logp_la=logp_la[:t], waypoint=waypoint[: t + 1],
        rewards=rewards[:t], status=world.status, reached=world.reached.copy(),
    )


def collect_rollout(
    envs: Sequence[NavEnv],
    model: SamarlModel,
    history: int,
    seeds: Sequence[int],
    rng: np.random.Generator | None,
) -> RolloutBuffer:
    """One episode per seed, spread round-robin over ``envs``, with frozen parameters."""
    was_training = model.training
    model.eval()
    actor = Actor(model, history, dtype=next(model.parameters()).dtype)
    buf = RolloutBuffer()
    try:
        for k, s in enumerate(seeds):
            buf.add(run_episode(envs[k % len(envs)], actor, int(s), rng))
    finally:
        model.train(was_training)
    return buf
