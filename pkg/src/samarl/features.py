"""Turn recorded trajectories into encoder inputs.

Every query ``(t, i)`` looks at robot ``i``'s window of the last ``L``
snapshots. All states are expressed in the robot's goal-centric frame at
time ``t``: origin at its current position, x-axis toward its goal.
Agents outside the robot's FOV at a given snapshot are zeroed and masked,
unless ``full=True`` (centralised critics see the joint state).

Token features (``FEAT_DIM`` = 11):
``px, py, vx, vy, rho`` for every agent, then ``gx, gy, v_pref,
cos(heading), sin(heading), is_self`` filled only for the observer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from .encoder import FeatureMatrix
from .env import World, in_fov

FEAT_DIM = 11
POS_SCALE = 5.0


@dataclass
class EpisodeTrace:
    """Per-snapshot world arrays for one episode (snapshot 0 is the reset state)."""

    n_robots: int
    radius: np.ndarray
    goal: np.ndarray
    v_pref: np.ndarray
    pos: list[np.ndarray] = field(default_factory=list)
    vel: list[np.ndarray] = field(default_factory=list)
    theta: list[np.ndarray] = field(default_factory=list)
    fov: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def start(cls, world: World) -> "EpisodeTrace":
        tr = cls(world.n_robots, world.radius.copy(), world.goal.copy(), world.v_pref.copy())
        tr.record(world)
        return tr

    def record(self, world: World) -> None:
        self.pos.append(world.pos.copy())
        self.vel.append(world.vel.copy())
        self.theta.append(world.theta.copy())
        self.fov.append(np.stack([in_fov(world, i) for i in range(world.n_robots)]))

    def __len__(self) -> int:
        return len(self.pos)

    def arrays(self):
        return np.stack(self.pos), np.stack(self.vel), np.stack(self.theta), np.stack(self.fov)


def goal_frame(trace: EpisodeTrace, ts: np.ndarray, rs: np.ndarray, pos: np.ndarray | None = None):
    """Origin and (cos, sin) of the goal-centric frame for each query."""
    if pos is None:
        pos = np.stack(trace.pos)
    c = pos[ts, rs]
    d = trace.goal[rs] - c
    phi = np.arctan2(d[:, 1], d[:, 0])
    return c, np.cos(phi), np.sin(phi)


def to_frame(vec: np.ndarray, cos: np.ndarray, sin: np.ndarray) -> np.ndarray:
    """Rotate world vectors ``[..., 2]`` into frames broadcast over the leading query axis."""
    shape = (-1,) + (1,) * (vec.ndim - 2)
    c = cos.reshape(shape)
    s = sin.reshape(shape)
    x, y = vec[..., 0], vec[..., 1]
    return np.stack([c * x + s * y, -s * x + c * y], axis=-1)


def from_frame(vec: np.ndarray, cos: np.ndarray, sin: np.ndarray) -> np.ndarray:
    shape = (-1,) + (1,) * (vec.ndim - 2)
    c = cos.reshape(shape)
    s = sin.reshape(shape)
    x, y = vec[..., 0], vec[..., 1]
    return np.stack([c * x - s * y, s * x + c * y], axis=-1)


def build_inputs(
    trace: EpisodeTrace,
    ts,
    rs,
    history: int,
    full: bool = False,
    dtype: torch.dtype = torch.float32,
) -> tuple[FeatureMatrix, FeatureMatrix]:
    """Encoder inputs ``(human, robot)`` for queries ``(ts[q], rs[q])``."""
    ts = np.asarray(ts, dtype=np.int64)
    rs = np.asarray(rs, dtype=np.int64)
    pos, vel, theta, fov = trace.arrays()
    n_rob = trace.n_robots
    n = pos.shape[1]
    q = len(ts)
    L = history

    tau = ts[:, None] - (L - 1) + np.arange(L)[None, :]
    valid = tau >= 0
    tau = np.clip(tau, 0, None)

    c, cos, sin = goal_frame(trace, ts, rs, pos)
    P = to_frame((pos[tau] - c[:, None, None, :]) / POS_SCALE, cos, sin)  # [Q, L, n, 2]
    V = to_frame(vel[tau], cos, sin)

    feats = np.zeros((q, L, n, FEAT_DIM))
    feats[..., 0:2] = P
    feats[..., 2:4] = V
    feats[..., 4] = trace.radius[None, None, :]

    if full:
        vis = np.ones((q, L, n), dtype=bool)
    else:
        vis = fov[tau, rs[:, None]].copy()  # [Q, L, n]
    vis[np.arange(q), :, rs] = True
    mask = vis & valid[:, :, None]

    qi = np.arange(q)
    self_pos = pos[tau, rs[:, None]]  # [Q, L, 2]
    g = to_frame((trace.goal[rs][:, None, :] - self_pos) / POS_SCALE, cos, sin)
    phi = np.arctan2(sin, cos)[:, None]
    heading = theta[tau, rs[:, None]] - phi
    feats[qi, :, rs, 5:7] = g
    feats[qi, :, rs, 7] = trace.v_pref[rs][:, None]
    feats[qi, :, rs, 8] = np.cos(heading)
    feats[qi, :, rs, 9] = np.sin(heading)
    feats[qi, :, rs, 10] = 1.0
    feats[~mask] = 0.0

    # robot slots: observer first, then the other robots in id order
    order = np.array([[i] + [j for j in range(n_rob) if j != i] for i in rs], dtype=np.int64).reshape(q, n_rob)
    r_feat = np.take_along_axis(feats, order[:, None, :, None], axis=2)
    r_mask = np.take_along_axis(mask, order[:, None, :], axis=2)
    if n > n_rob:
        h_feat = feats[:, :, n_rob:]
        h_mask = mask[:, :, n_rob:]
    else:
        h_feat = np.zeros((q, L, 1, FEAT_DIM))
        h_mask = np.zeros((q, L, 1), dtype=bool)

    def fm(x, m):
        return FeatureMatrix(torch.as_tensor(x, dtype=dtype), torch.as_tensor(m))

    return fm(h_feat, h_mask), fm(r_feat, r_mask)


def waypoint_features(trace: EpisodeTrace, ts, rs, waypoints: np.ndarray) -> np.ndarray:
    """Waypoint offsets from each query robot, in its goal frame, scaled. ``waypoints``: [Q, K, 2]."""
    ts = np.asarray(ts, dtype=np.int64)
    rs = np.asarray(rs, dtype=np.int64)
    pos = np.stack(trace.pos)
    c, cos, sin = goal_frame(trace, ts, rs, pos)
    return to_frame((waypoints - c[:, None, :]) / POS_SCALE, cos, sin)
