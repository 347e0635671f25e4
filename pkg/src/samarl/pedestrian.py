"""ORCA reciprocal collision avoidance for humans and the ORCA robot baseline.

The kernel is compiled (``_orca_ext``) when the extension is built and
falls back to the pure-Python twin otherwise. Set ``SAMARL_PURE_PYTHON=1``
to force the fallback.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _orca_py
from .core import AgentKind, AgentState, PublicState

if os.environ.get("SAMARL_PURE_PYTHON"):
    _kernel = _orca_py
else:
    try:
        from . import _orca_ext as _kernel  # type: ignore[no-redef]
    except ImportError:  # extension not built
        _kernel = _orca_py

BACKEND = "compiled" if _kernel is not _orca_py else "python"


def kernel(name: str | None = None):
    """Return the kernel module: ``"python"``, ``"compiled"`` or the active one."""
    if name is None:
        return _kernel
    if name == "python":
        return _orca_py
    if name == "compiled":
        from . import _orca_ext

        return _orca_ext
    raise ValueError(f"unknown ORCA backend {name!r}")


@dataclass(frozen=True)
class OrcaParams:
    time_horizon: float = 5.0
    neighbor_dist: float = 10.0
    max_neighbors: int = 10
    safety_margin: float = 0.01

    def __post_init__(self):
        if not (self.time_horizon > 0 and self.neighbor_dist > 0 and self.safety_margin > 0):
            raise ValueError("ORCA parameters must be positive")
        if self.max_neighbors < 1:
            raise ValueError("max_neighbors must be >= 1")


@dataclass(frozen=True)
class HalfPlane:
    """Velocities ``v`` with ``dot(v - point, normal) >= 0`` are permitted."""

    point: tuple[float, float]
    normal: tuple[float, float]

    def contains(self, v: Sequence[float], tol: float = 0.0) -> bool:
        return (v[0] - self.point[0]) * self.normal[0] + (v[1] - self.point[1]) * self.normal[1] >= -tol

    def _line(self) -> tuple[float, float, float, float]:
        # permitted side lies to the left of the line direction
        return (self.point[0], self.point[1], self.normal[1], -self.normal[0])

    @classmethod
    def _from_line(cls, line) -> "HalfPlane":
        px, py, dx, dy = line
        return cls((px, py), (-dy, dx))


def _neighbor_order(
    pos: tuple[float, float], neighbors: Sequence[PublicState], params: OrcaParams
) -> list[int]:
    keyed = []
    for k, nb in enumerate(neighbors):
        d = (nb.px - pos[0]) ** 2 + (nb.py - pos[1]) ** 2
        if d < params.neighbor_dist ** 2:
            keyed.append((d, k))
    keyed.sort()
    return [k for _, k in keyed[: params.max_neighbors]]


def _neighbors_in_range(
    pos: tuple[float, float], neighbors: Sequence[PublicState], params: OrcaParams
) -> list[PublicState]:
    return [neighbors[k] for k in _neighbor_order(pos, neighbors, params)]


def orca_halfplanes(
    self_state: PublicState,
    neighbors: Sequence[PublicState],
    params: OrcaParams,
    dt: float,
    responsibility: Sequence[float] | None = None,
) -> list[HalfPlane]:
    """One permitted half-plane per neighbour within ``neighbor_dist``, nearest first.

    Each agent takes half of the velocity change needed to leave the
    truncated velocity obstacle, unless ``responsibility`` (aligned with
    ``neighbors``) says otherwise; 1.0 suits neighbours that will not
    reciprocate. Overlapping pairs get an escape plane computed over a
    single step.
    """
    order = _neighbor_order((self_state.px, self_state.py), neighbors, params)
    rows = [(n.px, n.py, n.vx, n.vy, n.rho + params.safety_margin) for n in (neighbors[k] for k in order)]
    lines = _kernel.halfplanes(
        self_state.px, self_state.py, self_state.vx, self_state.vy,
        self_state.rho + params.safety_margin, rows, params.time_horizon, dt,
    )
    planes = [HalfPlane._from_line(line) for line in lines]
    if responsibility is not None:
        vx, vy = self_state.vx, self_state.vy
        for m, k in enumerate(order):
            f = responsibility[k] / 0.5
            if f != 1.0:
                px, py = planes[m].point
                planes[m] = HalfPlane((vx + f * (px - vx), vy + f * (py - vy)), planes[m].normal)
    return planes


def solve_velocity(
    pref_velocity: Sequence[float], halfplanes: Sequence[HalfPlane], v_cap: float
) -> tuple[float, float]:
    """Closest permitted velocity to ``pref_velocity`` with speed at most ``v_cap``.

    Infeasible constraint sets fall back to the velocity minimising the
    largest half-plane violation.
    """
    if not v_cap > 0:
        raise ValueError("v_cap must be positive")
    lines = [h._line() for h in halfplanes]
    vx, vy = _kernel.solve(float(pref_velocity[0]), float(pref_velocity[1]), lines, v_cap)
    return (vx, vy)


def human_policy(
    agent: AgentState,
    visible_humans: Sequence[PublicState],
    params: OrcaParams,
    dt: float,
) -> tuple[float, float]:
    """Target velocity for a human. Robots are never in ``visible_humans``."""
    if agent.kind is not AgentKind.HUMAN:
        raise ValueError("human_policy called for a non-human agent")
    return reciprocal_velocity(agent, visible_humans, params, dt, agent.prv.v_pref)


def reciprocal_velocity(
    agent: AgentState,
    neighbors: Sequence[PublicState],
    params: OrcaParams,
    dt: float,
    v_cap: float,
) -> tuple[float, float]:
    """ORCA velocity toward the agent's goal; zero once within its radius of it."""
    pub, prv = agent.pub, agent.prv
    pref = _orca_py.preferred_velocity(pub.px, pub.py, prv.gx, prv.gy, prv.v_pref, pub.rho)
    if pref == (0.0, 0.0):
        return (0.0, 0.0)
    nbrs = _neighbors_in_range((pub.px, pub.py), neighbors, params)
    rows = [(n.px, n.py, n.vx, n.vy, n.rho + params.safety_margin) for n in nbrs]
    pref = _orca_py.headon_tiebreak(pref[0], pref[1], pub.px, pub.py, rows)
    lines = _kernel.halfplanes(
        pub.px, pub.py, pub.vx, pub.vy, pub.rho + params.safety_margin, rows,
        params.time_horizon, dt,
    )
    cap = min(v_cap, prv.v_pref)
    vx, vy = _kernel.solve(pref[0], pref[1], lines, cap)
    return (vx, vy)


def crowd_velocities(
    states: np.ndarray,
    goals: np.ndarray,
    v_pref: np.ndarray,
    active: np.ndarray,
    candidates: Sequence[int],
    params: OrcaParams,
    dt: float,
    v_cap: np.ndarray | None = None,
    backend: str | None = None,
) -> np.ndarray:
    """Batched ORCA step over a frozen snapshot.

    Every active agent treats the agents listed in ``candidates`` as
    reciprocal neighbours. Returns an ``(n, 2)`` array of velocities.
    """
    states = np.asarray(states, dtype=np.float64)
    n = len(states)
    if v_cap is None:
        v_cap = v_pref
    cand = np.asarray(list(candidates), dtype=np.int64)
    impl = kernel(backend)
    if impl is _orca_py:
        out = _orca_py.crowd_velocities(
            states.tolist(), np.asarray(goals, dtype=np.float64).tolist(),
            list(map(float, v_pref)), list(map(float, v_cap)), list(map(bool, active)),
            cand.tolist(), params.time_horizon, params.neighbor_dist,
            params.max_neighbors, params.safety_margin, dt,
        )
        return np.asarray(out, dtype=np.float64).reshape(n, 2)
    return impl.crowd_velocities(
        states, goals, v_pref, v_cap, np.asarray(active, dtype=np.uint8), cand,
        params.time_horizon, params.neighbor_dist, params.max_neighbors,
        params.safety_margin, dt,
    )


def robot_velocity(
    agent: AgentState,
    neighbors: Sequence[PublicState],
    reciprocal: Sequence[bool],
    params: OrcaParams,
    dt: float,
    v_cap: float,
    clearance: float = 0.0,
) -> tuple[float, float]:
    """ORCA velocity for a robot that takes full responsibility for non-reciprocating neighbours.

    ``clearance`` inflates the robot's own radius, which buys slack for
    the lag of acceleration-limited tracking.
    """
    pub, prv = agent.pub, agent.prv
    pref = _orca_py.preferred_velocity(pub.px, pub.py, prv.gx, prv.gy, prv.v_pref, pub.rho)
    if pref == (0.0, 0.0):
        return (0.0, 0.0)
    me = PublicState(pub.px, pub.py, pub.vx, pub.vy, pub.rho + clearance)
    resp = [0.5 if r else 1.0 for r in reciprocal]
    planes = orca_halfplanes(me, neighbors, params, dt, resp)
    return solve_velocity(pref, planes, min(v_cap, prv.v_pref))



def simulate_crowd(
    pos: np.ndarray,
    goals: np.ndarray,
    radius: np.ndarray,
    v_pref: np.ndarray,
    steps: int,
    params: OrcaParams | None = None,
    dt: float = 0.25,
    backend: str | None = None,
) -> np.ndarray:
    """Roll out a human-only crowd; returns positions ``[steps + 1, n, 2]``.

    Uses the same update as the environment: ORCA velocity, speed capped
    at ``v_pref``, then one Euler step.
    """
    params = params or OrcaParams()
    pos = np.array(pos, dtype=np.float64)
    vel = np.zeros_like(pos)
    radius = np.asarray(radius, dtype=np.float64)
    v_pref = np.asarray(v_pref, dtype=np.float64)
    n = len(pos)
    active = np.ones(n, dtype=bool)
    out = [pos.copy()]
    for _ in range(steps):
        states = np.column_stack([pos, vel, radius])
        v = crowd_velocities(states, goals, v_pref, active, range(n), params, dt, backend=backend)
        speed = np.hypot(v[:, 0], v[:, 1])
        over = speed > v_pref
        v[over] *= (v_pref[over] / speed[over])[:, None]
        vel = v
        pos = pos + v * dt
        out.append(pos.copy())
    return np.stack(out)
