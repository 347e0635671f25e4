"""Robot motion under acceleration + heading commands, with actuation limits.

Each step first rotates the current velocity in place onto the commanded
heading (speed preserved), then applies constant acceleration for ``dt``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .core import KinematicLimits, PublicState, wrap_angle

# below this speed the turning-radius limit is waived
STOPPED_SPEED = 1e-6


@dataclass(frozen=True)
class LocalAction:
    ax: float
    ay: float
    theta: float


@dataclass(frozen=True)
class RobotPose:
    """Public state plus heading: the part of a robot the integrator touches."""

    px: float
    py: float
    vx: float
    vy: float
    theta: float

    @classmethod
    def from_public(cls, pub: PublicState, theta: float) -> "RobotPose":
        return cls(pub.px, pub.py, pub.vx, pub.vy, theta)

    @property
    def speed(self) -> float:
        return math.hypot(self.vx, self.vy)


def clamp_acceleration(ax: float, ay: float, a_max: float) -> tuple[float, float]:
    norm = math.hypot(ax, ay)
    if norm > a_max:
        scale = a_max / norm
        return ax * scale, ay * scale
    return ax, ay


def max_turn(speed_next: float, dt: float, limits: KinematicLimits) -> float:
    """Largest heading change allowed by rotation and turning-radius limits."""
    if speed_next < STOPPED_SPEED:
        return limits.dtheta_max
    return min(limits.dtheta_max, dt * speed_next / limits.r_min)


def clamp_action(
    raw: LocalAction, prev_theta: float, speed_next: float, dt: float, limits: KinematicLimits
) -> LocalAction:
    ax, ay = clamp_acceleration(raw.ax, raw.ay, limits.a_max)
    dtheta = wrap_angle(raw.theta - prev_theta)
    bound = max_turn(speed_next, dt, limits)
    dtheta = min(max(dtheta, -bound), bound)
    return LocalAction(ax, ay, wrap_angle(prev_theta + dtheta))


def _next_speed(speed: float, theta: float, ax: float, ay: float, dt: float, v_max: float) -> float:
    vx = speed * math.cos(theta) + ax * dt
    vy = speed * math.sin(theta) + ay * dt
    return min(math.hypot(vx, vy), v_max)


def constrain_action(
    raw: LocalAction, pose: RobotPose, dt: float, limits: KinematicLimits
) -> LocalAction:
    """Clamp ``raw`` so the resulting step satisfies all three actuation limits.

    The turning-radius bound depends on the speed after the step, which in
    turn depends on the clamped heading. A few fixed-point iterations
    usually settle it; otherwise the largest feasible turn is bracketed
    between a turn known to be feasible and the last infeasible one and
    found by regula falsi (Illinois variant).
    """
    ax, ay = clamp_acceleration(raw.ax, raw.ay, limits.a_max)
    speed = pose.speed
    dtheta = wrap_angle(raw.theta - pose.theta)
    dtheta = min(max(dtheta, -limits.dtheta_max), limits.dtheta_max)

    # the next speed is at least | |v| - |a| dt |, whatever the heading
    floor = min(abs(speed - math.hypot(ax, ay) * dt), limits.v_max)
    if abs(dtheta) * limits.r_min <= dt * floor:
        return LocalAction(ax, ay, wrap_angle(pose.theta + dtheta))
    sign = math.copysign(1.0, dtheta)

    def violation(m: float) -> float:
        s = _next_speed(speed, pose.theta + sign * m, ax, ay, dt, limits.v_max)
        if s < STOPPED_SPEED:
            return -1.0
        return m * limits.r_min - dt * s

    hi = abs(dtheta)
    f_hi = violation(hi)
    if f_hi <= 0.0:
        return LocalAction(ax, ay, wrap_angle(pose.theta + dtheta))
    lo = min(dt * floor / limits.r_min, hi)
    f_lo = violation(lo)
    for _ in range(3):
        m = hi - f_hi / limits.r_min  # fixed-point step: dt * s(hi) / r_min
        if not lo < m < hi:
            break
        f = violation(m)
        if f <= 0.0:
            lo, f_lo = m, f
            break
        hi, f_hi = m, f
    side = 0
    for _ in range(200):
        if hi - lo <= 1e-15 * max(hi, 1.0):
            break
        m = (lo * f_hi - hi * f_lo) / (f_hi - f_lo)
        if not lo < m < hi:
            m = 0.5 * (lo + hi)
        f = violation(m)
        if f <= 0.0:
            lo, f_lo = m, f
            if side == -1:
                f_hi *= 0.5
            side = -1
        else:
            hi, f_hi = m, f
            if side == 1:
                f_lo *= 0.5
            side = 1
    dtheta = sign * lo
    return LocalAction(ax, ay, wrap_angle(pose.theta + dtheta))


def rotate_velocity(vx: float, vy: float, theta: float) -> tuple[float, float]:
    speed = math.hypot(vx, vy)
    return speed * math.cos(theta), speed * math.sin(theta)


def integrate(pose: RobotPose, action: LocalAction, dt: float, v_max: float = math.inf) -> RobotPose:
    """Advance one step. ``action`` must already be clamped."""
    vrx, vry = rotate_velocity(pose.vx, pose.vy, action.theta)
    px = pose.px + vrx * dt + 0.5 * action.ax * dt * dt
    py = pose.py + vry * dt + 0.5 * action.ay * dt * dt
    vx = vrx + action.ax * dt
    vy = vry + action.ay * dt
    speed = math.hypot(vx, vy)
    if speed > v_max:
        vx, vy = vx * v_max / speed, vy * v_max / speed
    return RobotPose(px, py, vx, vy, action.theta)


def integrate_human(
    pub: PublicState, target_velocity: tuple[float, float], v_pref: float, dt: float
) -> PublicState:
    vx, vy = target_velocity
    speed = math.hypot(vx, vy)
    if speed > v_pref:
        vx, vy = vx * v_pref / speed, vy * v_pref / speed
    return PublicState(pub.px + vx * dt, pub.py + vy * dt, vx, vy, pub.rho)


def velocity_tracking_action(
    pose: RobotPose, target: tuple[float, float], dt: float, limits: KinematicLimits
) -> LocalAction:
    """Raw action steering the robot toward a desired velocity.

    Used by velocity-level planners (the ORCA baseline): point the heading
    along the target and take up the remaining velocity error with
    acceleration. The result still has to go through ``constrain_action``.
    """
    tx, ty = target
    if math.hypot(tx, ty) < STOPPED_SPEED:
        theta = pose.theta
    else:
        theta = math.atan2(ty, tx)
    # heading the constraint solver is likely to accept, used for the accel estimate
    d = wrap_angle(theta - pose.theta)
    d = min(max(d, -limits.dtheta_max), limits.dtheta_max)
    vrx, vry = rotate_velocity(pose.vx, pose.vy, pose.theta + d)
    return LocalAction((tx - vrx) / dt, (ty - vry) / dt, theta)
