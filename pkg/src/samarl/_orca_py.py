"""Pure-Python ORCA kernel (reference implementation and fallback).

Half-planes are stored RVO2-style as ``(point_x, point_y, dir_x, dir_y)``:
the permitted velocities lie on the left of ``dir``. The public module
converts to (point, inward normal) form.

The arithmetic order mirrors ``_orca_ext.pyx`` so both kernels agree to
the last bit on IEEE doubles.
"""

from __future__ import annotations

import math

RVO_EPSILON = 1e-5
HEADON_ROTATION = 1e-3
HEADON_TOL = 1e-9


def _det(ax, ay, bx, by):
    return ax * by - ay * bx


def halfplanes(px, py, vx, vy, radius, neighbors, time_horizon, dt):
    """ORCA lines for one agent. ``radius`` and neighbor radii include any margin."""
    inv_th = 1.0 / time_horizon
    lines = []
    for (qx, qy, ux, uy, qr) in neighbors:
        rpx = qx - px
        rpy = qy - py
        rvx = vx - ux
        rvy = vy - uy
        dist_sq = rpx * rpx + rpy * rpy
        comb = radius + qr
        comb_sq = comb * comb
        if dist_sq > comb_sq:
            wx = rvx - inv_th * rpx
            wy = rvy - inv_th * rpy
            w_len_sq = wx * wx + wy * wy
            dot1 = wx * rpx + wy * rpy
            if dot1 < 0.0 and dot1 * dot1 > comb_sq * w_len_sq:
                w_len = math.sqrt(w_len_sq)
                uwx = wx / w_len
                uwy = wy / w_len
                dx = uwy
                dy = -uwx
                mag = comb * inv_th - w_len
                ux_ = mag * uwx
                uy_ = mag * uwy
            else:
                leg = math.sqrt(dist_sq - comb_sq)
                if _det(rpx, rpy, wx, wy) > 0.0:
                    dx = (rpx * leg - rpy * comb) / dist_sq
                    dy = (rpx * comb + rpy * leg) / dist_sq
                else:
                    dx = -(rpx * leg + rpy * comb) / dist_sq
                    dy = -(-rpx * comb + rpy * leg) / dist_sq
                dot2 = rvx * dx + rvy * dy
                ux_ = dot2 * dx - rvx
                uy_ = dot2 * dy - rvy
        else:
            inv_dt = 1.0 / dt
            wx = rvx - inv_dt * rpx
            wy = rvy - inv_dt * rpy
            w_len = math.sqrt(wx * wx + wy * wy)
            if w_len == 0.0:
                # coincident centres with equal velocities: push along +x
                uwx, uwy = 1.0, 0.0
            else:
                uwx = wx / w_len
                uwy = wy / w_len
            dx = uwy
            dy = -uwx
            mag = comb * inv_dt - w_len
            ux_ = mag * uwx
            uy_ = mag * uwy
        lines.append((vx + 0.5 * ux_, vy + 0.5 * uy_, dx, dy))
    return lines


def _lp1(lines, line_no, radius, optx, opty, direction_opt):
    lpx, lpy, ldx, ldy = lines[line_no]
    dot = lpx * ldx + lpy * ldy
    disc = dot * dot + radius * radius - (lpx * lpx + lpy * lpy)
    if disc < 0.0:
        return None
    sq = math.sqrt(disc)
    t_left = -dot - sq
    t_right = -dot + sq
    for i in range(line_no):
        ipx, ipy, idx_, idy = lines[i]
        denom = _det(ldx, ldy, idx_, idy)
        numer = _det(idx_, idy, lpx - ipx, lpy - ipy)
        if abs(denom) <= RVO_EPSILON:
            if numer < 0.0:
                return None
            continue
        t = numer / denom
        if denom >= 0.0:
            t_right = min(t_right, t)
        else:
            t_left = max(t_left, t)
        if t_left > t_right:
            return None
    if direction_opt:
        if optx * ldx + opty * ldy > 0.0:
            t = t_right
        else:
            t = t_left
    else:
        t = ldx * (optx - lpx) + ldy * (opty - lpy)
        if t < t_left:
            t = t_left
        elif t > t_right:
            t = t_right
    return (lpx + t * ldx, lpy + t * ldy)


def _lp2(lines, radius, optx, opty, direction_opt):
    if direction_opt:
        rx = optx * radius
        ry = opty * radius
    elif optx * optx + opty * opty > radius * radius:
        n = math.sqrt(optx * optx + opty * opty)
        rx = optx / n * radius
        ry = opty / n * radius
    else:
        rx, ry = optx, opty
    for i in range(len(lines)):
        lpx, lpy, ldx, ldy = lines[i]
        if _det(ldx, ldy, lpx - rx, lpy - ry) > 0.0:
            res = _lp1(lines, i, radius, optx, opty, direction_opt)
            if res is None:
                return i, rx, ry
            rx, ry = res
    return len(lines), rx, ry


def _lp3(lines, begin, radius, rx, ry):
    distance = 0.0
    for i in range(begin, len(lines)):
        lpx, lpy, ldx, ldy = lines[i]
        if _det(ldx, ldy, lpx - rx, lpy - ry) > distance:
            proj = []
            for j in range(i):
                jpx, jpy, jdx, jdy = lines[j]
                determinant = _det(ldx, ldy, jdx, jdy)
                if abs(determinant) <= RVO_EPSILON:
                    if ldx * jdx + ldy * jdy > 0.0:
                        continue
                    ppx = 0.5 * (lpx + jpx)
                    ppy = 0.5 * (lpy + jpy)
                else:
                    s = _det(jdx, jdy, lpx - jpx, lpy - jpy) / determinant
                    ppx = lpx + s * ldx
                    ppy = lpy + s * ldy
                ddx = jdx - ldx
                ddy = jdy - ldy
                n = math.sqrt(ddx * ddx + ddy * ddy)
                proj.append((ppx, ppy, ddx / n, ddy / n))
            tx, ty = rx, ry
            count, nx, ny = _lp2(proj, radius, -ldy, ldx, True)
            if count < len(proj):
                rx, ry = tx, ty
            else:
                rx, ry = nx, ny
            distance = _det(ldx, ldy, lpx - rx, lpy - ry)
    return rx, ry


def solve(prefx, prefy, lines, v_cap):
    """Velocity closest to the preference inside all half-planes and the speed disc."""
    count, rx, ry = _lp2(lines, v_cap, prefx, prefy, False)
    if count < len(lines):
        rx, ry = _lp3(lines, count, v_cap, rx, ry)
    speed = math.sqrt(rx * rx + ry * ry)
    if speed > v_cap:
        rx = rx / speed * v_cap
        ry = ry / speed * v_cap
    return rx, ry


def preferred_velocity(px, py, gx, gy, v_pref, arrive_radius):
    dx = gx - px
    dy = gy - py
    dist = math.sqrt(dx * dx + dy * dy)
    if dist < arrive_radius:
        return 0.0, 0.0
    return v_pref * dx / dist, v_pref * dy / dist


def headon_tiebreak(prefx, prefy, px, py, neighbors):
    """Rotate the preference by a fixed small angle if it points exactly at a neighbour."""
    for (qx, qy, ux, uy, _qr) in neighbors:
        rpx = qx - px
        rpy = qy - py
        rvx = prefx - ux
        rvy = prefy - uy
        dot = rpx * rvx + rpy * rvy
        if dot <= 0.0:
            continue
        scale = math.sqrt(rpx * rpx + rpy * rpy) * math.sqrt(rvx * rvx + rvy * rvy)
        if abs(_det(rpx, rpy, rvx, rvy)) <= HEADON_TOL * scale:
            c = math.cos(HEADON_ROTATION)
            s = math.sin(HEADON_ROTATION)
            return c * prefx - s * prefy, s * prefx + c * prefy
    return prefx, prefy


def select_neighbors(i, states, candidates, neighbor_dist, max_neighbors):
    """Indices of the nearest candidates within ``neighbor_dist`` (ties by index)."""
    px, py = states[i][0], states[i][1]
    limit = neighbor_dist * neighbor_dist
    found = []
    for j in candidates:
        if j == i:
            continue
        dx = states[j][0] - px
        dy = states[j][1] - py
        d = dx * dx + dy * dy
        if d < limit:
            found.append((d, j))
    found.sort()
    return [j for _, j in found[:max_neighbors]]


def crowd_velocities(states, goals, v_pref, v_cap, active, candidates,
                     time_horizon, neighbor_dist, max_neighbors, margin, dt):
    """New velocities for every active agent from a frozen snapshot.

    ``states`` rows are ``(px, py, vx, vy, rho)``; ``candidates`` lists the
    indices each agent may treat as ORCA neighbours. Inactive agents get
    zero velocity.
    """
    n = len(states)
    out = [(0.0, 0.0)] * n
    for i in range(n):
        if not active[i]:
            continue
        px, py, vx, vy, rho = states[i]
        prefx, prefy = preferred_velocity(px, py, goals[i][0], goals[i][1], v_pref[i], rho)
        if prefx == 0.0 and prefy == 0.0:
            continue
        idx = select_neighbors(i, states, candidates, neighbor_dist, max_neighbors)
        nbrs = [(states[j][0], states[j][1], states[j][2], states[j][3], states[j][4] + margin)
                for j in idx]
        prefx, prefy = headon_tiebreak(prefx, prefy, px, py, nbrs)
        lines = halfplanes(px, py, vx, vy, rho + margin, nbrs, time_horizon, dt)
        out[i] = solve(prefx, prefy, lines, v_cap[i])
    return out
