# cython: language_level=3
"""Compiled ORCA kernel. Same algorithm and arithmetic order as _orca_py."""

from libc.math cimport sqrt, fabs, cos, sin
from libc.stdlib cimport malloc, free

import numpy as np
cimport numpy as cnp

cdef double RVO_EPSILON = 1e-5
cdef double HEADON_ROTATION = 1e-3
cdef double HEADON_TOL = 1e-9


cdef inline double _det(double ax, double ay, double bx, double by) nogil:
    return ax * by - ay * bx


cdef int _halfplanes(double px, double py, double vx, double vy, double radius,
                     double* nb, int n_nb, double time_horizon, double dt,
                     double* lines) nogil:
    cdef double inv_th = 1.0 / time_horizon
    cdef double inv_dt
    cdef int k
    cdef double qx, qy, ux, uy, qr
    cdef double rpx, rpy, rvx, rvy, dist_sq, comb, comb_sq
    cdef double wx, wy, w_len_sq, dot1, w_len, uwx, uwy, dx, dy, mag, ux_, uy_, leg, dot2
    for k in range(n_nb):
        qx = nb[5 * k]
        qy = nb[5 * k + 1]
        ux = nb[5 * k + 2]
        uy = nb[5 * k + 3]
        qr = nb[5 * k + 4]
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
                w_len = sqrt(w_len_sq)
                uwx = wx / w_len
                uwy = wy / w_len
                dx = uwy
                dy = -uwx
                mag = comb * inv_th - w_len
                ux_ = mag * uwx
                uy_ = mag * uwy
            else:
                leg = sqrt(dist_sq - comb_sq)
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
            w_len = sqrt(wx * wx + wy * wy)
            if w_len == 0.0:
                uwx = 1.0
                uwy = 0.0
            else:
                uwx = wx / w_len
                uwy = wy / w_len
            dx = uwy
            dy = -uwx
            mag = comb * inv_dt - w_len
            ux_ = mag * uwx
            uy_ = mag * uwy
        lines[4 * k] = vx + 0.5 * ux_
        lines[4 * k + 1] = vy + 0.5 * uy_
        lines[4 * k + 2] = dx
        lines[4 * k + 3] = dy
    return n_nb


cdef bint _lp1(double* lines, int line_no, double radius, double optx, double opty,
               bint direction_opt, double* res) nogil:
    cdef double lpx = lines[4 * line_no]
    cdef double lpy = lines[4 * line_no + 1]
    cdef double ldx = lines[4 * line_no + 2]
    cdef double ldy = lines[4 * line_no + 3]
    cdef double dot = lpx * ldx + lpy * ldy
    cdef double disc = dot * dot + radius * radius - (lpx * lpx + lpy * lpy)
    cdef double sq, t_left, t_right, denom, numer, t
    cdef double ipx, ipy, idx_, idy
    cdef int i
    if disc < 0.0:
        return False
    sq = sqrt(disc)
    t_left = -dot - sq
    t_right = -dot + sq
    for i in range(line_no):
        ipx = lines[4 * i]
        ipy = lines[4 * i + 1]
        idx_ = lines[4 * i + 2]
        idy = lines[4 * i + 3]
        denom = _det(ldx, ldy, idx_, idy)
        numer = _det(idx_, idy, lpx - ipx, lpy - ipy)
        if fabs(denom) <= RVO_EPSILON:
            if numer < 0.0:
                return False
            continue
        t = numer / denom
        if denom >= 0.0:
            if t < t_right:
                t_right = t
        else:
            if t > t_left:
                t_left = t
        if t_left > t_right:
            return False
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
    res[0] = lpx + t * ldx
    res[1] = lpy + t * ldy
    return True


cdef int _lp2(double* lines, int n_lines, double radius, double optx, double opty,
              bint direction_opt, double* result) nogil:
    cdef double rx, ry, n
    cdef double tmp[2]
    cdef int i
    if direction_opt:
        rx = optx * radius
        ry = opty * radius
    elif optx * optx + opty * opty > radius * radius:
        n = sqrt(optx * optx + opty * opty)
        rx = optx / n * radius
        ry = opty / n * radius
    else:
        rx = optx
        ry = opty
    for i in range(n_lines):
        if _det(lines[4 * i + 2], lines[4 * i + 3], lines[4 * i] - rx, lines[4 * i + 1] - ry) > 0.0:
            if not _lp1(lines, i, radius, optx, opty, direction_opt, tmp):
                result[0] = rx
                result[1] = ry
                return i
            rx = tmp[0]
            ry = tmp[1]
    result[0] = rx
    result[1] = ry
    return n_lines


cdef void _lp3(double* lines, int n_lines, int begin, double radius, double* result,
               double* proj) nogil:
    cdef double distance = 0.0
    cdef double rx = result[0]
    cdef double ry = result[1]
    cdef double lpx, lpy, ldx, ldy, jpx, jpy, jdx, jdy, determinant, s, ppx, ppy, ddx, ddy, n
    cdef double tx, ty
    cdef double nr[2]
    cdef int i, j, n_proj, count
    for i in range(begin, n_lines):
        lpx = lines[4 * i]
        lpy = lines[4 * i + 1]
        ldx = lines[4 * i + 2]
        ldy = lines[4 * i + 3]
        if _det(ldx, ldy, lpx - rx, lpy - ry) > distance:
            n_proj = 0
            for j in range(i):
                jpx = lines[4 * j]
                jpy = lines[4 * j + 1]
                jdx = lines[4 * j + 2]
                jdy = lines[4 * j + 3]
                determinant = _det(ldx, ldy, jdx, jdy)
                if fabs(determinant) <= RVO_EPSILON:
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
                n = sqrt(ddx * ddx + ddy * ddy)
                proj[4 * n_proj] = ppx
                proj[4 * n_proj + 1] = ppy
                proj[4 * n_proj + 2] = ddx / n
                proj[4 * n_proj + 3] = ddy / n
                n_proj += 1
            tx = rx
            ty = ry
            count = _lp2(proj, n_proj, radius, -ldy, ldx, True, nr)
            if count < n_proj:
                rx = tx
                ry = ty
            else:
                rx = nr[0]
                ry = nr[1]
            distance = _det(ldx, ldy, lpx - rx, lpy - ry)
    result[0] = rx
    result[1] = ry


cdef void _solve(double prefx, double prefy, double* lines, int n_lines, double v_cap,
                 double* out, double* proj) nogil:
    cdef int count = _lp2(lines, n_lines, v_cap, prefx, prefy, False, out)
    cdef double speed
    if count < n_lines:
        _lp3(lines, n_lines, count, v_cap, out, proj)
    speed = sqrt(out[0] * out[0] + out[1] * out[1])
    if speed > v_cap:
        out[0] = out[0] / speed * v_cap
        out[1] = out[1] / speed * v_cap


cdef void _tiebreak(double* pref, double px, double py, double* nb, int n_nb) nogil:
    cdef int k
    cdef double rpx, rpy, rvx, rvy, dot, scale, c, s, x, y
    for k in range(n_nb):
        rpx = nb[5 * k] - px
        rpy = nb[5 * k + 1] - py
        rvx = pref[0] - nb[5 * k + 2]
        rvy = pref[1] - nb[5 * k + 3]
        dot = rpx * rvx + rpy * rvy
        if dot <= 0.0:
            continue
        scale = sqrt(rpx * rpx + rpy * rpy) * sqrt(rvx * rvx + rvy * rvy)
        if fabs(_det(rpx, rpy, rvx, rvy)) <= HEADON_TOL * scale:
            c = cos(HEADON_ROTATION)
            s = sin(HEADON_ROTATION)
            x = pref[0]
            y = pref[1]
            pref[0] = c * x - s * y
            pref[1] = s * x + c * y
            return


def halfplanes(double px, double py, double vx, double vy, double radius, neighbors,
               double time_horizon, double dt):
    cdef int n = len(neighbors)
    cdef double[:, ::1] nb = np.zeros((max(n, 1), 5))
    cdef double[:, ::1] lines = np.zeros((max(n, 1), 4))
    cdef int k
    for k in range(n):
        row = neighbors[k]
        nb[k, 0] = row[0]
        nb[k, 1] = row[1]
        nb[k, 2] = row[2]
        nb[k, 3] = row[3]
        nb[k, 4] = row[4]
    _halfplanes(px, py, vx, vy, radius, &nb[0, 0], n, time_horizon, dt, &lines[0, 0])
    return [(lines[k, 0], lines[k, 1], lines[k, 2], lines[k, 3]) for k in range(n)]


def solve(double prefx, double prefy, lines, double v_cap):
    cdef int n = len(lines)
    cdef double[:, ::1] buf = np.zeros((max(n, 1), 4))
    cdef double[:, ::1] proj = np.zeros((max(n, 1), 4))
    cdef double out[2]
    cdef int k
    for k in range(n):
        row = lines[k]
        buf[k, 0] = row[0]
        buf[k, 1] = row[1]
        buf[k, 2] = row[2]
        buf[k, 3] = row[3]
    _solve(prefx, prefy, &buf[0, 0], n, v_cap, out, &proj[0, 0])
    return (out[0], out[1])


def crowd_velocities(states, goals, v_pref, v_cap, active, candidates,
                     double time_horizon, double neighbor_dist, int max_neighbors,
                     double margin, double dt):
    cdef double[:, ::1] st = np.ascontiguousarray(states, dtype=np.float64)
    cdef double[:, ::1] gl = np.ascontiguousarray(goals, dtype=np.float64)
    cdef double[::1] vp = np.ascontiguousarray(v_pref, dtype=np.float64)
    cdef double[::1] vc = np.ascontiguousarray(v_cap, dtype=np.float64)
    cdef cnp.uint8_t[::1] act = np.ascontiguousarray(active, dtype=np.uint8)
    cdef cnp.int64_t[::1] cand = np.ascontiguousarray(candidates, dtype=np.int64)
    cdef int n = st.shape[0]
    cdef int n_cand = cand.shape[0]
    out_arr = np.zeros((n, 2))
    cdef double[:, ::1] out = out_arr
    cdef int cap = max(n, 1)
    cdef double* nb = <double*> malloc(5 * cap * sizeof(double))
    cdef double* lines = <double*> malloc(4 * cap * sizeof(double))
    cdef double* proj = <double*> malloc(4 * cap * sizeof(double))
    cdef double* dist = <double*> malloc(cap * sizeof(double))
    cdef int* order = <int*> malloc(cap * sizeof(int))
    cdef int i, j, c, k, m, n_found, n_nb
    cdef double px, py, vx, vy, rho, dx, dy, d, limit, dist_goal
    cdef double pref[2]
    cdef double res[2]
    try:
        limit = neighbor_dist * neighbor_dist
        for i in range(n):
            if not act[i]:
                continue
            px = st[i, 0]
            py = st[i, 1]
            vx = st[i, 2]
            vy = st[i, 3]
            rho = st[i, 4]
            dx = gl[i, 0] - px
            dy = gl[i, 1] - py
            dist_goal = sqrt(dx * dx + dy * dy)
            if dist_goal < rho:
                continue
            pref[0] = vp[i] * dx / dist_goal
            pref[1] = vp[i] * dy / dist_goal
            if pref[0] == 0.0 and pref[1] == 0.0:
                continue
            # nearest candidates, ties broken by index (insertion sort keeps it stable)
            n_found = 0
            for c in range(n_cand):
                j = <int> cand[c]
                if j == i:
                    continue
                dx = st[j, 0] - px
                dy = st[j, 1] - py
                d = dx * dx + dy * dy
                if d < limit:
                    k = n_found
                    while k > 0 and (dist[k - 1] > d or (dist[k - 1] == d and order[k - 1] > j)):
                        dist[k] = dist[k - 1]
                        order[k] = order[k - 1]
                        k -= 1
                    dist[k] = d
                    order[k] = j
                    n_found += 1
            n_nb = n_found if n_found < max_neighbors else max_neighbors
            for m in range(n_nb):
                j = order[m]
                nb[5 * m] = st[j, 0]
                nb[5 * m + 1] = st[j, 1]
                nb[5 * m + 2] = st[j, 2]
                nb[5 * m + 3] = st[j, 3]
                nb[5 * m + 4] = st[j, 4] + margin
            _tiebreak(pref, px, py, nb, n_nb)
            _halfplanes(px, py, vx, vy, rho + margin, nb, n_nb, time_horizon, dt, lines)
            _solve(pref[0], pref[1], lines, n_nb, vc[i], res, proj)
            out[i, 0] = res[0]
            out[i, 1] = res[1]
    finally:
        free(nb)
        free(lines)
        free(proj)
        free(dist)
        free(order)
    return out_arr
