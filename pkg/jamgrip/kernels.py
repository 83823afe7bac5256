"""
Compiled inner loops for the contact simulation.

Everything here works on plain numpy arrays so numba can compile it.
Loops are serial and always visit bodies in the same order, so a run is
bit-for-bit reproducible. Units: mm, s, g, N.
"""

import numpy as np
from numba import njit

# Layout of the packed parameter vector passed to run_steps.
K_N = 0
ZETA = 1
MU = 2
K_T = 3
GRAVITY = 4
DT = 5
DRAG = 6
FLOOR_ON = 7
FLOOR_Y = 8
OBJ_X = 9
OBJ_Y = 10
OBJ_R = 11
PROBE_X = 12
PROBE_R = 13
K_S = 14
K_B = 15
ZETA_M = 16
THICK = 17
CELL = 18
XMIN = 19
XMAX = 20
YMIN = 21
YMAX = 22
N_PARAMS = 23

# Tangential history slots per grain.
MAX_CONTACTS = 12

# Force [N] = mass [g] * acceleration [mm/s^2] * MASS_ACCEL
MASS_ACCEL = 1e-6


@njit(cache=True)
def contact_law(overlap, vrx, vry, nx, ny, m_eff, k_n, zeta, mu, k_t, sx, sy, dt):
    """
    Linear spring-dashpot normal force with a Coulomb-capped tangential
    spring. The normal (nx, ny) points from B to A and (vrx, vry) is
    v_A - v_B. Returns (fx, fy, slip_x, slip_y, f_n) for body A.
    """
    c_n = 2.0 * zeta * np.sqrt(k_n * m_eff) * 1e-3
    vn = vrx * nx + vry * ny
    fn = k_n * overlap - c_n * vn
    if fn < 0.0:
        fn = 0.0
    # rotate the stored slip onto the current tangent line
    sn = sx * nx + sy * ny
    sx = sx - sn * nx
    sy = sy - sn * ny
    sx += (vrx - vn * nx) * dt
    sy += (vry - vn * ny) * dt
    ftx = -k_t * sx
    fty = -k_t * sy
    ft = np.sqrt(ftx * ftx + fty * fty)
    cap = mu * fn
    if ft > cap:
        if ft > 0.0:
            scale = cap / ft
            ftx *= scale
            fty *= scale
        sx = -ftx / k_t
        sy = -fty / k_t
    return fn * nx + ftx, fn * ny + fty, sx, sy, fn


@njit(cache=True)
def _harmonic(a, b):
    return a * b / (a + b)


@njit(cache=True)
def _grid_shape(prm):
    cell = prm[CELL]
    nx = max(1, int(np.ceil((prm[XMAX] - prm[XMIN]) / cell)))
    ny = max(1, int(np.ceil((prm[YMAX] - prm[YMIN]) / cell)))
    return nx, ny


@njit(cache=True)
def _cell_of(x, y, prm, nx, ny):
    cell = prm[CELL]
    cx = int(np.floor((x - prm[XMIN]) / cell))
    cy = int(np.floor((y - prm[YMIN]) / cell))
    if cx < 0:
        cx = 0
    elif cx >= nx:
        cx = nx - 1
    if cy < 0:
        cy = 0
    elif cy >= ny:
        cy = ny - 1
    return cx, cy


@njit(cache=True)
def build_grid(points, prm, nx, ny):
    """Counting sort of points into cells; items within a cell stay in index order."""
    count = points.shape[0]
    cells = nx * ny
    start = np.zeros(cells + 1, dtype=np.int64)
    owner = np.empty(count, dtype=np.int64)
    for i in range(count):
        cx, cy = _cell_of(points[i, 0], points[i, 1], prm, nx, ny)
        c = cy * nx + cx
        owner[i] = c
        start[c + 1] += 1
    for c in range(cells):
        start[c + 1] += start[c]
    fill = start[:-1].copy()
    items = np.empty(count, dtype=np.int64)
    for i in range(count):
        c = owner[i]
        items[fill[c]] = i
        fill[c] += 1
    return start, items


@njit(cache=True)
def overlapping_pairs(pos, rad, prm):
    """All grain pairs (i < j) whose disks overlap, found through the grid."""
    n = pos.shape[0]
    nx, ny = _grid_shape(prm)
    start, items = build_grid(pos, prm, nx, ny)
    found = np.empty((0, 2), dtype=np.int64)
    for sweep in range(2):
        total = 0
        for i in range(n):
            cx, cy = _cell_of(pos[i, 0], pos[i, 1], prm, nx, ny)
            for gy in range(max(0, cy - 1), min(ny, cy + 2)):
                for gx in range(max(0, cx - 1), min(nx, cx + 2)):
                    c = gy * nx + gx
                    for q in range(start[c], start[c + 1]):
                        j = items[q]
                        if j <= i:
                            continue
                        dx = pos[i, 0] - pos[j, 0]
                        dy = pos[i, 1] - pos[j, 1]
                        reach = rad[i] + rad[j]
                        if dx * dx + dy * dy < reach * reach:
                            if sweep == 1:
                                found[total, 0] = i
                                found[total, 1] = j
                            total += 1
        if sweep == 0:
            found = np.empty((total, 2), dtype=np.int64)
    return found


@njit(cache=True)
def membrane_elastic(npos, rest_len, rest_ang, k_s, k_b, out):
    """Stretch springs on every edge and an angular bending penalty per node."""
    m = npos.shape[0]
    for e in range(m):
        j = (e + 1) % m
        dx = npos[j, 0] - npos[e, 0]
        dy = npos[j, 1] - npos[e, 1]
        length = np.sqrt(dx * dx + dy * dy)
        if length == 0.0:
            continue
        f = k_s * (length - rest_len[e]) / length
        out[e, 0] += f * dx
        out[e, 1] += f * dy
        out[j, 0] -= f * dx
        out[j, 1] -= f * dy
    if k_b <= 0.0:
        return
    for b in range(m):
        a = (b - 1 + m) % m
        c = (b + 1) % m
        ux = npos[b, 0] - npos[a, 0]
        uy = npos[b, 1] - npos[a, 1]
        wx = npos[c, 0] - npos[b, 0]
        wy = npos[c, 1] - npos[b, 1]
        uu = ux * ux + uy * uy
        ww = wx * wx + wy * wy
        if uu == 0.0 or ww == 0.0:
            continue
        phi = np.arctan2(ux * wy - uy * wx, ux * wx + uy * wy)
        torque = -k_b * (phi - rest_ang[b])
        gax = -uy / uu
        gay = ux / uu
        gcx = -wy / ww
        gcy = wx / ww
        out[a, 0] += torque * gax
        out[a, 1] += torque * gay
        out[c, 0] += torque * gcx
        out[c, 1] += torque * gcy
        out[b, 0] -= torque * (gax + gcx)
        out[b, 1] -= torque * (gay + gcy)


@njit(cache=True)
def membrane_damping(npos, nvel, nmass, k_s, zeta_m, out):
    """Axial dashpot on every edge."""
    m = npos.shape[0]
    for e in range(m):
        j = (e + 1) % m
        dx = npos[j, 0] - npos[e, 0]
        dy = npos[j, 1] - npos[e, 1]
        length = np.sqrt(dx * dx + dy * dy)
        if length == 0.0:
            continue
        ux = dx / length
        uy = dy / length
        v_rel = (nvel[j, 0] - nvel[e, 0]) * ux + (nvel[j, 1] - nvel[e, 1]) * uy
        c = 2.0 * zeta_m * np.sqrt(k_s * _harmonic(nmass[e], nmass[j])) * 1e-3
        f = c * v_rel
        out[e, 0] += f * ux
        out[e, 1] += f * uy
        out[j, 0] -= f * ux
        out[j, 1] -= f * uy


@njit(cache=True)
def pressure_loads(npos, delta_p, out):
    """
    Inward load of a pressure difference (kPa) on a counter-clockwise ring,
    1 mm deep: each edge carries delta_p * length * 1e-3 N, half per node.
    """
    if delta_p == 0.0:
        return
    m = npos.shape[0]
    half = 0.5 * delta_p * 1e-3
    for e in range(m):
        j = (e + 1) % m
        dx = npos[j, 0] - npos[e, 0]
        dy = npos[j, 1] - npos[e, 1]
        fx = -dy * half
        fy = dx * half
        out[e, 0] += fx
        out[e, 1] += fy
        out[j, 0] += fx
        out[j, 1] += fy


@njit(cache=True)
def _old_slip(hist_ids, hist_slip, i, partner):
    for s in range(hist_ids.shape[1]):
        tag = hist_ids[i, s]
        if tag == partner:
            return hist_slip[i, s, 0], hist_slip[i, s, 1]
        if tag < 0:
            break
    return 0.0, 0.0


@njit(cache=True)
def _keep_slip(new_ids, new_slip, fill, i, partner, sx, sy):
    s = fill[i]
    if s < new_ids.shape[1]:
        new_ids[i, s] = partner
        new_slip[i, s, 0] = sx
        new_slip[i, s, 1] = sy
        fill[i] = s + 1


@njit(cache=True)
def _grain_wall(
    i, partner, overlap, nx, ny, wvx, wvy,
    vel, mass, force, hist_ids, hist_slip, new_ids, new_slip, fill, prm,
):
    sx, sy = _old_slip(hist_ids, hist_slip, i, partner)
    fx, fy, sx, sy, _ = contact_law(
        overlap, vel[i, 0] - wvx, vel[i, 1] - wvy, nx, ny, mass[i],
        prm[K_N], prm[ZETA], prm[MU], prm[K_T], sx, sy, prm[DT],
    )
    force[i, 0] += fx
    force[i, 1] += fy
    _keep_slip(new_ids, new_slip, fill, i, partner, sx, sy)
    return fy


@njit(cache=True)
def _node_wall(a, w, overlap, nx, ny, wvx, wvy, nvel, nmass, nforce, node_slip, prm):
    fx, fy, sx, sy, _ = contact_law(
        overlap, nvel[a, 0] - wvx, nvel[a, 1] - wvy, nx, ny, nmass[a],
        prm[K_N], prm[ZETA], prm[MU], prm[K_T],
        node_slip[a, w, 0], node_slip[a, w, 1], prm[DT],
    )
    nforce[a, 0] += fx
    nforce[a, 1] += fy
    node_slip[a, w, 0] = sx
    node_slip[a, w, 1] = sy
    return fy


@njit(cache=True)
def run_steps(
    pos, vel, rad, mass, hist_ids, hist_slip,
    npos, nvel, nmass, rest_len, rest_ang, pinned, pin_off, node_slip,
    prm, mount_y, mount_vy, delta_p, probe_y, probe_vy,
    load_out, probe_out,
):
    """
    Advance the coupled grain/membrane system by len(mount_y) steps.

    Per step k the pinned nodes are driven to mount_y[k], the pressure
    difference is delta_p[k] and the probe centre is probe_y[k]. Writes the
    net vertical force on the pinned nodes to load_out[k] and the vertical
    force the probe applies to the gripper to probe_out[k].

    Returns (bad_step, max_overlap_ratio); bad_step is -1 when every state
    stayed finite, otherwise the index of the first non-finite step.
    """
    n = pos.shape[0]
    m = npos.shape[0]
    steps = mount_y.shape[0]
    dt = prm[DT]
    g = prm[GRAVITY]
    drag = prm[DRAG]
    thick = prm[THICK]
    nx, ny = _grid_shape(prm)
    cell = prm[CELL]

    force = np.zeros((n, 2))
    nforce = np.zeros((m, 2))
    new_ids = np.empty_like(hist_ids)
    new_slip = np.zeros_like(hist_slip)
    fill = np.zeros(n, dtype=np.int64)
    mid = np.zeros((m, 2))
    id_floor = n + m
    id_object = n + m + 1
    id_probe = n + m + 2
    max_ratio = 0.0

    for k in range(steps):
        force[:, :] = 0.0
        nforce[:, :] = 0.0
        new_ids[:, :] = -1
        fill[:] = 0
        probe_load = 0.0

        for i in range(n):
            force[i, 1] += mass[i] * g * MASS_ACCEL
        for a in range(m):
            nforce[a, 1] += nmass[a] * g * MASS_ACCEL

        # grain-grain
        if n > 1:
            start, items = build_grid(pos, prm, nx, ny)
            for i in range(n):
                cx, cy = _cell_of(pos[i, 0], pos[i, 1], prm, nx, ny)
                for gy in range(max(0, cy - 1), min(ny, cy + 2)):
                    for gx in range(max(0, cx - 1), min(nx, cx + 2)):
                        c = gy * nx + gx
                        for q in range(start[c], start[c + 1]):
                            j = items[q]
                            if j <= i:
                                continue
                            dx = pos[i, 0] - pos[j, 0]
                            dy = pos[i, 1] - pos[j, 1]
                            reach = rad[i] + rad[j]
                            d2 = dx * dx + dy * dy
                            if d2 >= reach * reach or d2 == 0.0:
                                continue
                            dist = np.sqrt(d2)
                            overlap = reach - dist
                            ratio = overlap / min(rad[i], rad[j])
                            if ratio > max_ratio:
                                max_ratio = ratio
                            sx, sy = _old_slip(hist_ids, hist_slip, i, j)
                            fx, fy, sx, sy, _ = contact_law(
                                overlap,
                                vel[i, 0] - vel[j, 0],
                                vel[i, 1] - vel[j, 1],
                                dx / dist, dy / dist,
                                _harmonic(mass[i], mass[j]),
                                prm[K_N], prm[ZETA], prm[MU], prm[K_T],
                                sx, sy, dt,
                            )
                            force[i, 0] += fx
                            force[i, 1] += fy
                            force[j, 0] -= fx
                            force[j, 1] -= fy
                            _keep_slip(new_ids, new_slip, fill, i, j, sx, sy)

        # grain-membrane edges
        if m > 2 and n > 0:
            half_max = 0.0
            rad_max = 0.0
            for e in range(m):
                j = (e + 1) % m
                mid[e, 0] = 0.5 * (npos[e, 0] + npos[j, 0])
                mid[e, 1] = 0.5 * (npos[e, 1] + npos[j, 1])
                dx = npos[j, 0] - npos[e, 0]
                dy = npos[j, 1] - npos[e, 1]
                half = 0.5 * np.sqrt(dx * dx + dy * dy)
                if half > half_max:
                    half_max = half
            for i in range(n):
                if rad[i] > rad_max:
                    rad_max = rad[i]
            span = int(np.ceil((half_max + rad_max + thick) / cell))
            estart, eitems = build_grid(mid, prm, nx, ny)
            for i in range(n):
                cx, cy = _cell_of(pos[i, 0], pos[i, 1], prm, nx, ny)
                reach = rad[i] + thick
                for gy in range(max(0, cy - span), min(ny, cy + span + 1)):
                    for gx in range(max(0, cx - span), min(nx, cx + span + 1)):
                        c = gy * nx + gx
                        for q in range(estart[c], estart[c + 1]):
                            e = eitems[q]
                            j = (e + 1) % m
                            ex = npos[j, 0] - npos[e, 0]
                            ey = npos[j, 1] - npos[e, 1]
                            ll = ex * ex + ey * ey
                            if ll == 0.0:
                                continue
                            s = ((pos[i, 0] - npos[e, 0]) * ex
                                 + (pos[i, 1] - npos[e, 1]) * ey) / ll
                            # the shared vertex belongs to the previous edge
                            if s <= 0.0:
                                continue
                            if s > 1.0:
                                s = 1.0
                            dx = pos[i, 0] - (npos[e, 0] + s * ex)
                            dy = pos[i, 1] - (npos[e, 1] + s * ey)
                            d2 = dx * dx + dy * dy
                            if d2 >= reach * reach or d2 == 0.0:
                                continue
                            dist = np.sqrt(d2)
                            if pinned[e] and pinned[j]:
                                m_eff = mass[i]
                            else:
                                m_eff = _harmonic(
                                    mass[i], 0.5 * (nmass[e] + nmass[j])
                                )
                            evx = (1.0 - s) * nvel[e, 0] + s * nvel[j, 0]
                            evy = (1.0 - s) * nvel[e, 1] + s * nvel[j, 1]
                            partner = n + e
                            sx, sy = _old_slip(hist_ids, hist_slip, i, partner)
                            fx, fy, sx, sy, _ = contact_law(
                                reach - dist,
                                vel[i, 0] - evx,
                                vel[i, 1] - evy,
                                dx / dist, dy / dist, m_eff,
                                prm[K_N], prm[ZETA], prm[MU], prm[K_T],
                                sx, sy, dt,
                            )
                            force[i, 0] += fx
                            force[i, 1] += fy
                            nforce[e, 0] -= (1.0 - s) * fx
                            nforce[e, 1] -= (1.0 - s) * fy
                            nforce[j, 0] -= s * fx
                            nforce[j, 1] -= s * fy
                            _keep_slip(
                                new_ids, new_slip, fill, i, partner, sx, sy
                            )

        # static and kinematic bodies
        py = probe_y[k]
        pvy = probe_vy[k]
        for i in range(n):
            if prm[FLOOR_ON] > 0.0:
                overlap = rad[i] - (pos[i, 1] - prm[FLOOR_Y])
                if overlap > 0.0:
                    _grain_wall(
                        i, id_floor, overlap, 0.0, 1.0, 0.0, 0.0, vel, mass,
                        force, hist_ids, hist_slip, new_ids, new_slip, fill,
                        prm,
                    )
            if prm[OBJ_R] > 0.0:
                dx = pos[i, 0] - prm[OBJ_X]
                dy = pos[i, 1] - prm[OBJ_Y]
                dist = np.sqrt(dx * dx + dy * dy)
                overlap = rad[i] + prm[OBJ_R] - dist
                if overlap > 0.0 and dist > 0.0:
                    _grain_wall(
                        i, id_object, overlap, dx / dist, dy / dist, 0.0,
                        0.0, vel, mass, force, hist_ids, hist_slip, new_ids,
                        new_slip, fill, prm,
                    )
            if prm[PROBE_R] > 0.0:
                dx = pos[i, 0] - prm[PROBE_X]
                dy = pos[i, 1] - py
                dist = np.sqrt(dx * dx + dy * dy)
                overlap = rad[i] + prm[PROBE_R] - dist
                if overlap > 0.0 and dist > 0.0:
                    probe_load += _grain_wall(
                        i, id_probe, overlap, dx / dist, dy / dist, 0.0, pvy,
                        vel, mass, force, hist_ids, hist_slip, new_ids,
                        new_slip, fill, prm,
                    )

        for a in range(m):
            touching = False
            if prm[FLOOR_ON] > 0.0:
                overlap = thick - (npos[a, 1] - prm[FLOOR_Y])
                if overlap > 0.0:
                    _node_wall(
                        a, 0, overlap, 0.0, 1.0, 0.0, 0.0, nvel, nmass,
                        nforce, node_slip, prm,
                    )
                    touching = True
            if not touching:
                node_slip[a, 0, 0] = 0.0
                node_slip[a, 0, 1] = 0.0
            touching = False
            if prm[OBJ_R] > 0.0:
                dx = npos[a, 0] - prm[OBJ_X]
                dy = npos[a, 1] - prm[OBJ_Y]
                dist = np.sqrt(dx * dx + dy * dy)
                overlap = thick + prm[OBJ_R] - dist
                if overlap > 0.0 and dist > 0.0:
                    _node_wall(
                        a, 1, overlap, dx / dist, dy / dist, 0.0, 0.0, nvel,
                        nmass, nforce, node_slip, prm,
                    )
                    touching = True
            if not touching:
                node_slip[a, 1, 0] = 0.0
                node_slip[a, 1, 1] = 0.0
            touching = False
            if prm[PROBE_R] > 0.0:
                dx = npos[a, 0] - prm[PROBE_X]
                dy = npos[a, 1] - py
                dist = np.sqrt(dx * dx + dy * dy)
                overlap = thick + prm[PROBE_R] - dist
                if overlap > 0.0 and dist > 0.0:
                    probe_load += _node_wall(
                        a, 2, overlap, dx / dist, dy / dist, 0.0, pvy, nvel,
                        nmass, nforce, node_slip, prm,
                    )
                    touching = True
            if not touching:
                node_slip[a, 2, 0] = 0.0
                node_slip[a, 2, 1] = 0.0

        if m > 2:
            membrane_elastic(
                npos, rest_len, rest_ang, prm[K_S], prm[K_B], nforce
            )
            membrane_damping(npos, nvel, nmass, prm[K_S], prm[ZETA_M], nforce)
            pressure_loads(npos, delta_p[k], nforce)

        if drag > 0.0:
            for i in range(n):
                force[i, 0] -= drag * mass[i] * vel[i, 0] * MASS_ACCEL
                force[i, 1] -= drag * mass[i] * vel[i, 1] * MASS_ACCEL
            for a in range(m):
                if not pinned[a]:
                    nforce[a, 0] -= drag * nmass[a] * nvel[a, 0] * MASS_ACCEL
                    nforce[a, 1] -= drag * nmass[a] * nvel[a, 1] * MASS_ACCEL

        load = 0.0
        for a in range(m):
            if pinned[a]:
                load += nforce[a, 1]
        load_out[k] = load
        probe_out[k] = probe_load

        # semi-implicit Euler
        for i in range(n):
            inv = dt / (mass[i] * MASS_ACCEL)
            vel[i, 0] += force[i, 0] * inv
            vel[i, 1] += force[i, 1] * inv
            pos[i, 0] += vel[i, 0] * dt
            pos[i, 1] += vel[i, 1] * dt
        for a in range(m):
            if pinned[a]:
                nvel[a, 0] = 0.0
                nvel[a, 1] = mount_vy[k]
                npos[a, 0] = pin_off[a, 0]
                npos[a, 1] = pin_off[a, 1] + mount_y[k]
            else:
                inv = dt / (nmass[a] * MASS_ACCEL)
                nvel[a, 0] += nforce[a, 0] * inv
                nvel[a, 1] += nforce[a, 1] * inv
                npos[a, 0] += nvel[a, 0] * dt
                npos[a, 1] += nvel[a, 1] * dt

        hist_ids[:, :] = new_ids
        hist_slip[:, :, :] = new_slip

        if not (
            np.all(np.isfinite(pos))
            and np.all(np.isfinite(vel))
            and np.all(np.isfinite(npos))
            and np.all(np.isfinite(nvel))
        ):
            return k, max_ratio

    return -1, max_ratio
