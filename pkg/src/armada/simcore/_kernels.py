"""Compiled inner loops for the articulated arm and free bodies.

Everything here works on plain float arrays so numba can compile it in
nopython mode.  Bodies are rows of one ``(n, NCOL)`` array; see the column
constants below.  World frame: z up.
"""
import math

import numpy as np
from numba import njit

# body table columns
KIND, DYN, POS, QUAT, VEL, OMG, MASS, MU, HALF, RAD, INERTIA = 0, 1, 2, 5, 9, 12, 15, 16, 17, 20, 21
NCOL = 30
BOX, SPHERE = 0, 1

# contact parameter slots
P_KN, P_ZETA, P_VREG, P_EE_RADIUS, P_EE_MU, P_EE_MASS, P_CONTACTS, P_ARM_COLLIDES, P_LIMITS = range(9)
NPARAM = 9

# diagnostics slots
D_FRICTION_EXCESS, D_MAX_PENETRATION, D_NONFINITE, D_SINGULAR = range(4)
NDIAG = 4

@njit(cache=True, inline="always")
def _v(a):
    return (a[0], a[1], a[2])


@njit(cache=True, inline="always")
def _add(a, b):
    return (a[0] + b[0], a[1] + b[1], a[2] + b[2])


@njit(cache=True, inline="always")
def _sub(a, b):
    return (a[0] - b[0], a[1] - b[1], a[2] - b[2])


@njit(cache=True, inline="always")
def _scale(a, s):
    return (a[0] * s, a[1] * s, a[2] * s)


@njit(cache=True, inline="always")
def _cross(a, b):
    return (a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0])


@njit(cache=True, inline="always")
def _dot(a, b):
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


@njit(cache=True, inline="always")
def _mv(m, v):
    return (
        m[0, 0] * v[0] + m[0, 1] * v[1] + m[0, 2] * v[2],
        m[1, 0] * v[0] + m[1, 1] * v[1] + m[1, 2] * v[2],
        m[2, 0] * v[0] + m[2, 1] * v[1] + m[2, 2] * v[2],
    )


@njit(cache=True, inline="always")
def _mtv(m, v):
    return (
        m[0, 0] * v[0] + m[1, 0] * v[1] + m[2, 0] * v[2],
        m[0, 1] * v[0] + m[1, 1] * v[1] + m[2, 1] * v[2],
        m[0, 2] * v[0] + m[1, 2] * v[1] + m[2, 2] * v[2],
    )


@njit(cache=True)
def _mm_into(a, b, out):
    for i in range(3):
        a0, a1, a2 = a[i, 0], a[i, 1], a[i, 2]
        for j in range(3):
            out[i, j] = a0 * b[0, j] + a1 * b[1, j] + a2 * b[2, j]


@njit(cache=True)
def _rotate_inertia_into(r, inertia, tmp, out):
    # out = R I R^T
    _mm_into(r, inertia, tmp)
    for i in range(3):
        for j in range(3):
            out[i, j] = tmp[i, 0] * r[j, 0] + tmp[i, 1] * r[j, 1] + tmp[i, 2] * r[j, 2]


@njit(cache=True)
def _rodrigues_into(axis, angle, r):
    x, y, z = axis[0], axis[1], axis[2]
    c = math.cos(angle)
    s = math.sin(angle)
    v = 1.0 - c
    r[0, 0] = c + x * x * v
    r[0, 1] = x * y * v - z * s
    r[0, 2] = x * z * v + y * s
    r[1, 0] = y * x * v + z * s
    r[1, 1] = c + y * y * v
    r[1, 2] = y * z * v - x * s
    r[2, 0] = z * x * v - y * s
    r[2, 1] = z * y * v + x * s
    r[2, 2] = c + z * z * v


@njit(cache=True)
def quat_to_matrix_into(qt, r):
    w, x, y, z = qt[0], qt[1], qt[2], qt[3]
    r[0, 0] = 1 - 2 * (y * y + z * z)
    r[0, 1] = 2 * (x * y - w * z)
    r[0, 2] = 2 * (x * z + w * y)
    r[1, 0] = 2 * (x * y + w * z)
    r[1, 1] = 1 - 2 * (x * x + z * z)
    r[1, 2] = 2 * (y * z - w * x)
    r[2, 0] = 2 * (x * z - w * y)
    r[2, 1] = 2 * (y * z + w * x)
    r[2, 2] = 1 - 2 * (x * x + y * y)


@njit(cache=True)
def quat_to_matrix(qt):
    r = np.empty((3, 3))
    quat_to_matrix_into(qt, r)
    return r


@njit(cache=True)
def chain_frames(base_r, base_p, r0, p0, axis, q, rots, origins, axes):
    n = q.shape[0]
    tmp = np.empty((3, 3))
    rj = np.empty((3, 3))
    prev = base_r
    p = _v(base_p)
    for i in range(n):
        p = _add(p, _mv(prev, p0[i]))
        _mm_into(prev, r0[i], tmp)
        _rodrigues_into(axis[i], q[i], rj)
        _mm_into(tmp, rj, rots[i])
        prev = rots[i]
        o = origins[i]
        o[0], o[1], o[2] = p
        z = _mv(rots[i], axis[i])
        a = axes[i]
        a[0], a[1], a[2] = z


@njit(cache=True)
def rnea(rots, origins, axes, mass, com, inertia, ee_off, armature, qd, qdd, grav, f_ext, m_ext):
    """Joint torques for (qd, qdd) under gravity ``grav`` and an external
    wrench (f_ext, m_ext) acting on the last link at the EE point."""
    n = qd.shape[0]
    force = np.empty((n, 3))
    moment = np.empty((n, 3))
    rc = np.empty((n, 3))
    tmp = np.empty((3, 3))
    iw = np.empty((3, 3))
    w_prev = (0.0, 0.0, 0.0)
    al_prev = (0.0, 0.0, 0.0)
    a_prev = (-grav[0], -grav[1], -grav[2])
    o_prev = _v(origins[0])
    for i in range(n):
        o_i = _v(origins[i])
        z = _v(axes[i])
        r = _sub(o_i, o_prev)
        a_i = _add(a_prev, _add(_cross(al_prev, r), _cross(w_prev, _cross(w_prev, r))))
        zq = _scale(z, qd[i])
        w_i = _add(w_prev, zq)
        al_i = _add(al_prev, _add(_scale(z, qdd[i]), _cross(w_prev, zq)))
        rc_i = _mv(rots[i], com[i])
        a_c = _add(a_i, _add(_cross(al_i, rc_i), _cross(w_i, _cross(w_i, rc_i))))
        _rotate_inertia_into(rots[i], inertia[i], tmp, iw)
        f_i = _scale(a_c, mass[i])
        n_i = _add(_mv(iw, al_i), _cross(w_i, _mv(iw, w_i)))
        for k in range(3):
            force[i, k] = f_i[k]
            moment[i, k] = n_i[k]
            rc[i, k] = rc_i[k]
        w_prev = w_i
        al_prev = al_i
        a_prev = a_i
        o_prev = o_i
    tau = np.zeros(n)
    f_next = (-f_ext[0], -f_ext[1], -f_ext[2])
    n_next = (-m_ext[0], -m_ext[1], -m_ext[2])
    p_next = _add(_v(origins[n - 1]), _mv(rots[n - 1], ee_off))
    for i in range(n - 1, -1, -1):
        o_i = _v(origins[i])
        f_own = _v(force[i])
        f_i = _add(f_own, f_next)
        n_i = _add(_add(_v(moment[i]), _cross(_v(rc[i]), f_own)),
                   _add(n_next, _cross(_sub(p_next, o_i), f_next)))
        tau[i] = _dot(_v(axes[i]), n_i)
        f_next = f_i
        n_next = n_i
        p_next = o_i
    for i in range(n):
        s = 0.0
        for j in range(n):
            s += armature[i, j] * qdd[j]
        tau[i] += s
    return tau


@njit(cache=True)
def crba(rots, origins, axes, mass, com, inertia, armature):
    """Joint-space mass matrix from composite inertias about the world origin."""
    n = mass.shape[0]
    m_mat = np.empty((n, n))
    tmp = np.empty((3, 3))
    iw = np.empty((3, 3))
    i_o = np.zeros((3, 3))
    m_c = 0.0
    h = (0.0, 0.0, 0.0)
    for i in range(n - 1, -1, -1):
        c = _add(_v(origins[i]), _mv(rots[i], com[i]))
        _rotate_inertia_into(rots[i], inertia[i], tmp, iw)
        m = mass[i]
        cc = _dot(c, c)
        for a in range(3):
            for b in range(3):
                i_o[a, b] += iw[a, b] - m * c[a] * c[b]
            i_o[a, a] += m * cc
        m_c += m
        h = _add(h, _scale(c, m))
        z = _v(axes[i])
        v_o = _cross(_v(origins[i]), z)
        lin = _add(_scale(v_o, m_c), _cross(z, h))
        ang = _add(_mv(i_o, z), _cross(h, v_o))
        for j in range(i + 1):
            val = _dot(_v(axes[j]), _sub(ang, _cross(_v(origins[j]), lin)))
            m_mat[j, i] = val
            m_mat[i, j] = val
    for i in range(n):
        for j in range(n):
            m_mat[i, j] += armature[i, j]
    return m_mat


@njit(cache=True)
def cholesky_solve(a, b):
    """Solve a x = b for SPD ``a``; returns (x, failed_index) with -1 on success."""
    n = a.shape[0]
    lo = np.zeros((n, n))
    x = np.zeros(n)
    for j in range(n):
        s = a[j, j]
        for k in range(j):
            s -= lo[j, k] * lo[j, k]
        if not s > 1e-14:
            return x, j
        lo[j, j] = math.sqrt(s)
        for i in range(j + 1, n):
            s = a[i, j]
            for k in range(j):
                s -= lo[i, k] * lo[j, k]
            lo[i, j] = s / lo[j, j]
    for i in range(n):
        s = b[i]
        for k in range(i):
            s -= lo[i, k] * x[k]
        x[i] = s / lo[i, i]
    for i in range(n - 1, -1, -1):
        s = x[i]
        for k in range(i + 1, n):
            s -= lo[k, i] * x[k]
        x[i] = s / lo[i, i]
    return x, -1


@njit(cache=True)
def forward_dynamics(rots, origins, axes, mass, com, inertia, ee_off, armature, qd, tau, grav):
    n = qd.shape[0]
    zero3 = np.zeros(3)
    bias = rnea(rots, origins, axes, mass, com, inertia, ee_off, armature, qd, np.zeros(n), grav, zero3, zero3)
    m_mat = crba(rots, origins, axes, mass, com, inertia, armature)
    return cholesky_solve(m_mat, tau - bias)


# -- contacts ----------------------------------------------------------------


@njit(cache=True)
def _body_point_velocity(bodies, b, p):
    if b < 0 or bodies[b, DYN] == 0.0:
        return (0.0, 0.0, 0.0)
    v = (bodies[b, VEL], bodies[b, VEL + 1], bodies[b, VEL + 2])
    w = (bodies[b, OMG], bodies[b, OMG + 1], bodies[b, OMG + 2])
    x = (bodies[b, POS], bodies[b, POS + 1], bodies[b, POS + 2])
    return _add(v, _cross(w, _sub(p, x)))


@njit(cache=True)
def _arm_point_velocity(axes, origins, qd, p):
    v = (0.0, 0.0, 0.0)
    for i in range(qd.shape[0]):
        v = _add(v, _scale(_cross(_v(axes[i]), _sub(p, _v(origins[i]))), qd[i]))
    return v


@njit(cache=True)
def _apply(bodies, forces, torques, b, p, f):
    if b >= 0 and bodies[b, DYN] != 0.0:
        x = (bodies[b, POS], bodies[b, POS + 1], bodies[b, POS + 2])
        t = _cross(_sub(p, x), f)
        for k in range(3):
            forces[b, k] += f[k]
            torques[b, k] += t[k]


@njit(cache=True)
def _contact(bodies, forces, torques, tau_arm, axes, origins, qd, a, b, a_is_arm,
             p, nrm, depth, mu, m_eff, params, h, diag):
    """Penalty contact; ``nrm`` points from b into a, force on a is +f."""
    if depth > diag[D_MAX_PENETRATION]:
        diag[D_MAX_PENETRATION] = depth
    if a_is_arm:
        va = _arm_point_velocity(axes, origins, qd, p)
    else:
        va = _body_point_velocity(bodies, a, p)
    v_rel = _sub(va, _body_point_velocity(bodies, b, p))
    vn = _dot(v_rel, nrm)
    kn = params[P_KN]
    c = 2.0 * params[P_ZETA] * math.sqrt(kn * m_eff)
    c = min(c, 0.25 * m_eff / h)
    fn = kn * depth - c * vn
    if fn <= 0.0:
        return
    vt = _sub(v_rel, _scale(nrm, vn))
    speed = math.sqrt(_dot(vt, vt))
    v_reg = max(params[P_VREG], mu * fn * h / m_eff)
    ft = _scale(vt, -(mu * fn / max(speed, v_reg)))
    excess = math.sqrt(_dot(ft, ft)) - mu * fn
    if excess > diag[D_FRICTION_EXCESS]:
        diag[D_FRICTION_EXCESS] = excess
    f = _add(_scale(nrm, fn), ft)
    if a_is_arm:
        for i in range(qd.shape[0]):
            tau_arm[i] += _dot(_cross(_v(axes[i]), _sub(p, _v(origins[i]))), f)
    else:
        _apply(bodies, forces, torques, a, p, f)
    _apply(bodies, forces, torques, b, p, _scale(f, -1.0))


@njit(cache=True)
def _sphere_box(center, radius, bpos, brot, half):
    """(hit, surface point, normal from box to sphere, depth)."""
    loc = _mtv(brot, _sub(center, bpos))
    cl0 = min(max(loc[0], -half[0]), half[0])
    cl1 = min(max(loc[1], -half[1]), half[1])
    cl2 = min(max(loc[2], -half[2]), half[2])
    d = (loc[0] - cl0, loc[1] - cl1, loc[2] - cl2)
    dist = math.sqrt(_dot(d, d))
    zero = (0.0, 0.0, 0.0)
    if dist >= radius:
        return False, zero, zero, 0.0
    if dist > 1e-12:
        n_loc = _scale(d, 1.0 / dist)
        depth = radius - dist
        closest = (cl0, cl1, cl2)
    else:
        k_min = 0
        best = 1e300
        for k in range(3):
            gap = half[k] - abs(loc[k])
            if gap < best:
                best = gap
                k_min = k
        sgn = 1.0 if loc[k_min] >= 0 else -1.0
        if k_min == 0:
            n_loc = (sgn, 0.0, 0.0)
            closest = (sgn * half[0], cl1, cl2)
        elif k_min == 1:
            n_loc = (0.0, sgn, 0.0)
            closest = (cl0, sgn * half[1], cl2)
        else:
            n_loc = (0.0, 0.0, sgn)
            closest = (cl0, cl1, sgn * half[2])
        depth = radius + best
    return True, _add(bpos, _mv(brot, closest)), _mv(brot, n_loc), depth


@njit(cache=True)
def _clip_segment(e0, e1, half):
    t0 = 0.0
    t1 = 1.0
    for k in range(3):
        d = e1[k] - e0[k]
        if abs(d) < 1e-15:
            if abs(e0[k]) >= half[k]:
                return False, 0.0, 0.0
        else:
            ta = (-half[k] - e0[k]) / d
            tb = (half[k] - e0[k]) / d
            if ta > tb:
                ta, tb = tb, ta
            t0 = max(t0, ta)
            t1 = min(t1, tb)
            if t0 >= t1:
                return False, 0.0, 0.0
    return True, t0, t1


@njit(cache=True)
def _unit(k, sgn):
    if k == 0:
        return (sgn, 0.0, 0.0)
    if k == 1:
        return (0.0, sgn, 0.0)
    return (0.0, 0.0, sgn)


@njit(cache=True)
def _box_static_box(bodies, forces, torques, tau_arm, axes, origins, qd, d, s, rots, params, h, diag):
    dpos = (bodies[d, POS], bodies[d, POS + 1], bodies[d, POS + 2])
    spos = (bodies[s, POS], bodies[s, POS + 1], bodies[s, POS + 2])
    dhalf = (bodies[d, HALF], bodies[d, HALF + 1], bodies[d, HALF + 2])
    shalf = (bodies[s, HALF], bodies[s, HALF + 1], bodies[s, HALF + 2])
    drot = rots[d]
    srot = rots[s]
    mu = math.sqrt(bodies[d, MU] * bodies[s, MU])
    m_eff = bodies[d, MASS]
    # quick reject on bounding spheres
    gap = _sub(dpos, spos)
    reach = math.sqrt(_dot(dhalf, dhalf)) + math.sqrt(_dot(shalf, shalf))
    if _dot(gap, gap) > reach * reach:
        return
    # corners of the dynamic box inside the static box
    for sx in (-1.0, 1.0):
        for sy in (-1.0, 1.0):
            for sz in (-1.0, 1.0):
                p = _add(dpos, _mv(drot, (sx * dhalf[0], sy * dhalf[1], sz * dhalf[2])))
                loc = _mtv(srot, _sub(p, spos))
                inside = True
                k_min = 0
                best = 1e300
                for k in range(3):
                    g = shalf[k] - abs(loc[k])
                    if g <= 0.0:
                        inside = False
                        break
                    if g < best:
                        best = g
                        k_min = k
                if not inside:
                    continue
                nrm = _mv(srot, _unit(k_min, 1.0 if loc[k_min] >= 0 else -1.0))
                _contact(bodies, forces, torques, tau_arm, axes, origins, qd, d, s, False,
                         p, nrm, best, mu, m_eff, params, h, diag)
    # edges of the static box passing through the dynamic box
    for ax in range(3):
        for sb in (-1.0, 1.0):
            for sc in (-1.0, 1.0):
                if ax == 0:
                    e0 = (-shalf[0], sb * shalf[1], sc * shalf[2])
                    e1 = (shalf[0], sb * shalf[1], sc * shalf[2])
                elif ax == 1:
                    e0 = (sb * shalf[0], -shalf[1], sc * shalf[2])
                    e1 = (sb * shalf[0], shalf[1], sc * shalf[2])
                else:
                    e0 = (sb * shalf[0], sc * shalf[1], -shalf[2])
                    e1 = (sb * shalf[0], sc * shalf[1], shalf[2])
                l0 = _mtv(drot, _sub(_add(spos, _mv(srot, e0)), dpos))
                l1 = _mtv(drot, _sub(_add(spos, _mv(srot, e1)), dpos))
                hit, t0, t1 = _clip_segment(l0, l1, dhalf)
                if not hit:
                    continue
                mid = _add(l0, _scale(_sub(l1, l0), 0.5 * (t0 + t1)))
                k_min = 0
                best = 1e300
                for k in range(3):
                    g = dhalf[k] - abs(mid[k])
                    if g < best:
                        best = g
                        k_min = k
                nrm = _mv(drot, _unit(k_min, -1.0 if mid[k_min] >= 0 else 1.0))
                _contact(bodies, forces, torques, tau_arm, axes, origins, qd, d, s, False,
                         _add(dpos, _mv(drot, mid)), nrm, best, mu, m_eff, params, h, diag)


@njit(cache=True)
def _reduced(m_a, bodies, b):
    if bodies[b, DYN] != 0.0:
        return m_a * bodies[b, MASS] / (m_a + bodies[b, MASS])
    return m_a


@njit(cache=True)
def _collide(bodies, rots, forces, torques, tau_arm, axes, origins, qd, p_ee, params, h, diag):
    n = bodies.shape[0]
    for d in range(n):
        if bodies[d, DYN] == 0.0:
            continue
        d_pos = (bodies[d, POS], bodies[d, POS + 1], bodies[d, POS + 2])
        for s in range(n):
            if s == d:
                continue
            s_dyn = bodies[s, DYN] != 0.0
            if s_dyn and s < d:
                continue
            s_pos = (bodies[s, POS], bodies[s, POS + 1], bodies[s, POS + 2])
            mu = math.sqrt(bodies[d, MU] * bodies[s, MU])
            d_box = bodies[d, KIND] == BOX
            s_box = bodies[s, KIND] == BOX
            if d_box and s_box:
                if not s_dyn:
                    _box_static_box(bodies, forces, torques, tau_arm, axes, origins, qd,
                                    d, s, rots, params, h, diag)
            elif not d_box and s_box:
                hit, p, nrm, depth = _sphere_box(d_pos, bodies[d, RAD], s_pos, rots[s],
                                                 (bodies[s, HALF], bodies[s, HALF + 1], bodies[s, HALF + 2]))
                if hit:
                    _contact(bodies, forces, torques, tau_arm, axes, origins, qd, d, s, False,
                             p, nrm, depth, mu, _reduced(bodies[d, MASS], bodies, s), params, h, diag)
            elif d_box and not s_box:
                hit, p, nrm, depth = _sphere_box(s_pos, bodies[s, RAD], d_pos, rots[d],
                                                 (bodies[d, HALF], bodies[d, HALF + 1], bodies[d, HALF + 2]))
                if hit:
                    _contact(bodies, forces, torques, tau_arm, axes, origins, qd, s, d, False,
                             p, nrm, depth, mu, _reduced(bodies[d, MASS], bodies, s), params, h, diag)
            else:
                delta = _sub(d_pos, s_pos)
                dist = math.sqrt(_dot(delta, delta))
                depth = bodies[d, RAD] + bodies[s, RAD] - dist
                if depth > 0.0 and dist > 1e-12:
                    nrm = _scale(delta, 1.0 / dist)
                    p = _add(s_pos, _scale(nrm, bodies[s, RAD]))
                    _contact(bodies, forces, torques, tau_arm, axes, origins, qd, d, s, False,
                             p, nrm, depth, mu, _reduced(bodies[d, MASS], bodies, s), params, h, diag)
    if params[P_ARM_COLLIDES] == 0.0:
        return
    radius = params[P_EE_RADIUS]
    for b in range(n):
        mu = math.sqrt(params[P_EE_MU] * bodies[b, MU])
        m_eff = _reduced(params[P_EE_MASS], bodies, b)
        b_pos = (bodies[b, POS], bodies[b, POS + 1], bodies[b, POS + 2])
        if bodies[b, KIND] == BOX:
            hit, p, nrm, depth = _sphere_box(p_ee, radius, b_pos, rots[b],
                                             (bodies[b, HALF], bodies[b, HALF + 1], bodies[b, HALF + 2]))
            if hit:
                _contact(bodies, forces, torques, tau_arm, axes, origins, qd, -1, b, True,
                         p, nrm, depth, mu, m_eff, params, h, diag)
        else:
            delta = _sub(p_ee, b_pos)
            dist = math.sqrt(_dot(delta, delta))
            depth = radius + bodies[b, RAD] - dist
            if depth > 0.0 and dist > 1e-12:
                nrm = _scale(delta, 1.0 / dist)
                p = _add(b_pos, _scale(nrm, bodies[b, RAD]))
                _contact(bodies, forces, torques, tau_arm, axes, origins, qd, -1, b, True,
                         p, nrm, depth, mu, m_eff, params, h, diag)


# -- integration ---------------------------------------------------------------


@njit(cache=True)
def _integrate_quat(bodies, b, w, h):
    wn = math.sqrt(_dot(w, w))
    angle = wn * h
    if angle < 1e-15:
        return
    s = math.sin(0.5 * angle) / wn
    dw, dx, dy, dz = math.cos(0.5 * angle), w[0] * s, w[1] * s, w[2] * s
    w0, x0, y0, z0 = bodies[b, QUAT], bodies[b, QUAT + 1], bodies[b, QUAT + 2], bodies[b, QUAT + 3]
    nw = dw * w0 - dx * x0 - dy * y0 - dz * z0
    nx = dw * x0 + dx * w0 + dy * z0 - dz * y0
    ny = dw * y0 - dx * z0 + dy * w0 + dz * x0
    nz = dw * z0 + dx * y0 - dy * x0 + dz * w0
    norm = math.sqrt(nw * nw + nx * nx + ny * ny + nz * nz)
    bodies[b, QUAT] = nw / norm
    bodies[b, QUAT + 1] = nx / norm
    bodies[b, QUAT + 2] = ny / norm
    bodies[b, QUAT + 3] = nz / norm


@njit(cache=True)
def _solve3(a, b):
    det = (a[0, 0] * (a[1, 1] * a[2, 2] - a[1, 2] * a[2, 1])
           - a[0, 1] * (a[1, 0] * a[2, 2] - a[1, 2] * a[2, 0])
           + a[0, 2] * (a[1, 0] * a[2, 1] - a[1, 1] * a[2, 0]))
    if abs(det) < 1e-300:
        return (0.0, 0.0, 0.0)
    c0 = (a[1, 1] * a[2, 2] - a[1, 2] * a[2, 1], a[0, 2] * a[2, 1] - a[0, 1] * a[2, 2], a[0, 1] * a[1, 2] - a[0, 2] * a[1, 1])
    c1 = (a[1, 2] * a[2, 0] - a[1, 0] * a[2, 2], a[0, 0] * a[2, 2] - a[0, 2] * a[2, 0], a[0, 2] * a[1, 0] - a[0, 0] * a[1, 2])
    c2 = (a[1, 0] * a[2, 1] - a[1, 1] * a[2, 0], a[0, 1] * a[2, 0] - a[0, 0] * a[2, 1], a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0])
    return (_dot(c0, b) / det, _dot(c1, b) / det, _dot(c2, b) / det)


@njit(cache=True)
def advance(h, n_iter, base_r, base_p, r0, p0, axis, mass, com, inertia, ee_off, armature,
            lower, upper, q, qd, q_des, kp, kd, tau_lim, tau_ff, arm_active,
            bodies, ext, grav, params, diag):
    """Run ``n_iter`` semi-implicit Euler iterations of length ``h`` in place.

    Arm torque each iteration: clip(kp*(q_des-q) - kd*qd, +-tau_lim) + tau_ff
    plus contact torques.  ``ext`` rows hold (force, body-frame point) pairs.
    """
    nj = q.shape[0]
    nb = bodies.shape[0]
    rots_arm = np.empty((nj, 3, 3))
    origins = np.empty((nj, 3))
    axes = np.empty((nj, 3))
    body_rots = np.empty((nb, 3, 3))
    forces = np.empty((nb, 3))
    torques = np.empty((nb, 3))
    tau_arm = np.empty(nj)
    zero_qdd = np.zeros(nj)
    zero3 = np.zeros(3)
    tmp = np.empty((3, 3))
    i_world = np.empty((3, 3))
    g = _v(grav)
    for _ in range(n_iter):
        chain_frames(base_r, base_p, r0, p0, axis, q, rots_arm, origins, axes)
        p_ee = _add(_v(origins[nj - 1]), _mv(rots_arm[nj - 1], ee_off))
        tau_arm[:] = 0.0
        torques[:] = 0.0
        for b in range(nb):
            quat_to_matrix_into(bodies[b, QUAT:QUAT + 4], body_rots[b])
            fg = _scale(g, bodies[b, MASS]) if bodies[b, DYN] != 0.0 else (0.0, 0.0, 0.0)
            forces[b, 0], forces[b, 1], forces[b, 2] = fg
            if bodies[b, DYN] != 0.0 and (ext[b, 0] != 0.0 or ext[b, 1] != 0.0 or ext[b, 2] != 0.0):
                x = (bodies[b, POS], bodies[b, POS + 1], bodies[b, POS + 2])
                p = _add(x, _mv(body_rots[b], (ext[b, 3], ext[b, 4], ext[b, 5])))
                _apply(bodies, forces, torques, b, p, (ext[b, 0], ext[b, 1], ext[b, 2]))
        if params[P_CONTACTS] != 0.0:
            _collide(bodies, body_rots, forces, torques, tau_arm, axes, origins, qd, p_ee, params, h, diag)
        if arm_active:
            for i in range(nj):
                t = kp[i] * (q_des[i] - q[i]) - kd[i] * qd[i]
                t = min(max(t, -tau_lim[i]), tau_lim[i])
                tau_arm[i] += t + tau_ff[i]
            bias = rnea(rots_arm, origins, axes, mass, com, inertia, ee_off, armature, qd,
                        zero_qdd, grav, zero3, zero3)
            m_mat = crba(rots_arm, origins, axes, mass, com, inertia, armature)
            for i in range(nj):
                tau_arm[i] -= bias[i]
            qdd, failed = cholesky_solve(m_mat, tau_arm)
            if failed >= 0:
                diag[D_SINGULAR] = failed + 1.0
                return
            for i in range(nj):
                qd[i] += h * qdd[i]
                q[i] += h * qd[i]
                if params[P_LIMITS] != 0.0:
                    if q[i] < lower[i]:
                        q[i] = lower[i]
                        if qd[i] < 0.0:
                            qd[i] = 0.0
                    elif q[i] > upper[i]:
                        q[i] = upper[i]
                        if qd[i] > 0.0:
                            qd[i] = 0.0
        for b in range(nb):
            if bodies[b, DYN] == 0.0:
                continue
            m = bodies[b, MASS]
            for k in range(3):
                bodies[b, VEL + k] += h * forces[b, k] / m
            w = (bodies[b, OMG], bodies[b, OMG + 1], bodies[b, OMG + 2])
            _rotate_inertia_into(body_rots[b], bodies[b, INERTIA:INERTIA + 9].reshape((3, 3)), tmp, i_world)
            rhs = _sub(_v(torques[b]), _cross(w, _mv(i_world, w)))
            dw = _solve3(i_world, rhs)
            w = _add(w, _scale(dw, h))
            for k in range(3):
                bodies[b, OMG + k] = w[k]
                bodies[b, POS + k] += h * bodies[b, VEL + k]
            _integrate_quat(bodies, b, w, h)
        for i in range(nj):
            if not (math.isfinite(q[i]) and math.isfinite(qd[i])):
                diag[D_NONFINITE] = 1.0
                return
        for b in range(nb):
            for k in range(POS, OMG + 3):
                if not math.isfinite(bodies[b, k]):
                    diag[D_NONFINITE] = 1.0
                    return
