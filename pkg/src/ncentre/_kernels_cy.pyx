# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for the hot numerical loops.

One-to-one mirror of ``ncentre._kernels_py``; see that module for the
documented contract.  Keep the two implementations in lockstep.
"""

import numpy as np

from libc.math cimport (asin, copysign, cos, cosh, fabs, floor, log, log2,
                        sin, sinh, sqrt, INFINITY, M_PI)

BACKEND = "cython"

STATUS_TIME = 0
STATUS_ESCAPE = 1
STATUS_RADIUS = 2
STATUS_STEP_LIMIT = 3
STATUS_COLLISION = 4
STATUS_BUFFER_FULL = 5
STATUS_EVENT_FULL = 6
STATUS_ENERGY = 7

cdef double YOSHIDA_W1 = 1.0 / (2.0 - 2.0 ** (1.0 / 3.0))
cdef double YOSHIDA_W0 = 1.0 - 2.0 * YOSHIDA_W1


# ---------------------------------------------------------------------------
# Stumpff / G functions
# ---------------------------------------------------------------------------

cdef void _stumpff(double z, double* c) noexcept nogil:
    cdef double term4, term5, s, sc
    cdef int j
    if fabs(z) < 0.5:
        c[4] = 0.0
        c[5] = 0.0
        term4 = 1.0 / 24.0
        term5 = 1.0 / 120.0
        for j in range(12):
            c[4] += term4
            c[5] += term5
            term4 *= -z / ((5 + 2 * j) * (6 + 2 * j))
            term5 *= -z / ((6 + 2 * j) * (7 + 2 * j))
        c[3] = 1.0 / 6.0 - z * c[5]
        c[2] = 0.5 - z * c[4]
        c[1] = 1.0 - z * c[3]
        c[0] = 1.0 - z * c[2]
        return
    if z > 0.0:
        s = sqrt(z)
        c[0] = cos(s)
        c[1] = sin(s) / s
    else:
        s = sqrt(-z)
        sc = s if s < 600.0 else 600.0
        c[0] = cosh(sc)
        c[1] = sinh(sc) / s
    c[2] = (1.0 - c[0]) / z
    c[3] = (1.0 - c[1]) / z
    c[4] = (0.5 - c[2]) / z
    c[5] = (1.0 / 6.0 - c[3]) / z


cdef void _gfuncs(double beta, double x, double* g) noexcept nogil:
    cdef double c[6]
    cdef double x2 = x * x
    _stumpff(beta * x2, c)
    g[0] = c[0]
    g[1] = x * c[1]
    g[2] = x2 * c[2]
    g[3] = x2 * x * c[3]
    g[4] = x2 * x2 * c[4]
    g[5] = x2 * x2 * x * c[5]


def gfuncs(double beta, double x):
    cdef double g[6]
    _gfuncs(beta, x, g)
    return (g[0], g[1], g[2], g[3], g[4], g[5])


cdef double _kepler_anomaly(double mu, double r0, double eta0, double beta,
                            double dt) noexcept nogil:
    cdef double g[6]
    cdef double x, lo, hi, t_hi, t, err, r, step, x_new, sgn, cap, tmp, prev
    cdef int i
    if dt == 0.0:
        return 0.0
    x = dt / r0
    if beta < 0.0:
        cap = 100.0 / sqrt(-beta)
        if fabs(x) > cap:
            x = copysign(cap, dt)
    lo = 0.0
    hi = x
    sgn = 1.0 if dt > 0.0 else -1.0
    for i in range(200):
        _gfuncs(beta, hi, g)
        t_hi = r0 * g[1] + eta0 * g[2] + mu * g[3]
        if (t_hi - dt) * sgn >= 0.0:
            break
        lo = hi
        hi *= 2.0
    if dt < 0.0:
        tmp = lo
        lo = hi
        hi = tmp
    if x < (lo if lo < hi else hi):
        x = lo if lo < hi else hi
    if x > (hi if hi > lo else lo):
        x = hi if hi > lo else lo
    # Newton safeguarded by the bracket, iterated to floating-point fixed
    # point: near a collision the time residual is multiplied by the local
    # acceleration, so a loose anomaly tolerance would inject velocity noise.
    prev = INFINITY
    for i in range(128):
        _gfuncs(beta, x, g)
        t = r0 * g[1] + eta0 * g[2] + mu * g[3]
        err = t - dt
        if err > 0.0:
            hi = x
        else:
            lo = x
        r = r0 * g[0] + eta0 * g[1] + mu * g[2]
        if r > 0.0:
            x_new = x - err / r
        else:
            x_new = 0.5 * (lo + hi)
        if x_new < (lo if lo < hi else hi) or x_new > (hi if hi > lo else lo):
            x_new = 0.5 * (lo + hi)
        if x_new == x or x_new == prev:
            return x_new
        prev = x
        x = x_new
    return x


cdef int _drift(double mu, double* q, double* p, double dt) noexcept nogil:
    """In-place Kepler drift of the relative state (q, p)."""
    cdef double g[6]
    cdef double r0, eta0, v2, beta, x, r1, f, gg, fdot, gdot
    cdef double qx = q[0], qy = q[1], qz = q[2]
    cdef double px = p[0], py = p[1], pz = p[2]
    if dt == 0.0:
        return 0
    r0 = sqrt(qx * qx + qy * qy + qz * qz)
    if r0 == 0.0:
        return 1
    eta0 = qx * px + qy * py + qz * pz
    v2 = px * px + py * py + pz * pz
    beta = 2.0 * mu / r0 - v2
    x = _kepler_anomaly(mu, r0, eta0, beta, dt)
    _gfuncs(beta, x, g)
    r1 = r0 * g[0] + eta0 * g[1] + mu * g[2]
    if r1 <= 0.0:
        r1 = 1e-300
    f = 1.0 - (mu / r0) * g[2]
    gg = dt - mu * g[3]
    fdot = -mu * g[1] / (r1 * r0)
    gdot = 1.0 - (mu / r1) * g[2]
    q[0] = f * qx + gg * px
    q[1] = f * qy + gg * py
    q[2] = f * qz + gg * pz
    p[0] = fdot * qx + gdot * px
    p[1] = fdot * qy + gdot * py
    p[2] = fdot * qz + gdot * pz
    return 0


def kepler_drift(double mu, q, p, double dt):
    cdef double qq[3]
    cdef double pp[3]
    qq[0] = q[0]; qq[1] = q[1]; qq[2] = q[2]
    pp[0] = p[0]; pp[1] = p[1]; pp[2] = p[2]
    if _drift(mu, qq, pp, dt):
        raise ZeroDivisionError("kepler_drift called at the centre")
    return (np.array([qq[0], qq[1], qq[2]]), np.array([pp[0], pp[1], pp[2]]))


def kepler_drift_stm(double mu, q, p, double dt):
    """Drift plus exact 6x6 state transition matrix (see python mirror)."""
    cdef double g[6]
    q0 = np.asarray(q, dtype=float)
    p0 = np.asarray(p, dtype=float)
    cdef double r0 = float(np.linalg.norm(q0))
    if dt == 0.0:
        return q0.copy(), p0.copy(), np.eye(6)
    cdef double eta0 = float(q0 @ p0)
    cdef double v2 = float(p0 @ p0)
    cdef double beta = 2.0 * mu / r0 - v2
    cdef double x = _kepler_anomaly(mu, r0, eta0, beta, dt)
    _gfuncs(beta, x, g)
    cdef double g0 = g[0], g1 = g[1], g2 = g[2], g3 = g[3], g4 = g[4], g5 = g[5]
    cdef double r1 = r0 * g0 + eta0 * g1 + mu * g2
    if r1 <= 0.0:
        r1 = 1e-300
    cdef double f = 1.0 - (mu / r0) * g2
    cdef double gg = dt - mu * g3
    cdef double fdot = -mu * g1 / (r1 * r0)
    cdef double gdot = 1.0 - (mu / r1) * g2
    cdef double db_g0 = -0.5 * x * g1
    cdef double db_g1 = 0.5 * (g3 - x * g2)
    cdef double db_g2 = 0.5 * (2.0 * g4 - x * g3)
    cdef double db_g3 = 0.5 * (3.0 * g5 - x * g4)

    grad_r0 = np.concatenate([q0 / r0, np.zeros(3)])
    grad_eta = np.concatenate([p0, q0])
    grad_beta = np.concatenate([(-2.0 * mu / (r0 * r0)) * (q0 / r0), -2.0 * p0])

    cdef double dxi_dbeta = r0 * db_g1 + eta0 * db_g2 + mu * db_g3
    grad_x = -(g1 * grad_r0 + g2 * grad_eta + dxi_dbeta * grad_beta) / r1
    cdef double eta1 = eta0 * g0 + (mu - beta * r0) * g1
    grad_r1 = (g0 * grad_r0 + g1 * grad_eta
               + (r0 * db_g0 + eta0 * db_g1 + mu * db_g2) * grad_beta
               + eta1 * grad_x)
    grad_f = (mu * g2 / (r0 * r0)) * grad_r0 - (mu / r0) * (g1 * grad_x + db_g2 * grad_beta)
    grad_g = -mu * (g2 * grad_x + db_g3 * grad_beta)
    grad_fdot = -mu * ((g0 * grad_x + db_g1 * grad_beta) / (r1 * r0)
                       - (g1 / (r1 * r1 * r0)) * grad_r1
                       - (g1 / (r1 * r0 * r0)) * grad_r0)
    grad_gdot = -mu * ((g1 * grad_x + db_g2 * grad_beta) / r1
                       - (g2 / (r1 * r1)) * grad_r1)

    q1 = f * q0 + gg * p0
    p1 = fdot * q0 + gdot * p0
    jac = np.zeros((6, 6))
    eye = np.eye(3)
    jac[0:3, 0:3] = f * eye + np.outer(q0, grad_f[0:3]) + np.outer(p0, grad_g[0:3])
    jac[0:3, 3:6] = gg * eye + np.outer(q0, grad_f[3:6]) + np.outer(p0, grad_g[3:6])
    jac[3:6, 0:3] = fdot * eye + np.outer(q0, grad_fdot[0:3]) + np.outer(p0, grad_gdot[0:3])
    jac[3:6, 3:6] = gdot * eye + np.outer(q0, grad_fdot[3:6]) + np.outer(p0, grad_gdot[3:6])
    return q1, p1, jac


# ---------------------------------------------------------------------------
# Potential sums
# ---------------------------------------------------------------------------

cdef double _potential(double[:, ::1] centres, double[::1] strengths,
                       double qx, double qy, double qz) noexcept nogil:
    cdef double v = 0.0, dx, dy, dz
    cdef Py_ssize_t k, n = strengths.shape[0]
    for k in range(n):
        dx = qx - centres[k, 0]
        dy = qy - centres[k, 1]
        dz = qz - centres[k, 2]
        v -= strengths[k] / sqrt(dx * dx + dy * dy + dz * dz)
    return v


def potential(double[:, ::1] centres, double[::1] strengths,
              double qx, double qy, double qz):
    return _potential(centres, strengths, qx, qy, qz)


cdef void _grad_skip(double[:, ::1] centres, double[::1] strengths,
                     double qx, double qy, double qz, Py_ssize_t skip,
                     double* out) noexcept nogil:
    cdef double dx, dy, dz, r2, w
    cdef Py_ssize_t k, n = strengths.shape[0]
    out[0] = 0.0
    out[1] = 0.0
    out[2] = 0.0
    for k in range(n):
        if k == skip:
            continue
        dx = qx - centres[k, 0]
        dy = qy - centres[k, 1]
        dz = qz - centres[k, 2]
        r2 = dx * dx + dy * dy + dz * dz
        w = strengths[k] / (r2 * sqrt(r2))
        out[0] += w * dx
        out[1] += w * dy
        out[2] += w * dz


def grad_potential_skip(double[:, ::1] centres, double[::1] strengths,
                        double qx, double qy, double qz, Py_ssize_t skip):
    cdef double g[3]
    _grad_skip(centres, strengths, qx, qy, qz, skip, g)
    return (g[0], g[1], g[2])


def hess_potential_skip(double[:, ::1] centres, double[::1] strengths, q,
                        Py_ssize_t skip):
    cdef double dx, dy, dz, r2, r5, w, w3
    cdef double qx = q[0], qy = q[1], qz = q[2]
    cdef Py_ssize_t k, n = strengths.shape[0]
    h = np.zeros((3, 3))
    cdef double[:, ::1] hv = h
    for k in range(n):
        if k == skip:
            continue
        dx = qx - centres[k, 0]
        dy = qy - centres[k, 1]
        dz = qz - centres[k, 2]
        r2 = dx * dx + dy * dy + dz * dz
        r5 = r2 * r2 * sqrt(r2)
        w = strengths[k] / r5
        w3 = 3.0 * w
        hv[0, 0] += w * r2 - w3 * dx * dx
        hv[1, 1] += w * r2 - w3 * dy * dy
        hv[2, 2] += w * r2 - w3 * dz * dz
        hv[0, 1] -= w3 * dx * dy
        hv[0, 2] -= w3 * dx * dz
        hv[1, 2] -= w3 * dy * dz
    hv[1, 0] = hv[0, 1]
    hv[2, 0] = hv[0, 2]
    hv[2, 1] = hv[1, 2]
    return h


def nearest_centre_dist(double[:, ::1] centres, double qx, double qy, double qz):
    cdef Py_ssize_t k, best = -1
    cdef double dx, dy, dz, d, bestd = INFINITY
    for k in range(centres.shape[0]):
        dx = qx - centres[k, 0]
        dy = qy - centres[k, 1]
        dz = qz - centres[k, 2]
        d = sqrt(dx * dx + dy * dy + dz * dz)
        if d < bestd:
            bestd = d
            best = k
    return best, bestd


cdef void _nearest(double[:, ::1] centres, double qx, double qy, double qz,
                   Py_ssize_t* best, double* bestd) noexcept nogil:
    cdef Py_ssize_t k
    cdef double dx, dy, dz, d
    best[0] = -1
    bestd[0] = INFINITY
    for k in range(centres.shape[0]):
        dx = qx - centres[k, 0]
        dy = qy - centres[k, 1]
        dz = qz - centres[k, 2]
        d = sqrt(dx * dx + dy * dy + dz * dz)
        if d < bestd[0]:
            bestd[0] = d
            best[0] = k
    return




cdef double _potential_anchored(double[:, ::1] centres, double[::1] strengths,
                                double rx, double ry, double rz,
                                Py_ssize_t l) noexcept nogil:
    cdef double v = 0.0, dx, dy, dz
    cdef Py_ssize_t k, n = strengths.shape[0]
    for k in range(n):
        dx = rx + (centres[l, 0] - centres[k, 0])
        dy = ry + (centres[l, 1] - centres[k, 1])
        dz = rz + (centres[l, 2] - centres[k, 2])
        v -= strengths[k] / sqrt(dx * dx + dy * dy + dz * dz)
    return v


cdef void _grad_anchored_skip(double[:, ::1] centres, double[::1] strengths,
                              double rx, double ry, double rz, Py_ssize_t l,
                              Py_ssize_t skip, double* out) noexcept nogil:
    cdef double dx, dy, dz, r2, w
    cdef Py_ssize_t k, n = strengths.shape[0]
    out[0] = 0.0
    out[1] = 0.0
    out[2] = 0.0
    for k in range(n):
        if k == skip:
            continue
        dx = rx + (centres[l, 0] - centres[k, 0])
        dy = ry + (centres[l, 1] - centres[k, 1])
        dz = rz + (centres[l, 2] - centres[k, 2])
        r2 = dx * dx + dy * dy + dz * dz
        w = strengths[k] / (r2 * sqrt(r2))
        out[0] += w * dx
        out[1] += w * dy
        out[2] += w * dz


cdef void _nearest_anchored(double[:, ::1] centres, double rx, double ry,
                            double rz, Py_ssize_t l, Py_ssize_t* best,
                            double* bestd) noexcept nogil:
    cdef Py_ssize_t k
    cdef double dx, dy, dz, d
    best[0] = -1
    bestd[0] = INFINITY
    for k in range(centres.shape[0]):
        dx = rx + (centres[l, 0] - centres[k, 0])
        dy = ry + (centres[l, 1] - centres[k, 1])
        dz = rz + (centres[l, 2] - centres[k, 2])
        d = sqrt(dx * dx + dy * dy + dz * dz)
        if d < bestd[0]:
            bestd[0] = d
            best[0] = k


cdef void _strang_anchored(double[:, ::1] centres, double[::1] strengths,
                           double mu, double* r, double* p, double h,
                           Py_ssize_t l) noexcept nogil:
    cdef double g[3]
    _grad_anchored_skip(centres, strengths, r[0], r[1], r[2], l, l, g)
    p[0] -= 0.5 * h * g[0]
    p[1] -= 0.5 * h * g[1]
    p[2] -= 0.5 * h * g[2]
    _drift(mu, r, p, h)
    _grad_anchored_skip(centres, strengths, r[0], r[1], r[2], l, l, g)
    p[0] -= 0.5 * h * g[0]
    p[1] -= 0.5 * h * g[1]
    p[2] -= 0.5 * h * g[2]


cdef void _split_anchored(double[:, ::1] centres, double[::1] strengths,
                          double* r, double* p, double h, Py_ssize_t l,
                          int order) noexcept nogil:
    cdef double mu = strengths[l]
    if order == 2:
        _strang_anchored(centres, strengths, mu, r, p, h, l)
    else:
        _strang_anchored(centres, strengths, mu, r, p, YOSHIDA_W1 * h, l)
        _strang_anchored(centres, strengths, mu, r, p, YOSHIDA_W0 * h, l)
        _strang_anchored(centres, strengths, mu, r, p, YOSHIDA_W1 * h, l)


# ---------------------------------------------------------------------------
# Radial Kepler timing
# ---------------------------------------------------------------------------

cdef double _radial_time(double h_loc, double mu, double l2, double r) noexcept nogil:
    cdef double fred2, fred, rmin, pval, sqp, s, arg_hi, arg_lo, i2, u, w
    fred2 = mu * mu + 2.0 * h_loc * l2
    if fred2 < 0.0:
        fred2 = 0.0
    fred = sqrt(fred2)
    if h_loc != 0.0:
        rmin = (-mu + fred) / (2.0 * h_loc)
    else:
        rmin = l2 / (2.0 * mu)
    if r <= rmin:
        return 0.0
    pval = 2.0 * h_loc * r * r + 2.0 * mu * r - l2
    if pval < 0.0:
        pval = 0.0
    sqp = sqrt(pval)
    if h_loc > 0.0:
        s = sqrt(2.0 * h_loc)
        arg_hi = 2.0 * h_loc * r + mu + s * sqp
        arg_lo = fred if fred > 0.0 else 1e-300
        i2 = (log(arg_hi) - log(arg_lo)) / s
        return sqp / (2.0 * h_loc) - (mu / (2.0 * h_loc)) * i2
    if h_loc < 0.0:
        s = sqrt(-2.0 * h_loc)
        if fred == 0.0:
            return 0.0
        u = (2.0 * h_loc * r + mu) / fred
        if u > 1.0:
            u = 1.0
        if u < -1.0:
            u = -1.0
        i2 = (0.5 * M_PI - asin(u)) / s
        return sqp / (2.0 * h_loc) - (mu / (2.0 * h_loc)) * i2
    w = 2.0 * mu * r - l2
    if w < 0.0:
        w = 0.0
    w = sqrt(w)
    return (w * w * w / 3.0 + l2 * w) / (2.0 * mu * mu)


def radial_time_from_pericentre(double h_loc, double mu, double l2, double r):
    if h_loc == 0.0 and mu <= 0.0:
        raise ValueError("parabolic radial timing needs mu > 0")
    return _radial_time(h_loc, mu, l2, r)


# ---------------------------------------------------------------------------
# Splitting steps
# ---------------------------------------------------------------------------

cdef void _split_step(double[:, ::1] centres, double[::1] strengths,
                      double* q, double* p, double h, Py_ssize_t l,
                      int order) noexcept nogil:
    cdef double r[3]
    r[0] = q[0] - centres[l, 0]
    r[1] = q[1] - centres[l, 1]
    r[2] = q[2] - centres[l, 2]
    _split_anchored(centres, strengths, r, p, h, l, order)
    q[0] = r[0] + centres[l, 0]
    q[1] = r[1] + centres[l, 1]
    q[2] = r[2] + centres[l, 2]


def split_step(double[:, ::1] centres, double[::1] strengths, q, p,
               double h, Py_ssize_t l, int order=2):
    cdef double qq[3]
    cdef double pp[3]
    qq[0] = q[0]; qq[1] = q[1]; qq[2] = q[2]
    pp[0] = p[0]; pp[1] = p[1]; pp[2] = p[2]
    _split_step(centres, strengths, qq, pp, h, l, order)
    return (np.array([qq[0], qq[1], qq[2]]), np.array([pp[0], pp[1], pp[2]]))


def split_step_tangent(centres, strengths, q, p, double h, Py_ssize_t l,
                       int order=2):
    """Step plus exact step-map Jacobian; mirrors the python backend."""
    cents = np.asarray(centres, dtype=float)
    zs = np.asarray(strengths, dtype=float)
    s = cents[l].copy()
    mu = zs[l]
    qv = np.asarray(q, dtype=float).copy()
    pv = np.asarray(p, dtype=float).copy()
    jac = np.eye(6)
    cdef double w
    if order == 2:
        weights = (1.0,)
    else:
        weights = (YOSHIDA_W1, YOSHIDA_W0, YOSHIDA_W1)
    for w in weights:
        half = 0.5 * h * w
        hess = hess_potential_skip(cents, zs, qv, l)
        grad = np.array(grad_potential_skip(cents, zs, qv[0], qv[1], qv[2], l))
        pv = pv - half * grad
        jac[3:6, :] += (-half * hess) @ jac[0:3, :]
        q1, p1, stm = kepler_drift_stm(mu, qv - s, pv, h * w)
        qv = q1 + s
        pv = p1
        jac = stm @ jac
        hess = hess_potential_skip(cents, zs, qv, l)
        grad = np.array(grad_potential_skip(cents, zs, qv[0], qv[1], qv[2], l))
        pv = pv - half * grad
        jac[3:6, :] += (-half * hess) @ jac[0:3, :]
    return qv, pv, jac


# ---------------------------------------------------------------------------
# Integration loop
# ---------------------------------------------------------------------------

def integrate_core(double[:, ::1] centres, double[::1] strengths,
                   q0, p0, double t0, double t1,
                   double h_base, double d_ref, double far_scale,
                   double hop_rmin, double collision_guard,
                   double energy_tol, double h_ref, int order,
                   int stop_mode, double rvir, double stop_radius,
                   long max_steps,
                   double[::1] ts, double[:, ::1] qs, double[:, ::1] ps,
                   double[::1] dmins, long[::1] nears, double[::1] energies,
                   double[::1] ev_t, long[::1] ev_kind, long[::1] ev_centre,
                   double[::1] ev_aux):
    """See ncentre._kernels_py.integrate_core for the contract."""
    cdef Py_ssize_t cap = ts.shape[0]
    cdef Py_ssize_t ev_cap = ev_t.shape[0]
    cdef double sigma = 1.0 if t1 >= t0 else -1.0
    cdef double tol_abs = energy_tol * (1.0 if fabs(h_ref) < 1.0 else fabs(h_ref))

    cdef Py_ssize_t la, l, ln, l_prev
    cdef double dmin, dmin_n
    _nearest(centres, q0[0], q0[1], q0[2], &la, &dmin)
    cdef double rx = q0[0] - centres[la, 0]
    cdef double ry = q0[1] - centres[la, 1]
    cdef double rz = q0[2] - centres[la, 2]
    cdef double px = p0[0], py = p0[1], pz = p0[2]
    cdef double t = t0

    _nearest_anchored(centres, rx, ry, rz, la, &l_prev, &dmin)
    cdef double v = _potential_anchored(centres, strengths, rx, ry, rz, la)
    cdef double h_now = 0.5 * (px * px + py * py + pz * pz) + v
    cdef double h_new, vn

    ts[0] = t
    qs[0, 0] = rx + centres[la, 0]
    qs[0, 1] = ry + centres[la, 1]
    qs[0, 2] = rz + centres[la, 2]
    ps[0, 0] = px; ps[0, 1] = py; ps[0, 2] = pz
    dmins[0] = dmin
    nears[0] = l_prev
    energies[0] = h_now
    cdef Py_ssize_t n_samp = 1
    cdef Py_ssize_t n_ev = 0
    cdef long n_steps = 0
    cdef double min_dist = dmin
    cdef double max_drift = fabs(h_now - h_ref)

    cdef int status = STATUS_TIME
    cdef double h_raw, h_eff, remaining, dt
    cdef double eta, mu_l, h_l, lx, ly, lz, l2
    cdef double t_peri, fred, rmin_l, t_new, tp, hop_window
    cdef double st[6]
    cdef double rad_old, rad_new, outward, frac, drift
    cdef double qx_old, qy_old, qz_old, qx, qy, qz
    cdef bint approaching, accepted, is_hop
    cdef int halvings

    while True:
        if sigma * (t1 - t) <= 0.0:
            status = STATUS_TIME
            break
        if n_steps >= max_steps:
            status = STATUS_STEP_LIMIT
            break
        if n_samp >= cap:
            status = STATUS_BUFFER_FULL
            break
        if n_ev + 4 >= ev_cap:
            status = STATUS_EVENT_FULL
            break
        _nearest_anchored(centres, rx, ry, rz, la, &l, &dmin)
        if l != la:
            rx += centres[la, 0] - centres[l, 0]
            ry += centres[la, 1] - centres[l, 1]
            rz += centres[la, 2] - centres[l, 2]
            la = l
        if dmin < collision_guard:
            status = STATUS_COLLISION
            break
        h_raw = dmin / d_ref
        h_raw = h_raw * sqrt(h_raw)
        if h_raw > 1.0:
            h_raw = 1.0
        h_raw = h_base * h_raw * (dmin / far_scale if dmin > far_scale else 1.0)
        h_eff = h_base * 2.0 ** floor(log2(h_raw / h_base))
        remaining = fabs(t1 - t)
        dt = h_eff if h_eff < remaining else remaining

        eta = rx * px + ry * py + rz * pz
        mu_l = strengths[l]
        h_l = 0.5 * (px * px + py * py + pz * pz) - mu_l / dmin
        lx = ry * pz - rz * py
        ly = rz * px - rx * pz
        lz = rx * py - ry * px
        l2 = lx * lx + ly * ly + lz * lz
        if h_l == 0.0 and mu_l <= 0.0:
            t_peri = 0.0
        else:
            t_peri = _radial_time(h_l, mu_l, l2, dmin)
        approaching = sigma * eta < 0.0
        if approaching and t_peri > 0.0:
            fred = sqrt(max(0.0, mu_l * mu_l + 2.0 * h_l * l2))
            if h_l != 0.0:
                rmin_l = (-mu_l + fred) / (2.0 * h_l)
            else:
                rmin_l = l2 / (2.0 * mu_l)
            hop_window = h_base * (hop_rmin / d_ref) ** 1.5
            if h_eff > hop_window:
                hop_window = h_eff
            if rmin_l <= hop_rmin and 2.0 * t_peri <= hop_window and 2.0 * t_peri < remaining:
                dt = 2.0 * t_peri * (1.0 + 1e-9)
                is_hop = True
            else:
                is_hop = False
        else:
            is_hop = False

        # A hop is an indivisible regularized passage: halving it would
        # strand the endpoint inside the collision funnel, so it is taken
        # as is (its energy increment is bounded and shows up in the drift
        # statistics).
        accepted = False
        for halvings in range(1 if is_hop else 45):
            st[0] = rx; st[1] = ry; st[2] = rz
            st[3] = px; st[4] = py; st[5] = pz
            _split_anchored(centres, strengths, &st[0], &st[3], sigma * dt, l, order)
            vn = _potential_anchored(centres, strengths, st[0], st[1], st[2], l)
            h_new = 0.5 * (st[3] * st[3] + st[4] * st[4] + st[5] * st[5]) + vn
            if is_hop or fabs(h_new - h_now) <= tol_abs:
                accepted = True
                break
            dt *= 0.5
        if not accepted:
            status = STATUS_ENERGY
            break

        t_new = t + sigma * dt
        if t_new == t:
            status = STATUS_COLLISION
            break
        tp = t - copysign(t_peri, eta)
        if t_peri > 0.0 and approaching and \
                (t if t < t_new else t_new) <= tp <= (t if t > t_new else t_new):
            fred = sqrt(max(0.0, mu_l * mu_l + 2.0 * h_l * l2))
            if h_l != 0.0:
                rmin_l = (-mu_l + fred) / (2.0 * h_l)
            else:
                rmin_l = l2 / (2.0 * mu_l)
            ev_t[n_ev] = tp
            ev_kind[n_ev] = 0
            ev_centre[n_ev] = l
            ev_aux[n_ev] = rmin_l
            n_ev += 1

        if l != l_prev:
            ev_t[n_ev] = t
            ev_kind[n_ev] = 1
            ev_centre[n_ev] = l
            ev_aux[n_ev] = <double> l_prev
            n_ev += 1
            l_prev = l

        qx_old = rx + centres[l, 0]
        qy_old = ry + centres[l, 1]
        qz_old = rz + centres[l, 2]
        rad_old = sqrt(qx_old * qx_old + qy_old * qy_old + qz_old * qz_old)
        qx = st[0] + centres[l, 0]
        qy = st[1] + centres[l, 1]
        qz = st[2] + centres[l, 2]
        rad_new = sqrt(qx * qx + qy * qy + qz * qz)
        if rvir > 0.0 and (rad_old - rvir) * (rad_new - rvir) < 0.0:
            frac = (rvir - rad_old) / (rad_new - rad_old)
            ev_t[n_ev] = t + sigma * dt * frac
            ev_kind[n_ev] = 2
            ev_centre[n_ev] = -1
            ev_aux[n_ev] = 1.0 if rad_new > rad_old else -1.0
            n_ev += 1

        rx = st[0]; ry = st[1]; rz = st[2]
        px = st[3]; py = st[4]; pz = st[5]
        t = t_new
        h_now = h_new
        n_steps += 1

        _nearest_anchored(centres, rx, ry, rz, l, &ln, &dmin_n)
        ts[n_samp] = t
        qs[n_samp, 0] = qx; qs[n_samp, 1] = qy; qs[n_samp, 2] = qz
        ps[n_samp, 0] = px; ps[n_samp, 1] = py; ps[n_samp, 2] = pz
        dmins[n_samp] = dmin_n
        nears[n_samp] = ln
        energies[n_samp] = h_new
        n_samp += 1
        if dmin_n < min_dist:
            min_dist = dmin_n
        drift = fabs(h_new - h_ref)
        if drift > max_drift:
            max_drift = drift

        if stop_mode == 1 and rad_new >= rvir:
            outward = qx * px + qy * py + qz * pz
            if sigma * outward >= 0.0:
                status = STATUS_ESCAPE
                break
        elif stop_mode == 2 and rad_new >= stop_radius:
            status = STATUS_RADIUS
            break

    return status, n_samp, n_steps, n_ev, min_dist, max_drift
