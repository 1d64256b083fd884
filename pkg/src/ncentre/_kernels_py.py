"""Pure-Python reference kernels for the hot numerical loops.

The compiled extension ``ncentre._kernels_cy`` mirrors every function in this
module one-to-one; ``ncentre._backend`` picks whichever is importable.  The
semantics documented here are therefore the contract for both backends.

Conventions
-----------
* All states are 3-vectors; planar problems are embedded with a zero third
  component (the dynamics preserves the plane exactly).
* A single attracting/repelling centre of strength ``mu`` generates the local
  Hamiltonian ``|p|^2/2 - mu/|q - s|``; ``mu`` may carry either sign or be 0.
* The Kepler drift uses the universal-variable (Stumpff) formulation in the
  "beta" form: ``beta = 2 mu / r0 - |v0|^2``, Kepler equation
  ``dt = r0 G1 + eta0 G2 + mu G3`` with ``eta0 = <q, p>``.  It is valid for
  elliptic, parabolic and hyperbolic local motion and continues exact radial
  collisions as regularized reflections (the radius touches zero
  quadratically in the universal anomaly).
"""

import math

import numpy as np

BACKEND = "python"

# Step-status codes shared with the compiled backend.
STATUS_TIME = 0
STATUS_ESCAPE = 1
STATUS_RADIUS = 2
STATUS_STEP_LIMIT = 3
STATUS_COLLISION = 4
STATUS_BUFFER_FULL = 5
STATUS_EVENT_FULL = 6
STATUS_ENERGY = 7


# ---------------------------------------------------------------------------
# Stumpff / G functions
# ---------------------------------------------------------------------------

def _stumpff(z):
    """c0..c5 Stumpff functions, c_k(z) = sum_j (-z)^j / (k + 2j)!.

    Uses closed trig/hyperbolic forms away from z = 0 and power series near
    it, where the closed forms lose digits to cancellation.
    """
    if abs(z) < 0.5:
        # Series, truncated well below double precision for |z| < 0.5.
        c4 = 0.0
        c5 = 0.0
        term4 = 1.0 / 24.0
        term5 = 1.0 / 120.0
        for j in range(12):
            c4 += term4
            c5 += term5
            term4 *= -z / ((5 + 2 * j) * (6 + 2 * j))
            term5 *= -z / ((6 + 2 * j) * (7 + 2 * j))
        c3 = 1.0 / 6.0 - z * c5
        c2 = 0.5 - z * c4
        c1 = 1.0 - z * c3
        c0 = 1.0 - z * c2
        return c0, c1, c2, c3, c4, c5
    if z > 0.0:
        s = math.sqrt(z)
        c0 = math.cos(s)
        c1 = math.sin(s) / s
    else:
        s = math.sqrt(-z)
        # Clip far outside the physically reachable range so transient
        # bracketing probes stay finite (the Kepler-equation solution always
        # has s of order tens at most for representable times).
        sc = s if s < 600.0 else 600.0
        c0 = math.cosh(sc)
        c1 = math.sinh(sc) / s
    c2 = (1.0 - c0) / z
    c3 = (1.0 - c1) / z
    c4 = (0.5 - c2) / z
    c5 = (1.0 / 6.0 - c3) / z
    return c0, c1, c2, c3, c4, c5


def gfuncs(beta, x):
    """G_j(beta, X) = X^j c_j(beta X^2) for j = 0..5."""
    z = beta * x * x
    c0, c1, c2, c3, c4, c5 = _stumpff(z)
    x2 = x * x
    x3 = x2 * x
    return (c0, x * c1, x2 * c2, x3 * c3, x2 * x2 * c4, x2 * x3 * c5)


def _kepler_anomaly(mu, r0, eta0, beta, dt):
    """Solve the universal Kepler equation r0 G1 + eta0 G2 + mu G3 = dt.

    Newton iteration safeguarded by bisection; t(X) is strictly increasing
    (its derivative is the radius, which only touches zero at exact radial
    collisions), so a sign-bracketing interval always exists.
    """
    if dt == 0.0:
        return 0.0
    # Initial guess: dt / r0 (exact for free motion at the initial radius),
    # clamped for hyperbolic motion where the anomaly grows only
    # logarithmically in time.
    x = dt / r0
    if beta < 0.0:
        cap = 100.0 / math.sqrt(-beta)
        if abs(x) > cap:
            x = math.copysign(cap, dt)
    lo = 0.0
    hi = x
    # Grow the bracket until t(hi) passes dt.
    for _ in range(200):
        g = gfuncs(beta, hi)
        t_hi = r0 * g[1] + eta0 * g[2] + mu * g[3]
        if (t_hi - dt) * (1.0 if dt > 0.0 else -1.0) >= 0.0:
            break
        lo = hi
        hi *= 2.0
    else:  # pragma: no cover - unreachable for finite inputs
        raise FloatingPointError("universal anomaly bracket failed")
    if dt < 0.0:
        lo, hi = hi, lo
    x = min(max(x, min(lo, hi)), max(lo, hi))
    # Newton safeguarded by the bracket, iterated to floating-point fixed
    # point: near a collision the time residual is multiplied by the local
    # acceleration, so a loose anomaly tolerance would inject velocity noise.
    prev = math.inf
    for _ in range(128):
        g = gfuncs(beta, x)
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
        if not (min(lo, hi) <= x_new <= max(lo, hi)):
            x_new = 0.5 * (lo + hi)
        if x_new == x or x_new == prev:
            return x_new
        prev = x
        x = x_new
    return x


def kepler_drift(mu, q, p, dt):
    """Exact two-body flow of |p|^2/2 - mu/|q| for time dt.

    q, p are 3-vectors relative to the centre.  Returns (q1, p1) as numpy
    arrays.  Valid for any sign of mu and any orbit type; exact radial
    collisions are continued as reflections.
    """
    qx, qy, qz = float(q[0]), float(q[1]), float(q[2])
    px, py, pz = float(p[0]), float(p[1]), float(p[2])
    r0 = math.sqrt(qx * qx + qy * qy + qz * qz)
    if r0 == 0.0:
        raise ZeroDivisionError("kepler_drift called at the centre")
    if dt == 0.0:
        return np.array([qx, qy, qz]), np.array([px, py, pz])
    eta0 = qx * px + qy * py + qz * pz
    v2 = px * px + py * py + pz * pz
    beta = 2.0 * mu / r0 - v2
    x = _kepler_anomaly(mu, r0, eta0, beta, dt)
    g = gfuncs(beta, x)
    r1 = r0 * g[0] + eta0 * g[1] + mu * g[2]
    # Guard against roundoff at a regularized reflection: the radius is
    # mathematically >= 0 along the solution.
    if r1 <= 0.0:
        r1 = 1e-300
    f = 1.0 - (mu / r0) * g[2]
    gg = dt - mu * g[3]
    fdot = -mu * g[1] / (r1 * r0)
    gdot = 1.0 - (mu / r1) * g[2]
    q1 = np.array([f * qx + gg * px, f * qy + gg * py, f * qz + gg * pz])
    p1 = np.array([fdot * qx + gdot * px, fdot * qy + gdot * py, fdot * qz + gdot * pz])
    return q1, p1


def kepler_drift_stm(mu, q, p, dt):
    """Kepler drift plus its exact 6x6 Jacobian (state transition matrix).

    The partials follow from differentiating the f and g functions, with the
    universal anomaly eliminated through the Kepler equation and the
    beta-derivative identity dG_j/dbeta = (j G_{j+2} - X G_{j+1}) / 2.
    """
    q0 = np.asarray(q, dtype=float)
    p0 = np.asarray(p, dtype=float)
    r0 = float(np.linalg.norm(q0))
    if dt == 0.0:
        return q0.copy(), p0.copy(), np.eye(6)
    eta0 = float(q0 @ p0)
    v2 = float(p0 @ p0)
    beta = 2.0 * mu / r0 - v2
    x = _kepler_anomaly(mu, r0, eta0, beta, dt)
    g0, g1, g2, g3, g4, g5 = gfuncs(beta, x)
    r1 = r0 * g0 + eta0 * g1 + mu * g2
    if r1 <= 0.0:
        r1 = 1e-300
    f = 1.0 - (mu / r0) * g2
    gg = dt - mu * g3
    fdot = -mu * g1 / (r1 * r0)
    gdot = 1.0 - (mu / r1) * g2

    db_g0 = -0.5 * x * g1
    db_g1 = 0.5 * (g3 - x * g2)
    db_g2 = 0.5 * (2.0 * g4 - x * g3)
    db_g3 = 0.5 * (3.0 * g5 - x * g4)

    grad_r0 = np.concatenate([q0 / r0, np.zeros(3)])
    grad_eta = np.concatenate([p0, q0])
    grad_beta = np.concatenate([(-2.0 * mu / (r0 * r0)) * (q0 / r0), -2.0 * p0])

    dxi_dbeta = r0 * db_g1 + eta0 * db_g2 + mu * db_g3
    grad_x = -(g1 * grad_r0 + g2 * grad_eta + dxi_dbeta * grad_beta) / r1

    eta1 = eta0 * g0 + (mu - beta * r0) * g1
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

def potential(centres, strengths, qx, qy, qz):
    """V(q) = -sum_k Z_k / |q - s_k| from scalar coordinates."""
    v = 0.0
    n = len(strengths)
    for k in range(n):
        dx = qx - centres[k, 0]
        dy = qy - centres[k, 1]
        dz = qz - centres[k, 2]
        v -= strengths[k] / math.sqrt(dx * dx + dy * dy + dz * dz)
    return v


def _potential_anchored(centres, strengths, rx, ry, rz, l):
    """V at the point s_l + r, evaluated without forming absolute
    coordinates: offsets to other centres are taken between centre
    coordinates first, preserving the fine structure of r near centre l."""
    v = 0.0
    n = len(strengths)
    for k in range(n):
        dx = rx + (centres[l, 0] - centres[k, 0])
        dy = ry + (centres[l, 1] - centres[k, 1])
        dz = rz + (centres[l, 2] - centres[k, 2])
        v -= strengths[k] / math.sqrt(dx * dx + dy * dy + dz * dz)
    return v


def _grad_anchored_skip(centres, strengths, rx, ry, rz, l, skip):
    """Gradient of the potential at s_l + r, omitting centre ``skip``."""
    gx = gy = gz = 0.0
    n = len(strengths)
    for k in range(n):
        if k == skip:
            continue
        dx = rx + (centres[l, 0] - centres[k, 0])
        dy = ry + (centres[l, 1] - centres[k, 1])
        dz = rz + (centres[l, 2] - centres[k, 2])
        r2 = dx * dx + dy * dy + dz * dz
        w = strengths[k] / (r2 * math.sqrt(r2))
        gx += w * dx
        gy += w * dy
        gz += w * dz
    return gx, gy, gz


def _nearest_anchored(centres, rx, ry, rz, l):
    """(index, distance) of the closest centre to the point s_l + r."""
    best = -1
    bestd = math.inf
    for k in range(centres.shape[0]):
        dx = rx + (centres[l, 0] - centres[k, 0])
        dy = ry + (centres[l, 1] - centres[k, 1])
        dz = rz + (centres[l, 2] - centres[k, 2])
        d = math.sqrt(dx * dx + dy * dy + dz * dz)
        if d < bestd:
            bestd = d
            best = k
    return best, bestd


def grad_potential_skip(centres, strengths, qx, qy, qz, skip):
    """Gradient of the potential, omitting centre ``skip`` (-1 for none)."""
    gx = gy = gz = 0.0
    n = len(strengths)
    for k in range(n):
        if k == skip:
            continue
        dx = qx - centres[k, 0]
        dy = qy - centres[k, 1]
        dz = qz - centres[k, 2]
        r2 = dx * dx + dy * dy + dz * dz
        w = strengths[k] / (r2 * math.sqrt(r2))
        gx += w * dx
        gy += w * dy
        gz += w * dz
    return gx, gy, gz


def hess_potential_skip(centres, strengths, q, skip):
    """Hessian (3x3) of the potential, omitting centre ``skip``."""
    h = np.zeros((3, 3))
    n = len(strengths)
    for k in range(n):
        if k == skip:
            continue
        d = np.array([q[0] - centres[k, 0], q[1] - centres[k, 1], q[2] - centres[k, 2]])
        r2 = float(d @ d)
        r5 = r2 * r2 * math.sqrt(r2)
        h += (strengths[k] / r5) * (r2 * np.eye(3) - 3.0 * np.outer(d, d))
    return h


def nearest_centre_dist(centres, qx, qy, qz):
    """(index, distance) of the closest centre; ties to the smallest index."""
    best = -1
    bestd = math.inf
    for k in range(centres.shape[0]):
        dx = qx - centres[k, 0]
        dy = qy - centres[k, 1]
        dz = qz - centres[k, 2]
        d = math.sqrt(dx * dx + dy * dy + dz * dz)
        if d < bestd:
            bestd = d
            best = k
    return best, bestd


# ---------------------------------------------------------------------------
# Radial Kepler timing
# ---------------------------------------------------------------------------

def radial_time_from_pericentre(h_loc, mu, l2, r):
    """Time for the local Kepler orbit to move from pericentre to radius r.

    Closed-form antiderivative of  rho drho / sqrt(2 H rho^2 + 2 mu rho - L^2)
    evaluated between the pericentre distance and r.  Supports H of any sign
    (H = 0 requires mu > 0).  Returns a nonnegative time; r below pericentre
    (up to roundoff) gives 0.
    """
    fred2 = mu * mu + 2.0 * h_loc * l2
    if fred2 < 0.0:
        fred2 = 0.0
    fred = math.sqrt(fred2)
    if h_loc != 0.0:
        rmin = (-mu + fred) / (2.0 * h_loc)
    else:
        if mu <= 0.0:
            raise ValueError("parabolic radial timing needs mu > 0")
        rmin = l2 / (2.0 * mu)
    if r <= rmin:
        return 0.0
    pval = 2.0 * h_loc * r * r + 2.0 * mu * r - l2
    if pval < 0.0:
        pval = 0.0
    sqp = math.sqrt(pval)
    if h_loc > 0.0:
        s = math.sqrt(2.0 * h_loc)
        # int drho / sqrt(P) from rmin to r, log form.
        arg_hi = 2.0 * h_loc * r + mu + s * sqp
        arg_lo = fred if fred > 0.0 else 1e-300
        i2 = (math.log(arg_hi) - math.log(arg_lo)) / s
        return sqp / (2.0 * h_loc) - (mu / (2.0 * h_loc)) * i2
    if h_loc < 0.0:
        s = math.sqrt(-2.0 * h_loc)
        if fred == 0.0:
            return 0.0
        u = (2.0 * h_loc * r + mu) / fred
        u = min(1.0, max(-1.0, u))
        i2 = (0.5 * math.pi - math.asin(u)) / s
        return sqp / (2.0 * h_loc) + (mu / s) * i2 / s * 0.0 - (mu / (2.0 * h_loc)) * i2
    w = math.sqrt(max(0.0, 2.0 * mu * r - l2))
    return (w * w * w / 3.0 + l2 * w) / (2.0 * mu * mu)


# ---------------------------------------------------------------------------
# Splitting steps
# ---------------------------------------------------------------------------

_YOSHIDA_W1 = 1.0 / (2.0 - 2.0 ** (1.0 / 3.0))
_YOSHIDA_W0 = 1.0 - 2.0 * _YOSHIDA_W1


def _strang_anchored(centres, strengths, mu, rx, ry, rz, px, py, pz, h, l):
    gx, gy, gz = _grad_anchored_skip(centres, strengths, rx, ry, rz, l, l)
    px -= 0.5 * h * gx
    py -= 0.5 * h * gy
    pz -= 0.5 * h * gz
    q1, p1 = kepler_drift(mu, (rx, ry, rz), (px, py, pz), h)
    rx, ry, rz = float(q1[0]), float(q1[1]), float(q1[2])
    px, py, pz = float(p1[0]), float(p1[1]), float(p1[2])
    gx, gy, gz = _grad_anchored_skip(centres, strengths, rx, ry, rz, l, l)
    px -= 0.5 * h * gx
    py -= 0.5 * h * gy
    pz -= 0.5 * h * gz
    return rx, ry, rz, px, py, pz


def _split_anchored(centres, strengths, rx, ry, rz, px, py, pz, h, l, order):
    mu = strengths[l]
    if order == 2:
        return _strang_anchored(centres, strengths, mu, rx, ry, rz,
                                px, py, pz, h, l)
    out = _strang_anchored(centres, strengths, mu, rx, ry, rz, px, py, pz,
                           _YOSHIDA_W1 * h, l)
    out = _strang_anchored(centres, strengths, mu, *out, _YOSHIDA_W0 * h, l)
    return _strang_anchored(centres, strengths, mu, *out, _YOSHIDA_W1 * h, l)


def split_step(centres, strengths, q, p, h, l, order=2):
    """One Kepler-splitting step: kick by the non-dominant centres, exact
    drift in the field of centre ``l``, kick.  ``order`` 2 is a Strang step;
    4 is the Yoshida triple-jump composition."""
    out = _split_anchored(centres, strengths,
                          float(q[0]) - centres[l, 0],
                          float(q[1]) - centres[l, 1],
                          float(q[2]) - centres[l, 2],
                          float(p[0]), float(p[1]), float(p[2]), h, l, order)
    return (np.array([out[0] + centres[l, 0], out[1] + centres[l, 1],
                      out[2] + centres[l, 2]]), np.array(out[3:]))


def _strang_tangent(centres, strengths, s, mu, q, p, h, l, jac):
    half = 0.5 * h
    hess = hess_potential_skip(centres, strengths, q, l)
    grad = grad_potential_skip(centres, strengths, q[0], q[1], q[2], l)
    p = p - half * np.array(grad)
    jac = _apply_kick(jac, -half * hess)
    q1, p1, stm = kepler_drift_stm(mu, q - s, p, h)
    q = q1 + s
    p = p1
    jac = stm @ jac
    hess = hess_potential_skip(centres, strengths, q, l)
    grad = grad_potential_skip(centres, strengths, q[0], q[1], q[2], l)
    p = p - half * np.array(grad)
    jac = _apply_kick(jac, -half * hess)
    return q, p, jac


def _apply_kick(jac, dkick):
    out = jac.copy()
    out[3:6, :] += dkick @ jac[0:3, :]
    return out


def split_step_tangent(centres, strengths, q, p, h, l, order=2):
    """split_step together with the exact Jacobian of the step map (6x6).

    Each factor (half-kick, drift) contributes its analytic tangent, so the
    product is symplectic to roundoff.
    """
    s = centres[l].astype(float)
    mu = strengths[l]
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    jac = np.eye(6)
    if order == 2:
        q, p, jac = _strang_tangent(centres, strengths, s, mu, q, p, h, l, jac)
    else:
        q, p, jac = _strang_tangent(centres, strengths, s, mu, q, p, _YOSHIDA_W1 * h, l, jac)
        q, p, jac = _strang_tangent(centres, strengths, s, mu, q, p, _YOSHIDA_W0 * h, l, jac)
        q, p, jac = _strang_tangent(centres, strengths, s, mu, q, p, _YOSHIDA_W1 * h, l, jac)
    return q, p, jac


# ---------------------------------------------------------------------------
# Integration loop
# ---------------------------------------------------------------------------

def integrate_core(centres, strengths, q0, p0, t0, t1,
                   h_base, d_ref, far_scale, hop_rmin, collision_guard,
                   energy_tol, h_ref, order,
                   stop_mode, rvir, stop_radius, max_steps,
                   ts, qs, ps, dmins, nears, energies,
                   ev_t, ev_kind, ev_centre, ev_aux):
    """Adaptive Kepler-splitting integration from t0 towards t1.

    Fills the sample buffers (including the initial state at index 0) and the
    event buffers and returns
    ``(status, n_samples, n_steps, n_events, min_dist, max_drift)``.

    Step-size controller: ``h_eff = h_base * min(1, dmin/d_ref) *
    max(1, dmin/far_scale)``; when the pericentre of the dominant-centre
    osculating orbit lies below ``hop_rmin`` and its passage fits inside the
    step, the step is widened to jump symmetrically across the passage (the
    drift is exact there), which keeps sample points out of the collision
    guard even for regularized collision orbits.

    Event kinds: 0 = pericentre (aux = pericentre distance), 1 = nearest
    centre switch (aux = previous centre), 2 = virial-radius crossing
    (aux = +1 outward / -1 inward).  Events carry the physical time.

    Steps whose single-step energy increment exceeds
    ``energy_tol * max(1, |h_ref|)`` are retried with half the step; the
    cumulative deviation from ``h_ref`` is reported as ``max_drift`` but does
    not reject steps (a symplectic integrator's energy error is a bounded
    oscillation, so a cumulative cap would wedge at its own boundary).
    """
    n = centres.shape[0]
    cap = ts.shape[0]
    ev_cap = ev_t.shape[0]
    sigma = 1.0 if t1 >= t0 else -1.0
    tol_abs = energy_tol * max(1.0, abs(h_ref))

    # State carried relative to the current dominant centre ("anchor"):
    # forming absolute coordinates only for output keeps the fine structure
    # of deep approaches (an eps of |q| would otherwise swamp r near a
    # centre and poison the local potential).
    la, _ = nearest_centre_dist(centres, float(q0[0]), float(q0[1]), float(q0[2]))
    rx = float(q0[0]) - centres[la, 0]
    ry = float(q0[1]) - centres[la, 1]
    rz = float(q0[2]) - centres[la, 2]
    px, py, pz = float(p0[0]), float(p0[1]), float(p0[2])
    t = float(t0)

    l_prev, dmin = _nearest_anchored(centres, rx, ry, rz, la)
    v = _potential_anchored(centres, strengths, rx, ry, rz, la)
    h_now = 0.5 * (px * px + py * py + pz * pz) + v

    ts[0] = t
    qs[0, 0] = rx + centres[la, 0]
    qs[0, 1] = ry + centres[la, 1]
    qs[0, 2] = rz + centres[la, 2]
    ps[0, 0], ps[0, 1], ps[0, 2] = px, py, pz
    dmins[0] = dmin
    nears[0] = l_prev
    energies[0] = h_now
    n_samp = 1
    n_ev = 0
    n_steps = 0
    min_dist = dmin
    max_drift = abs(h_now - h_ref)

    status = STATUS_TIME
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
        l, dmin = _nearest_anchored(centres, rx, ry, rz, la)
        if l != la:
            # Re-anchor to the new dominant centre (exact centre-coordinate
            # differences first).
            rx += centres[la, 0] - centres[l, 0]
            ry += centres[la, 1] - centres[l, 1]
            rz += centres[la, 2] - centres[l, 2]
            la = l
        if dmin < collision_guard:
            status = STATUS_COLLISION
            break
        # Distance-controlled step: the near-field exponent 3/2 tracks the
        # local free-fall timescale sqrt(r^3/Z); far-field steps grow
        # linearly with distance.  Quantizing to powers of two of the base
        # step keeps the step piecewise constant, so the symplectic energy
        # oscillation telescopes instead of accumulating.
        h_raw = h_base * min(1.0, (dmin / d_ref) ** 1.5) * max(1.0, dmin / far_scale)
        h_eff = h_base * 2.0 ** math.floor(math.log2(h_raw / h_base))
        remaining = abs(t1 - t)
        dt = min(h_eff, remaining)

        # Pericentre bookkeeping w.r.t. the dominant centre.
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
            t_peri = radial_time_from_pericentre(h_l, mu_l, l2, dmin)
        approaching = sigma * eta < 0.0
        if approaching and t_peri > 0.0:
            fred = math.sqrt(max(0.0, mu_l * mu_l + 2.0 * h_l * l2))
            if h_l != 0.0:
                rmin_l = (-mu_l + fred) / (2.0 * h_l)
            else:
                rmin_l = l2 / (2.0 * mu_l)
            # The hop window needs a floor: with the 3/2-power controller the
            # swing time and the step shrink at the same rate, so without it
            # a deep approach would crawl forever instead of jumping.
            hop_window = max(h_eff, h_base * (hop_rmin / d_ref) ** 1.5)
            if rmin_l <= hop_rmin and 2.0 * t_peri <= hop_window \
                    and 2.0 * t_peri < remaining:
                dt = 2.0 * t_peri * (1.0 + 1e-9)
                is_hop = True
            else:
                is_hop = False
        else:
            is_hop = False

        # Take the step, halving on per-step energy-increment violations.
        # A hop is an indivisible regularized passage: halving it would
        # strand the endpoint inside the collision funnel, so it is taken
        # as is (its energy increment is bounded and shows up in the drift
        # statistics).
        accepted = False
        for _ in range(1 if is_hop else 45):
            out = _split_anchored(centres, strengths, rx, ry, rz, px, py, pz,
                                  sigma * dt, l, order)
            vn = _potential_anchored(centres, strengths, out[0], out[1], out[2], l)
            h_new = 0.5 * (out[3] ** 2 + out[4] ** 2 + out[5] ** 2) + vn
            if is_hop or abs(h_new - h_now) <= tol_abs:
                accepted = True
                break
            dt *= 0.5
        if not accepted:
            status = STATUS_ENERGY
            break

        t_new = t + sigma * dt
        if t_new == t:
            # Dynamical stall: the controller step underflowed the clock
            # (only reachable inside a singular collision funnel).
            status = STATUS_COLLISION
            break
        # Pericentre event w.r.t. the dominant centre: the osculating
        # pericentre time is exact within the drift.
        tp = t - math.copysign(t_peri, eta)
        if t_peri > 0.0 and approaching and min(t, t_new) <= tp <= max(t, t_new):
            fred = math.sqrt(max(0.0, mu_l * mu_l + 2.0 * h_l * l2))
            rmin_l = (-mu_l + fred) / (2.0 * h_l) if h_l != 0.0 else l2 / (2.0 * mu_l)
            ev_t[n_ev] = tp
            ev_kind[n_ev] = 0
            ev_centre[n_ev] = l
            ev_aux[n_ev] = rmin_l
            n_ev += 1

        if l != l_prev:
            ev_t[n_ev] = t
            ev_kind[n_ev] = 1
            ev_centre[n_ev] = l
            ev_aux[n_ev] = float(l_prev)
            n_ev += 1
            l_prev = l

        qx_old = rx + centres[l, 0]
        qy_old = ry + centres[l, 1]
        qz_old = rz + centres[l, 2]
        rad_old = math.sqrt(qx_old ** 2 + qy_old ** 2 + qz_old ** 2)
        qx = out[0] + centres[l, 0]
        qy = out[1] + centres[l, 1]
        qz = out[2] + centres[l, 2]
        rad_new = math.sqrt(qx * qx + qy * qy + qz * qz)
        if rvir > 0.0 and (rad_old - rvir) * (rad_new - rvir) < 0.0:
            frac = (rvir - rad_old) / (rad_new - rad_old)
            ev_t[n_ev] = t + sigma * dt * frac
            ev_kind[n_ev] = 2
            ev_centre[n_ev] = -1
            ev_aux[n_ev] = 1.0 if rad_new > rad_old else -1.0
            n_ev += 1

        rx, ry, rz = out[0], out[1], out[2]
        px, py, pz = out[3], out[4], out[5]
        t = t_new
        h_now = h_new
        n_steps += 1

        ln, dmin_n = _nearest_anchored(centres, rx, ry, rz, l)
        ts[n_samp] = t
        qs[n_samp, 0], qs[n_samp, 1], qs[n_samp, 2] = qx, qy, qz
        ps[n_samp, 0], ps[n_samp, 1], ps[n_samp, 2] = px, py, pz
        dmins[n_samp] = dmin_n
        nears[n_samp] = ln
        energies[n_samp] = h_new
        n_samp += 1
        if dmin_n < min_dist:
            min_dist = dmin_n
        drift = abs(h_new - h_ref)
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
