"""Numerical integration of the n-centre flow.

The integrator composes exact Kepler drifts in the field of the nearest
centre with kicks from the remaining centres (Strang splitting, optional
4th-order Yoshida composition).  Steps shrink proportionally to the distance
from the nearest centre, grow linearly in the far field, and hop across
deep pericentre passages in one exact drift so that sample points never
strand inside the collision guard.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from ._backend import kernels
from .errors import CollisionAbort, StepLimit, NCentreError
from .model import PhaseState, energy, virial_radius_cached, _pad3

_STATUS_NAMES = {
    kernels.STATUS_TIME: "time",
    kernels.STATUS_ESCAPE: "escape",
    kernels.STATUS_RADIUS: "radius",
    kernels.STATUS_STEP_LIMIT: "step-limit",
    kernels.STATUS_COLLISION: "collision",
    kernels.STATUS_ENERGY: "energy-budget",
}


@dataclass(frozen=True)
class IntegratorSettings:
    """Knobs of the splitting integrator.

    d_ref defaults to one tenth of the smallest pairwise centre distance;
    far_scale controls where steps start growing linearly with distance;
    hop_rmin is the osculating-pericentre depth below which a passage is
    jumped in a single exact drift.
    """

    base_step: float = 1e-3
    energy_tol: float = 1e-8
    collision_guard: float = 1e-10
    splitting_order: int = 4
    max_steps: int = 10_000_000
    d_ref: float | None = None
    far_scale: float | None = None
    hop_rmin: float | None = None

    def __post_init__(self):
        if self.base_step <= 0.0:
            raise ValueError("base_step must be positive")
        if self.energy_tol <= 0.0:
            raise ValueError("energy_tol must be positive")
        if self.splitting_order not in (2, 4):
            raise ValueError("splitting order must be 2 or 4")

    def resolved(self, cfg):
        """Fill configuration-dependent defaults."""
        d_ref = self.d_ref
        if d_ref is None:
            pair = cfg.min_pair_distance
            d_ref = pair / 10.0 if math.isfinite(pair) else 1.0
        far = self.far_scale
        if far is None:
            far = 2.0 * max(1.0, cfg.max_centre_norm)
        hop = self.hop_rmin
        if hop is None:
            hop = 1e-4 * d_ref
        return replace(self, d_ref=d_ref, far_scale=far, hop_rmin=hop)


@dataclass
class Event:
    kind: str          # "pericentre" | "switch" | "virial"
    t: float
    centre: int        # centre index (-1 for virial crossings)
    value: float       # pericentre distance / previous centre / +-1 direction


@dataclass
class Trajectory:
    """Recorded samples (one per accepted step) plus the event log."""

    cfg: object
    settings: IntegratorSettings
    ts: np.ndarray
    qs: np.ndarray
    ps: np.ndarray
    dmin: np.ndarray
    nearest: np.ndarray
    energies: np.ndarray
    events: list
    status: str
    n_steps: int
    min_distance: float
    max_energy_drift: float

    @property
    def initial(self):
        return PhaseState(self.qs[0].copy(), self.ps[0].copy(), self.ts[0])

    @property
    def final(self):
        return PhaseState(self.qs[-1].copy(), self.ps[-1].copy(), self.ts[-1])

    @property
    def direction(self):
        return 1.0 if self.ts[-1] >= self.ts[0] else -1.0

    def sample(self, i):
        return PhaseState(self.qs[i].copy(), self.ps[i].copy(), self.ts[i])

    def _bracket(self, t):
        ts = self.ts if self.direction > 0 else -self.ts
        tt = t if self.direction > 0 else -t
        i = int(np.searchsorted(ts, tt, side="right")) - 1
        return min(max(i, 0), len(self.ts) - 2) if len(self.ts) > 1 else 0

    def state_at(self, t):
        """Dense evaluation: a partial splitting step from the sample to the
        left of t (the same map family that generated the samples)."""
        if len(self.ts) == 1 or t == self.ts[0]:
            return self.sample(0)
        i = self._bracket(t)
        dt = t - self.ts[i]
        if dt == 0.0:
            return self.sample(i)
        q, p = kernels.split_step(self.cfg.centres3, self.cfg.strengths_arr,
                                  self.qs[i], self.ps[i], dt,
                                  int(self.nearest[i]),
                                  self.settings.splitting_order)
        return PhaseState(q, p, t)

    def radius_at(self, t):
        return float(np.linalg.norm(self.state_at(t).q))

    def pericentre_events(self, min_depth=math.inf):
        return [e for e in self.events
                if e.kind == "pericentre" and e.value <= min_depth]

    def to_csv(self, path):
        """Columns: t, q.., p.., H, nearest, dmin (d columns per vector)."""
        d = self.cfg.dimension
        cols = (["t"] + [f"q{a}" for a in "xyz"[:d]] + [f"p{a}" for a in "xyz"[:d]]
                + ["H", "nearest", "dmin"])
        with open(path, "w") as fh:
            fh.write(",".join(cols) + "\n")
            for i in range(len(self.ts)):
                row = ([self.ts[i]] + list(self.qs[i][:d]) + list(self.ps[i][:d])
                       + [self.energies[i]])
                fh.write(",".join(f"{v:.17g}" for v in row)
                         + f",{int(self.nearest[i])},{self.dmin[i]:.17g}\n")


def nearest_centre(cfg, q):
    """Index of the closest centre (ties broken by the smallest index)."""
    q3 = _pad3(q)
    k, _ = kernels.nearest_centre_dist(cfg.centres3, q3[0], q3[1], q3[2])
    return k


def split_step(cfg, state, h, l=None, order=None, settings=None):
    """One splitting step of size h with dominant centre l (default nearest)."""
    if l is None:
        l = nearest_centre(cfg, state.q)
    if order is None:
        order = (settings or IntegratorSettings()).splitting_order
    q, p = kernels.split_step(cfg.centres3, cfg.strengths_arr,
                              state.q, state.p, h, l, order)
    return PhaseState(q, p, state.t + h)


def integrate(cfg, x0, t_final, settings=None, stop_on_escape=False,
              stop_radius=None, h_ref=None, raise_on_abort=True):
    """Integrate from x0 until its time stamp reaches x0.t + t_final.

    t_final may be negative.  With ``stop_on_escape`` the run ends as soon as
    the state passes the escape test in the direction of integration; with
    ``stop_radius`` it ends when |q| exceeds that radius.  Aborts (collision
    guard, step limit) raise unless ``raise_on_abort`` is false, in which case
    the partial trajectory is returned with its status.
    """
    settings = (settings or IntegratorSettings()).resolved(cfg)
    x0 = x0 if isinstance(x0, PhaseState) else PhaseState(*x0)
    e0 = energy(cfg, x0) if h_ref is None else h_ref
    stop_mode = 0
    rvir = 0.0
    if stop_on_escape:
        if e0 <= 0.0:
            raise NCentreError("escape stopping requires positive energy")
        stop_mode = 1
        rvir = virial_radius_cached(cfg, e0)
    elif stop_radius is not None:
        stop_mode = 2
    else:
        # Still log virial crossings when they are defined.
        rvir = virial_radius_cached(cfg, e0) if e0 > 0.0 else 0.0

    t0 = x0.t
    t1 = x0.t + t_final
    cap = 16384
    ev_cap = 4096
    chunks = []
    events = []
    q, p, t = x0.q.copy(), x0.p.copy(), t0
    total_steps = 0
    min_dist = math.inf
    max_drift = 0.0
    status = kernels.STATUS_TIME

    while True:
        ts = np.empty(cap)
        qs = np.empty((cap, 3))
        ps = np.empty((cap, 3))
        dmins = np.empty(cap)
        nears = np.empty(cap, dtype=np.int64)
        ens = np.empty(cap)
        ev_t = np.empty(ev_cap)
        ev_kind = np.empty(ev_cap, dtype=np.int64)
        ev_centre = np.empty(ev_cap, dtype=np.int64)
        ev_aux = np.empty(ev_cap)
        status, n_samp, n_steps, n_ev, md, drift = kernels.integrate_core(
            cfg.centres3, cfg.strengths_arr, q, p, t, t1,
            settings.base_step, settings.d_ref, settings.far_scale,
            settings.hop_rmin, settings.collision_guard,
            settings.energy_tol, e0, settings.splitting_order,
            stop_mode, rvir, float(stop_radius or 0.0),
            settings.max_steps - total_steps,
            ts, qs, ps, dmins, nears, ens,
            ev_t, ev_kind, ev_centre, ev_aux)
        first = 1 if chunks else 0  # resumed chunks repeat the seam sample
        chunks.append((ts[first:n_samp], qs[first:n_samp], ps[first:n_samp],
                       dmins[first:n_samp], nears[first:n_samp], ens[first:n_samp]))
        kinds = ("pericentre", "switch", "virial")
        for j in range(n_ev):
            events.append(Event(kinds[ev_kind[j]], float(ev_t[j]),
                                int(ev_centre[j]), float(ev_aux[j])))
        total_steps += n_steps
        min_dist = min(min_dist, md)
        max_drift = max(max_drift, drift)
        if status in (kernels.STATUS_BUFFER_FULL, kernels.STATUS_EVENT_FULL):
            q = qs[n_samp - 1].copy()
            p = ps[n_samp - 1].copy()
            t = float(ts[n_samp - 1])
            continue
        break

    traj = Trajectory(
        cfg=cfg, settings=settings,
        ts=np.concatenate([c[0] for c in chunks]),
        qs=np.concatenate([c[1] for c in chunks]),
        ps=np.concatenate([c[2] for c in chunks]),
        dmin=np.concatenate([c[3] for c in chunks]),
        nearest=np.concatenate([c[4] for c in chunks]),
        energies=np.concatenate([c[5] for c in chunks]),
        events=events, status=_STATUS_NAMES.get(status, str(status)),
        n_steps=total_steps, min_distance=min_dist, max_energy_drift=max_drift)

    if raise_on_abort:
        if status == kernels.STATUS_COLLISION:
            raise CollisionAbort(
                f"state entered the collision guard (min distance {min_dist:.3e})",
                trajectory=traj)
        if status == kernels.STATUS_STEP_LIMIT:
            raise StepLimit(f"exceeded {settings.max_steps} steps", trajectory=traj)
        if status == kernels.STATUS_ENERGY:
            raise NCentreError(
                f"energy drift {max_drift:.3e} exceeded tolerance "
                f"{settings.energy_tol:.3e}")
    return traj


def _brent(f, a, b, fa, fb, xtol):
    """Standard Brent root finder on a sign-changing bracket."""
    if fa == 0.0:
        return a
    if fb == 0.0:
        return b
    if fa * fb > 0.0:
        raise ValueError("root not bracketed")
    c, fc = a, fa
    d = e = b - a
    for _ in range(200):
        if fb * fc > 0.0:
            c, fc = a, fa
            d = e = b - a
        if abs(fc) < abs(fb):
            a, b, c = b, c, b
            fa, fb, fc = fb, fc, fb
        tol1 = 2.0 * 2.22e-16 * abs(b) + 0.5 * xtol
        xm = 0.5 * (c - b)
        if abs(xm) <= tol1 or fb == 0.0:
            return b
        if abs(e) >= tol1 and abs(fa) > abs(fb):
            s = fb / fa
            if a == c:
                pp = 2.0 * xm * s
                qq = 1.0 - s
            else:
                qq = fa / fc
                rr = fb / fc
                pp = s * (2.0 * xm * qq * (qq - rr) - (b - a) * (rr - 1.0))
                qq = (qq - 1.0) * (rr - 1.0) * (s - 1.0)
            if pp > 0.0:
                qq = -qq
            pp = abs(pp)
            if 2.0 * pp < min(3.0 * xm * qq - abs(tol1 * qq), abs(e * qq)):
                e = d
                d = pp / qq
            else:
                d = xm
                e = d
        else:
            d = xm
            e = d
        a, fa = b, fb
        b += d if abs(d) > tol1 else math.copysign(tol1, xm)
        fb = f(b)
    return b


def find_radius_crossings(traj, radius, time_tol=1e-10):
    """All crossings of |q| = radius, refined in time on the dense output.

    Returns a list of (t, state, direction) with direction +1 for outward
    crossings (in physical time) and -1 for inward ones, ordered along the
    trajectory.  Interior minima of |q| within single steps are checked so
    grazing double-crossings in the far field are not missed.
    """
    if radius <= 0.0:
        raise ValueError("radius must be positive")
    out = []
    rr = np.linalg.norm(traj.qs, axis=1)
    eta = np.einsum("ij,ij->i", traj.qs, traj.ps) * traj.direction
    ff = rr - radius
    fa = ff[:-1].copy()
    fb = ff[1:]
    fa[fa == 0.0] = np.where(fb[fa == 0.0] > 0, -1e-300, 1e-300)
    crossing_steps = np.where(fa * fb < 0.0)[0]
    # A radial turning point inside a step can hide a grazing double
    # crossing even when the endpoint signs agree.
    turning_steps = np.where((eta[:-1] < 0.0) & (eta[1:] >= 0.0)
                             & (fa > 0.0) & (fb > 0.0))[0]

    def fval(t):
        return traj.radius_at(t) - radius

    pairs = []
    for i in crossing_steps:
        pairs.append((traj.ts[i], traj.ts[i + 1], fa[i], fb[i]))
    sig = traj.direction
    for i in turning_steps:
        tm = _brent(lambda t: float(traj.state_at(t).q @ traj.state_at(t).p) * sig,
                    traj.ts[i], traj.ts[i + 1], eta[i], eta[i + 1], time_tol)
        fm = fval(tm)
        if fm < 0.0:
            pairs.append((traj.ts[i], tm, fa[i], fm))
            pairs.append((tm, traj.ts[i + 1], fm, fb[i]))
    for (t_lo, t_hi, f_lo, f_hi) in pairs:
        t_star = _brent(fval, t_lo, t_hi, f_lo, f_hi, time_tol)
        state = traj.state_at(t_star)
        outward = float(state.q @ state.p) > 0.0
        out.append((t_star, state, 1 if outward else -1))
    out.sort(key=lambda c: c[0] * traj.direction)
    return out


def refine_event_time(traj, func, t_lo, t_hi, time_tol=1e-13):
    """Root of func(state) between two trajectory times on the dense output."""
    f = lambda t: func(traj.state_at(t))
    return _brent(f, t_lo, t_hi, f(t_lo), f(t_hi), time_tol)


def integrate_with_tangent(cfg, x0, t_final, settings=None):
    """Integrate and accumulate the tangent map along the trajectory.

    Returns (final_state, monodromy) where monodromy is the product of the
    per-step analytic Jacobians (kick Hessians and Kepler-drift state
    transition matrices), restricted to the canonical coordinates of the
    configuration's dimension.  Each factor is symplectic, so the product is
    symplectic to roundoff.
    """
    settings = (settings or IntegratorSettings()).resolved(cfg)
    d = cfg.dimension
    q = x0.q.copy()
    p = x0.p.copy()
    t = 0.0
    jac = np.eye(6)
    sigma = 1.0 if t_final >= 0.0 else -1.0
    cents = cfg.centres3
    zs = cfg.strengths_arr
    guard_steps = settings.max_steps
    steps = 0
    while sigma * (t_final - t) > 0.0:
        if steps >= guard_steps:
            raise StepLimit("tangent integration exceeded max_steps")
        l, dmin = kernels.nearest_centre_dist(cents, q[0], q[1], q[2])
        h_eff = settings.base_step * min(1.0, dmin / settings.d_ref) \
            * max(1.0, dmin / settings.far_scale)
        dt = min(h_eff, abs(t_final - t))
        rel = q - cents[l]
        eta = float(rel @ p)
        if sigma * eta < 0.0:
            mu_l = zs[l]
            h_l = 0.5 * float(p @ p) - mu_l / dmin
            l2 = float(np.cross(rel, p) @ np.cross(rel, p))
            t_peri = kernels.radial_time_from_pericentre(h_l, mu_l, l2, dmin)
            fred = math.sqrt(max(0.0, mu_l * mu_l + 2.0 * h_l * l2))
            rmin_l = (-mu_l + fred) / (2 * h_l) if h_l != 0.0 else l2 / (2 * mu_l)
            # Tangent runs hop a deep swing as soon as it fits one base step:
            # crawling into the funnel would compose Jacobian factors of size
            # 1/r whose product cancellation drowns in roundoff, while the
            # single drift STM across the swing is analytic and benign.
            if (rmin_l <= settings.hop_rmin
                    and 0.0 < 2.0 * t_peri <= max(h_eff, settings.base_step)
                    and 2.0 * t_peri < abs(t_final - t)):
                dt = 2.0 * t_peri * (1.0 + 1e-9)
        q, p, step_jac = kernels.split_step_tangent(
            cents, zs, q, p, sigma * dt, l, settings.splitting_order)
        jac = step_jac @ jac
        t += sigma * dt
        steps += 1
    idx = list(range(d)) + list(range(3, 3 + d))
    return PhaseState(q, p, x0.t + t_final), jac[np.ix_(idx, idx)]
