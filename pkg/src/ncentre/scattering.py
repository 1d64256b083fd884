"""Orbit classification, far-field comparison data, asymptotic momenta, time delay.

Escaping orbits are compared with the Kepler flow of the total charge
Z_inf about the origin.  The comparison data is extracted by osculating the
trajectory at a geometric ladder of radii R_j = R_vir 2^j and Richardson
extrapolating the elements in 1/R; the energy component is pinned to the
conserved H(x), which the extrapolation reproduces to its own accuracy.

Time delay is the excess occupancy of large balls:
tau = lim_R [ t_inside(R) - (T_in(R) + T_out(R)) / 2 ] with the comparison
ball times evaluated in closed form from the extrapolated elements.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import kepler
from .errors import CollisionAbort, NCentreError, NoConvergence, StepLimit
from .flow import IntegratorSettings, find_radius_crossings, integrate
from .model import PhaseState, energy, virial_radius_cached

DEFAULT_HORIZON = 1e3
DEFAULT_JMAX = 8

SCATTERING = "Scattering"
TRAPPED_FORWARD = "TrappedForward"
TRAPPED_BACKWARD = "TrappedBackward"
BOUNDED_TO_HORIZON = "BoundedToHorizon"
COLLISION_FLAGGED = "CollisionFlagged"


@dataclass(frozen=True)
class Classification:
    kind: str
    horizon: float
    t_escape_plus: float | None = None
    t_escape_minus: float | None = None

    @property
    def is_scattering(self):
        return self.kind == SCATTERING


@dataclass
class MoellerDatum:
    """Far-field Kepler comparison data in one time direction."""

    direction: int              # +1 or -1
    energy: float               # H(x); the Moeller transforms conserve it
    energy_extrapolated: float
    l_vec: np.ndarray           # angular momentum about the origin
    f_vec: np.ndarray           # Runge-Lenz vector with charge Z_inf
    ladder_radii: np.ndarray
    residuals: np.ndarray       # extrapolated-element increments per rung

    @property
    def l_norm(self):
        return float(np.linalg.norm(self.l_vec))


@dataclass
class ScatterRecord:
    state: PhaseState
    classification: Classification
    energy: float
    p_plus: np.ndarray | None = None
    p_minus: np.ndarray | None = None
    tau: float | None = None
    tau_error: float | None = None
    f_values: tuple | None = None
    log_f_values: tuple | None = None
    flags: tuple = ()
    diagnostics: dict = field(default_factory=dict)


def _leg(cfg, x0, direction, horizon, settings, stop_on_escape, stop_radius, e0):
    span = direction * horizon
    return integrate(cfg, x0, span, settings, stop_on_escape=stop_on_escape,
                     stop_radius=stop_radius, h_ref=e0, raise_on_abort=False)


def classify(cfg, x0, horizon=DEFAULT_HORIZON, settings=None):
    """Sort a positive-energy state into scattering/trapped/bounded bins.

    A detected escape is definitive (escape permanence); failure to escape
    within the horizon is reported as such, never asserted as boundedness.
    """
    e0 = energy(cfg, x0)
    if e0 <= 0.0:
        raise NCentreError("classification requires H(x) > 0")
    settings = (settings or IntegratorSettings()).resolved(cfg)
    legs = {}
    for direction in (+1, -1):
        traj = _leg(cfg, x0, direction, horizon, settings, True, None, e0)
        if traj.status == "collision":
            return Classification(COLLISION_FLAGGED, horizon)
        legs[direction] = traj
    esc_p = legs[+1].status == "escape"
    esc_m = legs[-1].status == "escape"
    t_p = legs[+1].final.t if esc_p else None
    t_m = legs[-1].final.t if esc_m else None
    if esc_p and esc_m:
        kind = SCATTERING
    elif esc_m and not esc_p:
        kind = TRAPPED_FORWARD
    elif esc_p and not esc_m:
        kind = TRAPPED_BACKWARD
    else:
        kind = BOUNDED_TO_HORIZON
    return Classification(kind, horizon, t_p, t_m)


def _ladder_radii(cfg, e0, j_max):
    rvir = virial_radius_cached(cfg, e0)
    return np.array([rvir * 2.0 ** j for j in range(j_max + 1)])


def _osculate_origin(cfg, state):
    """(E_inf, L, F) of a state w.r.t. the origin with charge Z_inf."""
    z = cfg.z_inf
    r = float(np.linalg.norm(state.q))
    e_inf = 0.5 * float(state.p @ state.p) - z / r
    l_vec = np.cross(state.q, state.p)
    f_vec = np.cross(state.p, l_vec) - z * state.q / r
    return e_inf, l_vec, f_vec


def _extrapolate_ladder(values):
    """Chained Richardson in 1/R on a geometric (factor 2) radius ladder.

    The far-field error of the osculating elements carries both 1/R and
    1/R^2 tails (the monopole is removed by the Z_inf matching; the dipole
    and the accumulated tail torque remain), so two levels are eliminated:
    B_j = 2 A_{j+1} - A_j, then C_j = (4 B_{j+1} - B_j) / 3.  Returns
    (limit, residuals) with residuals the norms of the increments of the
    final sequence (their decrease certifies the power-law model).
    """
    vals = np.asarray(values, dtype=float)
    extr = 2.0 * vals[1:] - vals[:-1]
    if len(extr) >= 2:
        extr = (4.0 * extr[1:] - extr[:-1]) / 3.0
    if len(extr) >= 2:
        extr = (8.0 * extr[1:] - extr[:-1]) / 7.0
    if len(extr) == 1:
        return extr[0], np.array([])
    residuals = np.linalg.norm(np.diff(extr, axis=0), axis=1)
    return extr[-1], residuals


class _ScatterPath:
    """Both time directions of a scattering orbit, integrated past the ladder.

    For each ladder radius the combined path has exactly one inward and one
    outward crossing in physical time (escape permanence above the virial
    radius); the inward one carries the incoming comparison data, the outward
    one the outgoing data, and their separation is the ball occupancy time.
    """

    def __init__(self, cfg, x0, settings, j_max, e0):
        self.radii = _ladder_radii(cfg, e0, j_max)
        r_stop = self.radii[-1] * 1.05
        crossings = []
        for direction in (+1, -1):
            traj = integrate(cfg, x0, direction * 1e7, settings,
                             stop_radius=r_stop, h_ref=e0, raise_on_abort=False)
            if traj.status != "radius":
                raise NoConvergence(
                    f"leg ({direction:+d}) ended with status {traj.status} "
                    f"before reaching the comparison ladder",
                    diagnostics=traj.status)
            for j, radius in enumerate(self.radii):
                for t_star, state, sense in find_radius_crossings(traj, radius):
                    crossings.append((j, t_star, state, sense))
        self.entry = {}
        self.exit = {}
        for j in range(len(self.radii)):
            inward = [c for c in crossings if c[0] == j and c[3] == -1]
            outward = [c for c in crossings if c[0] == j and c[3] == +1]
            if not inward or not outward:
                # The orbit's closest approach to the origin can exceed the
                # lower rungs (large-impact flybys); the ladder starts at the
                # first radius the orbit actually enters.
                continue
            self.entry[j] = min(inward, key=lambda c: c[1])
            self.exit[j] = max(outward, key=lambda c: c[1])
        self.rungs = sorted(self.entry.keys())
        if len(self.rungs) < 4:
            raise NoConvergence(
                f"only {len(self.rungs)} ladder radii crossed; "
                "comparison extrapolation needs at least 4")
        if self.rungs != list(range(self.rungs[0], self.rungs[-1] + 1)):
            raise NoConvergence("ladder crossings are not contiguous")

    def crossing_state(self, j, direction):
        return (self.exit[j] if direction > 0 else self.entry[j])[2]

    def t_inside(self, j):
        return self.exit[j][1] - self.entry[j][1]


def moeller_datum(cfg, x, direction, settings=None, j_max=DEFAULT_JMAX,
                  path=None, require_contraction=True):
    """Far-field Kepler elements of the orbit through x in one time direction.

    Osculates w.r.t. the origin with charge Z_inf at radii R_vir 2^j and
    Richardson-extrapolates in 1/R.  Residuals must contract (factor >= 2 per
    doubling on the average) unless they are already at the roundoff floor.
    """
    settings = (settings or IntegratorSettings()).resolved(cfg)
    e0 = energy(cfg, x)
    if path is None:
        path = _ScatterPath(cfg, x, settings, j_max, e0)
    rows = []
    for j in path.rungs:
        e_inf, l_vec, f_vec = _osculate_origin(cfg, path.crossing_state(j, direction))
        rows.append(np.concatenate([[e_inf], l_vec, f_vec]))
    limit, residuals = _extrapolate_ladder(rows)
    scale = max(1.0, float(np.linalg.norm(rows[-1])))
    floor = 1e-12 * scale
    live = residuals[residuals > floor]
    if require_contraction and len(live) >= 3:
        ratios = live[:-1] / live[1:]
        if np.median(ratios) < 2.0:
            raise NoConvergence(
                "comparison elements fail to contract along the radius ladder",
                diagnostics={"residuals": residuals.tolist()})
    return MoellerDatum(
        direction=direction,
        energy=e0,
        energy_extrapolated=float(limit[0]),
        l_vec=limit[1:4],
        f_vec=limit[4:7],
        ladder_radii=path.radii.copy(),
        residuals=residuals,
    )


def _datum_asymptote(cfg, datum):
    """Asymptotic momentum from a comparison datum.

    Direction +1 gives the outgoing asymptote, -1 the incoming one.  The
    speed uses the conserved energy exactly; |F| is recomputed from the
    Kepler identity so the asymptote angle stays consistent for any ladder
    noise in the extrapolated vectors.
    """
    z = cfg.z_inf
    speed = math.sqrt(2.0 * datum.energy)
    l_norm = datum.l_norm
    f_norm = math.sqrt(max(0.0, z * z + 2.0 * datum.energy * l_norm ** 2))
    fv = np.linalg.norm(datum.f_vec)
    if fv == 0.0 or l_norm == 0.0:
        # Radial degenerate limit.
        u = datum.f_vec / fv if fv > 0.0 else datum.l_vec * 0.0
        sgn = -1.0 if z > 0.0 else 1.0
        return speed * sgn * u * (1.0 if datum.direction > 0 else -1.0)
    f_hat = datum.f_vec / fv
    l_hat = datum.l_vec / l_norm
    g_hat = np.cross(l_hat, f_hat)
    cos_t = min(1.0, max(-1.0, -z / f_norm))
    sin_t = math.sqrt(1.0 - cos_t * cos_t)
    if datum.direction > 0:
        return speed * (cos_t * f_hat + sin_t * g_hat)
    return speed * (-cos_t * f_hat + sin_t * g_hat)


def asymptotic_momentum(cfg, x, direction, settings=None, j_max=DEFAULT_JMAX,
                        datum=None):
    """p+ (direction +1) or p- (direction -1) of a scattering state."""
    if datum is None:
        datum = moeller_datum(cfg, x, direction, settings, j_max)
    return _datum_asymptote(cfg, datum)


def _comparison_time(cfg, datum, radius):
    """Ball time of the comparison orbit, closed form, 0 if the ball is missed."""
    z = cfg.z_inf
    l2 = float(datum.l_vec @ datum.l_vec)
    return kepler.time_in_ball_hl(datum.energy, z, l2, radius)


def time_delay(cfg, x, settings=None, j_max=DEFAULT_JMAX, tol=1e-6,
               path=None, require_cauchy=True):
    """Time delay of a scattering state with an error estimate.

    Evaluates tau_j = t_inside(R_j) - (T_in + T_out)/2 on the radius ladder
    and Richardson-extrapolates in 1/R; the reported error is the last
    extrapolated increment.  Raises NoConvergence when the ladder fails the
    Cauchy criterion at the requested tolerance.
    """
    settings = (settings or IntegratorSettings()).resolved(cfg)
    e0 = energy(cfg, x)
    if path is None:
        path = _ScatterPath(cfg, x, settings, j_max, e0)
    datum_p = moeller_datum(cfg, x, +1, settings, j_max, path=path)
    datum_m = moeller_datum(cfg, x, -1, settings, j_max, path=path)
    taus = []
    for j in path.rungs:
        radius = path.radii[j]
        t_in = path.t_inside(j)
        t_cmp = 0.5 * (_comparison_time(cfg, datum_p, radius)
                       + _comparison_time(cfg, datum_m, radius))
        taus.append(t_in - t_cmp)
    taus = np.array(taus)
    extr = 2.0 * taus[1:] - taus[:-1]
    if len(extr) >= 2:
        extr = (4.0 * extr[1:] - extr[:-1]) / 3.0
    if len(extr) >= 2:
        extr = (8.0 * extr[1:] - extr[:-1]) / 7.0
    increments = np.abs(np.diff(extr))
    tau = float(extr[-1])
    err = float(increments[-1]) if len(increments) else math.inf
    if require_cauchy and len(increments) and err > tol:
        raise NoConvergence(
            f"time-delay ladder stalled at increment {err:.3e} > tol {tol:.3e}",
            diagnostics={"taus": taus.tolist()})
    return tau, err, taus


def scatter_record(cfg, x0, horizon=DEFAULT_HORIZON, settings=None,
                   j_max=DEFAULT_JMAX, gevrey=None):
    """Full per-state scattering record; shared pipeline for batch drivers.

    Never raises for per-state dynamical outcomes: failures are recorded in
    ``flags`` and the affected fields stay None.
    """
    settings = (settings or IntegratorSettings()).resolved(cfg)
    x0 = x0 if isinstance(x0, PhaseState) else PhaseState(*x0)
    e0 = energy(cfg, x0)
    flags = []
    cls = classify(cfg, x0, horizon, settings)
    rec = ScatterRecord(state=x0, classification=cls, energy=e0)
    if cls.kind == BOUNDED_TO_HORIZON:
        flags.append("horizon-ambiguous")
    if not cls.is_scattering:
        rec.flags = tuple(flags)
        if gevrey is not None:
            rec.f_values = tuple(0.0 for _ in gevrey.components(cfg.dimension))
            rec.log_f_values = tuple(-math.inf for _ in rec.f_values)
        return rec
    try:
        path = _ScatterPath(cfg, x0, settings, j_max, e0)
        datum_p = moeller_datum(cfg, x0, +1, settings, j_max, path=path)
        datum_m = moeller_datum(cfg, x0, -1, settings, j_max, path=path)
        rec.p_plus = _datum_asymptote(cfg, datum_p)
        rec.p_minus = _datum_asymptote(cfg, datum_m)
        rec.diagnostics["moeller_residual_plus"] = (
            float(datum_p.residuals[-1]) if len(datum_p.residuals) else 0.0)
        rec.diagnostics["moeller_residual_minus"] = (
            float(datum_m.residuals[-1]) if len(datum_m.residuals) else 0.0)
        tau, err, ladder = time_delay(cfg, x0, settings, j_max,
                                      path=path, require_cauchy=False)
        rec.tau = tau
        rec.tau_error = err
        rec.diagnostics["tau_ladder"] = ladder.tolist()
    except (NoConvergence, CollisionAbort, StepLimit) as exc:
        flags.append(f"pipeline:{type(exc).__name__}")
        rec.flags = tuple(flags)
        return rec
    if gevrey is not None:
        vals, logs = gevrey.evaluate(cfg, rec)
        rec.f_values = vals
        rec.log_f_values = logs
    rec.flags = tuple(flags)
    return rec
