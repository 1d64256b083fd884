"""Closed-form Kepler mechanics with respect to a single centre.

Everything here treats one centre of strength Z in isolation: osculating
elements (local energy, angular momentum, Runge-Lenz vector, signed
pericentre time, pericentre distance), exact propagation via universal
variables, hyperbolic asymptote geometry, and the closed-form time an orbit
spends inside a ball around the centre.
"""

import math
from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .errors import (BelowPericentre, DegenerateElements, ExactCollision,
                     NotHyperbolic)
from .model import PhaseState, _pad3


@dataclass(frozen=True)
class KeplerElements:
    """Osculating two-body data of a state with respect to one centre."""

    centre: np.ndarray          # centre position (R^3)
    strength: float             # Z of the centre
    energy: float               # H_l = |p|^2/2 - Z/r
    angular_momentum: np.ndarray  # L_l = (q - s) x p
    runge_lenz: np.ndarray      # F_l = p x L_l - Z (q - s)/r
    pericentre_time: float      # signed time since pericentre passage
    r_min: float                # pericentre distance

    @property
    def l_norm(self):
        return float(np.linalg.norm(self.angular_momentum))

    @property
    def f_norm(self):
        return float(np.linalg.norm(self.runge_lenz))

    @property
    def eccentricity(self):
        """|F|/|Z|; undefined (inf) for a zero-strength comparison charge."""
        if self.strength == 0.0:
            return math.inf
        return self.f_norm / abs(self.strength)

    @property
    def pericentre_direction(self):
        f = self.f_norm
        if f == 0.0:
            raise DegenerateElements("zero Runge-Lenz vector")
        return self.runge_lenz / f


def r_min_from(h_loc, z, l2):
    """Pericentre distance; both branches of the closed form."""
    if h_loc != 0.0:
        return (-z + math.sqrt(max(0.0, z * z + 2.0 * h_loc * l2))) / (2.0 * h_loc)
    return l2 / (2.0 * z)


def pericentre_time(h_loc, z, l2, r, eta):
    """Signed time since pericentre: the radial quadrature between r_min and
    r, carrying the sign of the radial velocity <q - s, p>."""
    t_abs = kernels.radial_time_from_pericentre(h_loc, z, l2, r)
    return math.copysign(t_abs, eta) if eta != 0.0 else 0.0


def osculating_elements(z, s, state, f_min=None):
    """Instantaneous Kepler elements of ``state`` relative to a centre at
    ``s`` with strength ``z``.

    f_min is the smallest admissible |F_l| for the pericentral chart; the
    default |z|/2 follows the chart's validity condition |F|^2 > Z^2/4.
    Pass f_min=0 to skip the check (used internally for diagnostics).
    """
    s3 = _pad3(s)
    rel = state.q - s3
    r = float(np.linalg.norm(rel))
    h_loc = 0.5 * float(state.p @ state.p) - z / r
    l_vec = np.cross(rel, state.p)
    f_vec = np.cross(state.p, l_vec) - z * rel / r
    if f_min is None:
        f_min = 0.5 * abs(z)
    f_norm = float(np.linalg.norm(f_vec))
    if f_norm < f_min:
        raise DegenerateElements(
            f"|F| = {f_norm:.3e} below chart threshold {f_min:.3e}")
    l2 = float(l_vec @ l_vec)
    eta = float(rel @ state.p)
    return KeplerElements(
        centre=s3,
        strength=float(z),
        energy=h_loc,
        angular_momentum=l_vec,
        runge_lenz=f_vec,
        pericentre_time=pericentre_time(h_loc, z, l2, r, eta),
        r_min=r_min_from(h_loc, z, l2),
    )


def kepler_propagate(z, s, state, dt):
    """Exact flow of the one-centre Hamiltonian |p|^2/2 - Z/|q - s| for dt.

    Universal-variable (Stumpff) formulation: uniformly valid for elliptic,
    parabolic and hyperbolic local motion and for either sign of Z.  The
    elements (H_l, L_l, F_l) are conserved to roundoff.
    """
    s3 = _pad3(s)
    try:
        q1, p1 = kernels.kepler_drift(float(z), state.q - s3, state.p, float(dt))
    except ZeroDivisionError:
        raise ExactCollision("drift started exactly at the centre") from None
    return PhaseState(q1 + s3, p1, state.t + dt)


def asymptote_data(el):
    """Outgoing and incoming asymptotic momenta (p_out, p_in) of a hyperbolic
    local orbit.

    Both have norm sqrt(2 H_l) and lie in the plane orthogonal to L_l; the
    deflection angle theta between p_in and p_out satisfies
    sin(theta/2) = |Z|/|F| (eccentricity |F|/|Z|).
    """
    if el.energy <= 0.0:
        raise NotHyperbolic(f"asymptotes need H_l > 0, got {el.energy}")
    speed = math.sqrt(2.0 * el.energy)
    l_norm = el.l_norm
    f_norm = el.f_norm
    if f_norm == 0.0:
        raise DegenerateElements("zero Runge-Lenz vector")
    f_hat = el.runge_lenz / f_norm
    if l_norm == 0.0:
        # Radial degenerate limit: motion along the apse line.
        out = -f_hat if el.strength > 0.0 else f_hat
        return speed * out, -speed * out
    l_hat = el.angular_momentum / l_norm
    g_hat = np.cross(l_hat, f_hat)
    cos_t = -el.strength / f_norm
    cos_t = min(1.0, max(-1.0, cos_t))
    sin_t = math.sqrt(1.0 - cos_t * cos_t)
    p_out = speed * (cos_t * f_hat + sin_t * g_hat)
    p_in = speed * (-cos_t * f_hat + sin_t * g_hat)
    return p_out, p_in


def time_in_ball(el, radius):
    """Total time the local Kepler orbit spends with |q - s| <= radius.

    Closed form: twice the pericentre-to-radius quadrature, using the
    symmetry of the orbit about its pericentre.  Requires a hyperbolic
    (or zero-charge free) orbit so the occupancy is finite.
    """
    if el.energy <= 0.0:
        raise NotHyperbolic(f"time_in_ball needs H_l > 0, got {el.energy}")
    if radius < el.r_min:
        raise BelowPericentre(
            f"radius {radius} below pericentre distance {el.r_min}")
    l2 = float(el.angular_momentum @ el.angular_momentum)
    return 2.0 * kernels.radial_time_from_pericentre(
        el.energy, el.strength, l2, radius)


def time_in_ball_hl(h_loc, z, l2, radius):
    """time_in_ball from raw (H_l, Z, L^2); 0 when the ball misses the orbit."""
    if h_loc <= 0.0:
        raise NotHyperbolic(f"time_in_ball needs H_l > 0, got {h_loc}")
    if radius <= r_min_from(h_loc, z, l2):
        return 0.0
    return 2.0 * kernels.radial_time_from_pericentre(h_loc, z, l2, radius)
