import math

import numpy as np
import pytest
from scipy.integrate import quad, solve_ivp

from ncentre import kepler
from ncentre.errors import BelowPericentre, DegenerateElements, NotHyperbolic
from ncentre.model import PhaseState


def kepler_rhs(t, y, mu):
    q = y[:3]
    p = y[3:]
    r = np.linalg.norm(q)
    return np.concatenate([p, -mu * q / r ** 3])


def integrate_kepler_ivp(mu, q0, p0, dt):
    """High-accuracy direct integration oracle for the pure Kepler problem."""
    sol = solve_ivp(kepler_rhs, (0.0, dt), np.concatenate([q0, p0]),
                    method="DOP853", rtol=1e-13, atol=1e-13, args=(mu,))
    return sol.y[:3, -1], sol.y[3:, -1]


class TestOsculatingElements:
    def test_hand_example(self):
        # Z=1, s=0, q=(1,0,0), p=(0,2,0): H=1, L=(0,0,2), F=(3,0,0),
        # r_min = (-1 + sqrt(1+8))/2 = 1, at pericentre so T = 0.
        el = kepler.osculating_elements(
            1.0, (0, 0, 0), PhaseState((1, 0, 0), (0, 2, 0)))
        assert el.energy == pytest.approx(1.0)
        assert el.angular_momentum == pytest.approx([0.0, 0.0, 2.0])
        assert el.runge_lenz == pytest.approx([3.0, 0.0, 0.0])
        assert el.r_min == pytest.approx(1.0)
        assert el.pericentre_time == pytest.approx(0.0, abs=1e-14)

    def test_kepler_identity(self, rng):
        # |F|^2 = Z^2 + 2 H L^2 for random states.
        for _ in range(30):
            z = rng.uniform(-2.0, 2.0)
            if abs(z) < 0.1:
                continue
            q = rng.uniform(-2, 2, size=3)
            p = rng.uniform(-2, 2, size=3)
            try:
                el = kepler.osculating_elements(z, (0, 0, 0), PhaseState(q, p))
            except DegenerateElements:
                continue
            assert el.f_norm ** 2 == pytest.approx(
                z * z + 2.0 * el.energy * el.l_norm ** 2, rel=1e-12)

    def test_pericentre_time_sign(self, rng):
        for _ in range(30):
            q = rng.uniform(-2, 2, size=3)
            p = rng.uniform(-2, 2, size=3)
            eta = float(q @ p)
            if abs(eta) < 1e-3:
                continue
            try:
                el = kepler.osculating_elements(1.0, (0, 0, 0), PhaseState(q, p))
            except DegenerateElements:
                continue
            assert math.copysign(1.0, el.pericentre_time) == math.copysign(1.0, eta)

    def test_orthogonality(self, rng):
        for _ in range(10):
            q = rng.uniform(-2, 2, size=3)
            p = rng.uniform(-2, 2, size=3)
            try:
                el = kepler.osculating_elements(1.5, (0.3, 0, 0), PhaseState(q, p))
            except DegenerateElements:
                continue
            assert abs(el.angular_momentum @ el.runge_lenz) < 1e-12

    def test_degenerate_raises(self):
        # Circular orbit: F = 0.
        with pytest.raises(DegenerateElements):
            kepler.osculating_elements(1.0, (0, 0, 0), PhaseState((1, 0, 0), (0, 1, 0)))

    def test_pericentre_time_elliptic_against_quadrature(self):
        # Oracle: numerical quadrature of the radial time integrand.
        z = 1.0
        x = PhaseState((1.4, 0.2, 0.0), (0.1, 0.6, 0.2))
        el = kepler.osculating_elements(z, (0, 0, 0), x, f_min=0.0)
        assert el.energy < 0.0  # genuinely elliptic case
        l2 = el.l_norm ** 2
        r = np.linalg.norm(x.q)

        def integrand(rho):
            return rho / math.sqrt(2 * el.energy * rho ** 2 + 2 * z * rho - l2)

        val, err = quad(integrand, el.r_min, r, points=[el.r_min], limit=200)
        assert abs(el.pericentre_time) == pytest.approx(val, rel=1e-8)


class TestPlanarRestriction:
    def test_planar_states_keep_l_out_of_plane(self, rng):
        # d=2 embeds with z = 0; the angular momentum reduces to its scalar
        # out-of-plane component and stays there under propagation.
        for _ in range(10):
            q = np.array([rng.uniform(0.5, 2), rng.uniform(-1, 1), 0.0])
            p = np.array([rng.uniform(-1, 1), rng.uniform(0.5, 2), 0.0])
            el = kepler.osculating_elements(1.0, (0, 0, 0), PhaseState(q, p),
                                            f_min=0.0)
            assert el.angular_momentum[0] == 0.0
            assert el.angular_momentum[1] == 0.0
            y = kepler.kepler_propagate(1.0, (0, 0, 0), PhaseState(q, p), 1.3)
            assert abs(y.q[2]) < 1e-15 and abs(y.p[2]) < 1e-15


class TestKeplerPropagate:
    def test_zero_step_identity(self):
        x = PhaseState((1.0, 0.2, -0.3), (0.4, 1.1, 0.0))
        y = kepler.kepler_propagate(1.0, (0, 0, 0), x, 0.0)
        assert y.q == pytest.approx(x.q)
        assert y.p == pytest.approx(x.p)

    @pytest.mark.parametrize("z,q0,p0", [
        (1.0, (1.0, 0.0, 0.0), (0.1, 1.2, 0.0)),      # elliptic
        (1.0, (1.0, 0.0, 0.0), (0.3, 1.6, 0.2)),      # hyperbolic
        (-0.8, (1.5, 0.2, 0.0), (-0.4, 0.9, 0.1)),    # repulsive
    ])
    def test_elements_conserved(self, z, q0, p0):
        x = PhaseState(q0, p0)
        el0 = kepler.osculating_elements(z, (0, 0, 0), x, f_min=0.0)
        y = x
        for _ in range(50):
            y = kepler.kepler_propagate(z, (0, 0, 0), y, 0.17)
        el1 = kepler.osculating_elements(z, (0, 0, 0), y, f_min=0.0)
        assert el1.energy == pytest.approx(el0.energy, rel=1e-12, abs=1e-12)
        assert el1.angular_momentum == pytest.approx(el0.angular_momentum, abs=1e-12)
        assert el1.runge_lenz == pytest.approx(el0.runge_lenz, abs=5e-12)

    def test_matches_direct_integration(self):
        # Cross-oracle: high-accuracy ODE solve of the pure Kepler problem.
        mu = 1.3
        q0 = np.array([1.1, -0.4, 0.3])
        p0 = np.array([0.2, 1.1, -0.5])
        y = kepler.kepler_propagate(mu, (0, 0, 0), PhaseState(q0, p0), 10.0)
        q_ref, p_ref = integrate_kepler_ivp(mu, q0, p0, 10.0)
        assert y.q == pytest.approx(q_ref, abs=1e-10)
        assert y.p == pytest.approx(p_ref, abs=1e-10)

    def test_elliptic_period_closure(self):
        mu = 1.0
        x = PhaseState((1.0, 0.0, 0.0), (0.0, 0.9, 0.0))
        h_loc = 0.5 * 0.81 - 1.0
        a = -mu / (2 * h_loc)
        period = 2 * math.pi * math.sqrt(a ** 3 / mu)
        y = kepler.kepler_propagate(mu, (0, 0, 0), x, period)
        assert y.q == pytest.approx(x.q, abs=1e-11)
        assert y.p == pytest.approx(x.p, abs=1e-11)

    def test_offset_centre(self):
        s = np.array([2.0, -1.0, 0.5])
        x = PhaseState(s + [1.0, 0.0, 0.0], (0.0, 1.4, 0.0))
        y = kepler.kepler_propagate(1.0, s, x, 3.0)
        q_ref, p_ref = integrate_kepler_ivp(1.0, np.array([1.0, 0, 0]),
                                            np.array([0.0, 1.4, 0.0]), 3.0)
        assert y.q - s == pytest.approx(q_ref, abs=1e-10)
        assert y.p == pytest.approx(p_ref, abs=1e-10)

    def test_radial_collision_reflects(self):
        # A radial infall with E > 0 continues as the regularized bounce:
        # after twice the infall time the state returns to the start with
        # reversed momentum.
        z = 1.0
        r0 = 0.8
        e_val = 0.5
        speed = math.sqrt(2.0 * (e_val + z / r0))
        x = PhaseState((r0, 0.0, 0.0), (-speed, 0.0, 0.0))
        from ncentre._backend import kernels
        t_fall = kernels.radial_time_from_pericentre(e_val, z, 0.0, r0)
        y = kepler.kepler_propagate(z, (0, 0, 0), x, 2.0 * t_fall)
        assert y.q == pytest.approx(x.q, abs=1e-8)
        assert y.p == pytest.approx(-x.p, abs=1e-7)


class TestAsymptoteData:
    def test_speed_at_infinity(self):
        el = kepler.osculating_elements(
            1.0, (0, 0, 0), PhaseState((1, 0, 0), (0, 2, 0)))
        p_out, p_in = kepler.asymptote_data(el)
        assert np.linalg.norm(p_out) == pytest.approx(math.sqrt(2.0))
        assert np.linalg.norm(p_in) == pytest.approx(math.sqrt(2.0))

    def test_deflection_against_long_integration(self):
        # Oracle: integrate the n=1 flow for a long time in both directions
        # and measure the momentum directions.
        el = kepler.osculating_elements(
            1.0, (0, 0, 0), PhaseState((1, 0, 0), (0, 2, 0)))
        p_out, p_in = kepler.asymptote_data(el)
        assert el.eccentricity == pytest.approx(3.0)
        angle = math.acos(
            float(p_in @ p_out) / (2.0 * el.energy))
        assert angle == pytest.approx(2.0 * math.asin(1.0 / 3.0), rel=1e-12)
        t_big = 1e7
        fwd = kepler.kepler_propagate(1.0, (0, 0, 0), PhaseState((1, 0, 0), (0, 2, 0)), t_big)
        bwd = kepler.kepler_propagate(1.0, (0, 0, 0), PhaseState((1, 0, 0), (0, 2, 0)), -t_big)
        assert fwd.p == pytest.approx(p_out, abs=2e-6)
        assert bwd.p == pytest.approx(p_in, abs=2e-6)

    def test_plane_orthogonal_to_l(self):
        el = kepler.osculating_elements(
            0.7, (0, 0, 0), PhaseState((1.0, 0.3, -0.2), (0.5, 1.5, 0.4)))
        if el.energy <= 0:
            pytest.skip("not hyperbolic")
        p_out, p_in = kepler.asymptote_data(el)
        assert abs(p_out @ el.angular_momentum) < 1e-12
        assert abs(p_in @ el.angular_momentum) < 1e-12

    def test_deflection_monotone_in_l(self):
        h_loc = 1.0
        z = 1.0
        defl = []
        for l_val in (1.0, 2.0, 4.0, 8.0, 16.0):
            f = math.sqrt(z * z + 2 * h_loc * l_val ** 2)
            defl.append(2 * math.asin(z / f))
        assert all(defl[i + 1] < defl[i] for i in range(len(defl) - 1))
        assert defl[-1] < 0.1

    def test_not_hyperbolic(self):
        el = kepler.osculating_elements(
            1.0, (0, 0, 0), PhaseState((1.0, 0, 0), (0.0, 0.5, 0)), f_min=0.0)
        with pytest.raises(NotHyperbolic):
            kepler.asymptote_data(el)


class TestTimeInBall:
    def leave_time_oracle(self, z, q0, p0, radius):
        """Occupancy-time oracle: event-based high-accuracy integration."""

        def hit(t, y, mu):
            return np.linalg.norm(y[:3]) - radius

        hit.terminal = True
        hit.direction = 1.0
        sol = solve_ivp(kepler_rhs, (0.0, 1e4), np.concatenate([q0, p0]),
                        method="DOP853", rtol=1e-12, atol=1e-12,
                        events=hit, args=(z,))
        return sol.t_events[0][0]

    def test_pericentre_radius_is_zero(self):
        el = kepler.osculating_elements(
            1.0, (0, 0, 0), PhaseState((1, 0, 0), (0, 2, 0)))
        assert kepler.time_in_ball(el, el.r_min) == pytest.approx(0.0, abs=1e-12)

    def test_matches_integrated_occupancy(self, rng):
        # Oracle: start at pericentre, integrate until |q| = R, double.
        for _ in range(6):
            z = rng.uniform(0.4, 1.6)
            h_loc = rng.uniform(0.3, 2.0)
            l_val = rng.uniform(0.5, 2.0)
            r_min = kepler.r_min_from(h_loc, z, l_val ** 2)
            speed = math.sqrt(2.0 * (h_loc + z / r_min))
            q0 = np.array([r_min, 0.0, 0.0])
            p0 = np.array([0.0, speed, 0.0])
            el = kepler.osculating_elements(z, (0, 0, 0), PhaseState(q0, p0), f_min=0.0)
            radius = r_min * rng.uniform(2.0, 8.0)
            t_half = self.leave_time_oracle(z, q0, p0, radius)
            assert kepler.time_in_ball(el, radius) == pytest.approx(
                2.0 * t_half, rel=1e-8)

    def test_below_pericentre_raises(self):
        el = kepler.osculating_elements(
            1.0, (0, 0, 0), PhaseState((1, 0, 0), (0, 2, 0)))
        with pytest.raises(BelowPericentre):
            kepler.time_in_ball(el, 0.5 * el.r_min)

    def test_large_radius_expansion(self):
        # Closed form behaves like 2R/sqrt(2H) - 2 Z (2H)^{-3/2} log R + O(1):
        # an attracting centre speeds the orbit up inside the ball, so the
        # log coefficient is negative.  Fit the expansion and compare.
        z, h_loc, l_val = 1.0, 0.8, 1.3
        el_state = PhaseState((kepler.r_min_from(h_loc, z, l_val ** 2), 0, 0),
                              (0, math.sqrt(2 * (h_loc + z / kepler.r_min_from(h_loc, z, l_val ** 2))), 0))
        el = kepler.osculating_elements(z, (0, 0, 0), el_state, f_min=0.0)
        radii = np.array([2.0 ** k for k in range(14, 26)])
        times = np.array([kepler.time_in_ball(el, r) for r in radii])
        design = np.stack([np.ones_like(radii), radii, np.log(radii)], axis=1)
        coef, *_ = np.linalg.lstsq(design, times, rcond=None)
        assert coef[1] == pytest.approx(2.0 / math.sqrt(2 * h_loc), rel=1e-6)
        assert coef[2] == pytest.approx(-2.0 * z / (2 * h_loc) ** 1.5, rel=1e-3)
