"""Equivalence of the compiled kernels and the pure-Python fallback."""

import numpy as np
import pytest

import ncentre._kernels_py as kpy

cy = pytest.importorskip("ncentre._kernels_cy")

from ncentre.model import CentreConfig  # noqa: E402


@pytest.fixture(scope="module")
def cents():
    cfg = CentreConfig(2, ((0.0, 0.0), (2.0, 0.0), (1.0, 1.7)), (1.0, 0.8, -0.4))
    return cfg.centres3, cfg.strengths_arr


class TestKernelAgreement:
    def test_gfuncs(self):
        for beta in (-3.0, -1e-7, 0.0, 1e-7, 2.5):
            for x in (0.0, 1e-6, 0.3, 4.0, -2.0):
                a = kpy.gfuncs(beta, x)
                b = cy.gfuncs(beta, x)
                assert a == pytest.approx(b, rel=1e-14, abs=1e-300)

    def test_kepler_drift(self, rng):
        for _ in range(40):
            mu = rng.uniform(-1.5, 1.5)
            q = rng.uniform(-2, 2, size=3)
            p = rng.uniform(-2, 2, size=3)
            dt = rng.uniform(-2.0, 2.0)
            if np.linalg.norm(q) < 0.1:
                continue
            qa, pa = kpy.kepler_drift(mu, q, p, dt)
            qb, pb = cy.kepler_drift(mu, q, p, dt)
            assert qa == pytest.approx(qb, rel=1e-12, abs=1e-12)
            assert pa == pytest.approx(pb, rel=1e-12, abs=1e-12)

    def test_drift_stm_matches_python_and_fd(self, rng):
        mu = 1.2
        q = np.array([1.1, -0.3, 0.2])
        p = np.array([0.4, 1.0, -0.1])
        dt = 0.7
        qa, pa, ja = kpy.kepler_drift_stm(mu, q, p, dt)
        qb, pb, jb = cy.kepler_drift_stm(mu, q, p, dt)
        assert ja == pytest.approx(jb, rel=1e-11, abs=1e-11)
        # Independent oracle: central differences of the drift itself.
        eps = 1e-6
        num = np.zeros((6, 6))
        y0 = np.concatenate([q, p])
        for j in range(6):
            dy = np.zeros(6)
            dy[j] = eps
            qp, pp = kpy.kepler_drift(mu, (y0 + dy)[:3], (y0 + dy)[3:], dt)
            qm, pm = kpy.kepler_drift(mu, (y0 - dy)[:3], (y0 - dy)[3:], dt)
            num[:, j] = (np.concatenate([qp, pp]) - np.concatenate([qm, pm])) / (2 * eps)
        assert ja == pytest.approx(num, rel=2e-6, abs=2e-7)

    def test_stm_symplectic(self):
        mu = -0.7  # repulsive branch too
        q = np.array([1.4, 0.2, -0.5])
        p = np.array([0.1, 0.9, 0.3])
        _, _, jac = cy.kepler_drift_stm(mu, q, p, 1.3)
        omega = np.block([[np.zeros((3, 3)), np.eye(3)],
                          [-np.eye(3), np.zeros((3, 3))]])
        assert jac.T @ omega @ jac == pytest.approx(omega, abs=1e-12)

    def test_potential_and_gradients(self, cents, rng):
        centres, zs = cents
        for _ in range(20):
            q = rng.uniform(-3, 3, size=3)
            assert kpy.potential(centres, zs, *q) == pytest.approx(
                cy.potential(centres, zs, *q), rel=1e-14)
            for skip in (-1, 0, 2):
                assert kpy.grad_potential_skip(centres, zs, *q, skip) == \
                    pytest.approx(cy.grad_potential_skip(centres, zs, *q, skip),
                                  rel=1e-13, abs=1e-13)
            assert kpy.hess_potential_skip(centres, zs, q, 1) == pytest.approx(
                cy.hess_potential_skip(centres, zs, q, 1), rel=1e-12, abs=1e-12)

    def test_radial_time(self):
        for h_loc, mu, l2, r in ((1.0, 1.0, 0.5, 3.0), (-0.4, 1.0, 0.3, 1.5),
                                 (0.0, 0.8, 0.2, 2.0), (2.0, -0.6, 0.7, 5.0)):
            assert kpy.radial_time_from_pericentre(h_loc, mu, l2, r) == \
                pytest.approx(cy.radial_time_from_pericentre(h_loc, mu, l2, r),
                              rel=1e-13)

    def test_split_step(self, cents):
        centres, zs = cents
        q = np.array([0.4, 0.8, 0.0])
        p = np.array([1.0, -0.2, 0.0])
        for order in (2, 4):
            qa, pa = kpy.split_step(centres, zs, q, p, 1e-3, 0, order)
            qb, pb = cy.split_step(centres, zs, q, p, 1e-3, 0, order)
            assert qa == pytest.approx(qb, rel=1e-14, abs=1e-15)
            assert pa == pytest.approx(pb, rel=1e-14, abs=1e-15)

    def test_integrate_core_short_run(self, cents):
        centres, zs = cents
        out = {}
        for name, mod in (("py", kpy), ("cy", cy)):
            cap = 20000
            ts = np.empty(cap)
            qs = np.empty((cap, 3))
            ps = np.empty((cap, 3))
            dm = np.empty(cap)
            ne = np.empty(cap, dtype=np.int64)
            en = np.empty(cap)
            ev_t = np.empty(512)
            ev_k = np.empty(512, dtype=np.int64)
            ev_c = np.empty(512, dtype=np.int64)
            ev_a = np.empty(512)
            res = mod.integrate_core(
                centres, zs, np.array([0.3, 0.9, 0.0]),
                np.array([1.1, -0.4, 0.0]), 0.0, 2.0,
                1e-3, 0.197, 2.0, 2e-5, 1e-10, 1e-8, -1.4, 4,
                0, 0.0, 0.0, 10 ** 7,
                ts, qs, ps, dm, ne, en, ev_t, ev_k, ev_c, ev_a)
            status, n_samp, n_steps, n_ev, min_d, drift = res
            out[name] = (status, n_samp, n_steps, n_ev,
                         qs[n_samp - 1].copy(), ps[n_samp - 1].copy())
        assert out["py"][0] == out["cy"][0]
        assert out["py"][1] == out["cy"][1]
        assert out["py"][2] == out["cy"][2]
        assert out["py"][4] == pytest.approx(out["cy"][4], abs=1e-11)
        assert out["py"][5] == pytest.approx(out["cy"][5], abs=1e-11)
