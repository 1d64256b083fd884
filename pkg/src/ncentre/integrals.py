"""Smooth conserved quantities built from scattering asymptotics.

The components are f_0 = H and, for k = 1..d-1,

    f_k(x) = p_k^+(x) * exp(-exp(C(g) <tau(x)>)),   <tau> = sqrt(1 + tau^2),

with C(g) = C2/(g-1), extended by 0 off the scattering set.  The double
exponential flattens f_k so hard near trapped and bounded orbits that the
extension stays smooth (of Gevrey class g); numerically it underflows for
<tau> beyond about log(745)/C(g), so log-domain values are carried along.

Also provides finite-difference Poisson brackets, an independence (rank)
diagnostic for the map (f_0, .., f_{d-1}), and the closed-form separation
constant of the two-centre problem as an analytic cross-check.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import model, scattering
from .errors import (NCentreError, NoConvergence, NotTwoCentres,
                     StencilFailure, ValidationError)
from .model import PhaseState, energy

_UNDERFLOW_EXPONENT = 700.0


@dataclass(frozen=True)
class GevreyParams:
    """Gevrey index g > 1 and the flow-estimate constant C2 > 0.

    C2 enters only through C(g) = C2/(g-1); conservation and involution hold
    for any positive value, so it is exposed as configuration.  The optional
    energy window restricts where the integrals are certified.
    """

    g: float = 2.0
    c2: float = 1.0
    e_low: float | None = None
    e_high: float | None = None

    def __post_init__(self):
        if self.g <= 1.0:
            raise ValidationError("Gevrey index must exceed 1")
        if self.c2 <= 0.0:
            raise ValidationError("C2 must be positive")

    @property
    def c_of_g(self):
        return self.c2 / (self.g - 1.0)

    def components(self, dimension):
        """Momentum components entering the integral family (d - 1 of them)."""
        return (1,) if dimension == 2 else (1, 2)

    def check_window(self, e_val):
        if self.e_low is not None and e_val < self.e_low:
            raise ValidationError(f"energy {e_val} below window [{self.e_low}, ..]")
        if self.e_high is not None and e_val > self.e_high:
            raise ValidationError(f"energy {e_val} above window [.., {self.e_high}]")

    def damping(self, tau):
        """exp(-exp(C(g) <tau>)) and its log, underflow-safe."""
        inner = self.c_of_g * math.sqrt(1.0 + tau * tau)
        if inner > _UNDERFLOW_EXPONENT:
            return 0.0, -math.inf
        outer = math.exp(inner)
        log_damp = -outer
        return (math.exp(log_damp) if outer < _UNDERFLOW_EXPONENT else 0.0), log_damp

    def evaluate(self, cfg, rec):
        """(values, log|values|) of f_1..f_{d-1} from a ScatterRecord."""
        comps = self.components(cfg.dimension)
        if not rec.classification.is_scattering or rec.tau is None:
            return tuple(0.0 for _ in comps), tuple(-math.inf for _ in comps)
        damp, log_damp = self.damping(rec.tau)
        vals = []
        logs = []
        for k in comps:
            pk = float(rec.p_plus[k - 1])
            vals.append(pk * damp)
            logs.append(math.log(abs(pk)) + log_damp if pk != 0.0 else -math.inf)
        return tuple(vals), tuple(logs)


@dataclass
class GevreyValues:
    f0: float
    values: tuple
    log_values: tuple
    classification: str
    tau: float | None
    p_plus: np.ndarray | None
    horizon_ambiguous: bool = False


@dataclass
class BracketReport:
    value: float
    scale: float
    step: float
    grad_a: np.ndarray
    grad_b: np.ndarray

    @property
    def relative(self):
        return abs(self.value) / self.scale if self.scale > 0.0 else math.inf


@dataclass
class RankReport:
    singular_values: list
    noise_floors: list
    full_rank: list

    @property
    def fraction_full(self):
        if not self.full_rank:
            return 0.0
        return sum(self.full_rank) / len(self.full_rank)


def gevrey_integral(cfg, x, params=None, settings=None,
                    horizon=scattering.DEFAULT_HORIZON,
                    j_max=scattering.DEFAULT_JMAX):
    """All components of the integral family at one state.

    Non-scattering states get the value 0; a horizon-limited classification
    additionally sets ``horizon_ambiguous`` (the true value may be nonzero
    for a slow scatterer that escapes beyond the horizon).
    """
    params = params or GevreyParams()
    if cfg.dimension == 2:
        cfg.require_attracting_if_planar()
    e0 = energy(cfg, x)
    params.check_window(e0)
    rec = scattering.scatter_record(cfg, x, horizon, settings, j_max,
                                    gevrey=params)
    return GevreyValues(
        f0=e0,
        values=rec.f_values,
        log_values=rec.log_f_values,
        classification=rec.classification.kind,
        tau=rec.tau,
        p_plus=rec.p_plus,
        horizon_ambiguous=("horizon-ambiguous" in rec.flags),
    )


def _fd_vector_gradient(cfg, func, x, step, shrink=3):
    """Central-difference gradient of a vector function of the canonical
    coordinates, with one Richardson level.

    Returns (grad, noise) where grad has shape (m, 2d) and noise is the
    per-row relative magnitude of the Richardson correction.  Shrinks the
    step on evaluation failures; raises StencilFailure when that runs out.
    """
    d = cfg.dimension
    x0 = x.coords(d)
    scales = np.concatenate([
        np.full(d, max(1.0, float(np.linalg.norm(x.q)))),
        np.full(d, max(1.0, float(np.linalg.norm(x.p)))),
    ])
    last_exc = None
    for attempt in range(shrink):
        h_rel = step / (4.0 ** attempt)
        try:
            grads = {}
            for level, h_scale in ((0, h_rel), (1, 0.5 * h_rel)):
                cols = []
                for i in range(2 * d):
                    dx = np.zeros(2 * d)
                    dx[i] = h_scale * scales[i]
                    fp = np.atleast_1d(np.asarray(
                        func(PhaseState.from_coords(x0 + dx, d)), dtype=float))
                    fm = np.atleast_1d(np.asarray(
                        func(PhaseState.from_coords(x0 - dx, d)), dtype=float))
                    cols.append((fp - fm) / (2.0 * dx[i]))
                grads[level] = np.stack(cols, axis=1)
            rich = (4.0 * grads[1] - grads[0]) / 3.0
            corr = rich - grads[1]
            noise = np.array([
                float(np.linalg.norm(corr[r]))
                / max(1e-300, float(np.linalg.norm(rich[r])))
                for r in range(rich.shape[0])])
            return rich, noise
        except (NoConvergence, NCentreError) as exc:
            last_exc = exc
            continue
    raise StencilFailure(
        f"stencil evaluation failed down to step {step / 4.0 ** (shrink - 1)}: "
        f"{last_exc}")


def poisson_bracket(cfg, func_a, func_b, x, step=1e-5):
    """{F_a, F_b} at x by central differences with Richardson refinement.

    func_a/func_b map a PhaseState to a float.  Returns a BracketReport with
    the bracket value and the reference scale |grad F_a| |grad F_b|.
    """
    d = cfg.dimension
    ga, _ = _fd_vector_gradient(cfg, lambda s: (func_a(s),), x, step)
    gb, _ = _fd_vector_gradient(cfg, lambda s: (func_b(s),), x, step)
    ga = ga[0]
    gb = gb[0]
    val = float(ga[:d] @ gb[d:] - ga[d:] @ gb[:d])
    scale = float(np.linalg.norm(ga) * np.linalg.norm(gb))
    return BracketReport(value=val, scale=scale, step=step, grad_a=ga, grad_b=gb)


def grad_hamiltonian(cfg, x):
    """Analytic gradient of f_0 = H in canonical coordinates (q.., p..)."""
    d = cfg.dimension
    return np.concatenate([model.grad_potential(cfg, x.q), x.p[:d]])


def independence_rank(cfg, params, points, settings=None,
                      horizon=scattering.DEFAULT_HORIZON,
                      j_max=scattering.DEFAULT_JMAX, step=1e-5,
                      noise_factor=1e3):
    """Rank diagnostics of F = (f_0, f_1[, f_2]) at the given states.

    Rows of the finite-difference Jacobian are normalized (rank is invariant
    under row scaling); a point counts as full rank when the smallest
    singular value of the normalized Jacobian exceeds ``noise_factor`` times
    the worst per-row relative Richardson correction.
    """
    params = params or GevreyParams()
    d = cfg.dimension
    comps = params.components(d)

    def fk_vector(state):
        rec = scattering.scatter_record(cfg, state, horizon, settings, j_max,
                                        gevrey=params)
        if not rec.classification.is_scattering or rec.f_values is None:
            raise NoConvergence("stencil point is not a scattering state")
        return rec.f_values

    sigmas = []
    noises = []
    fulls = []
    for x in points:
        grad_f0 = grad_hamiltonian(cfg, x)
        grads, noise = _fd_vector_gradient(cfg, fk_vector, x, step)
        rows = np.vstack([grad_f0, grads])
        norms = np.linalg.norm(rows, axis=1)
        if np.any(norms == 0.0):
            sigmas.append([0.0] * (1 + len(comps)))
            noises.append(1.0)
            fulls.append(False)
            continue
        normalized = rows / norms[:, None]
        svals = np.linalg.svd(normalized, compute_uv=False)
        floor = float(np.max(noise)) if len(noise) else 0.0
        sigmas.append(svals.tolist())
        noises.append(floor)
        fulls.append(bool(svals[-1] > noise_factor * max(floor, 1e-14)))
    return RankReport(singular_values=sigmas, noise_floors=noises,
                      full_rank=fulls)


def two_centre_constant(cfg, x):
    """Separation constant of the two-centre problem.

    Hamilton-Jacobi separation in prolate elliptic coordinates about the two
    centres gives, in the meridional plane (z along the axis, rho across),

        G = (c^2 xi^2 - z^2) p_z^2 + (z^2 - c^2 eta^2) p_rho^2
            - 2 z rho p_z p_rho + p_phi^2 / (1 - eta^2)
            + 2 c (Z_1 - Z_2) eta + 2 c^2 E eta^2,

    with 2c the centre separation, eta = (r_1 - r_2)/(2c) and
    c^2 xi^2 = z^2 + rho^2 + c^2 - c^2 eta^2 (the azimuthal term is absent
    in the planar problem).  Conserved along the flow for n = 2.
    """
    if cfg.n != 2:
        raise NotTwoCentres(f"two-centre constant needs n = 2, got n = {cfg.n}")
    s1 = cfg.centres3[0]
    s2 = cfg.centres3[1]
    z1, z2 = cfg.strengths
    mid = 0.5 * (s1 + s2)
    axis = s2 - s1
    c = 0.5 * float(np.linalg.norm(axis))
    n_hat = axis / (2.0 * c)
    rel = x.q - mid
    z_par = float(rel @ n_hat)
    rho_vec = rel - z_par * n_hat
    rho = float(np.linalg.norm(rho_vec))
    r1 = float(np.linalg.norm(x.q - s1))
    r2 = float(np.linalg.norm(x.q - s2))
    eta = (r1 - r2) / (2.0 * c)
    c2xi2 = z_par * z_par + rho * rho + c * c - (c * eta) ** 2
    p_par = float(x.p @ n_hat)
    if rho > 0.0:
        rho_hat = rho_vec / rho
        p_rho = float(x.p @ rho_hat)
    else:
        p_rho = float(np.linalg.norm(x.p - p_par * n_hat))
    p_phi = float(np.cross(rel, x.p) @ n_hat)
    e_val = energy(cfg, x)
    g_val = ((c2xi2 - z_par * z_par) * p_par ** 2
             + (z_par * z_par - (c * eta) ** 2) * p_rho ** 2
             - 2.0 * z_par * rho * p_par * p_rho
             + 2.0 * c * (z1 - z2) * eta + 2.0 * c * c * e_val * eta * eta)
    if cfg.dimension == 3:
        one_m = 1.0 - eta * eta
        if abs(p_phi) > 0.0:
            g_val += p_phi ** 2 / one_m
    return g_val


def axial_angular_momentum(cfg, x):
    """Angular momentum about the centre axis (collinear configurations).

    An exact constant of the motion for any number of centres on a line.
    """
    if cfg.n == 1:
        raise ValidationError("axis undefined for a single centre")
    axis = cfg.centres3[1] - cfg.centres3[0]
    axis = axis / np.linalg.norm(axis)
    for k in range(2, cfg.n):
        rel = cfg.centres3[k] - cfg.centres3[0]
        if np.linalg.norm(rel - (rel @ axis) * axis) > 1e-12 * max(1.0, np.linalg.norm(rel)):
            raise ValidationError("centres are not collinear")
    return float(np.cross(x.q - cfg.centres3[0], x.p) @ axis)
