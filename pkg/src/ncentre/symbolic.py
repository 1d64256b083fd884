"""Symbolic dynamics of bounded orbits: words, shooting, hyperbolicity, entropy.

Bounded hyperbolic orbits at high energy shadow chains of centre visits; a
cyclic word over the centre alphabet (no immediate repetitions) is realized
as a periodic orbit by multiple shooting.  The shooting nodes live on
"section spheres": inward crossings of a sphere of radius ``section_radius``
around the visited centre.  This transversal realizes the same combinatorics
as pericentre passages but stays regular even for orbits whose pericentres
degenerate to collisions (the two-centre bounce orbit reaches its centres;
the universal-variable drift continues such passages as regularized
reflections).

Floquet multipliers come from the analytic tangent map accumulated along the
period, which keeps the product symplectic to roundoff; finite-difference
section maps could not resolve the reciprocal pairing at large multipliers.
"""

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import model
from .errors import (NCentreError, NoConvergence, ValidationError,
                     WrongItinerary)
from .flow import (IntegratorSettings, integrate, integrate_with_tangent,
                   refine_event_time)
from .model import PhaseState, energy


# ---------------------------------------------------------------------------
# Words
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SymbolWord:
    """Finite centre-visit sequence over {1..n}, read cyclically.

    Admissibility forbids immediate repetitions, including around the wrap.
    """

    letters: tuple

    def __post_init__(self):
        letters = tuple(int(k) for k in self.letters)
        if len(letters) == 0:
            raise ValidationError("empty word")
        if any(k < 1 for k in letters):
            raise ValidationError("letters are 1-based centre indices")
        m = len(letters)
        for i in range(m):
            if letters[i] == letters[(i + 1) % m]:
                raise ValidationError(
                    f"inadmissible word {letters}: repeated letter at {i}")
        object.__setattr__(self, "letters", letters)

    def __len__(self):
        return len(self.letters)

    def __iter__(self):
        return iter(self.letters)

    def __getitem__(self, i):
        return self.letters[i % len(self.letters)]

    def rotated(self, shift):
        m = len(self.letters)
        return SymbolWord(tuple(self.letters[(i + shift) % m] for i in range(m)))

    def rotations(self):
        return {self.rotated(s).letters for s in range(len(self.letters))}

    @property
    def canonical(self):
        """Lexicographically smallest rotation (class representative)."""
        return min(self.rotations())

    @property
    def primitive_period(self):
        m = len(self.letters)
        for p in range(1, m + 1):
            if m % p == 0 and all(self.letters[i] == self.letters[i % p]
                                  for i in range(m)):
                return p
        return m

    @property
    def is_primitive(self):
        return self.primitive_period == len(self.letters)

    def root(self):
        return SymbolWord(self.letters[: self.primitive_period])


def symbol_metric(u, v, window=None):
    """d(u, v) = sum_i 2^{-|i|} (1 - delta_{u_i, v_i}), exactly for periodic
    words; with ``window = (i0, i1)`` the sum is truncated to those indices."""
    u = u if isinstance(u, SymbolWord) else SymbolWord(tuple(u))
    v = v if isinstance(v, SymbolWord) else SymbolWord(tuple(v))
    pu, pv = len(u), len(v)
    if window is not None:
        i0, i1 = window
        return sum(2.0 ** -abs(i) for i in range(i0, i1 + 1) if u[i] != v[i])
    period = math.lcm(pu, pv)
    geom = 1.0 / (1.0 - 2.0 ** -period)
    total = 0.0
    for r in range(period):
        if u[r] != v[r]:
            total += 2.0 ** -r * geom
    for r in range(1, period + 1):
        if u[-r] != v[-r]:
            total += 2.0 ** -r * geom
    return total


def count_periodic_words(n, m):
    """Number of admissible cyclic sequences of length m over n letters:
    trace of A^m for the full graph without loops,
    (n-1)^m + (n-1) (-1)^m."""
    if n < 2 or m < 1:
        raise ValidationError("need n >= 2 letters and m >= 1")
    return (n - 1) ** m + (n - 1) * (-1) ** m


def enumerate_words(n, m):
    """All admissible cyclic sequences of exact length m (not reduced)."""
    out = []
    for seq in itertools.product(range(1, n + 1), repeat=m):
        if all(seq[i] != seq[(i + 1) % m] for i in range(m)):
            out.append(seq)
    return out


def word_classes(n, m):
    """Admissible words of length m up to cyclic rotation, as SymbolWords
    (lexicographically smallest rotation), primitive and imprimitive alike."""
    seen = set()
    out = []
    for seq in enumerate_words(n, m):
        w = SymbolWord(seq)
        if w.canonical in seen:
            continue
        seen.add(w.canonical)
        out.append(SymbolWord(w.canonical))
    return out


# ---------------------------------------------------------------------------
# Shooting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ShootingSettings:
    tol: float = 1e-9
    max_newton: int = 40
    section_radius: float | None = None   # default: min pair distance / 4
    fd_step: float = 1e-7
    max_leg_time: float = 50.0
    armijo_factor: float = 1e-4
    integrator: IntegratorSettings = field(default_factory=IntegratorSettings)

    def resolved(self, cfg):
        if self.section_radius is not None:
            return self
        pair = cfg.min_pair_distance
        if not math.isfinite(pair):
            raise ValidationError("shooting needs at least two centres")
        return ShootingSettings(
            tol=self.tol, max_newton=self.max_newton,
            section_radius=pair / 4.0, fd_step=self.fd_step,
            max_leg_time=self.max_leg_time, armijo_factor=self.armijo_factor,
            integrator=self.integrator)


@dataclass
class PeriodicOrbit:
    word: SymbolWord
    energy: float
    period: float
    section_states: list
    multipliers: np.ndarray
    residual: float
    newton_trace: list
    leg_times: list

    @property
    def n_bounces(self):
        return len(self.word)


@dataclass
class PoincareEvent:
    """A pericentre passage with respect to the momentarily nearest centre.

    The radial velocity with respect to that centre vanishes at the event
    (local minimum of the distance).
    """

    state: PhaseState
    centre: int
    time: float
    r_min: float


def pericentre_sections(traj, max_depth=None):
    """Refined pericentre passages of a trajectory as PoincareEvents."""
    out = []
    for ev in traj.events:
        if ev.kind != "pericentre":
            continue
        if max_depth is not None and ev.value > max_depth:
            continue
        out.append(PoincareEvent(state=traj.state_at(ev.t),
                                 centre=ev.centre, time=ev.t,
                                 r_min=ev.value))
    return out


@dataclass
class HyperbolicityReport:
    lambda_max: float
    lambda_min: float
    unit_multipliers: list
    pairing_defects: list
    per_bounce_exponent: float
    is_hyperbolic: bool


def polygon_guess(cfg, word, e_val, settings=None):
    """Initial shooting nodes shadowing the straight-line polygon through
    the word's centres.

    Each node sits on the inbound section sphere of its centre, displaced
    from the incoming edge by the impact parameter that makes the local
    Kepler swing turn the incoming edge into the outgoing one
    (tan(theta_d / 2) = Z / (2 H_loc b)); the momentum points along the
    incoming edge with magnitude sqrt(2 (E - V)).  For back-to-back words
    the impact parameter degenerates to zero: states on the segment.
    """
    word = word if isinstance(word, SymbolWord) else SymbolWord(tuple(word))
    settings = (settings or ShootingSettings()).resolved(cfg)
    if e_val <= 0.0:
        raise ValidationError("polygon guess needs E > 0")
    nodes = []
    m = len(word)
    r_sec = settings.section_radius
    for i in range(m):
        l = word[i] - 1
        s_l = cfg.centres3[l]
        prev = cfg.centres3[word[i - 1] - 1]
        nxt = cfg.centres3[word[(i + 1) % m] - 1]
        u_in = s_l - prev
        u_in = u_in / np.linalg.norm(u_in)
        u_out = nxt - s_l
        u_out = u_out / np.linalg.norm(u_out)
        # Local swing energy: total energy minus the other centres' potential
        # at the vertex.
        w_l = -sum(cfg.strengths[k] / np.linalg.norm(s_l - cfg.centres3[k])
                   for k in range(cfg.n) if k != l)
        h_loc = e_val - w_l
        cos_t = min(1.0, max(-1.0, float(u_in @ u_out)))
        theta_d = math.acos(cos_t)
        perp = u_out - cos_t * u_in
        norm_perp = np.linalg.norm(perp)
        z_l = cfg.strengths[l]
        if norm_perp < 1e-12 or abs(math.pi - theta_d) < 1e-12:
            # Back-to-back visit: radial infall on the segment.
            q = s_l - r_sec * u_in
            p_dir = u_in
        else:
            # Place the node exactly on the local hyperbola that turns the
            # incoming edge into the outgoing one: impact parameter from
            # tan(theta_d/2) = Z / (2 H b), then the closed-form state of
            # the incoming branch at the section radius.
            n_hat = perp / norm_perp
            b = min(z_l / (2.0 * h_loc * math.tan(0.5 * theta_d)), 0.9 * r_sec)
            # The other centres push the approach arc sideways before the
            # whip; left uncorrected, that drift shifts the effective impact
            # parameter and the whip amplifies it by ~1/b.  Aim with the
            # drift subtracted so the swing sees the designed b.
            grad_w = np.zeros(3)
            for k in range(cfg.n):
                if k == l:
                    continue
                dvec = s_l - cfg.centres3[k]
                grad_w += cfg.strengths[k] * dvec / np.linalg.norm(dvec) ** 3
            a_w = -grad_w
            a_perp = a_w - float(a_w @ u_in) * u_in
            tau_in = r_sec / math.sqrt(2.0 * h_loc)
            b_vec = -b * n_hat - 0.5 * a_perp * tau_in ** 2
            b = float(np.linalg.norm(b_vec))
            b = min(b, 0.9 * r_sec) if b > 0 else 1e-12
            n_hat = -b_vec / b
            l_vec = np.cross(-b * n_hat, u_in)
            l_norm = b * math.sqrt(2.0 * h_loc)
            l_hat = l_vec / np.linalg.norm(l_vec)
            f_norm = math.sqrt(z_l ** 2 + 2.0 * h_loc * l_norm ** 2)
            cos_star = min(1.0, max(-1.0, -z_l / f_norm))
            sin_star = math.sqrt(1.0 - cos_star ** 2)
            f_hat = -cos_star * u_in - sin_star * np.cross(l_hat, u_in)
            g_hat = np.cross(l_hat, f_hat)
            cos_nu = min(1.0, max(-1.0,
                                  (l_norm ** 2 / r_sec - z_l) / f_norm))
            nu = -math.acos(cos_nu)  # incoming branch, before pericentre
            q_hat = math.cos(nu) * f_hat + math.sin(nu) * g_hat
            q = s_l + r_sec * q_hat
            pval = 2.0 * h_loc * r_sec ** 2 + 2.0 * z_l * r_sec - l_norm ** 2
            rdot = -math.sqrt(max(pval, 0.0)) / r_sec
            p_loc = rdot * q_hat + (l_norm / r_sec) * np.cross(l_hat, q_hat)
            p_dir = p_loc / np.linalg.norm(p_loc)
        v = model.potential(cfg, q)
        if e_val <= v:
            raise ValidationError("energy below the potential on the polygon")
        p = math.sqrt(2.0 * (e_val - v)) * p_dir
        nodes.append(PhaseState(q.copy(), p))
    return nodes


def _section_event_map(cfg, state, target_centre, settings):
    """Integrate until the first inward crossing of the target section
    sphere; returns (arrival_state, flight_time).

    The event function is |q - s_target| - r_sec with negative radial
    velocity at the crossing.  Integration proceeds in chunks of the typical
    leg timescale so converged legs cost what they take.
    """
    r_sec = settings.section_radius
    s_t = cfg.centres3[target_centre - 1]
    speed = max(float(np.linalg.norm(state.p)), 0.1)
    chunk = max(0.25, 3.0 * cfg.min_pair_distance / speed)
    elapsed = 0.0
    current = state
    while elapsed < settings.max_leg_time:
        span = min(chunk, settings.max_leg_time - elapsed)
        traj = integrate(cfg, current, span, settings.integrator,
                         raise_on_abort=False)
        if traj.status != "time":
            raise NoConvergence(f"leg integration ended with {traj.status}")
        dist = np.linalg.norm(traj.qs - s_t, axis=1) - r_sec
        rad_v = np.einsum("ij,ij->i", traj.qs - s_t, traj.ps)
        hits = np.where((dist[:-1] > 0.0) & (dist[1:] <= 0.0)
                        & (rad_v[:-1] < 0.0))[0]
        for i in hits:
            t_star = refine_event_time(
                traj, lambda s: float(np.linalg.norm(s.q - s_t)) - r_sec,
                traj.ts[i], traj.ts[i + 1])
            arrival = traj.state_at(t_star)
            return arrival, elapsed + (t_star - traj.ts[0])
        elapsed += span
        current = traj.final
    raise NoConvergence(
        f"no inward crossing of the section sphere of centre {target_centre} "
        f"within {settings.max_leg_time} time units")


def _pack(nodes, d):
    return np.concatenate([s.coords(d) for s in nodes])


def _unpack(vec, m, d):
    return [PhaseState.from_coords(vec[i * 2 * d:(i + 1) * 2 * d], d)
            for i in range(m)]


def _leg_arrivals(cfg, word, nodes, settings):
    """(arrival coords, flight time) of every leg."""
    d = cfg.dimension
    m = len(word)
    arrivals = []
    times = []
    for i in range(m):
        target = word[(i + 1) % m]
        arrival, t_leg = _section_event_map(cfg, nodes[i], target, settings)
        arrivals.append(arrival.coords(d))
        times.append(t_leg)
    return arrivals, times


def _assemble_residual(cfg, word, e_val, nodes, arrivals, settings):
    d = cfg.dimension
    m = len(word)
    r_sec = settings.section_radius
    blocks = [arrivals[i] - nodes[(i + 1) % m].coords(d) for i in range(m)]
    cons = []
    for i in range(m):
        s_i = cfg.centres3[word[i] - 1]
        cons.append(float(np.linalg.norm(nodes[i].q - s_i)) - r_sec)
        cons.append(energy(cfg, nodes[i]) - e_val)
    return np.concatenate(blocks + [np.array(cons)])


def _residual(cfg, word, e_val, nodes, settings):
    """Stacked shooting residual: leg mismatches plus per-node section and
    energy constraints.  Returns (residual vector, leg times, arrivals)."""
    arrivals, times = _leg_arrivals(cfg, word, nodes, settings)
    return _assemble_residual(cfg, word, e_val, nodes, arrivals, settings), \
        times, arrivals


def find_periodic_orbit(cfg, word, e_val, settings=None):
    """Realize an admissible word as a periodic orbit by multiple shooting.

    Damped Gauss-Newton on the stacked section-to-section maps with
    finite-difference Jacobians; the converged orbit's pericentre itinerary
    is checked against the word (WrongItinerary otherwise).  Imprimitive
    words are realized through their primitive root and reported as the
    corresponding multiple cover.
    """
    word = word if isinstance(word, SymbolWord) else SymbolWord(tuple(word))
    settings = (settings or ShootingSettings()).resolved(cfg)
    if max(word.letters) > cfg.n:
        raise ValidationError("word letter exceeds number of centres")
    if not word.is_primitive:
        root_orbit = find_periodic_orbit(cfg, word.root(), e_val, settings)
        return _cover_orbit(cfg, word, root_orbit, settings)
    d = cfg.dimension
    m = len(word)
    nodes = polygon_guess(cfg, word, e_val, settings)
    vec = _pack(nodes, d)
    res, times, arrivals = _residual(cfg, word, e_val, nodes, settings)
    trace = [float(np.linalg.norm(res, np.inf))]
    for iteration in range(settings.max_newton):
        if trace[-1] < settings.tol:
            break
        jac = _fd_jacobian(cfg, word, e_val, vec, arrivals, settings)
        step, *_ = np.linalg.lstsq(jac, -res, rcond=None)
        alpha = 1.0
        base = float(np.linalg.norm(res))
        accepted = False
        for _ in range(25):
            try:
                cand_nodes = _unpack(vec + alpha * step, m, d)
                cand_res, cand_times, cand_arr = _residual(
                    cfg, word, e_val, cand_nodes, settings)
            except (NoConvergence, NCentreError):
                alpha *= 0.5
                continue
            if np.linalg.norm(cand_res) < (1.0 - settings.armijo_factor * alpha) * base:
                vec = vec + alpha * step
                res = cand_res
                times = cand_times
                arrivals = cand_arr
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            raise NoConvergence(
                f"shooting stalled for word {word.letters} at residual "
                f"{trace[-1]:.3e}", diagnostics=trace)
        trace.append(float(np.linalg.norm(res, np.inf)))
    if trace[-1] >= settings.tol:
        raise NoConvergence(
            f"shooting did not reach tol for word {word.letters}: "
            f"residual {trace[-1]:.3e}", diagnostics=trace)
    contractions = [trace[i] / trace[i + 1] for i in range(len(trace) - 1)
                    if trace[i + 1] > 0.0]
    if contractions and max(contractions) < 2.0:
        warnings.warn(
            f"weak Newton contraction for word {word.letters}: the energy "
            f"may be near or below the hyperbolicity threshold", stacklevel=2)
    nodes = _unpack(vec, m, d)
    period = float(sum(times))
    multipliers = _floquet_multipliers(cfg, nodes[0], period, settings)
    orbit = PeriodicOrbit(word=word, energy=e_val, period=period,
                          section_states=nodes,
                          multipliers=multipliers,
                          residual=trace[-1], newton_trace=trace,
                          leg_times=list(times))
    _check_itinerary(cfg, orbit, settings)
    return orbit


def _fd_jacobian(cfg, word, e_val, vec, arrivals, settings):
    """Jacobian of the stacked residual, exploiting its block structure.

    Node i enters leg i (finite differences of the event map, one leg per
    coordinate), the matching block of leg i-1 (an exact -I), and its own two
    constraints (analytic gradients).
    """
    d = cfg.dimension
    m = len(word)
    n_var = 2 * d * m
    jac = np.zeros((n_var + 2 * m, n_var))
    h = settings.fd_step
    nodes = _unpack(vec, m, d)
    for i in range(m):
        cols = slice(2 * d * i, 2 * d * (i + 1))
        rows_leg = slice(2 * d * i, 2 * d * (i + 1))
        target = word[(i + 1) % m]
        for j in range(2 * d):
            pert = nodes[i].coords(d).copy()
            pert[j] += h
            arr_p, _ = _section_event_map(
                cfg, PhaseState.from_coords(pert, d), target, settings)
            jac[rows_leg, 2 * d * i + j] = (arr_p.coords(d) - arrivals[i]) / h
        rows_prev = slice(2 * d * ((i - 1) % m), 2 * d * (((i - 1) % m) + 1))
        jac[rows_prev, cols] -= np.eye(2 * d)
        s_i = cfg.centres3[word[i] - 1]
        rel = (nodes[i].q - s_i)[:d]
        grad_sec = np.concatenate([rel / np.linalg.norm(rel), np.zeros(d)])
        grad_e = np.concatenate([model.grad_potential(cfg, nodes[i].q),
                                 nodes[i].p[:d]])
        jac[n_var + 2 * i, cols] = grad_sec
        jac[n_var + 2 * i + 1, cols] = grad_e
    return jac


def _floquet_multipliers(cfg, node, period, settings):
    """Floquet multipliers from the analytic tangent monodromy.

    The contracting half of the spectrum is extracted from the symplectic
    inverse -Omega M^T Omega, whose expanding eigenvalues are well
    conditioned; plain eig on M would bury eigenvalues of size 1/|lambda_max|
    under its absolute error eps |M|.  The reciprocal agreement between the
    two independent extractions is the pairing defect reported downstream.
    """
    tight = IntegratorSettings(
        base_step=settings.integrator.base_step,
        energy_tol=settings.integrator.energy_tol,
        collision_guard=settings.integrator.collision_guard,
        splitting_order=4,
        max_steps=settings.integrator.max_steps,
        d_ref=settings.integrator.d_ref,
        far_scale=settings.integrator.far_scale,
        hop_rmin=settings.integrator.hop_rmin)
    _, mono = integrate_with_tangent(cfg, node, period, tight)
    d = cfg.dimension
    omega = np.block([[np.zeros((d, d)), np.eye(d)],
                      [-np.eye(d), np.zeros((d, d))]])
    inv_sym = -omega @ mono.T @ omega
    eig_fwd = sorted(np.linalg.eigvals(mono), key=lambda z: -abs(z))
    eig_inv = sorted(np.linalg.eigvals(inv_sym), key=lambda z: -abs(z))
    n_pairs = d - 1
    expanding = eig_fwd[:n_pairs]
    contracting = [1.0 / z for z in eig_inv[:n_pairs]]
    unit = eig_fwd[n_pairs:2 * d - n_pairs]
    return np.array(expanding + unit + contracting)


def _check_itinerary(cfg, orbit, settings):
    """The converged orbit must visit its word's centres in order: compare
    the deep pericentre events over one period with the word."""
    traj = integrate(cfg, orbit.section_states[0], orbit.period,
                     settings.integrator, raise_on_abort=False)
    visits = [e.centre + 1 for e in traj.events
              if e.kind == "pericentre" and e.value < settings.section_radius]
    m = len(orbit.word)
    if len(visits) != m:
        raise WrongItinerary(
            f"orbit for {orbit.word.letters} makes {len(visits)} deep "
            f"visits, expected {m}", orbit=orbit)
    target = list(orbit.word.letters)
    for shift in range(m):
        if [target[(i + shift) % m] for i in range(m)] == visits:
            return
    raise WrongItinerary(
        f"orbit visits {visits}, word is {orbit.word.letters}", orbit=orbit)


def _cover_orbit(cfg, word, root_orbit, settings):
    """Multiple cover of a primitive orbit: period and multipliers compose."""
    k = len(word) // len(root_orbit.word)
    mult = root_orbit.multipliers ** k
    nodes = []
    # The cover's section sequence repeats the root's (rotated to the word).
    root = root_orbit.word.letters
    shift = None
    for s in range(len(root)):
        if tuple(word.letters[:len(root)]) == tuple(
                root[(i + s) % len(root)] for i in range(len(root))):
            shift = s
            break
    if shift is None:
        raise WrongItinerary(
            f"{word.letters} is not a cover of {root}", orbit=root_orbit)
    rotated = root_orbit.section_states[shift:] + root_orbit.section_states[:shift]
    for _ in range(k):
        nodes.extend(rotated)
    return PeriodicOrbit(word=word, energy=root_orbit.energy,
                         period=k * root_orbit.period,
                         section_states=nodes,
                         multipliers=mult,
                         residual=root_orbit.residual,
                         newton_trace=list(root_orbit.newton_trace),
                         leg_times=list(root_orbit.leg_times) * k)


def hyperbolicity_report(orbit):
    """Classify the Floquet spectrum: two trivial unit multipliers (flow and
    energy directions), the rest in reciprocal pairs; per-bounce expansion
    exponent log|lambda_max| / m."""
    mults = sorted(orbit.multipliers, key=lambda z: abs(z))
    n = len(mults)
    # |mults| sorted ascending: contracting ... unit pair ... expanding.
    lam_max = abs(mults[-1])
    lam_min = abs(mults[0])
    n_pairs = (n - 2) // 2
    unit = [abs(m) for m in mults[n_pairs:n - n_pairs]]
    pairing = []
    for k in range(n_pairs):
        pairing.append(abs(mults[k] * mults[n - 1 - k]) - 1.0)
    exponent = math.log(lam_max) / len(orbit.word) if lam_max > 0 else 0.0
    return HyperbolicityReport(
        lambda_max=lam_max,
        lambda_min=lam_min,
        unit_multipliers=unit,
        pairing_defects=pairing,
        per_bounce_exponent=exponent,
        is_hyperbolic=lam_max > 1.0 + 1e-6,
    )


# ---------------------------------------------------------------------------
# Entropy
# ---------------------------------------------------------------------------

@dataclass
class EntropyRow:
    length: int
    classes: int
    attempted: int
    realized_classes: int
    realized_sequences: int
    sequence_count: int
    mean_bounce_time: float
    rate: float


@dataclass
class EntropyReport:
    rows: list
    h_est: float
    orbits: dict
    failures: dict

    @property
    def fully_realized(self):
        return all(r.realized_classes == r.classes for r in self.rows)


def entropy_estimate(cfg, e_val, m_max, settings=None):
    """Attempt every admissible word class up to length m_max and estimate
    the topological entropy from the realized class counts.

    h_est = max over m of log(realized classes of length m) / (m T_m) with
    T_m the mean single-bounce flight time at that length.  Counting classes
    (not raw sequences) makes a single-orbit alphabet contribute zero, as it
    must: two centres support exactly one bounce orbit and no exponential
    growth.  Imprimitive classes are realized through their primitive root.
    """
    settings = (settings or ShootingSettings()).resolved(cfg)
    if cfg.n < 2:
        raise ValidationError("entropy estimate needs n >= 2")
    orbits = {}
    failures = {}
    rows = []
    h_est = 0.0
    for m in range(2, m_max + 1):
        classes = word_classes(cfg.n, m)
        realized = []
        for w in classes:
            try:
                if w.is_primitive:
                    orbit = find_periodic_orbit(cfg, w, e_val, settings)
                else:
                    root = SymbolWord(SymbolWord(w.root().letters).canonical)
                    if root.letters in orbits:
                        orbit = _cover_orbit(cfg, w, orbits[root.letters],
                                             settings)
                    else:
                        orbit = find_periodic_orbit(cfg, w, e_val, settings)
                orbits[w.letters] = orbit
                realized.append(w)
            except (NoConvergence, WrongItinerary, NCentreError) as exc:
                failures[w.letters] = str(exc)
        n_seq = sum(len(w.rotations()) for w in realized)
        bounce_times = [orbits[w.letters].period / len(w) for w in realized]
        t_mean = float(np.mean(bounce_times)) if bounce_times else math.nan
        if realized and len(realized) >= 1 and t_mean > 0:
            rate = math.log(len(realized)) / (m * t_mean)
        else:
            rate = 0.0
        h_est = max(h_est, rate)
        rows.append(EntropyRow(
            length=m, classes=len(classes), attempted=len(classes),
            realized_classes=len(realized), realized_sequences=n_seq,
            sequence_count=count_periodic_words(cfg.n, m),
            mean_bounce_time=t_mean, rate=rate))
    return EntropyReport(rows=rows, h_est=h_est, orbits=orbits,
                         failures=failures)
