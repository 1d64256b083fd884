"""Command-line drivers: batch scattering, orbit atlas, invariant checks.

Every output embeds the normalized configuration and its content hash; all
floats are serialized with 17 significant digits, and batch outputs are
byte-identical across parallelism degrees (records are pure functions of the
configuration and their index, gathered in input order).
"""

import argparse
import functools
import json
import math
import multiprocessing
import os
import sys

import numpy as np

from . import model, scattering
from .config import parse_config
from .errors import NCentreError, NoConvergence, ValidationError
from .flow import integrate
from .integrals import independence_rank, poisson_bracket, two_centre_constant
from .kepler import kepler_propagate
from .model import PhaseState, energy, virial_radius_cached
from .symbolic import (count_periodic_words, entropy_estimate,
                       enumerate_words, hyperbolicity_report)


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


def _json_default(obj):
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"unserializable {type(obj)}")


def _dump_json(obj, path):
    """JSON with floats at 17 significant digits (deterministic byte form)."""

    def walk(node):
        if isinstance(node, dict):
            return {k: walk(v) for k, v in node.items()}
        if isinstance(node, (list, tuple)):
            return [walk(v) for v in node]
        if isinstance(node, (float, np.floating)):
            return RawFloat(float(node))
        if isinstance(node, np.ndarray):
            return walk(node.tolist())
        if isinstance(node, (np.integer,)):
            return int(node)
        return node

    class RawFloat(float):
        def __repr__(self):
            return f"{float(self):.17g}"

    text = json.dumps(walk(obj), indent=1, default=_json_default)
    with open(path, "w") as fh:
        fh.write(text + "\n")


def _config_header(run):
    lines = [f"# config-hash: {run.content_hash}"]
    for line in run.dump().strip().splitlines():
        lines.append(f"# {line}" if line else "#")
    return "\n".join(lines) + "\n"


def beam_states(run):
    """Deterministic grid of incoming states across the impact-parameter
    range, launched from outside the virial sphere toward the target."""
    cfg = run.centres
    d = cfg.dimension
    u = np.zeros(3)
    u[:d] = np.asarray(run.batch_direction, dtype=float)
    u /= np.linalg.norm(u)
    if d == 2:
        perp = np.array([-u[1], u[0], 0.0])
    else:
        trial = np.array([0.0, 0.0, 1.0])
        if abs(u @ trial) > 0.9:
            trial = np.array([1.0, 0.0, 0.0])
        perp = np.cross(u, trial)
        perp /= np.linalg.norm(perp)
    rvir = virial_radius_cached(cfg, run.energy)
    start = run.start_radius_factor * rvir
    lo, hi = run.batch_impact
    if run.batch_count == 1:
        impacts = [0.5 * (lo + hi)]
    else:
        impacts = [lo + (hi - lo) * i / (run.batch_count - 1)
                   for i in range(run.batch_count)]
    states = []
    for b in impacts:
        q = b * perp - start * u
        v = model.potential(cfg, q)
        p = math.sqrt(2.0 * (run.energy - v)) * u
        states.append(PhaseState(q, p))
    return states


@functools.lru_cache(maxsize=4)
def _run_from_text(text):
    return parse_config(text)


def _scatter_row(args):
    text, idx = args
    run = _run_from_text(text)
    cfg = run.centres
    d = cfg.dimension
    x0 = beam_states(run)[idx]
    rec = scattering.scatter_record(cfg, x0, horizon=run.horizon,
                                    settings=run.integrator,
                                    j_max=run.ladder_jmax, gevrey=run.gevrey)
    comps = run.gevrey.components(d)
    f_vals = list(rec.f_values) if rec.f_values is not None else []
    log_vals = list(rec.log_f_values) if rec.log_f_values is not None else []
    while len(f_vals) < 2:
        f_vals.append(math.nan)
        log_vals.append(math.nan)
    row = ([idx] + [x0.q[i] for i in range(d)] + [x0.p[i] for i in range(d)]
           + [rec.energy, rec.classification.kind, rec.tau, rec.tau_error])
    for vec in (rec.p_plus, rec.p_minus):
        row += [vec[i] for i in range(d)] if vec is not None else [None] * d
    row += f_vals[:2] + log_vals[:2]
    row.append(";".join(rec.flags))
    return ",".join(_fmt(v) for v in row)


def _classify_row(args):
    text, idx = args
    run = _run_from_text(text)
    cfg = run.centres
    d = cfg.dimension
    x0 = beam_states(run)[idx]
    cls = scattering.classify(cfg, x0, horizon=run.horizon,
                              settings=run.integrator)
    row = ([idx] + [x0.q[i] for i in range(d)] + [x0.p[i] for i in range(d)]
           + [energy(cfg, x0), cls.kind, cls.t_escape_plus, cls.t_escape_minus])
    return ",".join(_fmt(v) for v in row)


def _map_ordered(func, items, jobs):
    if jobs <= 1:
        return [func(it) for it in items]
    with multiprocessing.Pool(jobs) as pool:
        return pool.map(func, items, chunksize=1)


def run_scatter_batch(run, text, out_path, jobs=None):
    d = run.centres.dimension
    axes = "xyz"[:d]
    cols = (["id"] + [f"q0{a}" for a in axes] + [f"p0{a}" for a in axes]
            + ["E", "class", "tau", "tau_err"]
            + [f"pplus{a}" for a in axes] + [f"pminus{a}" for a in axes]
            + ["f1", "f2", "logf1", "logf2", "flags"])
    rows = _map_ordered(_scatter_row,
                        [(text, i) for i in range(run.batch_count)],
                        jobs if jobs is not None else run.jobs)
    with open(out_path, "w") as fh:
        fh.write(_config_header(run))
        fh.write(",".join(cols) + "\n")
        fh.write("\n".join(rows) + "\n")
    return out_path


def run_classify_batch(run, text, out_path, jobs=None):
    d = run.centres.dimension
    axes = "xyz"[:d]
    cols = (["id"] + [f"q0{a}" for a in axes] + [f"p0{a}" for a in axes]
            + ["E", "class", "t_escape_plus", "t_escape_minus"])
    rows = _map_ordered(_classify_row,
                        [(text, i) for i in range(run.batch_count)],
                        jobs if jobs is not None else run.jobs)
    with open(out_path, "w") as fh:
        fh.write(_config_header(run))
        fh.write(",".join(cols) + "\n")
        fh.write("\n".join(rows) + "\n")
    return out_path


def run_orbit_atlas(run, out_dir):
    """Attempt every admissible word class up to m_max; JSON atlas plus a
    CSV count table.  Returns (report, fully_realized)."""
    cfg = run.centres
    e_val = run.symbolic_energy or run.energy
    report = entropy_estimate(cfg, e_val, run.symbolic_m_max, run.shooting)
    atlas = {
        "config_hash": run.content_hash,
        "energy": e_val,
        "h_est": report.h_est,
        "orbits": [],
        "failures": {str(k): v for k, v in report.failures.items()},
    }
    for letters, orbit in sorted(report.orbits.items()):
        rep = hyperbolicity_report(orbit)
        atlas["orbits"].append({
            "word": list(letters),
            "period": orbit.period,
            "residual": orbit.residual,
            "lambda_max": rep.lambda_max,
            "per_bounce_exponent": rep.per_bounce_exponent,
            "multipliers_re": [float(np.real(m)) for m in orbit.multipliers],
            "multipliers_im": [float(np.imag(m)) for m in orbit.multipliers],
            "section_states": [
                {"q": s.q[:cfg.dimension].tolist(),
                 "p": s.p[:cfg.dimension].tolist()}
                for s in orbit.section_states],
        })
    _dump_json(atlas, os.path.join(out_dir, "atlas.json"))
    with open(os.path.join(out_dir, "entropy.csv"), "w") as fh:
        fh.write(_config_header(run))
        fh.write("m,classes,attempted,realized_classes,realized_sequences,"
                 "sequence_count,mean_bounce_time,rate\n")
        for r in report.rows:
            fh.write(",".join(_fmt(v) for v in (
                r.length, r.classes, r.attempted, r.realized_classes,
                r.realized_sequences, r.sequence_count, r.mean_bounce_time,
                r.rate)) + "\n")
    return report, report.fully_realized


def _sample_scattering_states(run, count, rng):
    """Random scattering states drawn from the beam spec with jittered
    impact parameters and directions."""
    cfg = run.centres
    d = cfg.dimension
    states = []
    lo, hi = run.batch_impact
    rvir = virial_radius_cached(cfg, run.energy)
    attempts = 0
    while len(states) < count and attempts < 40 * count:
        attempts += 1
        u = np.zeros(3)
        u[:d] = rng.normal(size=d)
        u /= np.linalg.norm(u)
        perp = np.zeros(3)
        perp[:d] = rng.normal(size=d)
        perp -= (perp @ u) * u
        if np.linalg.norm(perp) < 1e-9:
            continue
        perp /= np.linalg.norm(perp)
        b = rng.uniform(lo, hi)
        q = b * perp - run.start_radius_factor * rvir * u
        v = model.potential(cfg, q)
        p = math.sqrt(2.0 * (run.energy - v)) * u
        x = PhaseState(q, p)
        cls = scattering.classify(cfg, x, horizon=run.horizon,
                                  settings=run.integrator)
        if not cls.is_scattering:
            continue
        rec = scattering.scatter_record(cfg, x, horizon=run.horizon,
                                        settings=run.integrator,
                                        j_max=run.ladder_jmax)
        if rec.tau is None or abs(rec.tau) > 4.0:
            continue  # keep the double exponential well inside range
        states.append(x)
    if len(states) < count:
        raise NoConvergence(
            f"could only sample {len(states)} scattering states")
    return states


def run_integrals_report(run, out_path, n_bracket=8, n_rank=12):
    """Measured Poisson brackets and rank statistics at sampled points."""
    cfg = run.centres
    if cfg.dimension == 2:
        cfg.require_attracting_if_planar()
    rng = np.random.default_rng(run.seed)
    pts = _sample_scattering_states(run, max(n_bracket, n_rank), rng)
    params = run.gevrey

    def f_component(k):
        def inner(state):
            rec = scattering.scatter_record(cfg, state, horizon=run.horizon,
                                            settings=run.integrator,
                                            j_max=run.ladder_jmax,
                                            gevrey=params)
            if rec.f_values is None:
                raise NoConvergence("stencil point lost scattering")
            return rec.f_values[k - 1]
        return inner

    h_func = lambda s: energy(cfg, s)
    brackets = {"f0_f1": [], "f1_f2": []}
    for x in pts[:n_bracket]:
        rep = poisson_bracket(cfg, h_func, f_component(1), x)
        brackets["f0_f1"].append(rep.relative)
        if cfg.dimension == 3:
            rep2 = poisson_bracket(cfg, f_component(1), f_component(2), x)
            brackets["f1_f2"].append(rep2.relative)
    rank = independence_rank(cfg, params, pts[:n_rank],
                             settings=run.integrator, horizon=run.horizon,
                             j_max=run.ladder_jmax)
    out = {
        "config_hash": run.content_hash,
        "brackets_relative": brackets,
        "rank_fraction_full": rank.fraction_full,
        "rank_singular_values": rank.singular_values,
        "rank_noise_floors": rank.noise_floors,
    }
    _dump_json(out, out_path)
    return out


def run_check_suite(run, out_path, seed=None):
    """One-shot invariant battery; returns (report dict, all_passed)."""
    cfg = run.centres
    rng = np.random.default_rng(run.seed if seed is None else seed)
    checks = {}

    def record(name, measured, tolerance, passed=None):
        ok = bool(measured <= tolerance) if passed is None else bool(passed)
        checks[name] = {"passed": ok, "measured": float(measured),
                        "tolerance": float(tolerance)}

    # Kepler oracle: the n=1 flow against closed-form propagation.
    one = model.CentreConfig(dimension=3, centres=((0.0, 0.0, 0.0),),
                             strengths=(abs(cfg.strengths[0]),))
    worst = 0.0
    for e_val in (0.5, 1.0, 10.0):
        x = PhaseState((1.0, 0.1, 0.0),
                       (0.0, math.sqrt(2 * (e_val + one.strengths[0] / 1.005)), 0.1))
        traj = integrate(one, x, 10.0, run.integrator)
        ref = kepler_propagate(one.strengths[0], (0, 0, 0), x, 10.0)
        worst = max(worst, float(np.linalg.norm(traj.final.q - ref.q)
                                 + np.linalg.norm(traj.final.p - ref.p)))
    record("kepler_oracle", worst, 1e-9)

    # Conservation and reversibility on a beam orbit.
    x0 = beam_states(run)[run.batch_count // 2]
    traj = integrate(cfg, x0, 20.0, run.integrator, raise_on_abort=False)
    drift = traj.max_energy_drift / max(1.0, abs(traj.energies[0]))
    record("energy_drift", drift, run.integrator.energy_tol)
    back = integrate(cfg, traj.final, -(traj.ts[-1] - traj.ts[0]),
                     run.integrator, raise_on_abort=False)
    record("reversibility",
           float(np.linalg.norm(back.final.q - x0.q)
                 + np.linalg.norm(back.final.p - x0.p)), 1e-8)

    # Escape bound on sampled outgoing states.
    rvir = virial_radius_cached(cfg, run.energy)
    lam_fail = 0
    for _ in range(25):
        u = np.zeros(3)
        u[:cfg.dimension] = rng.normal(size=cfg.dimension)
        u /= np.linalg.norm(u)
        q = rvir * u * rng.uniform(1.0, 1.6)
        w = np.zeros(3)
        w[:cfg.dimension] = rng.normal(size=cfg.dimension)
        pdir = u + 0.3 * (w - (w @ u) * u)
        pdir /= np.linalg.norm(pdir)
        if q @ pdir < 0:
            pdir = -pdir
        p = math.sqrt(2 * (run.energy - model.potential(cfg, q))) * pdir
        t_out = integrate(cfg, PhaseState(q, p), 30.0, run.integrator,
                          raise_on_abort=False)
        q0n = np.linalg.norm(q)
        lam = math.sqrt(run.energy / 2.0) / q0n
        bound = q0n * np.sqrt(1.0 + (lam * t_out.ts) ** 2)
        if not np.all(np.linalg.norm(t_out.qs, axis=1) >= bound * (1 - 1e-12)):
            lam_fail += 1
    record("escape_bound_violations", lam_fail, 0)

    # Virial shell inequality on sampled directions.
    dirs = rng.normal(size=(200, 3))
    if cfg.dimension == 2:
        dirs[:, 2] = 0.0
    dirs /= np.linalg.norm(dirs, axis=1)[:, None]
    margin = min(2.0 * run.energy + model.virial_drift(cfg, rvir * u)
                 - 0.5 * run.energy for u in dirs)
    record("virial_shell_margin", -margin, 0.0)

    # Time delay vanishes for the pure Kepler comparison.
    x1 = PhaseState((1.0, 0.2, 0.0), (0.1, 1.7, 0.0))
    tau, _, _ = scattering.time_delay(one, x1, settings=run.integrator,
                                      require_cauchy=False)
    record("tau_single_centre", abs(tau), 1e-8)

    # Word counting against brute force.
    mism = 0
    for n in range(2, 5):
        for m in range(1, 7):
            if count_periodic_words(n, m) != len(enumerate_words(n, m)):
                mism += 1
    record("word_count_exact", mism, 0)

    # Involution of the integral family at one sampled scattering point.
    try:
        pts = _sample_scattering_states(run, 1, rng)
        params = run.gevrey

        def f_comp(k):
            def inner(state):
                rec = scattering.scatter_record(cfg, state, horizon=run.horizon,
                                                settings=run.integrator,
                                                gevrey=params)
                if rec.f_values is None:
                    raise NoConvergence("stencil point lost scattering")
                return rec.f_values[k - 1]
            return inner

        rep = poisson_bracket(cfg, lambda s: energy(cfg, s), f_comp(1), pts[0])
        record("bracket_f0_f1_relative", rep.relative, 1e-4)
        if cfg.dimension == 3:
            # Reported with its stated tolerance; the tau-gradient cross
            # terms make this bracket genuinely nonzero, so expect a named
            # failure here rather than a silent omission.
            rep12 = poisson_bracket(cfg, f_comp(1), f_comp(2), pts[0])
            record("bracket_f1_f2_relative", rep12.relative, 1e-4)
    except (NoConvergence, NCentreError) as exc:
        checks["bracket_f0_f1_relative"] = {
            "passed": False, "measured": float("nan"), "tolerance": 1e-4,
            "error": str(exc)}

    if cfg.n == 2:
        x2 = beam_states(run)[0]
        traj2 = integrate(cfg, x2, 10.0, run.integrator, raise_on_abort=False)
        good = np.where(traj2.dmin > 0.2)[0][::10]
        vals = np.array([two_centre_constant(cfg, traj2.sample(i))
                         for i in good])
        record("two_centre_constant_spread",
               float((vals.max() - vals.min()) / max(1e-300, abs(vals.mean()))),
               1e-8)

    passed = all(c["passed"] for c in checks.values())
    out = {"config_hash": run.content_hash, "passed": passed, "checks": checks}
    _dump_json(out, out_path)
    return out, passed


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="ncentre",
        description="Numerical laboratory for the Coulombic n-centre problem")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, txt in (("scatter", "batch scattering records to CSV"),
                      ("classify", "batch orbit classification to CSV"),
                      ("orbit", "periodic-orbit atlas (JSON + CSV)"),
                      ("entropy", "entropy estimate (alias of orbit)"),
                      ("integrals", "bracket and rank report (JSON)"),
                      ("check", "invariant check battery (JSON)"),
                      ("dump-config", "normalized configuration echo")):
        p = sub.add_parser(name, help=txt)
        p.add_argument("--config", required=True, help="configuration file")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--jobs", type=int, default=None,
                       help="worker processes (default from config)")
        p.add_argument("--seed", type=int, default=None,
                       help="seed for randomized sampling")
    args = parser.parse_args(argv)

    with open(args.config) as fh:
        text = fh.read()
    try:
        run = _run_from_text(text)
    except (ValidationError, NCentreError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2

    if args.command == "dump-config":
        sys.stdout.write(run.dump())
        return 0

    out_dir = args.out or run.out_dir
    os.makedirs(out_dir, exist_ok=True)
    jobs = args.jobs if args.jobs is not None else run.jobs

    if args.command == "scatter":
        path = run_scatter_batch(run, text, os.path.join(out_dir, "scatter.csv"),
                                 jobs=jobs)
        print(path)
        return 0
    if args.command == "classify":
        path = run_classify_batch(run, text,
                                  os.path.join(out_dir, "classify.csv"),
                                  jobs=jobs)
        print(path)
        return 0
    if args.command in ("orbit", "entropy"):
        report, full = run_orbit_atlas(run, out_dir)
        print(os.path.join(out_dir, "atlas.json"))
        return 0 if full else 3
    if args.command == "integrals":
        if args.seed is not None:
            run.seed = args.seed
        out = run_integrals_report(run, os.path.join(out_dir, "integrals.json"))
        print(os.path.join(out_dir, "integrals.json"))
        return 0
    if args.command == "check":
        _, passed = run_check_suite(run, os.path.join(out_dir, "check.json"),
                                    seed=args.seed)
        print(os.path.join(out_dir, "check.json"))
        return 0 if passed else 1
    return 2  # pragma: no cover


if __name__ == "__main__":
    sys.exit(main())
