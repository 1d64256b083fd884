"""Run configuration: sectioned key/value text, validation, normalized dump.

The configuration format is INI-style (configparser).  Parsing fills every
default and validates against the module invariants before any computation
starts; ``dump`` emits a normalized document (fixed section and key order,
floats with 17 significant digits) that re-parses to the same RunConfig, so
outputs can embed the exact configuration that produced them.
"""

import configparser
import hashlib
import io
import re
from dataclasses import dataclass, field

from .errors import ParseError, ValidationError
from .flow import IntegratorSettings
from .integrals import GevreyParams
from .model import CentreConfig
from .symbolic import ShootingSettings

_SECTIONS = ("model", "energy", "integrator", "gevrey", "scattering",
             "scatter_batch", "symbolic", "output")


def _fmt(x):
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return f"{x:.17g}"
    return str(x)


@dataclass
class RunConfig:
    centres: CentreConfig
    energy: float
    energy_window: tuple
    integrator: IntegratorSettings
    gevrey: GevreyParams
    horizon: float = 1000.0
    ladder_jmax: int = 8
    start_radius_factor: float = 2.0
    batch_direction: tuple = (1.0, 0.0)
    batch_impact: tuple = (-3.0, 3.0)
    batch_count: int = 100
    symbolic_m_max: int = 3
    symbolic_energy: float | None = None
    shooting: ShootingSettings = field(default_factory=ShootingSettings)
    out_dir: str = "out"
    jobs: int = 1
    seed: int = 0

    def dump(self):
        """Normalized text form; parse(dump(parse(x))) == parse(x) and the
        dump itself is byte-stable."""
        buf = io.StringIO()
        d = self.centres.dimension
        cent_txt = " ; ".join(
            " ".join(_fmt(v) for v in c) for c in self.centres.centres)
        sections = {
            "model": [
                ("dimension", d),
                ("centres", cent_txt),
                ("strengths", " ".join(_fmt(z) for z in self.centres.strengths)),
                ("collision_guard", self.centres.collision_guard),
            ],
            "energy": [
                ("value", self.energy),
                ("window_low", self.energy_window[0]),
                ("window_high", self.energy_window[1]),
            ],
            "integrator": [
                ("base_step", self.integrator.base_step),
                ("energy_tol", self.integrator.energy_tol),
                ("splitting_order", self.integrator.splitting_order),
                ("max_steps", self.integrator.max_steps),
            ],
            "gevrey": [
                ("g", self.gevrey.g),
                ("c2", self.gevrey.c2),
            ],
            "scattering": [
                ("horizon", self.horizon),
                ("ladder_jmax", self.ladder_jmax),
                ("start_radius_factor", self.start_radius_factor),
            ],
            "scatter_batch": [
                ("direction", " ".join(_fmt(v) for v in self.batch_direction)),
                ("impact_low", self.batch_impact[0]),
                ("impact_high", self.batch_impact[1]),
                ("count", self.batch_count),
            ],
            "symbolic": [
                ("m_max", self.symbolic_m_max),
                ("energy", self.symbolic_energy
                 if self.symbolic_energy is not None else self.energy),
                ("shooting_tol", self.shooting.tol),
                ("max_newton", self.shooting.max_newton),
            ],
            "output": [
                ("directory", self.out_dir),
                ("jobs", self.jobs),
                ("seed", self.seed),
            ],
        }
        for name in _SECTIONS:
            buf.write(f"[{name}]\n")
            for key, val in sections[name]:
                buf.write(f"{key} = {_fmt(val)}\n")
            buf.write("\n")
        return buf.getvalue()

    @property
    def content_hash(self):
        return hashlib.sha256(self.dump().encode()).hexdigest()[:16]


def _line_of(text, section, key):
    pattern = re.compile(rf"^\s*{re.escape(key)}\s*[=:]", re.MULTILINE)
    match = pattern.search(text)
    if match is None:
        return None
    return text[: match.start()].count("\n") + 1


def _get(cp, text, section, key, cast, default=None):
    if not cp.has_section(section) or not cp.has_option(section, key):
        if default is None:
            raise ParseError(f"missing required key [{section}] {key}")
        return default
    raw = cp.get(section, key)
    try:
        return cast(raw)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"cannot parse [{section}] {key} = {raw!r}: {exc}",
                         line=_line_of(text, section, key)) from None


def _floats(raw):
    return tuple(float(tok) for tok in raw.split())


def _points(raw):
    return tuple(_floats(part) for part in raw.split(";") if part.strip())


def parse_config(text):
    """Parse and validate a configuration document into a RunConfig."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        if line is None and getattr(exc, "errors", None):
            line = exc.errors[0][0]
        raise ParseError(f"configuration syntax error: {exc.message.splitlines()[0]}",
                         line=line) from None

    dimension = _get(cp, text, "model", "dimension", int)
    centres = _get(cp, text, "model", "centres", _points)
    strengths = _get(cp, text, "model", "strengths", _floats)
    guard = _get(cp, text, "model", "collision_guard", float, 1e-10)
    try:
        ccfg = CentreConfig(dimension=dimension, centres=centres,
                            strengths=strengths, collision_guard=guard)
    except ValidationError:
        raise

    e_val = _get(cp, text, "energy", "value", float)
    w_lo = _get(cp, text, "energy", "window_low", float, e_val)
    w_hi = _get(cp, text, "energy", "window_high", float, e_val)
    if e_val <= 0.0:
        raise ValidationError("energy must be positive")
    if w_lo > w_hi:
        raise ValidationError("energy window is empty (window_low > window_high)")

    integ = IntegratorSettings(
        base_step=_get(cp, text, "integrator", "base_step", float, 1e-3),
        energy_tol=_get(cp, text, "integrator", "energy_tol", float, 1e-8),
        collision_guard=guard,
        splitting_order=_get(cp, text, "integrator", "splitting_order", int, 4),
        max_steps=_get(cp, text, "integrator", "max_steps", int, 10_000_000),
    )

    g_val = _get(cp, text, "gevrey", "g", float, 2.0)
    c2 = _get(cp, text, "gevrey", "c2", float, 1.0)
    gevrey = GevreyParams(g=g_val, c2=c2, e_low=w_lo, e_high=w_hi)

    direction = _get(cp, text, "scatter_batch", "direction", _floats,
                     (1.0,) + (0.0,) * (dimension - 1))
    if len(direction) != dimension:
        raise ValidationError("batch direction dimension mismatch")
    if all(v == 0.0 for v in direction):
        raise ValidationError("batch direction must be nonzero")

    count = _get(cp, text, "scatter_batch", "count", int, 100)
    if count < 1:
        raise ValidationError("batch count must be at least 1")
    jobs = _get(cp, text, "output", "jobs", int, 1)
    if jobs < 1:
        raise ValidationError("jobs must be at least 1")

    sym_tol = _get(cp, text, "symbolic", "shooting_tol", float, 1e-9)
    sym_newton = _get(cp, text, "symbolic", "max_newton", int, 40)

    return RunConfig(
        centres=ccfg,
        energy=e_val,
        energy_window=(w_lo, w_hi),
        integrator=integ,
        gevrey=gevrey,
        horizon=_get(cp, text, "scattering", "horizon", float, 1000.0),
        ladder_jmax=_get(cp, text, "scattering", "ladder_jmax", int, 8),
        start_radius_factor=_get(cp, text, "scattering", "start_radius_factor",
                                 float, 2.0),
        batch_direction=direction,
        batch_impact=(
            _get(cp, text, "scatter_batch", "impact_low", float, -3.0),
            _get(cp, text, "scatter_batch", "impact_high", float, 3.0),
        ),
        batch_count=count,
        symbolic_m_max=_get(cp, text, "symbolic", "m_max", int, 3),
        symbolic_energy=_get(cp, text, "symbolic", "energy", float, e_val),
        shooting=ShootingSettings(tol=sym_tol, max_newton=sym_newton,
                                  integrator=integ),
        out_dir=_get(cp, text, "output", "directory", str, "out"),
        jobs=jobs,
        seed=_get(cp, text, "output", "seed", int, 0),
    )
