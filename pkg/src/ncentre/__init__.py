"""Numerical laboratory for the Coulombic n-centre problem.

Builds and verifies smooth conserved quantities from scattering asymptotics
(asymptotic momenta, time delay, the double-exponentially flattened integral
family) and realizes the symbolic dynamics of bounded hyperbolic orbits
(periodic-orbit shooting, Floquet spectra, topological-entropy estimates).
"""

from ._backend import backend_name
from .model import CentreConfig, PhaseState, energy, potential, virial_radius
from .flow import IntegratorSettings, Trajectory, integrate
from .kepler import KeplerElements, kepler_propagate, osculating_elements
from .scattering import ScatterRecord, classify, scatter_record, time_delay
from .integrals import GevreyParams, gevrey_integral, two_centre_constant
from .symbolic import (PeriodicOrbit, SymbolWord, entropy_estimate,
                       find_periodic_orbit, hyperbolicity_report)
from .config import RunConfig, parse_config

__version__ = "0.1.0"

__all__ = [
    "CentreConfig", "PhaseState", "energy", "potential", "virial_radius",
    "IntegratorSettings", "Trajectory", "integrate",
    "KeplerElements", "kepler_propagate", "osculating_elements",
    "ScatterRecord", "classify", "scatter_record", "time_delay",
    "GevreyParams", "gevrey_integral", "two_centre_constant",
    "PeriodicOrbit", "SymbolWord", "entropy_estimate", "find_periodic_orbit",
    "hyperbolicity_report",
    "RunConfig", "parse_config", "backend_name",
]
