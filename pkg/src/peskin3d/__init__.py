"""Elastic membranes in Stokes flow: boundary-integral velocity, frozen-coefficient
symbols and explicit time integration on a spherical-harmonic grid."""
from .errors import *  # noqa: F401,F403
from .membrane import MembraneState, SphereGrid, TensionLaw
from .bie import QuadratureScheme, velocity_field
from .sim import SimConfig, run

__version__ = "0.1.0"

__all__ = ["MembraneState", "SphereGrid", "TensionLaw", "QuadratureScheme", "velocity_field",
           "SimConfig", "run", "__version__"]
