"""Surface hopping, HEOM and golden-rule rates for the spin-boson model in the inverted regime."""

from .model import STANDARD_PARAMS, SpinBosonParams, build_bath
from .units import HBAR, KB, UNITS

__version__ = "0.1.0"

__all__ = ["STANDARD_PARAMS", "SpinBosonParams", "build_bath", "HBAR", "KB", "UNITS", "__version__"]
