"""Variable-exponent function spaces and a symmetric-gradient parabolic Galerkin solver."""
from .errors import *  # noqa: F401,F403
from .exponent import ExponentField, SpaceTimeBox, SampleLattice, conjugate, parabolic_star  # noqa: F401
from .spaces import DiscreteField, modular, luxemburg_norm  # noqa: F401

__version__ = "0.1.0"
