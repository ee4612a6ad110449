"""Equilibrium branches, bifurcation and stability of a two-pathogen coinfection model."""

from .errors import CoinfectError
from .kernels import BACKEND
from .model import Params, State, ValidatedParams, canonical_params, make_params, validate_params

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "CoinfectError", "Params", "State", "ValidatedParams",
    "canonical_params", "make_params", "validate_params", "__version__",
]
