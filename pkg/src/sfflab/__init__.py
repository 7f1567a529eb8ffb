"""Simulated spectral-form-factor measurements on spin and Rydberg models."""
from ._accel import backend_name
from .errors import (
    ConfigError,
    DegenerateFilterError,
    GeometryError,
    IncompatibleBasisError,
    NumericalError,
    ParameterError,
    ResonanceError,
    SffLabError,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DegenerateFilterError",
    "GeometryError",
    "IncompatibleBasisError",
    "NumericalError",
    "ParameterError",
    "ResonanceError",
    "SffLabError",
    "backend_name",
    "__version__",
]
