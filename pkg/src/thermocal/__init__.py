"""Emissivity-aware enhancement and temperature restoration for thermal image sequences."""

from .errors import (
    CalibrationError,
    ConfigurationError,
    DomainError,
    InputError,
    OptimizationError,
    ThermocalError,
)
from .frame import ThermalFrame
from .radiometry import EnvironmentConditions, atmospheric_transmittance, correct_temperature, render_measured

__version__ = "0.1.0"

__all__ = [
    "CalibrationError",
    "ConfigurationError",
    "DomainError",
    "EnvironmentConditions",
    "InputError",
    "OptimizationError",
    "ThermalFrame",
    "ThermocalError",
    "atmospheric_transmittance",
    "correct_temperature",
    "render_measured",
]
