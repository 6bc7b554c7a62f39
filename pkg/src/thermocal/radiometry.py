"""Infrared thermal radiation model.

Sensor readings follow an n-th power law in absolute temperature::

    Tm^n = tau*eps*Tr^n + tau*(1 - eps)*Tb^n + (1 - tau)*Ta^n

``correct_temperature`` solves this for the true surface temperature ``Tr``
and ``render_measured`` evaluates it forward. Both accept and return
degrees Celsius; the power law is always applied in Kelvin.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constants import RadiometryConstants
from .errors import ConfigurationError, DomainError, InputError

_DEFAULT = RadiometryConstants()


@dataclass(frozen=True)
class EnvironmentConditions:
    ambient_temp_c: float = 22.0
    background_temp_c: float = 23.5
    relative_humidity: float = 0.881
    distance_m: float = 0.25
    sensor_exponent: float = 4.09

    def __post_init__(self):
        if not 0.0 <= self.relative_humidity <= 1.0:
            raise InputError(f"relative_humidity must be in [0, 1], got {self.relative_humidity}")
        if self.distance_m < 0:
            raise InputError(f"distance_m must be >= 0, got {self.distance_m}")
        if not self.sensor_exponent > 0:
            raise InputError(f"sensor_exponent must be > 0, got {self.sensor_exponent}")
        for name in ("ambient_temp_c", "background_temp_c"):
            v = getattr(self, name)
            if not -50.0 <= v <= 200.0:
                raise InputError(f"{name} must be in [-50, 200] C, got {v}")

    def to_dict(self) -> dict:
        return {
            "ambient_temp_c": self.ambient_temp_c,
            "background_temp_c": self.background_temp_c,
            "relative_humidity": self.relative_humidity,
            "distance_m": self.distance_m,
            "sensor_exponent": self.sensor_exponent,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EnvironmentConditions":
        return cls(**{k: float(v) for k, v in data.items()})


def check_emissivity(eps):
    """Validate emissivity (scalar or array) lies in (0, 1]."""
    arr = np.asarray(eps, dtype=float)
    if not np.all((arr > 0.0) & (arr <= 1.0)):
        raise InputError("emissivity must lie in (0, 1]")
    return eps


def _check_table(table):
    if table is None or len(table) == 0:
        raise ConfigurationError("condensation table is empty")
    temps = [float(t) for t, _ in table]
    if any(b <= a for a, b in zip(temps, temps[1:])):
        raise ConfigurationError("condensation table temperatures must be strictly increasing")
    if any(float(w) <= 0 for _, w in table):
        raise ConfigurationError("condensation numbers must be positive")


def water_condensation(air_temp_c: float, table=_DEFAULT.condensation) -> float:
    """Condensation number of water (mm/km) at ``air_temp_c``.

    Piecewise-linear between table rows, clamped to the end rows outside the
    tabulated range.
    """
    _check_table(table)
    xs = np.array([t for t, _ in table], dtype=float)
    ys = np.array([w for _, w in table], dtype=float)
    return float(np.interp(air_temp_c, xs, ys))


def attenuation_coefficient(env: EnvironmentConditions, constants: RadiometryConstants = _DEFAULT) -> float:
    omega = water_condensation(env.ambient_temp_c, constants.condensation)
    h = env.relative_humidity
    if constants.humidity_in_percent:
        h = h * 100.0
    return omega * h / constants.humidity_reference * constants.attenuation_scale


def atmospheric_transmittance(env: EnvironmentConditions, constants: RadiometryConstants = _DEFAULT) -> float:
    """Fraction of radiation surviving the air path, ``exp(-k d)``."""
    k = attenuation_coefficient(env, constants)
    return float(np.exp(-k * env.distance_m * constants.distance_scale))


def _check_tau(tau):
    t = np.asarray(tau, dtype=float)
    if not np.all((t > 0.0) & (t <= 1.0)):
        raise InputError(f"transmittance must lie in (0, 1], got {tau}")


def render_measured(true_c, eps, env: EnvironmentConditions, tau: float, kelvin_offset: float = 273.15):
    """Temperature an IR sensor reports for a surface at ``true_c``."""
    check_emissivity(eps)
    _check_tau(tau)
    n = env.sensor_exponent
    tr = np.asarray(true_c, dtype=float) + kelvin_offset
    tb = env.background_temp_c + kelvin_offset
    ta = env.ambient_temp_c + kelvin_offset
    if np.any(tr <= 0):
        raise DomainError("true temperature below absolute zero")
    eps = np.asarray(eps, dtype=float)
    radiance = tau * eps * tr**n + tau * (1.0 - eps) * tb**n + (1.0 - tau) * ta**n
    out = radiance ** (1.0 / n) - kelvin_offset
    return float(out) if np.ndim(out) == 0 else out


def _bracket(measured_c, eps, env, tau, kelvin_offset):
    n = env.sensor_exponent
    tm = np.asarray(measured_c, dtype=float) + kelvin_offset
    tb = env.background_temp_c + kelvin_offset
    ta = env.ambient_temp_c + kelvin_offset
    eps = np.asarray(eps, dtype=float)
    return (tm**n / tau - (1.0 - eps) * tb**n - (1.0 / tau - 1.0) * ta**n) / eps


def correct_temperature(measured_c, eps, env: EnvironmentConditions, tau: float, kelvin_offset: float = 273.15):
    """True surface temperature from a sensor reading.

    Raises DomainError when the bracketed radiance is not positive, i.e. the
    reading is colder than the reflected background and air path allow.
    """
    check_emissivity(eps)
    _check_tau(tau)
    inner = _bracket(measured_c, eps, env, tau, kelvin_offset)
    if np.any(~(inner > 0)):
        raise DomainError(
            "non-positive bracket: (1/tau)Tm^n - (1-eps)Tb^n - (1/tau-1)Ta^n <= 0; "
            "measured temperature too cold for the given emissivity/background"
        )
    out = inner ** (1.0 / env.sensor_exponent) - kelvin_offset
    return float(out) if np.ndim(out) == 0 else out


def correct_frame(temps, eps_map, env: EnvironmentConditions, tau: float, kelvin_offset: float = 273.15):
    """Apply ``correct_temperature`` pixel-wise to a temperature grid."""
    temps = np.asarray(temps, dtype=float)
    eps_map = np.broadcast_to(np.asarray(eps_map, dtype=float), np.shape(eps_map))
    if temps.shape != eps_map.shape:
        raise InputError(f"temperature grid {temps.shape} and emissivity map {eps_map.shape} differ")
    check_emissivity(eps_map)
    _check_tau(tau)
    inner = _bracket(temps, eps_map, env, tau, kelvin_offset)
    bad = np.argwhere(~(inner > 0))
    if bad.size:
        r, c = bad[0]
        raise DomainError(
            f"non-positive radiance bracket at pixel (row={r}, col={c}) "
            f"for measured {temps[r, c]:.3f} C, eps {eps_map[r, c]:.3f} "
            f"({len(bad)} pixel(s) affected)"
        )
    return inner ** (1.0 / env.sensor_exponent) - kelvin_offset
