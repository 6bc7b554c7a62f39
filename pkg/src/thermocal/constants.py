"""Radiometry constants record.

The defaults reproduce the condensation table and attenuation constants of
the thermal radiation model. The record round-trips through JSON so the CLI
can load alternates from ``$THERMOCAL_CONSTANTS``.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass
from pathlib import Path

from .errors import ConfigurationError

CONSTANTS_ENV = "THERMOCAL_CONSTANTS"

DEFAULT_CONDENSATION = (
    (5.0, 6.76),
    (10.0, 9.33),
    (15.0, 11.96),
    (20.0, 17.22),
    (25.0, 22.80),
)


@dataclass(frozen=True)
class RadiometryConstants:
    condensation: tuple[tuple[float, float], ...] = DEFAULT_CONDENSATION
    # k = omega * h / humidity_reference * attenuation_scale
    humidity_reference: float = 6.76
    attenuation_scale: float = 0.342
    # multiplies d before exponentiation; 1.0 means meters, 1e-3 means km
    distance_scale: float = 1.0
    # set True when humidity is given in percent rather than as a fraction
    humidity_in_percent: bool = False
    sensor_exponent: float = 4.09
    kelvin_offset: float = 273.15

    def to_dict(self) -> dict:
        d = asdict(self)
        d["condensation"] = [list(row) for row in self.condensation]
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "RadiometryConstants":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown constants keys: {sorted(unknown)}")
        kwargs = dict(data)
        if "condensation" in kwargs:
            kwargs["condensation"] = tuple(
                (float(t), float(w)) for t, w in kwargs["condensation"]
            )
        return cls(**kwargs)


def load_constants(path: str | os.PathLike | None = None) -> RadiometryConstants:
    """Load constants from ``path``, else ``$THERMOCAL_CONSTANTS``, else defaults."""
    if path is None:
        path = os.environ.get(CONSTANTS_ENV)
    if not path:
        return RadiometryConstants()
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read constants file {path}: {exc}") from exc
    return RadiometryConstants.from_dict(data)
