from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError


@dataclass
class ThermalFrame:
    """One timestamp of a recording: raw gray image plus sensor temperature grid."""

    gray: np.ndarray
    temps: np.ndarray
    timestamp: float = 0.0

    def __post_init__(self):
        self.gray = np.asarray(self.gray, dtype=float)
        self.temps = np.asarray(self.temps, dtype=float)
        if self.gray.ndim != 2 or self.gray.shape != self.temps.shape:
            raise InputError(
                f"gray {self.gray.shape} and temperature {self.temps.shape} grids must be equal 2-D shapes"
            )

    @property
    def shape(self):
        return self.gray.shape
