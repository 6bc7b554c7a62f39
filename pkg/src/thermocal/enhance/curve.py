"""Iterated quadratic enhancement curve.

    C_0 = I
    C_n = C_{n-1} + theta_n * C_{n-1} * (1 - C_{n-1}),   n = 1..8

For C in [0, 1] and |theta| <= 1 every iterate stays in [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InputError

N_ITER = 8


@dataclass(frozen=True)
class CurveParams:
    """Eight per-pixel curve parameter maps, shape (8, H, W), values in [-1, 1]."""

    theta: np.ndarray

    def __post_init__(self):
        th = np.asarray(self.theta, dtype=float)
        if th.ndim != 3 or th.shape[0] != N_ITER:
            raise InputError(f"curve params must have shape (8, H, W), got {th.shape}")
        if np.any(np.abs(th) > 1.0):
            raise InputError("curve params must lie in [-1, 1]")
        object.__setattr__(self, "theta", th)

    @classmethod
    def zeros(cls, shape) -> "CurveParams":
        return cls(np.zeros((N_ITER, *shape)))

    def to_csv(self) -> str:
        """Multi-plane CSV: one block per map, rows separated by newlines,
        blocks introduced by a ``# theta_n`` line."""
        lines = []
        for n, plane in enumerate(self.theta, start=1):
            lines.append(f"# theta_{n}")
            lines.extend(",".join(f"{v:.9f}" for v in row) for row in plane)
        return "\n".join(lines) + "\n"


def curve_iterates(plane, theta) -> np.ndarray:
    """All iterates C_0..C_8 stacked, shape (9, H, W)."""
    c = np.asarray(plane, dtype=float)
    theta = np.asarray(theta, dtype=float)
    out = np.empty((theta.shape[0] + 1, *c.shape))
    out[0] = c
    for n in range(theta.shape[0]):
        c = c + theta[n] * c * (1.0 - c)
        out[n + 1] = c
    return out


def curve_forward(plane, params) -> np.ndarray:
    """Apply the curve; ``params`` may be CurveParams or a raw (8, H, W) array."""
    theta = params.theta if isinstance(params, CurveParams) else np.asarray(params, dtype=float)
    plane = np.asarray(plane, dtype=float)
    if theta.shape[1:] != plane.shape:
        raise InputError(f"theta maps {theta.shape[1:]} do not match plane {plane.shape}")
    return curve_iterates(plane, theta)[-1]


def curve_backward(grad_out, iterates, theta):
    """Gradients of a scalar w.r.t. theta and the input plane.

    ``iterates`` is the output of :func:`curve_iterates`.
    """
    g = np.asarray(grad_out, dtype=float)
    grad_theta = np.empty_like(theta)
    for n in range(theta.shape[0] - 1, -1, -1):
        c = iterates[n]
        grad_theta[n] = g * c * (1.0 - c)
        g = g * (1.0 + theta[n] * (1.0 - 2.0 * c))
    return grad_theta, g
