"""Gray-level <-> temperature calibration.

Pipeline: smooth paired gray/temperature frames with a strided window,
min-max normalize both axes over the whole sequence, then least-squares fit
one of four forms ``G(t)``::

    linear     a*t + b
    quadratic  a*t^2 + b*t + c
    cubic      a*t^3 + b*t^2 + c*t + d
    logistic   1 / (1 + exp(a*t + b))
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from numpy.lib.stride_tricks import sliding_window_view

from .errors import CalibrationError, InputError
from .frame import ThermalFrame

log = logging.getLogger(__name__)

FORMS = ("linear", "quadratic", "cubic", "logistic")
N_COEFFS = {"linear": 2, "quadratic": 3, "cubic": 4, "logistic": 2}
_POLY_DEGREE = {"linear": 1, "quadratic": 2, "cubic": 3}
LOGIT_MARGIN = 1e-6


@dataclass(frozen=True)
class NormBounds:
    temp_min: float
    temp_max: float
    gray_min: float
    gray_max: float

    def __post_init__(self):
        if not self.temp_max > self.temp_min:
            raise CalibrationError("temp_max must exceed temp_min")
        if not self.gray_max > self.gray_min:
            raise CalibrationError("gray_max must exceed gray_min")

    def normalize_temp(self, t):
        return (np.asarray(t, dtype=float) - self.temp_min) / (self.temp_max - self.temp_min)

    def denormalize_temp(self, t):
        return self.temp_min + np.asarray(t, dtype=float) * (self.temp_max - self.temp_min)

    def normalize_gray(self, g):
        return (np.asarray(g, dtype=float) - self.gray_min) / (self.gray_max - self.gray_min)

    def denormalize_gray(self, g):
        return self.gray_min + np.asarray(g, dtype=float) * (self.gray_max - self.gray_min)


@dataclass(frozen=True)
class CalibrationSamples:
    """Normalized (temperature, gray) pairs, column 0 = temperature."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise InputError("calibration points must be an (m, 2) array")
        if pts.shape[0] < 2:
            raise CalibrationError("need at least two calibration samples")
        object.__setattr__(self, "points", pts)

    @property
    def temps(self) -> np.ndarray:
        return self.points[:, 0]

    @property
    def grays(self) -> np.ndarray:
        return self.points[:, 1]

    @property
    def m(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class CalibrationModel:
    form: str
    coefficients: tuple
    bounds: NormBounds = field(default_factory=lambda: NormBounds(0.0, 1.0, 0.0, 1.0))
    mse: float = 0.0

    def __post_init__(self):
        if self.form not in FORMS:
            raise CalibrationError(f"unknown calibration form {self.form!r}")
        coeffs = tuple(float(c) for c in self.coefficients)
        if len(coeffs) != N_COEFFS[self.form]:
            raise CalibrationError(
                f"{self.form} needs {N_COEFFS[self.form]} coefficients, got {len(coeffs)}"
            )
        if self.mse < 0:
            raise CalibrationError("mse must be non-negative")
        object.__setattr__(self, "coefficients", coeffs)

    def __call__(self, t):
        """Evaluate G at normalized temperature ``t``."""
        t = np.asarray(t, dtype=float)
        if self.form == "logistic":
            a, b = self.coefficients
            with np.errstate(over="ignore"):
                return 1.0 / (1.0 + np.exp(a * t + b))
        return np.polyval(self.coefficients, t)

    def to_dict(self) -> dict:
        return {
            "form": self.form,
            "coefficients": list(self.coefficients),
            "bounds": {
                "temp_min": self.bounds.temp_min,
                "temp_max": self.bounds.temp_max,
                "gray_min": self.bounds.gray_min,
                "gray_max": self.bounds.gray_max,
            },
            "mse": self.mse,
        }

    def to_json(self) -> str:
        # repr-exact floats: json uses float.__repr__, which round-trips
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, data: dict) -> "CalibrationModel":
        return cls(
            form=data["form"],
            coefficients=tuple(data["coefficients"]),
            bounds=NormBounds(**data["bounds"]),
            mse=float(data.get("mse", 0.0)),
        )

    @classmethod
    def from_json(cls, text: str) -> "CalibrationModel":
        return cls.from_dict(json.loads(text))


def window_smooth(frame: ThermalFrame, window: int = 5, step: int = 7) -> np.ndarray:
    """Mean (temperature, gray) of every top-left anchored window.

    Windows overhanging the frame edge are dropped. Returns an (m, 2) array
    of raw (un-normalized) pairs in raster order.
    """
    if window < 1 or window % 2 == 0:
        raise InputError(f"window must be a positive odd integer, got {window}")
    if step < 1:
        raise InputError(f"step must be positive, got {step}")
    h, w = frame.shape
    if window > h or window > w:
        raise InputError(f"window {window} larger than frame {h}x{w}")
    t = sliding_window_view(frame.temps, (window, window))[::step, ::step].mean(axis=(2, 3))
    g = sliding_window_view(frame.gray, (window, window))[::step, ::step].mean(axis=(2, 3))
    return np.column_stack([t.ravel(), g.ravel()])


def smooth_sequence(frames, window: int = 5, step: int = 7) -> np.ndarray:
    return np.vstack([window_smooth(f, window, step) for f in frames])


def normalize_samples(raw) -> tuple[CalibrationSamples, NormBounds]:
    """Min-max normalize raw (temperature, gray) pairs onto [0, 1]^2."""
    raw = np.asarray(raw, dtype=float)
    if raw.ndim != 2 or raw.shape[1] != 2 or raw.shape[0] < 2:
        raise CalibrationError("need an (m >= 2, 2) array of (temperature, gray) pairs")
    lo = raw.min(axis=0)
    hi = raw.max(axis=0)
    if hi[0] <= lo[0]:
        raise CalibrationError("degenerate temperature axis: all samples equal")
    if hi[1] <= lo[1]:
        raise CalibrationError("degenerate gray axis: all samples equal")
    bounds = NormBounds(float(lo[0]), float(hi[0]), float(lo[1]), float(hi[1]))
    pts = (raw - lo) / (hi - lo)
    return CalibrationSamples(np.clip(pts, 0.0, 1.0)), bounds


def _poly_lstsq(t, g, degree):
    # columns highest power first, matching np.polyval
    A = np.vander(t, degree + 1)
    ata = A.T @ A
    atb = A.T @ g
    if np.linalg.matrix_rank(A) < degree + 1:
        raise CalibrationError(f"rank-deficient design for degree {degree}: too few distinct temperatures")
    lu, piv = scipy.linalg.lu_factor(ata)
    coeffs = scipy.linalg.lu_solve((lu, piv), atb)
    # one step of iterative refinement against the normal equations
    coeffs += scipy.linalg.lu_solve((lu, piv), atb - ata @ coeffs)
    return coeffs


def _logistic_fit(t, g, max_iter=200, tol=1e-10):
    if np.any((g < 0.0) | (g > 1.0)):
        raise CalibrationError("logistic fit needs gray values inside [0, 1]")
    gc = np.clip(g, LOGIT_MARGIN, 1.0 - LOGIT_MARGIN)
    z = np.log(1.0 / gc - 1.0)
    params = _poly_lstsq(t, z, 1)

    def resid(p):
        with np.errstate(over="ignore"):
            return g - 1.0 / (1.0 + np.exp(p[0] * t + p[1]))

    r = resid(params)
    cost = r @ r
    lam = 1e-3
    for _ in range(max_iter):
        with np.errstate(over="ignore"):
            y = 1.0 / (1.0 + np.exp(params[0] * t + params[1]))
        # dy/dz = -y(1-y)
        dz = -y * (1.0 - y)
        J = np.column_stack([dz * t, dz])
        jtj = J.T @ J
        jtr = J.T @ r
        while True:
            step = np.linalg.solve(jtj + lam * np.diag(np.diag(jtj) + 1e-300), jtr)
            trial = params + step
            r_new = resid(trial)
            cost_new = r_new @ r_new
            if np.isfinite(cost_new) and cost_new <= cost:
                lam = max(lam / 10.0, 1e-12)
                break
            lam *= 10.0
            if lam > 1e12:
                return params
        params, r, cost = trial, r_new, cost_new
        if np.max(np.abs(step)) <= tol * (1.0 + np.max(np.abs(params))):
            break
    return params


def fit_model(samples: CalibrationSamples, form: str = "linear", bounds: NormBounds | None = None) -> CalibrationModel:
    """Least-squares fit of ``G`` in the given form."""
    if form not in FORMS:
        raise CalibrationError(f"unknown calibration form {form!r}")
    if samples.m < N_COEFFS[form]:
        raise CalibrationError(f"{form} fit needs at least {N_COEFFS[form]} samples, got {samples.m}")
    t, g = samples.temps, samples.grays
    if form == "logistic":
        coeffs = _logistic_fit(t, g)
    else:
        coeffs = _poly_lstsq(t, g, _POLY_DEGREE[form])
    if not np.all(np.isfinite(coeffs)):
        raise CalibrationError(f"{form} fit produced non-finite coefficients")
    model = CalibrationModel(form, tuple(coeffs), bounds or NormBounds(0.0, 1.0, 0.0, 1.0))
    return CalibrationModel(form, model.coefficients, model.bounds, model_mse(model, samples))


def fit_all(samples: CalibrationSamples, bounds: NormBounds | None = None) -> dict[str, CalibrationModel]:
    return {form: fit_model(samples, form, bounds) for form in FORMS}


def select_model(models: dict[str, CalibrationModel], prefer: str | None = "linear", tolerance: float = 0.25):
    """Pick the lowest-MSE model, keeping ``prefer`` when within ``tolerance`` (relative) of the best.

    Mirrors choosing the simple linear law when the richer forms barely
    improve on it.
    """
    best = min(models.values(), key=lambda m: m.mse)
    if prefer in models and models[prefer].mse <= best.mse * (1.0 + tolerance) + 1e-15:
        return models[prefer]
    return best


def model_mse(model: CalibrationModel, samples: CalibrationSamples) -> float:
    r = samples.grays - model(samples.temps)
    return float(np.mean(r * r))


def is_monotone(model: CalibrationModel) -> int:
    """+1 if increasing on [0, 1], -1 if decreasing, 0 otherwise."""
    if model.form == "logistic":
        a = model.coefficients[0]
        return 0 if a == 0 else (-1 if a > 0 else 1)
    deriv = np.polyder(np.asarray(model.coefficients))
    roots = np.roots(deriv) if len(deriv) > 1 else np.array([])
    inside = sorted(r.real for r in roots if abs(r.imag) < 1e-12 and 0.0 < r.real < 1.0)
    # the derivative can only change sign at its roots
    knots = np.array([0.0, *inside, 1.0])
    signs = np.sign(np.polyval(deriv, 0.5 * (knots[:-1] + knots[1:])))
    if np.all(signs > 0):
        return 1
    if np.all(signs < 0):
        return -1
    return 0


def temp_to_gray(model: CalibrationModel, temp_c, *, return_clamped: bool = False):
    """Normalized gray predicted for a temperature in degrees Celsius."""
    t = model.bounds.normalize_temp(temp_c)
    tc = np.clip(t, 0.0, 1.0)
    clamped = bool(np.any(tc != t))
    if clamped:
        log.debug("temperature outside calibrated range clamped")
    g = model(tc)
    g = float(g) if np.ndim(g) == 0 else g
    return (g, clamped) if return_clamped else g


def gray_to_norm_temp(model: CalibrationModel, gray_norm, *, return_clamped: bool = False, tol: float = 1e-10):
    """Invert ``G``: normalized gray -> normalized temperature in [0, 1]."""
    direction = is_monotone(model)
    if direction == 0:
        raise CalibrationError(f"{model.form} model is not monotone on [0, 1]; cannot invert")
    g = np.asarray(gray_norm, dtype=float)
    g0, g1 = float(model(0.0)), float(model(1.0))
    lo, hi = min(g0, g1), max(g0, g1)
    gc = np.clip(g, lo, hi)
    clamped = bool(np.any(gc != g))
    if clamped:
        log.debug("gray value outside calibrated support clamped")
    if model.form == "linear":
        a, b = model.coefficients
        t = (gc - b) / a
    elif model.form == "logistic":
        a, b = model.coefficients
        inner = np.clip(gc, np.finfo(float).tiny, 1.0 - np.finfo(float).eps)
        t = (np.log(1.0 / inner - 1.0) - b) / a
    else:
        t = _bisect(model, gc, direction, tol)
    t = np.clip(t, 0.0, 1.0)
    t = float(t) if np.ndim(t) == 0 else t
    return (t, clamped) if return_clamped else t


def _bisect(model, target, direction, tol):
    target = np.asarray(target, dtype=float)
    lo = np.zeros_like(target)
    hi = np.ones_like(target)
    while np.max(hi - lo) > tol:
        mid = 0.5 * (lo + hi)
        above = (model(mid) - target) * direction > 0
        hi = np.where(above, mid, hi)
        lo = np.where(above, lo, mid)
    return 0.5 * (lo + hi)


def gray_to_temp(model: CalibrationModel, gray_norm, *, return_clamped: bool = False):
    """Temperature (degrees Celsius) for a normalized gray value."""
    t, clamped = gray_to_norm_temp(model, gray_norm, return_clamped=True)
    temp = model.bounds.denormalize_temp(t)
    temp = float(temp) if np.ndim(temp) == 0 else temp
    return (temp, clamped) if return_clamped else temp


def calibrate_sequence(frames, form: str = "linear", window: int = 5, step: int = 7) -> CalibrationModel:
    """Smooth, normalize and fit a whole recording in one go."""
    samples, bounds = normalize_samples(smooth_sequence(frames, window, step))
    return fit_model(samples, form, bounds)
