"""Surrogate blower recordings with known ground truth.

A two-material plate warms up over the sequence. Each frame carries the
true temperature field, the temperature a sensor would report through the
radiation model, and a gray image produced by a linear calibration law plus
Gaussian gray noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .calibration import CalibrationModel, NormBounds
from .errors import InputError
from .frame import ThermalFrame
from .radiometry import EnvironmentConditions, atmospheric_transmittance, check_emissivity, render_measured
from .regions import RegionMask

RAMPS = ("linear", "logistic")


def default_gray_law() -> CalibrationModel:
    return CalibrationModel("linear", (0.915, 0.05))


@dataclass(frozen=True)
class SynthConfig:
    width: int = 64
    height: int = 48
    frames: int = 60
    temp_start_c: float = 26.0
    temp_end_c: float = 37.0
    ramp: str = "linear"
    eps_target: float = 0.21
    eps_reference: float = 0.90
    env: EnvironmentConditions = field(default_factory=EnvironmentConditions)
    gray_law: CalibrationModel = field(default_factory=default_gray_law)
    # measured-temperature range mapped onto [0, 1] before the gray law;
    # None uses the min/max over the whole rendered sequence
    temp_range_c: tuple | None = (0.0, 40.0)
    noise_std: float = 0.005
    perturbation_c: float = 0.5
    # fraction of the width occupied by the target (left) material
    split: float = 0.5
    timestep_s: float = 5.0
    seed: int = 0

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise InputError("frame dimensions must be positive")
        if self.frames < 2:
            raise InputError("need at least two frames")
        if not self.temp_end_c > self.temp_start_c:
            raise InputError("temp_end_c must exceed temp_start_c")
        if self.ramp not in RAMPS:
            raise InputError(f"ramp must be one of {RAMPS}")
        if self.noise_std < 0:
            raise InputError("noise_std must be >= 0")
        if not 0 <= self.perturbation_c <= 0.5:
            raise InputError("perturbation amplitude must lie in [0, 0.5] C")
        if not 0.0 < self.split < 1.0:
            raise InputError("split must lie strictly between 0 and 1")
        check_emissivity(self.eps_target)
        check_emissivity(self.eps_reference)

    def to_dict(self) -> dict:
        return {
            "width": self.width,
            "height": self.height,
            "frames": self.frames,
            "temp_start_c": self.temp_start_c,
            "temp_end_c": self.temp_end_c,
            "ramp": self.ramp,
            "eps_target": self.eps_target,
            "eps_reference": self.eps_reference,
            "env": self.env.to_dict(),
            "gray_law": self.gray_law.to_dict(),
            "temp_range_c": list(self.temp_range_c) if self.temp_range_c else None,
            "noise_std": self.noise_std,
            "perturbation_c": self.perturbation_c,
            "split": self.split,
            "timestep_s": self.timestep_s,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SynthConfig":
        d = dict(data)
        if "env" in d:
            d["env"] = EnvironmentConditions.from_dict(d["env"])
        if "gray_law" in d:
            d["gray_law"] = CalibrationModel.from_dict(d["gray_law"])
        if d.get("temp_range_c") is not None:
            d["temp_range_c"] = tuple(d["temp_range_c"])
        return cls(**d)


@dataclass
class SynthOutput:
    frames: list
    gt_temps: list
    target_mask: RegionMask
    reference_mask: RegionMask
    eps_map: np.ndarray
    tau: float
    manifest: dict

    @property
    def masks(self) -> tuple[RegionMask, RegionMask]:
        return self.target_mask, self.reference_mask


def ramp_values(cfg: SynthConfig) -> np.ndarray:
    """Per-frame base temperature, exactly temp_start at frame 0 and temp_end at the last frame."""
    x = np.linspace(0.0, 1.0, cfg.frames)
    if cfg.ramp == "linear":
        shape = x
    else:
        # warm-up that flattens towards the end of the recording
        s = 1.0 / (1.0 + np.exp(-8.0 * (x - 0.3)))
        shape = (s - s[0]) / (s[-1] - s[0])
    return cfg.temp_start_c + (cfg.temp_end_c - cfg.temp_start_c) * shape


def spatial_perturbation(height: int, width: int, amplitude: float, rng) -> np.ndarray:
    """Smooth zero-mean field built from a few low-frequency cosines, max |value| = amplitude."""
    if amplitude == 0:
        return np.zeros((height, width))
    yy, xx = np.mgrid[0:height, 0:width]
    yy = yy / max(height, 1)
    xx = xx / max(width, 1)
    field_ = np.zeros((height, width))
    for _ in range(4):
        fy, fx = rng.uniform(0.5, 2.0, 2)
        phase = rng.uniform(0, 2 * np.pi)
        field_ += rng.normal() * np.cos(2 * np.pi * (fy * yy + fx * xx) + phase)
    field_ -= field_.mean()
    peak = np.abs(field_).max()
    return field_ * (amplitude / peak) if peak > 0 else field_


def generate(cfg: SynthConfig = SynthConfig()) -> SynthOutput:
    rng = np.random.default_rng(cfg.seed)
    h, w = cfg.height, cfg.width
    split_col = int(round(cfg.split * w))
    if split_col < 1 or split_col >= w:
        raise InputError("split leaves one material without pixels")
    target = np.zeros((h, w), dtype=bool)
    target[:, :split_col] = True
    eps_map = np.where(target, cfg.eps_target, cfg.eps_reference)
    tau = atmospheric_transmittance(cfg.env)

    base = ramp_values(cfg)
    perturb = spatial_perturbation(h, w, cfg.perturbation_c, rng)
    gt = [b + perturb for b in base]
    measured = [render_measured(t, eps_map, cfg.env, tau) for t in gt]

    if cfg.temp_range_c is None:
        t_lo = min(float(m.min()) for m in measured)
        t_hi = max(float(m.max()) for m in measured)
    else:
        t_lo, t_hi = cfg.temp_range_c
    law = cfg.gray_law
    frames = []
    for i, m in enumerate(measured):
        t_norm = np.clip((m - t_lo) / (t_hi - t_lo), 0.0, 1.0)
        gray = law(t_norm)
        if cfg.noise_std > 0:
            gray = gray + rng.normal(0.0, cfg.noise_std, gray.shape)
        frames.append(ThermalFrame(np.clip(gray, 0.0, 1.0), m, i * cfg.timestep_s))

    manifest = {
        "name": "synthetic",
        "config": cfg.to_dict(),
        "tau": tau,
        "temp_range_c": [t_lo, t_hi],
        "emissivity": {"target": cfg.eps_target, "reference": cfg.eps_reference},
        "split_col": split_col,
    }
    return SynthOutput(
        frames=frames,
        gt_temps=gt,
        target_mask=RegionMask(target, "target"),
        reference_mask=RegionMask(~target, "reference"),
        eps_map=eps_map,
        tau=tau,
        manifest=manifest,
    )


def sensor_gray_law(cfg: SynthConfig, t_lo: float, t_hi: float) -> CalibrationModel:
    """The generator's gray law expressed with its normalization bounds attached."""
    return CalibrationModel(cfg.gray_law.form, cfg.gray_law.coefficients, NormBounds(t_lo, t_hi, 0.0, 1.0))
