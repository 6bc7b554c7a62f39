"""End-to-end processing of one recording.

masks -> emissivity normalization -> enhancement -> calibration and
conversion -> GT computation -> rescaling -> metrics.

The enhanced target is read back as if it were reference material: its
curve output is mapped to a reference-equivalent gray level with the inverse
of the reference's normalization, converted to a sensor temperature with the
fitted calibration, and corrected with the reference emissivity.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from . import calibration as cal
from .enhance import (
    NetworkWeights,
    TrainConfig,
    enhance_normalized,
    loss_total,
    optimize_theta_direct,
    train,
)
from .enhance.engine import apply_curve
from .errors import InputError, ThermocalError
from .metrics import (
    MetricsReport,
    TemperatureProfile,
    cei,
    choose_anchor,
    entropy,
    error_stats,
    extract_profile,
    profile_distance,
    region_ssim,
    rescale_profile,
)
from .radiometry import EnvironmentConditions, correct_frame, correct_temperature
from .regions import RegionMask, emissivity_normalize, extract_region

log = logging.getLogger(__name__)


class StageError(ThermocalError):
    """A pipeline stage failed; carries the stage name and frame index."""

    def __init__(self, stage: str, frame: int | None, cause: Exception):
        where = f" at frame {frame}" if frame is not None else ""
        super().__init__(f"stage '{stage}' failed{where}: {cause}")
        self.stage = stage
        self.frame = frame
        self.exit_code = getattr(cause, "exit_code", 1)


@dataclass
class PipelineOptions:
    direct: bool = True
    direct_steps: int = 300
    direct_learning_rate: float = 1.0
    bins: int = 64
    train: TrainConfig = field(default_factory=lambda: TrainConfig(
        learning_rate=1e-2, epochs=5, normalize=True, schedule="cosine", warmup_samples=100))
    weights: NetworkWeights | None = None
    calibration_form: str = "linear"
    calibration_window: int = 5
    calibration_step: int = 7
    calibration: cal.CalibrationModel | None = None
    profile_window: int = 16
    seed: int = 0
    rescale_fraction: float = 0.95
    rescale_mode: str = "max"
    kelvin_offset: float = 273.15
    # worker processes for per-frame direct optimization; results do not depend on it
    jobs: int = 1


@dataclass
class PipelineResult:
    original: TemperatureProfile
    enhanced: TemperatureProfile
    gt: TemperatureProfile
    report: MetricsReport
    calibration: cal.CalibrationModel
    anchor: tuple
    enhanced_planes: list
    enhanced_temps: list
    losses: list
    weights: NetworkWeights | None = None


def reference_equivalent_gray(plane, eps_reference: float):
    """Gray level a reference-material surface would show for normalized value ``plane``."""
    c = np.clip(plane, 0.0, 1.0 - 1e-15)
    return eps_reference * np.arctanh(c)


def enhanced_temperature(plane, mask, model: cal.CalibrationModel, eps_reference: float,
                         env: EnvironmentConditions, tau: float, kelvin_offset: float = 273.15):
    """True-temperature estimate (C) of an enhanced target plane; NaN outside ``mask``."""
    gray = reference_equivalent_gray(plane[mask], eps_reference)
    sensor_c = cal.gray_to_temp(model, model.bounds.normalize_gray(gray))
    out = np.full(plane.shape, np.nan)
    out[mask] = correct_temperature(sensor_c, eps_reference, env, tau, kelvin_offset)
    return out


def _stage(name, frame=None):
    class _Ctx:
        def __enter__(self):
            return self

        def __exit__(self, exc_type, exc, tb):
            if exc is not None and isinstance(exc, Exception) and not isinstance(exc, StageError):
                raise StageError(name, frame, exc) from exc
            return False

    return _Ctx()


def normalized_pairs(frames, target_mask: RegionMask, reference_mask: RegionMask,
                     eps_target: float, eps_reference: float):
    pairs = []
    for i, f in enumerate(frames):
        with _stage("normalize", i):
            t = emissivity_normalize(extract_region(f.gray, target_mask, eps_target))
            r = emissivity_normalize(extract_region(f.gray, reference_mask, eps_reference))
        pairs.append((t, r))
    return pairs


def _direct_enhance(pair, steps, lr, bins):
    t, r = pair
    params, _ = optimize_theta_direct(t, r, steps, lr, bins)
    return apply_curve(t, params)


def run_pipeline(frames, target_mask: RegionMask, reference_mask: RegionMask, eps_target: float,
                 eps_reference: float, env: EnvironmentConditions, tau: float,
                 options: PipelineOptions = PipelineOptions()) -> PipelineResult:
    if not frames:
        raise InputError("no frames to process")
    if np.any(target_mask.bitmap & reference_mask.bitmap):
        raise InputError("target and reference masks overlap")

    with _stage("calibrate"):
        model = options.calibration or cal.calibrate_sequence(
            frames, options.calibration_form, options.calibration_window, options.calibration_step
        )

    eps_map = np.ones(target_mask.shape)
    eps_map[target_mask.bitmap] = eps_target
    eps_map[reference_mask.bitmap] = eps_reference
    gt_grids = []
    for i, f in enumerate(frames):
        with _stage("gt", i):
            gt_grids.append(correct_frame(f.temps, eps_map, env, tau, options.kelvin_offset))

    pairs = normalized_pairs(frames, target_mask, reference_mask, eps_target, eps_reference)

    weights = None
    enhanced = []
    if options.direct:
        job = partial(_direct_enhance, steps=options.direct_steps, lr=options.direct_learning_rate,
                      bins=options.bins)
        if options.jobs > 1:
            with ProcessPoolExecutor(options.jobs) as pool:
                futures = [pool.submit(job, pair) for pair in pairs]
                for i, fut in enumerate(futures):
                    with _stage("enhance", i):
                        enhanced.append(fut.result())
        else:
            for i, pair in enumerate(pairs):
                with _stage("enhance", i):
                    enhanced.append(job(pair))
    else:
        with _stage("train"):
            weights = options.weights or train(pairs, options.train).weights
        for i, (t, r) in enumerate(pairs):
            with _stage("enhance", i):
                enhanced.append(enhance_normalized(t, r, weights))

    losses = [loss_total(en, r, options.bins)[0] for en, (_, r) in zip(enhanced, pairs)]

    bm = target_mask.bitmap
    en_temps = []
    for i, en in enumerate(enhanced):
        with _stage("convert", i):
            en_temps.append(enhanced_temperature(en.plane, bm, model, eps_reference, env, tau,
                                                 options.kelvin_offset))

    with _stage("profile"):
        anchor = choose_anchor(bm, options.profile_window, options.seed)
        w = options.profile_window
        original = extract_profile([f.temps for f in frames], anchor, w, bm, "original")
        gt = extract_profile(gt_grids, anchor, w, bm, "gt")
        raw_en = extract_profile(en_temps, anchor, w, bm, "enhanced")
        enhanced_profile = rescale_profile(
            normalize_to_gt_range(raw_en.values, gt, options.rescale_fraction, options.rescale_mode),
            gt, options.rescale_fraction, options.rescale_mode,
        )

    with _stage("metrics"):
        ssims = [region_ssim(en, t) for en, (t, _) in zip(enhanced, pairs)]
        ceis = [cei(en, t) for en, (t, _) in zip(enhanced, pairs)]
        ents = [entropy(en.values) for en in enhanced]
        err_mean, err_std = error_stats(enhanced_profile, gt)
        report = MetricsReport(
            ssim=float(np.mean(ssims)),
            cei=float(np.mean(ceis)),
            entropy_bits=float(np.mean(ents)),
            dis_orig_gt=profile_distance(original, gt),
            dis_en_gt=profile_distance(enhanced_profile, gt),
            err_mean_c=err_mean,
            err_std_c=err_std,
            extra={
                "mode": "direct" if options.direct else "network",
                "ssim_pair": "enhanced_vs_original_normalized_target",
                "anchor": list(anchor),
                "profile_window": options.profile_window,
                "seed": options.seed,
                "mean_loss_total": float(np.mean(losses)),
                "frames": len(frames),
                "calibration": model.to_dict(),
                "rescale": {"fraction": options.rescale_fraction, "mode": options.rescale_mode},
            },
        )
    return PipelineResult(original, enhanced_profile, gt, report, model, anchor,
                          [e.plane for e in enhanced], en_temps, losses, weights)


def normalize_to_gt_range(values, gt: TemperatureProfile, fraction: float = 0.95, mode: str = "max"):
    """Express temperatures as fractions of the GT restoration interval used by ``rescale_profile``."""
    g = gt.values
    lo = float(g.min())
    hi = fraction * float(g.max()) if mode == "max" else float(np.quantile(g, fraction))
    if not hi > lo:
        raise InputError(f"degenerate GT range for rescaling: [{lo}, {hi}]")
    return (np.asarray(values, dtype=float) - lo) / (hi - lo)
