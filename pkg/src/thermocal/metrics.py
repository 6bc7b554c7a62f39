"""Image and temperature-profile metrics."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import InputError
from .regions import RegionImage

PROFILE_KINDS = ("original", "enhanced", "gt")
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2


@dataclass(frozen=True)
class TemperatureProfile:
    values: np.ndarray
    kind: str = "original"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        if v.size < 1:
            raise InputError("profile needs at least one frame")
        if not np.all(np.isfinite(v)):
            raise InputError("profile contains non-finite values")
        if self.kind not in PROFILE_KINDS:
            raise InputError(f"unknown profile kind {self.kind!r}")
        object.__setattr__(self, "values", v)

    @property
    def frame_count(self) -> int:
        return self.values.size

    def __len__(self):
        return self.values.size


@dataclass
class MetricsReport:
    ssim: float
    cei: float
    entropy_bits: float
    dis_orig_gt: float
    dis_en_gt: float
    err_mean_c: float
    err_std_c: float
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @property
    def err_text(self) -> str:
        return format_error(self.err_mean_c, self.err_std_c)


def ssim(a, b, window: int = 8) -> float:
    """Mean SSIM over all ``window`` x ``window`` windows (stride 1), unit dynamic range."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise InputError(f"ssim inputs differ in shape: {a.shape} vs {b.shape}")
    if a.ndim != 2 or min(a.shape) < window:
        raise InputError(f"ssim needs 2-D planes at least {window}x{window}")
    wa = sliding_window_view(a, (window, window))
    wb = sliding_window_view(b, (window, window))
    mu_a = wa.mean(axis=(2, 3))
    mu_b = wb.mean(axis=(2, 3))
    da = wa - mu_a[..., None, None]
    db = wb - mu_b[..., None, None]
    var_a = (da * da).mean(axis=(2, 3))
    var_b = (db * db).mean(axis=(2, 3))
    cov = (da * db).mean(axis=(2, 3))
    num = (2 * mu_a * mu_b + SSIM_C1) * (2 * cov + SSIM_C2)
    den = (mu_a ** 2 + mu_b ** 2 + SSIM_C1) * (var_a + var_b + SSIM_C2)
    return float(np.mean(num / den))


def region_ssim(enhanced: RegionImage, original: RegionImage, window: int = 8) -> float:
    """SSIM restricted to the bounding box of the (shared) region mask."""
    rows, cols = enhanced.mask.bbox()
    return ssim(enhanced.plane[rows, cols], original.plane[rows, cols], window)


def cei(enhanced: RegionImage, original: RegionImage) -> float:
    """Contrast enhancement index: masked standard deviation ratio sigma_en / sigma_or."""
    if enhanced.mask.shape != original.mask.shape or not np.array_equal(enhanced.mask.bitmap, original.mask.bitmap):
        raise InputError("cei needs both regions on the same mask")
    s_or = float(original.values.std())
    if s_or == 0.0:
        raise InputError("original region has zero contrast; CEI undefined")
    return float(enhanced.values.std()) / s_or


def entropy(values, bins: int = 256) -> float:
    """Shannon entropy in bits of the ``bins``-level histogram of values in [0, 1]."""
    v = np.clip(np.asarray(values, dtype=float).ravel(), 0.0, 1.0)
    if v.size == 0:
        return 0.0
    idx = np.minimum((v * bins).astype(int), bins - 1)
    counts = np.bincount(idx, minlength=bins)
    p = counts[counts > 0] / v.size
    return float(-np.sum(p * np.log2(p)) + 0.0)


def valid_anchors(mask, window: int = 16) -> np.ndarray:
    """Top-left (row, col) positions where a ``window`` square lies fully inside ``mask``."""
    m = np.asarray(mask, dtype=bool)
    if m.shape[0] < window or m.shape[1] < window:
        return np.empty((0, 2), dtype=int)
    full = sliding_window_view(m, (window, window)).all(axis=(2, 3))
    return np.argwhere(full)


def choose_anchor(mask, window: int = 16, seed: int = 0) -> tuple[int, int]:
    anchors = valid_anchors(mask, window)
    if len(anchors) == 0:
        raise InputError(f"no {window}x{window} window fits inside the target mask")
    rng = np.random.default_rng(seed)
    r, c = anchors[rng.integers(len(anchors))]
    return int(r), int(c)


def extract_profile(planes, anchor, window: int = 16, mask=None, kind: str = "original") -> TemperatureProfile:
    """Per-frame mean over a fixed ``window`` x ``window`` neighbourhood."""
    r, c = anchor
    values = []
    for i, p in enumerate(planes):
        p = np.asarray(p, dtype=float)
        if r < 0 or c < 0 or r + window > p.shape[0] or c + window > p.shape[1]:
            raise InputError(f"window at {anchor} exits frame {i} of shape {p.shape}")
        if mask is not None and not np.asarray(mask, dtype=bool)[r:r + window, c:c + window].all():
            anchors = valid_anchors(mask, window)
            span = (
                f"rows {anchors[:, 0].min()}..{anchors[:, 0].max()}, cols {anchors[:, 1].min()}..{anchors[:, 1].max()}"
                if len(anchors) else "none"
            )
            raise InputError(f"window at {anchor} exits the target mask; valid anchors: {span}")
        values.append(p[r:r + window, c:c + window].mean())
    return TemperatureProfile(np.array(values), kind)


def rescale_profile(norm_profile, gt: TemperatureProfile, fraction: float = 0.95, mode: str = "max",
                    kind: str = "enhanced") -> TemperatureProfile:
    """Map normalized values [0, 1] onto [min(gt), upper], clamped.

    ``upper`` is ``fraction * max(gt)`` in mode "max", or the ``fraction``
    quantile of gt in mode "percentile".
    """
    g = gt.values
    lo = float(g.min())
    if mode == "max":
        hi = fraction * float(g.max())
    elif mode == "percentile":
        hi = float(np.quantile(g, fraction))
    else:
        raise InputError(f"unknown rescale mode {mode!r}")
    if not hi > lo:
        raise InputError(f"degenerate GT range for rescaling: [{lo}, {hi}]")
    n = np.asarray(norm_profile.values if isinstance(norm_profile, TemperatureProfile) else norm_profile,
                   dtype=float)
    return TemperatureProfile(np.clip(lo + n * (hi - lo), lo, hi), kind)


def _check_pair(a: TemperatureProfile, b: TemperatureProfile):
    if a.frame_count != b.frame_count:
        raise InputError(f"profile lengths differ: {a.frame_count} vs {b.frame_count}")


def profile_distance(a: TemperatureProfile, b: TemperatureProfile) -> float:
    _check_pair(a, b)
    d = a.values - b.values
    return float(np.sqrt(np.sum(d * d)))


def error_stats(en: TemperatureProfile, gt: TemperatureProfile) -> tuple[float, float]:
    """Mean and population standard deviation of en - gt."""
    _check_pair(en, gt)
    if en.frame_count < 2:
        raise InputError("error statistics need at least two frames")
    d = en.values - gt.values
    return float(d.mean()), float(d.std())


def format_error(mean: float, std: float) -> str:
    return f"{mean:.2f}±{std:.2f}"
