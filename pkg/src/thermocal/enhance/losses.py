"""Statistical alignment and histogram-divergence losses.

Reported values use hard 64-bin histograms. Training uses a triangular
soft-binning relaxation so the histogram term has a gradient.
"""

from __future__ import annotations

import numpy as np

from ..errors import InputError
from ..regions import (
    DEFAULT_BINS,
    HIST_SMOOTHING,
    Histogram,
    RegionImage,
    RegionStats,
    region_histogram,
    region_stats,
)


def loss_stat(en: RegionStats, ref: RegionStats) -> float:
    return 0.5 * ((en.mean - ref.mean) ** 2 + (en.stddev - ref.stddev) ** 2)


def kl_divergence(p, q) -> float:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    return float(np.sum(p * np.log(p / q)))


def symmetric_kl(p, q) -> float:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    return 0.5 * float(np.sum((p - q) * np.log(p / q)))


def loss_hist(en: Histogram, ref: Histogram) -> float:
    if en.bin_count != ref.bin_count:
        raise InputError(f"histogram bin counts differ: {en.bin_count} vs {ref.bin_count}")
    return 0.5 * (kl_divergence(en.densities, ref.densities) + kl_divergence(ref.densities, en.densities))


def loss_total(enhanced: RegionImage, reference: RegionImage, bins: int = DEFAULT_BINS):
    """(total, stat, hist) with hard-binned histograms."""
    stat = loss_stat(region_stats(enhanced), region_stats(reference))
    hist = loss_hist(region_histogram(enhanced, bins), region_histogram(reference, bins))
    return stat + hist, stat, hist


# ---------------------------------------------------------------- soft binning

def _soft_bin_coords(values, bins):
    # bin centres at (k + 0.5) / bins; mass split linearly between neighbours
    u = np.asarray(values, dtype=float) * bins - 0.5
    inside = (u > 0.0) & (u < bins - 1)
    u = np.clip(u, 0.0, bins - 1.0)
    k = np.minimum(np.floor(u).astype(int), bins - 2)
    frac = u - k
    return k, frac, inside


def soft_histogram(values, bins: int = DEFAULT_BINS, epsilon: float = HIST_SMOOTHING) -> np.ndarray:
    v = np.asarray(values, dtype=float).ravel()
    k, frac, _ = _soft_bin_coords(v, bins)
    counts = np.bincount(k, weights=1.0 - frac, minlength=bins)
    counts += np.bincount(k + 1, weights=frac, minlength=bins)
    p = counts / v.size
    return (p + epsilon) / (1.0 + bins * epsilon)


class SoftTarget:
    """Precomputed reference-side quantities for the differentiable loss."""

    def __init__(self, ref_values, bins: int = DEFAULT_BINS, epsilon: float = HIST_SMOOTHING):
        v = np.asarray(ref_values, dtype=float).ravel()
        if v.size == 0:
            raise InputError("reference region is empty")
        self.bins = bins
        self.epsilon = epsilon
        self.mean = float(v.mean())
        self.std = float(v.std())
        self.hist = soft_histogram(v, bins, epsilon)


def soft_loss_and_grad(values, target: SoftTarget, stat_only: bool = False):
    """Differentiable L_stat + soft L_hist and its gradient w.r.t. ``values``.

    Returns (total, stat, hist, grad) with grad shaped like ``values``.
    """
    v = np.asarray(values, dtype=float)
    flat = v.ravel()
    n = flat.size
    if n == 0:
        raise InputError("enhanced region is empty")
    mu = flat.mean()
    dev = flat - mu
    sigma = np.sqrt(np.mean(dev * dev))
    dmu = mu - target.mean
    dsig = sigma - target.std
    stat = 0.5 * (dmu * dmu + dsig * dsig)
    grad = np.full(n, dmu / n)
    if sigma > 0:
        grad += dsig * dev / (n * sigma)

    bins, eps = target.bins, target.epsilon
    k, frac, inside = _soft_bin_coords(flat, bins)
    counts = np.bincount(k, weights=1.0 - frac, minlength=bins)
    counts += np.bincount(k + 1, weights=frac, minlength=bins)
    scale = 1.0 / (n * (1.0 + bins * eps))
    p = counts * scale + eps / (1.0 + bins * eps)
    q = target.hist
    log_ratio = np.log(p / q)
    hist = 0.5 * float(np.sum((p - q) * log_ratio))
    dp = 0.5 * (log_ratio + 1.0 - q / p)
    # d frac / d value = bins inside the unclamped range
    if not stat_only:
        grad += np.where(inside, (dp[k + 1] - dp[k]) * bins * scale, 0.0)
    return stat + hist, stat, hist, grad.reshape(v.shape)
