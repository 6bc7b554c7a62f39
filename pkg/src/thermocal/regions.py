"""Per-material region handling: masks, luminance, resizing, emissivity
normalization and masked statistics."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage

from .errors import InputError
from .radiometry import check_emissivity

DEFAULT_BINS = 64
HIST_SMOOTHING = 1e-8

_FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


@dataclass(frozen=True)
class RegionMask:
    bitmap: np.ndarray
    label: str = "region"

    def __post_init__(self):
        bm = np.asarray(self.bitmap).astype(bool)
        if bm.ndim != 2:
            raise InputError("mask bitmap must be 2-D")
        if not bm.any():
            raise InputError(f"mask {self.label!r} has no set pixels")
        object.__setattr__(self, "bitmap", bm)

    @property
    def shape(self):
        return self.bitmap.shape

    @property
    def height(self) -> int:
        return self.bitmap.shape[0]

    @property
    def width(self) -> int:
        return self.bitmap.shape[1]

    @property
    def area(self) -> int:
        return int(self.bitmap.sum())

    def bbox(self) -> tuple[slice, slice]:
        rows = np.flatnonzero(self.bitmap.any(axis=1))
        cols = np.flatnonzero(self.bitmap.any(axis=0))
        return slice(rows[0], rows[-1] + 1), slice(cols[0], cols[-1] + 1)


@dataclass(frozen=True)
class RegionImage:
    plane: np.ndarray
    mask: RegionMask
    emissivity: float = 1.0

    def __post_init__(self):
        plane = np.asarray(self.plane, dtype=float)
        if plane.shape != self.mask.shape:
            raise InputError(f"plane {plane.shape} does not match mask {self.mask.shape}")
        check_emissivity(self.emissivity)
        object.__setattr__(self, "plane", plane)

    def with_emissivity(self, eps: float) -> "RegionImage":
        return replace(self, emissivity=float(eps))

    def with_plane(self, plane) -> "RegionImage":
        plane = np.where(self.mask.bitmap, plane, 0.0)
        return replace(self, plane=plane)

    @property
    def values(self) -> np.ndarray:
        """Masked pixel values in raster order."""
        return self.plane[self.mask.bitmap]


@dataclass(frozen=True)
class RegionStats:
    mean: float
    stddev: float


@dataclass(frozen=True)
class Histogram:
    densities: np.ndarray

    @property
    def bin_count(self) -> int:
        return len(self.densities)


def connected_components(binary, label: str = "component") -> list[RegionMask]:
    """4-connected components, largest first; ties broken by raster position
    of each component's first pixel."""
    img = np.asarray(binary).astype(bool)
    if img.ndim != 2 or img.size == 0:
        raise InputError("connected_components needs a non-empty 2-D image")
    labels, count = ndimage.label(img, structure=_FOUR_CONNECTED)
    if count == 0:
        return []
    flat = labels.ravel()
    areas = np.bincount(flat)[1:]
    # first raster index of each label
    order = np.flatnonzero(flat)
    first = np.full(count, flat.size)
    np.minimum.at(first, flat[order] - 1, order)
    keys = sorted(range(count), key=lambda i: (-areas[i], first[i]))
    return [RegionMask(labels == k + 1, f"{label}{n}") for n, k in enumerate(keys)]


def threshold_mask(plane, level: float, label: str = "region") -> RegionMask:
    """Mask of pixels strictly above ``level``."""
    return RegionMask(np.asarray(plane) > level, label)


def mask_from_labels(label_image, color, label: str = "region") -> RegionMask:
    """Mask of pixels in an RGB (or single channel) label image equal to ``color``."""
    img = np.asarray(label_image)
    color = np.asarray(color)
    if img.ndim == 3:
        bm = np.all(img == color.reshape(1, 1, -1), axis=2)
    else:
        bm = img == color
    return RegionMask(bm, label)


def rgb_to_luma(rgb) -> np.ndarray:
    """BT.601 full-range luma of an 8-bit RGB image, scaled to [0, 1]."""
    rgb = np.asarray(rgb, dtype=float)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise InputError("expected an (H, W, 3) RGB image")
    y = 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]
    return y / 255.0


def _resize_axis_weights(n_in, n_out):
    # half-pixel centres: src = (dst + 0.5) * n_in / n_out - 0.5
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    i0 = np.floor(src).astype(int)
    i1 = np.minimum(i0 + 1, n_in - 1)
    w1 = src - i0
    return i0, i1, w1


def bilinear_resize(plane, factor: float) -> np.ndarray:
    """Bilinear resize by ``factor`` with half-pixel-centre sampling."""
    plane = np.asarray(plane, dtype=float)
    if factor <= 0:
        raise InputError(f"resize factor must be positive, got {factor}")
    h, w = plane.shape
    oh, ow = int(round(h * factor)), int(round(w * factor))
    if oh < 1 or ow < 1:
        raise InputError(f"factor {factor} gives an empty {oh}x{ow} output")
    if (oh, ow) == (h, w):
        return plane.copy()
    r0, r1, wr = _resize_axis_weights(h, oh)
    c0, c1, wc = _resize_axis_weights(w, ow)
    wr = wr[:, None]
    top = plane[r0][:, c0] * (1 - wc) + plane[r0][:, c1] * wc
    bot = plane[r1][:, c0] * (1 - wc) + plane[r1][:, c1] * wc
    return top * (1 - wr) + bot * wr


def extract_region(plane, mask: RegionMask, emissivity: float = 1.0) -> RegionImage:
    plane = np.asarray(plane, dtype=float)
    if plane.shape != mask.shape:
        raise InputError(f"plane {plane.shape} does not match mask {mask.shape}")
    return RegionImage(np.where(mask.bitmap, plane, 0.0), mask, emissivity)


def emissivity_normalize(region: RegionImage) -> RegionImage:
    """``tanh(I / eps)`` inside the mask, zero outside."""
    out = np.where(region.mask.bitmap, np.tanh(region.plane / region.emissivity), 0.0)
    return replace(region, plane=out)


def region_stats(region: RegionImage) -> RegionStats:
    v = region.values
    if v.size == 0:
        raise InputError("region mask is empty")
    return RegionStats(float(v.mean()), float(v.std()))


def smooth_densities(counts, epsilon: float = HIST_SMOOTHING) -> np.ndarray:
    p = np.asarray(counts, dtype=float)
    p = p / p.sum()
    p = p + epsilon
    return p / p.sum()


def region_histogram(region: RegionImage, bins: int = DEFAULT_BINS, epsilon: float = HIST_SMOOTHING) -> Histogram:
    """Equal-width histogram of masked values on [0, 1] with additive smoothing."""
    if bins < 2:
        raise InputError("histogram needs at least 2 bins")
    v = region.values
    if v.size == 0:
        raise InputError("region mask is empty")
    idx = np.clip((np.clip(v, 0.0, 1.0) * bins).astype(int), 0, bins - 1)
    counts = np.bincount(idx, minlength=bins)
    return Histogram(smooth_densities(counts, epsilon))
