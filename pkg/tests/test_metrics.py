import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from thermocal.errors import InputError
from thermocal.metrics import (
    MetricsReport,
    TemperatureProfile,
    cei,
    choose_anchor,
    entropy,
    error_stats,
    extract_profile,
    format_error,
    profile_distance,
    rescale_profile,
    ssim,
    valid_anchors,
)
from thermocal.regions import RegionImage, RegionMask

planes = arrays(np.float64, (10, 10), elements=st.floats(0.0, 1.0))
profiles = arrays(np.float64, 12, elements=st.floats(-50.0, 150.0)).map(TemperatureProfile)


def brute_ssim(a, b, win=8):
    c1, c2 = 0.01**2, 0.03**2
    vals = []
    for i in range(a.shape[0] - win + 1):
        for j in range(a.shape[1] - win + 1):
            x = a[i:i + win, j:j + win].ravel()
            y = b[i:i + win, j:j + win].ravel()
            mx, my = x.mean(), y.mean()
            vx, vy = x.var(), y.var()
            cov = np.mean((x - mx) * (y - my))
            vals.append((2 * mx * my + c1) * (2 * cov + c2) / ((mx**2 + my**2 + c1) * (vx + vy + c2)))
    return float(np.mean(vals))


# ------------------------------------------------------------------ SSIM

@given(planes)
def test_ssim_identity(x):
    assert ssim(x, x) == pytest.approx(1.0, abs=1e-12)


@given(planes, planes)
def test_ssim_symmetric_and_bounded(a, b):
    assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)
    assert -1.0 <= ssim(a, b) <= 1.0


def test_ssim_matches_window_loop():
    rng = np.random.default_rng(0)
    a, b = rng.random((12, 11)), rng.random((12, 11))
    assert ssim(a, b) == pytest.approx(brute_ssim(a, b), abs=1e-12)


def test_ssim_inverted_binary_is_negative():
    x = np.zeros((8, 8))
    x[:, :4] = 1.0
    assert ssim(x, 1.0 - x) < 0.0


def test_ssim_shape_mismatch():
    with pytest.raises(InputError):
        ssim(np.zeros((8, 8)), np.zeros((8, 9)))


# ------------------------------------------------------------------- CEI

def _r(plane):
    return RegionImage(np.asarray(plane, dtype=float), RegionMask(np.ones(np.shape(plane))))


def test_cei_identity_and_scale():
    rng = np.random.default_rng(1)
    x = rng.random((5, 5))
    assert cei(_r(x), _r(x)) == 1.0
    doubled = 0.5 + 2 * (x - x.mean())
    assert cei(_r(doubled), _r(x)) == pytest.approx(2.0, rel=1e-12)


def test_cei_undefined_for_flat_original():
    with pytest.raises(InputError):
        cei(_r(np.random.default_rng(2).random((3, 3))), _r(np.full((3, 3), 0.5)))


# --------------------------------------------------------------- entropy

def test_entropy_examples():
    assert entropy(np.full(100, 0.4)) == 0.0
    assert entropy((np.arange(256) + 0.5) / 256) == pytest.approx(8.0, abs=1e-12)
    assert entropy(np.repeat([0.1, 0.9], 50)) == pytest.approx(1.0, abs=1e-12)


@given(arrays(np.float64, st.integers(1, 300), elements=st.floats(0, 1)), st.randoms(use_true_random=False))
def test_entropy_bounds_and_permutation(v, rnd):
    e = entropy(v)
    assert 0.0 <= e <= 8.0
    perm = list(range(v.size))
    rnd.shuffle(perm)
    assert entropy(v[perm]) == e


# -------------------------------------------------------------- profiles

def test_constant_frames_profile():
    p = extract_profile([np.full((20, 20), 31.5)] * 4, (2, 3))
    assert np.all(p.values == 31.5) and p.frame_count == 4


def test_single_frame_profile_is_window_mean():
    g = np.arange(400.0).reshape(20, 20)
    p = extract_profile([g], (1, 2))
    assert p.values[0] == pytest.approx(g[1:17, 2:18].mean())


def test_window_leaving_mask_reports_valid_range():
    mask = np.zeros((20, 30), dtype=bool)
    mask[:, :18] = True
    with pytest.raises(InputError, match="cols 0..2"):
        extract_profile([np.zeros((20, 30))], (0, 5), mask=mask)


def test_anchor_is_seeded_and_valid():
    mask = np.zeros((40, 40), dtype=bool)
    mask[5:30, 3:25] = True
    a = choose_anchor(mask, 16, seed=7)
    assert a == choose_anchor(mask, 16, seed=7)
    assert mask[a[0]:a[0] + 16, a[1]:a[1] + 16].all()
    assert len(valid_anchors(mask, 16)) == (25 - 15) * (22 - 15)


def test_no_anchor_fits():
    with pytest.raises(InputError):
        choose_anchor(np.ones((10, 10), dtype=bool), 16)


def test_ramp_profile_tracks_schedule(small_sequence):
    p = extract_profile(small_sequence.gt_temps, (0, 0), 16)
    assert np.all(np.diff(p.values) > 0)
    np.testing.assert_allclose(p.values - p.values[0], np.linspace(0, 11, 8), atol=1e-9)


# --------------------------------------------------------------- rescale

def test_rescale_endpoints():
    gt = TemperatureProfile(np.linspace(26, 37, 12), "gt")
    out = rescale_profile([0.0, 1.0, 0.5], gt)
    assert out.values[0] == 26.0
    assert out.values[1] == 0.95 * 37.0 == pytest.approx(35.15)
    assert out.values[2] == pytest.approx(0.5 * (26 + 35.15))


@given(arrays(np.float64, 12, elements=st.floats(-2, 3)))
def test_rescale_stays_in_interval(n):
    gt = TemperatureProfile(np.linspace(26, 37, 12), "gt")
    v = rescale_profile(n, gt).values
    assert np.all((v >= 26.0) & (v <= 0.95 * 37.0))


def test_rescale_percentile_mode_and_degenerate():
    gt = TemperatureProfile(np.arange(101.0), "gt")
    assert rescale_profile([1.0], gt, 0.95, "percentile").values[0] == pytest.approx(95.0)
    with pytest.raises(InputError):
        rescale_profile([0.5], TemperatureProfile(np.full(3, 30.0), "gt"))


# -------------------------------------------------------------- distance

def test_distance_examples():
    a = TemperatureProfile(np.full(100, 30.0))
    assert profile_distance(a, a) == 0.0
    assert profile_distance(a, TemperatureProfile(np.full(100, 31.0))) == pytest.approx(10.0)
    with pytest.raises(InputError):
        profile_distance(a, TemperatureProfile(np.zeros(3)))


@given(profiles, profiles, profiles)
def test_distance_is_a_metric(a, b, c):
    assert profile_distance(a, b) >= 0.0
    assert profile_distance(a, b) == profile_distance(b, a)
    assert profile_distance(a, c) <= profile_distance(a, b) + profile_distance(b, c) + 1e-9
    assert profile_distance(a, a) == 0.0


# ----------------------------------------------------------------- errors

def test_error_stats_examples():
    gt = TemperatureProfile(np.linspace(26, 37, 10), "gt")
    assert error_stats(gt, gt) == (0.0, 0.0)
    m, s = error_stats(TemperatureProfile(gt.values + 0.5, "enhanced"), gt)
    assert m == pytest.approx(0.5) and s == pytest.approx(0.0, abs=1e-12)
    assert format_error(0.5741, 0.2549) == "0.57±0.25"


def test_error_stats_need_two_frames():
    with pytest.raises(InputError):
        error_stats(TemperatureProfile([1.0]), TemperatureProfile([2.0]))


def test_profile_validation():
    with pytest.raises(InputError):
        TemperatureProfile([np.nan])
    with pytest.raises(InputError):
        TemperatureProfile([1.0], "predicted")


def test_report_json():
    r = MetricsReport(0.9, 1.2, 5.0, 50.0, 5.0, 0.1, 0.3, {"mode": "direct"})
    d = json.loads(r.to_json())
    assert d["dis_en_gt"] == 5.0 and d["extra"]["mode"] == "direct"
    assert r.err_text == "0.10±0.30"
