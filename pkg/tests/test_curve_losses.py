import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from thermocal.enhance import (
    CurveParams,
    SoftTarget,
    curve_backward,
    curve_forward,
    curve_iterates,
    grad_check,
    loss_hist,
    loss_stat,
    loss_total,
    soft_histogram,
    soft_loss_and_grad,
    theta_loss_and_grad,
)
from thermocal.enhance.gradcheck import numeric_grad, relative_error
from thermocal.errors import InputError
from thermocal.regions import Histogram, RegionImage, RegionMask, RegionStats

unit = st.floats(0.0, 1.0)
theta_val = st.floats(-1.0, 1.0)


# ------------------------------------------------------------------ curve

def test_zero_theta_is_identity():
    p = np.random.default_rng(0).random((5, 7))
    assert np.array_equal(curve_forward(p, CurveParams.zeros(p.shape)), p)


def test_one_step_value():
    theta = np.zeros((8, 1, 1))
    theta[0] = 0.7
    assert curve_iterates(np.array([[0.5]]), theta)[1, 0, 0] == pytest.approx(0.675, abs=1e-15)


@given(st.lists(theta_val, min_size=8, max_size=8))
def test_endpoints_are_fixed(thetas):
    theta = np.array(thetas).reshape(8, 1, 1) * np.ones((8, 1, 2))
    out = curve_forward(np.array([[0.0, 1.0]]), theta)
    assert out[0, 0] == 0.0 and out[0, 1] == 1.0


@given(unit, st.lists(theta_val, min_size=8, max_size=8))
def test_iterates_stay_in_unit_interval(c0, thetas):
    it = curve_iterates(np.array([[c0]]), np.array(thetas).reshape(8, 1, 1))
    assert np.all((it >= 0.0) & (it <= 1.0))
    # each step lies between C^2 and C(2 - C)
    c, nxt = it[:-1, 0, 0], it[1:, 0, 0]
    assert np.all(nxt >= c * c - 1e-15) and np.all(nxt <= c * (2 - c) + 1e-15)


@given(unit, st.lists(theta_val, min_size=8, max_size=8), st.integers(0, 7), st.floats(0.0, 0.5))
def test_output_monotone_in_each_theta(c0, thetas, n, bump):
    theta = np.array(thetas).reshape(8, 1, 1)
    hi = theta.copy()
    hi[n] = min(1.0, hi[n, 0, 0] + bump)
    p = np.array([[c0]])
    assert curve_forward(p, hi)[0, 0] >= curve_forward(p, theta)[0, 0] - 1e-15


def test_curve_params_validation():
    with pytest.raises(InputError):
        CurveParams(np.zeros((7, 2, 2)))
    with pytest.raises(InputError):
        CurveParams(np.full((8, 2, 2), 1.5))


def test_curve_params_csv():
    text = CurveParams(np.zeros((8, 2, 3))).to_csv()
    lines = text.splitlines()
    assert lines[0] == "# theta_1" and len(lines) == 8 * 3
    assert lines[1] == "0.000000000,0.000000000,0.000000000"


def test_curve_backward_matches_differences():
    rng = np.random.default_rng(1)
    p = rng.random((3, 4))
    theta = rng.uniform(-1, 1, (8, 3, 4))
    w = rng.normal(size=(3, 4))
    g_theta, g_in = curve_backward(w, curve_iterates(p, theta), theta)

    def f_theta(t):
        return float(np.sum(w * curve_forward(p, t)))

    def f_in(x):
        return float(np.sum(w * curve_forward(x, theta)))

    assert relative_error(g_theta, numeric_grad(f_theta, theta, 1e-5)) < 1e-6
    assert relative_error(g_in, numeric_grad(f_in, p, 1e-5)) < 1e-6


# ----------------------------------------------------------------- losses

def test_loss_stat_examples():
    assert loss_stat(RegionStats(0.4, 0.1), RegionStats(0.4, 0.1)) == 0.0
    assert loss_stat(RegionStats(0.6, 0.2), RegionStats(0.4, 0.1)) == pytest.approx(0.025, abs=1e-15)


def test_two_bin_hist_value():
    h1 = Histogram(np.array([0.5, 0.5]))
    h2 = Histogram(np.array([0.9, 0.1]))
    hand = 0.5 * (0.5 * math.log(5 / 9) + 0.5 * math.log(5) + 0.9 * math.log(9 / 5) + 0.1 * math.log(1 / 5))
    assert loss_hist(h1, h2) == pytest.approx(hand, abs=1e-12)
    assert loss_hist(h1, h2) == pytest.approx(0.43944, abs=1e-5)
    assert loss_hist(h1, h1) == 0.0


def test_hist_bin_mismatch():
    with pytest.raises(InputError):
        loss_hist(Histogram(np.full(2, 0.5)), Histogram(np.full(4, 0.25)))


def _region(values):
    v = np.asarray(values, dtype=float).reshape(1, -1)
    return RegionImage(v, RegionMask(np.ones(v.shape)))


densities = arrays(np.float64, 16, elements=st.floats(1e-6, 1.0)).map(lambda a: Histogram(a / a.sum()))


@given(densities, densities)
def test_hist_loss_symmetric_nonnegative(a, b):
    assert loss_hist(a, b) >= 0.0
    assert loss_hist(a, b) == pytest.approx(loss_hist(b, a), abs=1e-12)


@given(arrays(np.float64, 30, elements=unit), arrays(np.float64, 30, elements=unit))
def test_total_is_sum_of_parts(a, b):
    total, stat, hist = loss_total(_region(a), _region(b))
    assert total == stat + hist
    assert stat >= 0 and hist >= 0


@given(arrays(np.float64, 30, elements=unit), st.randoms(use_true_random=False))
def test_identical_multisets_give_zero(a, rnd):
    perm = list(range(30))
    rnd.shuffle(perm)
    total, _, _ = loss_total(_region(a), _region(a[perm]))
    assert total == pytest.approx(0.0, abs=1e-15)


def test_stat_grows_with_mean_gap():
    rng = np.random.default_rng(3)
    base = rng.uniform(0.1, 0.3, 200)
    stats = [loss_total(_region(base + gap), _region(base))[1] for gap in (0.0, 0.1, 0.2, 0.4)]
    assert stats == sorted(stats) and stats[0] == 0.0


# ------------------------------------------------------------ soft binning

@given(arrays(np.float64, st.integers(1, 40), elements=unit), st.integers(2, 64))
def test_soft_histogram_is_a_density(v, bins):
    h = soft_histogram(v, bins)
    assert abs(h.sum() - 1.0) < 1e-12 and np.all(h > 0)


def test_soft_histogram_at_bin_centres_is_hard():
    v = (np.arange(8) + 0.5) / 8
    np.testing.assert_allclose(soft_histogram(v, 8, 0.0), np.full(8, 1 / 8), atol=1e-15)


def test_soft_loss_gradient():
    rng = np.random.default_rng(4)
    target = SoftTarget(rng.uniform(0.3, 0.7, 100), 16)
    v = rng.uniform(0.2, 0.8, 40)
    # keep away from the triangular kernel's kinks at bin centres
    centres = (np.arange(16) + 0.5) / 16
    v = v[np.min(np.abs(v[:, None] - centres[None]), axis=1) > 1e-4]
    _, _, _, g = soft_loss_and_grad(v, target)
    num = numeric_grad(lambda x: soft_loss_and_grad(x, target)[0], v, 1e-7)
    assert relative_error(g, num) < 1e-5


# ------------------------------------------------------ theta gradient check

def kink_free(plane, mask, theta, step, bins, margin=3e-4):
    """Flat theta indices whose perturbation keeps every output off a soft-bin kink.

    ``margin`` also drops pixels sitting just beside a kink, where a nearly
    empty bin makes the loss too curved for central differences.
    """
    it = curve_iterates(plane, theta)
    out = it[-1]
    slope, _ = curve_backward(np.ones_like(out), it, theta)
    reach = np.abs(slope) * step * 2 + margin
    u = out * bins - 0.5
    dist = np.minimum(np.abs(u - np.round(u)), np.minimum(np.abs(u), np.abs(u - (bins - 1)))) / bins
    ok = (dist[None] > reach) & mask[None]
    return np.flatnonzero(ok.ravel())


def theta_gradcheck(seed, size=8, bins=64, step=1e-5):
    rng = np.random.default_rng(seed)
    plane = rng.uniform(0.1, 0.9, (size, size))
    mask = rng.random((size, size)) > 0.2
    mask[0, 0] = True
    plane = np.where(mask, plane, 0.0)
    theta = rng.uniform(-0.5, 0.5, (8, size, size))
    target = SoftTarget(rng.uniform(0.2, 0.9, 300), bins)

    def f(t):
        return theta_loss_and_grad(plane, mask, t, target)[0]

    def g(t):
        return theta_loss_and_grad(plane, mask, t, target)[3]

    idx = kink_free(plane, mask, theta, step, bins)
    assert len(idx) > 0.8 * mask.sum() * 8
    return grad_check(f, g, theta, step, idx)


@pytest.mark.parametrize("seed", range(5))
def test_curve_loss_gradient_check(seed):
    assert theta_gradcheck(seed) < 1e-4


def test_grad_check_on_quadratic():
    a = np.array([[3.0, 1.0], [1.0, 2.0]])

    def f(x):
        return float(x @ a @ x)

    assert grad_check(f, lambda x: 2 * a @ x, np.array([0.3, -1.2])) < 1e-9
