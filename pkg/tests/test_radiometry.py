import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from thermocal.constants import CONSTANTS_ENV, RadiometryConstants, load_constants
from thermocal.errors import ConfigurationError, DomainError, InputError
from thermocal.radiometry import (
    EnvironmentConditions,
    atmospheric_transmittance,
    attenuation_coefficient,
    correct_frame,
    correct_temperature,
    render_measured,
    water_condensation,
)

K = 273.15
N = 4.09


def flat_env(temp_c=20.0, n=N):
    return EnvironmentConditions(ambient_temp_c=temp_c, background_temp_c=temp_c, sensor_exponent=n)


def bisect(f, lo, hi, tol=1e-13):
    flo = f(lo)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


@pytest.mark.parametrize("temp,omega", [(5, 6.76), (10, 9.33), (15, 11.96), (20, 17.22), (25, 22.80)])
def test_condensation_table_rows(temp, omega):
    assert water_condensation(temp) == pytest.approx(omega, abs=1e-12)


def test_condensation_interpolates_and_clamps():
    assert water_condensation(12.5) == pytest.approx(10.645, abs=1e-12)
    assert water_condensation(-10.0) == pytest.approx(6.76)
    assert water_condensation(40.0) == pytest.approx(22.80)


def test_empty_table_is_configuration_error():
    with pytest.raises(ConfigurationError):
        water_condensation(20.0, table=())


def test_transmittance_worked_example():
    env = EnvironmentConditions(ambient_temp_c=20.0, relative_humidity=0.881, distance_m=0.25)
    k = attenuation_coefficient(env)
    assert k == pytest.approx(17.22 * 0.881 / 6.76 * 0.342, rel=1e-12)
    assert k == pytest.approx(0.76752, abs=1e-5)
    assert atmospheric_transmittance(env) == pytest.approx(math.exp(-0.25 * k), rel=1e-12)
    assert atmospheric_transmittance(env) == pytest.approx(0.8254, abs=1e-4)


def test_transmittance_trivial_paths():
    assert atmospheric_transmittance(EnvironmentConditions(relative_humidity=0.0)) == 1.0
    assert atmospheric_transmittance(EnvironmentConditions(distance_m=0.0)) == 1.0


def test_identity_configuration():
    env = flat_env()
    assert correct_temperature(40.0, 1.0, env, 1.0) == pytest.approx(40.0, abs=1e-12)
    assert render_measured(40.0, 1.0, env, 1.0) == pytest.approx(40.0, abs=1e-12)


def test_equal_temperatures_read_unchanged():
    env = flat_env(31.0)
    assert render_measured(31.0, 0.3, env, 0.7) == pytest.approx(31.0, abs=1e-10)


def test_forward_half_emissivity_value():
    expected = (0.5 * (60 + K) ** N + 0.5 * (20 + K) ** N) ** (1 / N) - K
    got = render_measured(60.0, 0.5, flat_env(), 1.0)
    assert got == pytest.approx(expected, abs=1e-10)
    assert correct_temperature(got, 0.5, flat_env(), 1.0) == pytest.approx(60.0, abs=1e-9)


def test_correct_matches_bisection_oracle():
    env = flat_env()
    oracle = bisect(lambda tr: render_measured(tr, 0.9, env, 1.0) - 35.0, 0.0, 100.0)
    assert correct_temperature(35.0, 0.9, env, 1.0) == pytest.approx(oracle, abs=1e-9)


def test_low_emissivity_round_trip():
    env = EnvironmentConditions()
    tau = atmospheric_transmittance(env)
    m = render_measured(85.0, 0.21, env, tau)
    assert correct_temperature(m, 0.21, env, tau) == pytest.approx(85.0, abs=1e-9)


def test_domain_error_on_inconsistent_inputs():
    # a cold reading from a nearly reflective surface in a warm room
    env = flat_env(40.0)
    with pytest.raises(DomainError, match="bracket"):
        correct_temperature(-20.0, 0.01, env, 0.9)


@pytest.mark.parametrize("eps", [0.0, -0.1, 1.5])
def test_invalid_emissivity(eps):
    with pytest.raises(InputError):
        correct_temperature(30.0, eps, flat_env(), 1.0)


def test_invalid_transmittance():
    with pytest.raises(InputError):
        render_measured(30.0, 0.5, flat_env(), 0.0)


@given(
    eps=st.floats(0.05, 1.0),
    tau=st.floats(0.3, 1.0),
    tr=st.floats(-20.0, 150.0),
    ta=st.floats(-10.0, 40.0),
)
def test_round_trip_property(eps, tau, tr, ta):
    env = flat_env(ta)
    m = render_measured(tr, eps, env, tau)
    assert abs(correct_temperature(m, eps, env, tau) - tr) < 1e-9


@given(eps=st.floats(0.05, 1.0), tau=st.floats(0.3, 1.0), tr=st.floats(-20.0, 150.0))
def test_forward_monotone_in_true_temperature(eps, tau, tr):
    env = flat_env(20.0)
    assert render_measured(tr + 0.5, eps, env, tau) > render_measured(tr, eps, env, tau)


def test_warm_surface_reads_lower_with_lower_emissivity():
    env = flat_env(20.0)
    assert render_measured(60.0, 0.21, env, 1.0) < render_measured(60.0, 0.9, env, 1.0)


def test_correct_frame_uniform_identity():
    grid = np.linspace(20, 40, 12).reshape(3, 4)
    out = correct_frame(grid, np.ones_like(grid), flat_env(), 1.0)
    np.testing.assert_allclose(out, grid, atol=1e-12)


def test_correct_frame_per_pixel_emissivity():
    env = EnvironmentConditions()
    tau = atmospheric_transmittance(env)
    true = np.array([[30.0, 50.0], [70.0, 90.0]])
    eps = np.array([[0.21, 0.9], [0.5, 0.75]])
    meas = render_measured(true, eps, env, tau)
    np.testing.assert_allclose(correct_frame(meas, eps, env, tau), true, atol=1e-9)
    one = correct_frame(meas[:1, :1], eps[:1, :1], env, tau)
    assert one.shape == (1, 1)
    assert one[0, 0] == pytest.approx(correct_temperature(meas[0, 0], 0.21, env, tau), abs=1e-12)


def test_correct_frame_error_names_pixel():
    env = flat_env(40.0)
    grid = np.full((2, 3), 30.0)
    grid[1, 2] = -20.0
    eps = np.full((2, 3), 0.9)
    eps[1, 2] = 0.01
    with pytest.raises(DomainError, match=r"row=1, col=2"):
        correct_frame(grid, eps, env, 0.9)


def test_constants_json_round_trip():
    c = RadiometryConstants(humidity_reference=7.0, condensation=((0.0, 5.0), (30.0, 30.0)))
    assert RadiometryConstants.from_dict(json.loads(json.dumps(c.to_dict()))) == c


def test_constants_from_environment(tmp_path, monkeypatch):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"condensation": [[0, 10.0], [40, 10.0]], "attenuation_scale": 0.5}))
    monkeypatch.setenv(CONSTANTS_ENV, str(path))
    c = load_constants()
    assert c.attenuation_scale == 0.5
    env = EnvironmentConditions(ambient_temp_c=20.0, relative_humidity=0.676, distance_m=1.0)
    assert atmospheric_transmittance(env, c) == pytest.approx(math.exp(-0.5), rel=1e-12)
    monkeypatch.delenv(CONSTANTS_ENV)
    assert load_constants() == RadiometryConstants()


def test_constants_unknown_key(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"bogus": 1}))
    with pytest.raises(ConfigurationError):
        load_constants(path)
