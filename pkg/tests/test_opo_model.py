import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.constants import c as SPEED_OF_LIGHT

from eprsim.gaussian_core import ContractError, QuadratureVariancePair
from eprsim.opo_model import (
    TWO_PI,
    AboveThresholdError,
    CavityGeometry,
    OpoParams,
    SeedNoiseModel,
    cavity_quadrature_transfer,
    decay_rate,
    efficiency_budget,
    kq_from_seed_spectrum,
    output_spectrum,
    phase_averaged_variance,
    pump_rate,
)

MHZ = TWO_PI * 1e6


def squeezed_db(gamma, eps, eta, omega):
    """Independent evaluation of the squeezed-quadrature spectrum in dB (absolute units)."""
    s = 0.5 - 2 * eps * gamma * eta / ((gamma + eps) ** 2 + omega**2)
    return 10 * math.log10(s / 0.5)


# ------------------------------------------------------------- cavity rates


def test_decay_rate_reference_geometry():
    g = decay_rate(CavityGeometry(0.10, 0.0055, 0.320))
    assert g / MHZ == pytest.approx(8.07, abs=0.05)


def test_decay_rate_lossless_is_zero():
    assert decay_rate(CavityGeometry(0.0, 0.0, 0.320)) == 0.0


def test_decay_rate_high_transmission():
    expected = (1 - math.sqrt(0.8)) / (0.320 / SPEED_OF_LIGHT)
    g = decay_rate(CavityGeometry(0.20, 0.0, 0.320))
    assert g == pytest.approx(expected, rel=1e-12)
    assert g / MHZ == pytest.approx(15.74, abs=0.01)


def test_geometry_invariants():
    with pytest.raises(ContractError):
        CavityGeometry(1.0, 0.0, 0.3)
    with pytest.raises(ContractError):
        CavityGeometry(0.1, 0.0, 0.0)


def test_pump_rate_examples():
    g = 8.07 * MHZ
    assert pump_rate(0.350, 0.833, g) / MHZ == pytest.approx(5.23, abs=0.1)
    assert pump_rate(0.0, 0.833, g) == 0.0
    assert pump_rate(0.25, 1.0, g) == pytest.approx(g / 2)
    with pytest.raises(AboveThresholdError):
        pump_rate(0.833, 0.833, g)


def test_efficiency_budget():
    assert efficiency_budget([0.94, 0.80, 0.91]) == pytest.approx(0.68432)
    with pytest.raises(ContractError):
        efficiency_budget([1.1])


def test_opo_params_reject_above_threshold():
    with pytest.raises(AboveThresholdError):
        OpoParams.from_rates(1.0, 1.0, 0.5)


# ---------------------------------------------------------------- spectra


def test_spectrum_vacuum_without_pump():
    p = OpoParams.from_rates(8 * MHZ, 0.0, 0.7)
    w = np.linspace(0, 50 * MHZ, 11)
    assert np.allclose(output_spectrum(p, None, w, "x"), 1.0)
    assert np.allclose(output_spectrum(p, None, w, "p"), 1.0)


def test_spectrum_stated_rates():
    p = OpoParams.from_rates(8.07 * MHZ, 5.23 * MHZ, 0.684)
    v = float(output_spectrum(p, None, 3 * MHZ, "x"))
    expected = squeezed_db(8.07, 5.23, 0.684, 3.0)
    assert 10 * math.log10(v) == pytest.approx(expected, abs=1e-9)
    assert v == pytest.approx(0.3788, abs=1e-4)


def test_spectrum_rounded_reference_rates():
    p = OpoParams.from_rates(8.1 * MHZ, 5.2 * MHZ, 0.68)
    v_db = 10 * math.log10(float(output_spectrum(p, None, 3 * MHZ, "x")))
    assert v_db == pytest.approx(-4.16, abs=0.05)


def test_spectrum_perfect_squeezing_at_threshold_limit():
    g = 8 * MHZ
    p = OpoParams.from_rates(g, g * (1 - 1e-9), 1.0)
    assert float(output_spectrum(p, None, 0.0, "x")) == pytest.approx(0.0, abs=1e-8)


def test_squeezed_label_swaps_quadratures():
    px = OpoParams.from_rates(8 * MHZ, 4 * MHZ, 0.8)
    pp = OpoParams.from_rates(8 * MHZ, 4 * MHZ, 0.8, squeezed_quadrature="p")
    w = 2 * MHZ
    assert output_spectrum(px, None, w, "x") == pytest.approx(output_spectrum(pp, None, w, "p"))
    assert pp.antisqueezed_quadrature == "x"


@given(st.floats(0.5, 20), st.floats(0.0, 0.99), st.floats(0.0, 1.0), st.floats(0, 60),
       st.floats(0, 3))
def test_uncertainty_preserved(gamma, ratio, eta, f, k):
    p = OpoParams.from_rates(gamma * MHZ, ratio * gamma * MHZ, eta)
    seed = SeedNoiseModel(np.array([0.0]), np.array([k * MHZ**2]), np.array([k * MHZ**2]))
    w = f * MHZ
    assert output_spectrum(p, seed, w, "x") * output_spectrum(p, seed, w, "p") >= 1 - 1e-12


def test_spectrum_tends_to_vacuum_at_high_frequency():
    p = OpoParams.from_rates(8 * MHZ, 6 * MHZ, 0.9)
    seed = SeedNoiseModel(np.array([0.0]), np.array([5 * MHZ**2]), np.array([5 * MHZ**2]))
    w = 1e6 * MHZ
    assert output_spectrum(p, seed, w, "x") == pytest.approx(1.0, abs=1e-6)
    assert output_spectrum(p, seed, w, "p") == pytest.approx(1.0, abs=1e-6)


@given(st.floats(0, 30), st.floats(0.0, 0.98), st.floats(0.001, 0.019))
def test_spectrum_monotonic_in_pump(f, e1, de):
    g = 8 * MHZ
    w = f * MHZ
    lo = OpoParams.from_rates(g, e1 * g, 0.7)
    hi = OpoParams.from_rates(g, (e1 + de) * g, 0.7)
    assert output_spectrum(hi, None, w, "x") < output_spectrum(lo, None, w, "x")
    assert output_spectrum(hi, None, w, "p") > output_spectrum(lo, None, w, "p")


# ------------------------------------------------------------- seed noise


def test_kq_shot_limited_seed_is_zero():
    w = np.linspace(0, 20 * MHZ, 5)
    model = kq_from_seed_spectrum(w, np.ones_like(w), 8 * MHZ)
    assert model.is_zero


def test_kq_example_value():
    model = kq_from_seed_spectrum(np.array([3 * MHZ]), np.array([1.2]), 8.1 * MHZ)
    # (8.1^2 + 3^2) * (0.6 - 0.5) in (2 pi MHz)^2
    assert float(model.k(3 * MHZ, "x")) / MHZ**2 == pytest.approx(7.461, abs=1e-3)


def test_kq_round_trip():
    g = 8.1 * MHZ
    w = np.linspace(0.5, 20, 40) * MHZ
    s0 = 1.0 + 0.4 / (1 + (w / (5 * MHZ)) ** 2)
    model = kq_from_seed_spectrum(w, s0, g)
    p = OpoParams.from_rates(g, 0.0, 0.7)
    assert np.allclose(output_spectrum(p, model, w, "x"), s0, rtol=1e-12)
    assert np.allclose(output_spectrum(p, model, w, "p"), s0, rtol=1e-12)


def test_kq_clips_below_shot_noise_with_warning():
    w = np.array([1.0, 2.0, 3.0]) * MHZ
    with pytest.warns(RuntimeWarning):
        model = kq_from_seed_spectrum(w, np.array([1.1, 0.98, 1.2]), 8 * MHZ)
    assert model.n_clipped == 2  # one value per quadrature
    assert np.all(model.k_x >= 0)
    assert model.k_x[1] == 0.0


def test_kq_rejects_empty_grid():
    with pytest.raises(ContractError):
        kq_from_seed_spectrum(np.array([]), np.array([]), 8 * MHZ)


def test_kq_quiet_for_clean_seed():
    w = np.array([1.0, 2.0]) * MHZ
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        kq_from_seed_spectrum(w, np.array([1.1, 1.3]), 8 * MHZ)


# ------------------------------------------------------ cavity transfer


def transfer_oracle(phi, omega, params):
    """Invert the frequency-domain Langevin equations directly."""
    eps, gamma = params.epsilon, params.gamma
    r = np.array([[math.cos(phi), math.sin(phi)], [math.sin(phi), -math.cos(phi)]])
    return np.linalg.inv((gamma - 1j * omega) * np.eye(2) - eps * r)


PARAMS = OpoParams.from_rates(8.07 * MHZ, 5.23 * MHZ, 0.684)


def test_transfer_pump_phase_pi():
    w = 3 * MHZ
    m = cavity_quadrature_transfer(math.pi, w, PARAMS)
    assert m[0, 1] == 0 and m[1, 0] == 0
    g, e = PARAMS.gamma, PARAMS.epsilon
    assert m[0, 0] == pytest.approx(1 / (g + e - 1j * w), rel=1e-12)
    assert m[1, 1] == pytest.approx(1 / (g - e - 1j * w), rel=1e-12)


def test_transfer_pump_phase_zero_flips_sign():
    w = 3 * MHZ
    m0 = cavity_quadrature_transfer(0.0, w, PARAMS)
    mpi = cavity_quadrature_transfer(math.pi, w, PARAMS)
    assert m0[0, 1] == 0 and m0[1, 0] == 0
    assert m0[0, 0] == pytest.approx(mpi[1, 1], rel=1e-12)
    assert m0[1, 1] == pytest.approx(mpi[0, 0], rel=1e-12)


def test_transfer_quarter_phase_cross_coefficient():
    m = cavity_quadrature_transfer(math.pi / 2, 0.0, PARAMS)
    g, e = PARAMS.gamma, PARAMS.epsilon
    assert abs(m[0, 1]) == pytest.approx(e / (g**2 - e**2), rel=1e-12)
    assert abs(m[0, 1]) > 0


@given(st.floats(0, 2 * math.pi), st.floats(0, 40))
def test_transfer_matches_linear_solve(phi, f):
    w = f * MHZ
    got = cavity_quadrature_transfer(phi, w, PARAMS)
    want = transfer_oracle(phi, w, PARAMS)
    assert np.max(np.abs(got - want)) <= 1e-10 * np.max(np.abs(want))


# -------------------------------------------------------- phase averaging


def test_phase_average_no_jitter():
    pair = QuadratureVariancePair(0.2, 5.0)
    for th in np.linspace(0, math.pi, 7):
        expect = 0.2 * math.cos(th) ** 2 + 5.0 * math.sin(th) ** 2
        assert phase_averaged_variance(pair, th, 0.0, "approx") == pytest.approx(expect)
        assert phase_averaged_variance(pair, th, 0.0, "exact") == pytest.approx(expect)


def test_phase_average_example():
    pair = QuadratureVariancePair(0.1, 2.5)
    sigma = math.radians(4.1)
    assert phase_averaged_variance(pair, 0.0, sigma, "approx") == pytest.approx(0.1123, abs=5e-5)
    assert phase_averaged_variance(pair, 0.0, sigma, "exact") == pytest.approx(0.1122, abs=5e-5)


@given(st.floats(0, 1.0))
def test_phase_average_exact_at_45_degrees(sigma):
    pair = QuadratureVariancePair(0.3, 4.0)
    assert phase_averaged_variance(pair, math.pi / 4, sigma, "exact") == pytest.approx(2.15)


def test_phase_average_exact_matches_quadrature():
    pair = QuadratureVariancePair(0.3, 4.0)
    theta, sigma = 0.4, math.radians(8.0)
    d = np.linspace(-8 * sigma, 8 * sigma, 20001)
    w = np.exp(-d**2 / (2 * sigma**2))
    v = pair.v_x * np.cos(theta + d) ** 2 + pair.v_p * np.sin(theta + d) ** 2
    oracle = np.sum(w * v) / np.sum(w)
    assert phase_averaged_variance(pair, theta, sigma, "exact") == pytest.approx(oracle, rel=1e-10)


@given(st.floats(0.01, 5.0), st.floats(0.0, 50.0), st.floats(0, math.radians(10)),
       st.sampled_from([0.0, math.pi / 2]))
def test_phase_average_modes_agree_on_axes(vx, extra, sigma, theta):
    pair = QuadratureVariancePair(vx, vx + extra)
    a = phase_averaged_variance(pair, theta, sigma, "approx")
    b = phase_averaged_variance(pair, theta, sigma, "exact")
    assert abs(a - b) <= 1e-3 * extra + 1e-12


def test_phase_average_modes_diverge_off_axis():
    # The shifted-angle form only approximates the average near the principal axes.
    pair = QuadratureVariancePair(0.1, 2.5)
    sigma = math.radians(10)
    a = phase_averaged_variance(pair, math.pi / 4, sigma, "approx")
    b = phase_averaged_variance(pair, math.pi / 4, sigma, "exact")
    assert abs(a - b) == pytest.approx(0.5 * 2.4 * math.sin(2 * sigma), rel=1e-9)


def test_phase_average_rejects_negative_sigma():
    with pytest.raises(ContractError):
        phase_averaged_variance(QuadratureVariancePair(1, 1), 0.0, -0.1)
