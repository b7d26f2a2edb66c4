import numpy as np
import pytest

from vriwae.gaussian_oracle import (
    GaussianSetting,
    asymptotic_variance,
    eta_ratio,
    gamma_sq,
    grad_gamma_sq,
    grad_vr,
    log_norm_const,
    optimality_variance,
    snr_prediction,
)


def setting(theta, phi, alpha, coord=0):
    return GaussianSetting(theta=np.atleast_1d(theta), phi=np.atleast_1d(phi),
                           alpha=alpha, coord=coord)


def test_grad_vr_values():
    assert grad_vr(setting(0.0, 1.0, 0.0)) == 0.0
    assert grad_vr(setting(0.0, 1.0, 0.5)) == pytest.approx(-0.5)
    assert grad_vr(setting(0.7, 0.7, 0.9)) == 0.0


def test_grad_gamma_sq_values():
    assert grad_gamma_sq(setting(0.0, 1.0, 0.0)) == pytest.approx(2.0 * np.e)
    assert grad_gamma_sq(setting(0.3, 0.3, 0.5)) == 0.0
    assert grad_gamma_sq(setting(0.0, 0.1, 0.0)) == pytest.approx(0.2 * np.exp(0.01))


def test_grad_gamma_sq_matches_finite_differences_of_gamma_sq():
    h = 1e-6
    for theta, phi, alpha in [(0.0, 1.0, 0.0), (0.0, 1.0, 0.5), (0.2, -0.4, 0.3)]:
        fd = (
            gamma_sq(setting(theta, phi + h, alpha))
            - gamma_sq(setting(theta, phi - h, alpha))
        ) / (2 * h)
        assert grad_gamma_sq(setting(theta, phi, alpha)) == pytest.approx(fd, rel=1e-6, abs=1e-6)


def test_log_norm_const_closed_form_vs_monte_carlo():
    rng = np.random.default_rng(0)
    theta, phi, alpha = 0.0, 1.0, 0.5
    z = phi + rng.standard_normal(10**6)
    logw = -0.5 * (phi - theta) ** 2 - (z - phi) * (phi - theta)
    mc = np.log(np.mean(np.exp((1 - alpha) * logw)))
    assert log_norm_const(setting(theta, phi, alpha)) == pytest.approx(mc, abs=5e-3)
    assert log_norm_const(setting(theta, phi, alpha)) == pytest.approx(-0.125)


def test_asymptotic_variance_special_cases():
    assert asymptotic_variance(setting(0.0, 1.0, 0.0), "am") == pytest.approx(1.0)
    assert asymptotic_variance(setting(0.0, 1.0, 0.0), "gm") == pytest.approx(np.exp(-1.0))
    star0 = asymptotic_variance(setting(0.0, 1.0, 0.0), "star")
    expect = 4.25 * np.exp(6.0) - 6.0 * np.exp(4.0) + (np.e - 0.25) * 4.0 * np.exp(2.0)
    assert star0 == pytest.approx(expect, rel=1e-12)
    assert star0 == pytest.approx(1459.9367, rel=1e-4)


def test_gm_ratio_identity_at_alpha0():
    for phi in (0.3, 1.0, 2.0):
        s = setting(0.0, phi, 0.0)
        am = asymptotic_variance(s, "am")
        gm = asymptotic_variance(s, "gm")
        assert gm == pytest.approx(np.exp(-phi**2) * am, rel=1e-12)


def test_a_eta_minimized_at_rho_equals_alpha():
    rhos = np.linspace(0.0, 2.0, 81)
    for alpha in (0.1, 0.3, 0.5, 0.7):
        for phi in (0.1, 0.5, 1.0):
            s = setting(0.0, phi, alpha)
            values = [asymptotic_variance(s, ("const", r)) for r in rhos]
            best = rhos[int(np.argmin(values))]
            assert best == pytest.approx(alpha, abs=0.026)
            a_star = asymptotic_variance(s, "star")
            assert a_star <= min(values) + 1e-12


def test_snr_prediction_examples():
    s = setting(0.0, 1.0, 0.0)
    star = snr_prediction(s, "star", 100)
    expect = np.sqrt(100) * np.e / np.sqrt(asymptotic_variance(s, "star"))
    assert star == pytest.approx(expect, rel=1e-12)
    assert snr_prediction(s, "star", 1) / 1.0 == pytest.approx(0.07114, rel=2e-3)

    # AM at alpha = 0 follows e / sqrt(N)
    for n in (10, 100, 1000):
        assert snr_prediction(s, "am", n) == pytest.approx(np.e / np.sqrt(n), rel=1e-12)

    # AM at alpha = 0.5: ~ 0.5 sqrt(N) / sqrt(A), slope +1/2 in log-log
    s5 = setting(0.0, 1.0, 0.5)
    big, small = snr_prediction(s5, "am", 4000), snr_prediction(s5, "am", 1000)
    assert np.log(big / small) / np.log(4.0) == pytest.approx(0.5, abs=0.01)


def test_optimality_variance_values():
    assert optimality_variance(5, 0.0, "am") == pytest.approx(0.2)
    assert optimality_variance(5, 0.3, "gm") == pytest.approx(0.2)
    star2 = optimality_variance(2, 0.0, "star")
    assert star2 == pytest.approx(0.5 * (1 - 2 * np.log(2.0)) ** 2, rel=1e-12)
    assert star2 == pytest.approx(0.074613, rel=1e-4)


def test_optimality_variance_star_beats_am_for_n_above_two():
    for n in (3, 5, 10, 50, 500):
        assert optimality_variance(n, 0.0, "star") < optimality_variance(n, 0.0, "am")


def test_optimality_variance_error_cases():
    with pytest.raises(ValueError):
        optimality_variance(1, 0.0, "star")
    with pytest.raises(ValueError):
        optimality_variance(0, 0.0, "am")


def test_setting_validation():
    with pytest.raises(ValueError):
        setting(0.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        GaussianSetting(theta=np.array([0.0]), phi=np.array([0.0, 1.0]), alpha=0.0)
    with pytest.raises(ValueError):
        setting(np.nan, 1.0, 0.0)


def test_eta_ratio_values():
    s = setting(0.0, 1.0, 0.5)
    assert eta_ratio(s, "am") == 1.0
    assert eta_ratio(s, "gm") == pytest.approx(np.exp(-0.125))
    assert eta_ratio(s, "star") == 0.5
    assert eta_ratio(s, ("const", 0.77)) == 0.77
