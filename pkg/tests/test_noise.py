import numpy as np
import pytest
import scipy.special
from scipy import integrate

from forge.noise import (NoiseModel, NoiseModelError, factor_kernel, gamma_of_t, k_tilde,
                         kernel_paths, ou_paths, sample_ou, sample_white, spectral_density)


def transform_by_quadrature(model, w, weight):
    """Oracle: direct quadrature of 2 int_0^inf J(t) cos/sin(w t) dt."""
    fn = (lambda t: model.correlation(t) * np.cos(w * t)) if weight == "cos" else (
        lambda t: model.correlation(t) * np.sin(w * t))
    val, _ = integrate.quad(fn, 0, 60 * model.tau, limit=2000, epsabs=1e-12)
    return 2 * val if weight == "cos" else -2 * val


@pytest.mark.parametrize("model", [
    NoiseModel("ou", sigma=1.3, tau=0.7),
    NoiseModel("damped-cosine", sigma=0.8, tau=1.0, omega0=4.0),
])
@pytest.mark.parametrize("w", [0.0, 0.4, 1.0, 3.7])
def test_closed_forms_match_quadrature(model, w):
    assert np.isclose(spectral_density(model, w), transform_by_quadrature(model, w, "cos"), atol=1e-8)
    assert np.isclose(k_tilde(model, w), transform_by_quadrature(model, w, "sin"), atol=1e-8)


def test_spectral_density_even_and_k_tilde_odd():
    m = NoiseModel("damped-cosine", tau=2.0, omega0=1.5)
    w = np.linspace(-5, 5, 41)
    assert np.allclose(spectral_density(m, w), spectral_density(m, -w))
    assert np.allclose(k_tilde(m, w), -k_tilde(m, -w))


def test_white_noise():
    m = NoiseModel("white", sigma=0.5)
    assert np.allclose(spectral_density(m, [0, 3, 100]), 0.25)
    assert k_tilde(m, 2.0) == 0
    assert gamma_of_t(m, 1.0) == 0.25


def test_tabulated_ou_matches_analytic():
    t = np.arange(0, 801) * 0.02
    tab = NoiseModel("tabulated", tau=1.0, table=(t, np.exp(-t)))
    ou = NoiseModel("ou", tau=1.0)
    for w in (0.0, 0.5, 2.0):
        assert np.isclose(spectral_density(tab, w), spectral_density(ou, w), rtol=1e-4)
        assert np.isclose(k_tilde(tab, w), k_tilde(ou, w), rtol=1e-3, atol=1e-5)


def test_tabulated_beyond_nyquist_raises():
    t = np.arange(0, 201) * 0.05
    tab = NoiseModel("tabulated", tau=1.0, table=(t, np.exp(-t**2)))
    with pytest.raises(NoiseModelError, match="Nyquist"):
        spectral_density(tab, 1.01 * np.pi / 0.05)


def test_box_correlation_rejected_with_frequency():
    # J = 1 on [0, 1], 0 after: J~ = 2 sin(w)/w goes negative
    t = np.arange(0, 101) * 0.02
    with pytest.raises(NoiseModelError, match="negative at omega=") as info:
        NoiseModel("tabulated", tau=1.0, table=(t, (t <= 1.0).astype(float)))
    w = float(str(info.value).split("omega=")[1].split()[0])
    assert np.sin(w) < 0


@pytest.mark.parametrize("kwargs", [
    dict(kind="nope"), dict(tau=0.0), dict(sigma=-1.0), dict(channels=0),
    dict(sigma=[1, 2], channels=3), dict(kind="tabulated"),
])
def test_invalid_models(kwargs):
    with pytest.raises(NoiseModelError):
        NoiseModel(**kwargs)


def test_gamma_of_t_closed_form_ou():
    m = NoiseModel("ou", sigma=1.5, tau=2.0)
    for t in (0.1, 1.0, 10.0):
        assert np.isclose(gamma_of_t(m, t), 2 * 2.25 * 2.0 * (1 - np.exp(-t / 2.0)), rtol=1e-10)
    assert np.isclose(gamma_of_t(m, 500.0), spectral_density(m, 0.0))


def test_kernel_self_convolution_reproduces_j():
    m = NoiseModel("ou", sigma=1.0, tau=1.0)
    ker = factor_kernel(m)
    conv = np.convolve(ker.values, ker.values, mode="same") * ker.step
    target = m.correlation(ker.times)
    rel = np.linalg.norm(conv - target) / np.linalg.norm(target)
    assert rel < 1e-3


def test_ou_kernel_matches_bessel_form():
    # j(t) = sigma sqrt(2 tau) K0(|t|/tau) / (pi tau) for OU
    tau = 1.0
    ker = factor_kernel(NoiseModel("ou", tau=tau))
    mask = (np.abs(ker.times) >= 0.5) & (np.abs(ker.times) <= 4)
    exact = np.sqrt(2 * tau) * scipy.special.k0(np.abs(ker.times[mask]) / tau) / (np.pi * tau)
    assert np.allclose(ker.values[mask], exact, rtol=1e-3)


def test_kernel_fourier_is_sqrt_spectrum():
    m = NoiseModel("damped-cosine", tau=1.0, omega0=2.0)
    ker = factor_kernel(m)
    w = np.array([0.0, 1.0, 2.0, 3.0])
    assert np.allclose(ker.fourier(w), np.sqrt(spectral_density(m, w)), atol=2e-3)


def test_kernel_grid_checks():
    with pytest.raises(ValueError):
        factor_kernel(NoiseModel("ou"), n_points=100)
    ker = factor_kernel(NoiseModel("ou", tau=2.0), step=0.05)
    assert np.isclose(ker.step, 0.05)


def test_ou_paths_stationary_statistics():
    rng = np.random.default_rng(0)
    tau, dt, sigma = 10.0, 1.0, 2.0
    x = ou_paths(rng, sigma, tau, dt, 400, n_paths=4000)
    n = x.shape[0]
    # stationary start: variance sigma^2 at every step
    for k in (0, 200, 399):
        assert abs(x[:, k].var() - sigma**2) < 3 * sigma**2 * np.sqrt(2 / n)
    lag = np.mean(x[:, 100] * x[:, 105]) / sigma**2
    assert abs(lag - np.exp(-5 * dt / tau)) < 3 * np.sqrt(2 / n)


def test_sample_ou_warns_on_coarse_step_and_is_seeded():
    m = NoiseModel("ou", tau=1.0)
    with pytest.warns(UserWarning):
        sample_ou(m, 0.5, 10.0, seed=1)
    a = sample_ou(m, 0.05, 5.0, seed=3)
    b = sample_ou(m, 0.05, 5.0, seed=3)
    assert np.array_equal(a.values, b.values)
    assert a.values.shape == (1, 100)
    with pytest.raises(NoiseModelError):
        sample_ou(NoiseModel("white"), 0.1, 1.0, seed=0)


def test_sample_white_variance():
    s = sample_white(NoiseModel("white", sigma=0.5), 0.01, 200.0, seed=2)
    # integrated increments have variance J~ dt
    inc = s.values[0] * s.dt
    assert abs(inc.var() / (0.25 * s.dt) - 1) < 3 * np.sqrt(2 / inc.size)


def test_kernel_paths_covariance():
    m = NoiseModel("damped-cosine", tau=1.0, omega0=4.0)
    ker = factor_kernel(m, step=0.05)
    x = kernel_paths(np.random.default_rng(5), ker, 60, n_paths=20000)
    n = x.shape[0]
    for lag in (0, 5, 10, 20):
        est = np.mean(x[:, 30] * x[:, 30 + lag]) if 30 + lag < 60 else None
        if est is None:
            continue
        assert abs(est - m.correlation(lag * 0.05)) < 4 * np.sqrt(2 / n)
