import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from forge.control import (ControlError, ControlSchedule, fourier_data, fourier_data_quadrature,
                           interaction_hamiltonian, interaction_hamiltonians, is_effective,
                           iso12_conjugation_signs, iso12_waveforms)
from forge.linalg import is_unitary, spin_operators

X, Y, Z = spin_operators(0.5)


def test_constant_control_rotation_sign():
    w = 0.7
    sched = ControlSchedule.constant(w * Z)
    for t in (0.0, 0.3, 2.1):
        v = scipy.linalg.expm(-1j * w * Z * t)
        direct = v.conj().T @ X @ v
        assert np.allclose(interaction_hamiltonian(sched, X, t), direct)
        assert np.allclose(direct, X * np.cos(w * t) - Y * np.sin(w * t))


def test_constant_fourier_coefficients():
    fd = fourier_data(ControlSchedule.constant(0.7 * Z), [X])
    assert np.allclose(fd.frequencies, [-0.7, 0.7])
    assert np.allclose(fd.coefficient(0, 0.7), (X + 1j * Y) / 2)
    assert np.allclose(fd.coefficient(0, -0.7), (X - 1j * Y) / 2)
    for t in (0.0, 1.3, 5.0):
        assert np.allclose(fd.evaluate(0, t), interaction_hamiltonian(fd_sched := ControlSchedule.constant(0.7 * Z), X, t))
    assert fd_sched.omega_c == pytest.approx(0.7)


def test_none_schedule_is_identity_frame():
    sched = ControlSchedule.none()
    hs = interaction_hamiltonians(sched, X, [0.0, 1.0, 7.0])
    assert all(np.allclose(h, X) for h in hs)
    fd = fourier_data(sched, [X])
    assert np.allclose(fd.frequencies, [0.0])


@pytest.mark.parametrize("sched", [
    ControlSchedule.bangbang_pi(0.9, 0.5),
    ControlSchedule.bangbang_pi(0.9, 1, axis="y"),
    ControlSchedule.iso12(1.3, 0.5),
])
def test_piecewise_fourier_matches_quadrature(sched):
    ops = spin_operators(0.5 if sched.segments[0][1].shape[0] == 2 else 1)
    exact = fourier_data(sched, ops, n_harmonics=15)
    quad = fourier_data_quadrature(sched, ops, n_harmonics=15, n_points=12288)  # 12 | n_points
    for a in range(len(ops)):
        for w in exact.frequencies:
            assert np.allclose(exact.coefficient(a, w), quad.coefficient(a, w), atol=1e-6)


def test_fourier_hermitian_pairing():
    fd = fourier_data(ControlSchedule.iso12(2.0, 1), spin_operators(1), n_harmonics=9)
    for a in range(3):
        for w in fd.frequencies:
            assert np.allclose(fd.coefficient(a, -w), fd.coefficient(a, w).conj().T, atol=1e-12)


def test_bangbang_waveform_and_period():
    sched = ControlSchedule.bangbang_pi(np.pi, 0.5)
    assert sched.period == pytest.approx(2.0)
    t = np.array([0.1, 0.9, 1.1, 1.9, 2.1])
    hs = interaction_hamiltonians(sched, Z, t)
    signs = [np.real(np.trace(h @ Z)) / 0.5 for h in hs]
    assert np.allclose(signs, [1, 1, -1, -1, 1])
    assert all(is_unitary(sched.unitary(x)) for x in t)


def test_iso12_frame_starts_at_first_rotation():
    sched = ControlSchedule.iso12(1.0, 0.5)
    r1 = scipy.linalg.expm(1j * np.pi * X)
    assert np.allclose(sched.unitary(0.0), r1)


def test_iso12_waveforms_are_shifted_copies():
    w = iso12_waveforms()
    signs = iso12_conjugation_signs(0.5)
    assert np.array_equal(signs, w)
    j = np.arange(12)
    # w1(t) = w2(t + 2pi/3) = w3(t - 2pi/3)
    assert np.array_equal(w[0], w[1][(j + 4) % 12])
    assert np.array_equal(w[0], w[2][(j - 4) % 12])
    assert np.all(w.sum(axis=1) == 0)


def test_iso12_weights_match_waveform_transform():
    from forge.generators import iso_weight

    w1 = np.array(iso12_waveforms()[0])
    n = np.arange(1, 40)
    # c_n = (1/2pi) int w1(theta) exp(-i n theta) d theta, piecewise constant on 12 parts
    edges = 2 * np.pi * np.arange(13) / 12
    c = np.array([np.sum(w1 * (np.exp(-1j * k * edges[1:]) - np.exp(-1j * k * edges[:-1])) / (-1j * k))
                  for k in n]) / (2 * np.pi)
    assert np.allclose(np.abs(c) ** 2, iso_weight(n), atol=1e-14)


@pytest.mark.parametrize("segments", [
    [(0.5, np.eye(2)), (0.4, np.eye(2))],
    [(0.5, np.eye(2)), (0.5, np.array([[1, 1], [0, 1]]))],
    [(1.0, np.eye(2)), (0.0, np.eye(2))],
])
def test_piecewise_validation(segments):
    with pytest.raises(ControlError):
        ControlSchedule.piecewise(1.0, segments)


def test_schedule_validation():
    with pytest.raises(ControlError):
        ControlSchedule("nope")
    with pytest.raises(ControlError):
        ControlSchedule("constant")
    with pytest.raises(ControlError):
        ControlSchedule.bangbang_pi(0.0)
    with pytest.raises(ValueError):
        ControlSchedule.constant([[0, 1], [0, 0]])


def test_effectiveness_cases():
    assert is_effective(ControlSchedule.bangbang_pi(1.0), [Z])[0]
    assert is_effective(ControlSchedule.constant(Z), [X])[0]
    assert is_effective(ControlSchedule.iso12(1.0), [X, Y, Z])[0]
    ok, diag = is_effective(ControlSchedule.constant(Z), [X, Z])
    assert not ok
    assert diag["zero_frequency_norms"][0] < 1e-12
    assert diag["zero_frequency_norms"][1] == pytest.approx(np.linalg.norm(Z))
    assert not is_effective(ControlSchedule.none(), [X])[0]


@given(st.tuples(*[st.floats(-1, 1) for _ in range(3)]).filter(lambda v: np.linalg.norm(v) > 0.1),
       st.floats(0.1, 10))
@settings(max_examples=40)
def test_constant_control_never_averages_isotropic_qubit_noise(n, strength):
    n = np.array(n) / np.linalg.norm(n)
    hc = strength * (n[0] * X + n[1] * Y + n[2] * Z)
    assert not is_effective(ControlSchedule.constant(hc), [X, Y, Z])[0]


@given(st.floats(0.05, 20))
@settings(max_examples=20)
def test_bangbang_effective_at_any_rate(w):
    assert is_effective(ControlSchedule.bangbang_pi(w, 1, axis="x"), [spin_operators(1)[2]])[0]
