import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from forge.linalg import (DimensionError, SuperOperator, ad, choi_matrix, commutator,
                          density_matrix, group_eigenvalues, hermitian, is_completely_positive,
                          ladder_operators, matrix_from_json, matrix_to_json, pauli,
                          spin_operators, superop_exp, superop_spectrum, unvec, vec)

finite = st.floats(-3, 3, allow_nan=False, allow_infinity=False)


def complex_matrices(d):
    return st.tuples(arrays(float, (d, d), elements=finite), arrays(float, (d, d), elements=finite)).map(
        lambda p: p[0] + 1j * p[1])


def hermitian_matrices(d):
    return complex_matrices(d).map(lambda a: (a + a.conj().T) / 2)


def test_hermitian_symmetrizes_small_deviation():
    a = np.array([[1.0, 1e-14j], [0.0, -1.0]])
    h = hermitian(a)
    assert np.allclose(h, h.conj().T, atol=0)
    assert not h.flags.writeable


def test_hermitian_rejects_non_hermitian():
    with pytest.raises(ValueError, match="not Hermitian"):
        hermitian([[0, 1], [0, 0]])


def test_hermitian_rejects_non_square_and_nan():
    with pytest.raises(DimensionError):
        hermitian(np.zeros((2, 3)))
    with pytest.raises(ValueError):
        hermitian([[np.nan, 0], [0, 1]])


def test_density_matrix_checks():
    with pytest.raises(ValueError, match="trace"):
        density_matrix(np.eye(2))
    with pytest.raises(ValueError, match="negative"):
        density_matrix(np.diag([1.5, -0.5]))
    assert np.allclose(density_matrix(np.eye(3) / 3), np.eye(3) / 3)


@given(complex_matrices(3), complex_matrices(3), complex_matrices(3))
def test_vec_of_product(a, x, b):
    assert np.allclose(vec(a @ x @ b), np.kron(b.T, a) @ vec(x))


@given(complex_matrices(3))
def test_vec_unvec_roundtrip(x):
    assert np.array_equal(unvec(vec(x), 3), x)


@given(hermitian_matrices(3), complex_matrices(3))
def test_ad_is_commutator(h, rho):
    assert np.allclose(ad(h).apply(rho), commutator(h, rho))


@pytest.mark.parametrize("spin", [0.5, 1, 1.5, 2, 2.5])
def test_spin_algebra(spin):
    sx, sy, sz = spin_operators(spin)
    assert np.allclose(commutator(sx, sy), 1j * sz)
    assert np.allclose(commutator(sy, sz), 1j * sx)
    casimir = sx @ sx + sy @ sy + sz @ sz
    assert np.allclose(casimir, spin * (spin + 1) * np.eye(int(2 * spin + 1)))
    assert np.allclose(np.diag(sz), spin - np.arange(int(2 * spin + 1)))


@pytest.mark.parametrize("bad", [0, 0.3, -1, "x"])
def test_spin_rejects_bad_values(bad):
    with pytest.raises((ValueError, TypeError)):
        spin_operators(bad)


def test_pauli_squares_to_identity():
    for s in pauli():
        assert np.allclose(s @ s, np.eye(2))


def test_ladder_commutator_on_lower_block():
    x, p = ladder_operators(10)
    c = commutator(x, p)
    # truncation spoils only the last Fock level
    assert np.allclose(c[:9, :9], 1j * np.eye(9))


def test_superoperator_arithmetic_and_dims():
    a, b = ad(pauli()[0]), ad(pauli()[2])
    assert np.allclose((a @ b).matrix, a.matrix @ b.matrix)
    assert np.allclose((a + b - b).matrix, a.matrix)
    assert np.allclose((2 * a).matrix, (a * 2).matrix)
    with pytest.raises(DimensionError):
        a + ad(spin_operators(1)[0])
    with pytest.raises(DimensionError):
        SuperOperator(np.eye(5), 2)


def test_from_map_matches_direct_construction():
    h = spin_operators(1)[0]
    op = SuperOperator.from_map(lambda r: h @ r - r @ h, 3)
    assert np.allclose(op.matrix, ad(h).matrix)


@given(hermitian_matrices(2), st.floats(0, 2))
@settings(max_examples=30)
def test_superop_exp_of_hamiltonian_is_conjugation(h, t):
    rho = np.array([[0.7, 0.2 - 0.1j], [0.2 + 0.1j, 0.3]])
    u = scipy.linalg.expm(-1j * h * t)
    got = superop_exp(-1j * ad(h), t).apply(rho)
    assert np.allclose(got, u @ rho @ u.conj().T, atol=1e-10)


def test_superop_exp_non_normal_matches_expm():
    rng = np.random.default_rng(1)
    m = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    op = SuperOperator(m, 2)
    assert not op.is_normal()
    assert np.allclose(superop_exp(op, 0.3).matrix, scipy.linalg.expm(0.3 * m))


def test_superop_exp_zero_is_identity():
    assert np.allclose(superop_exp(SuperOperator.zero(3), 5.0).matrix, np.eye(9))


def test_superop_exp_rejects_non_finite():
    with pytest.raises(ValueError):
        superop_exp(SuperOperator(np.eye(4), 2), np.inf)


def test_group_eigenvalues_counts():
    g = group_eigenvalues([0, 1, 1 + 1e-12, 2, 2, 2])
    assert [(round(v.real), m) for v, m in g] == [(0, 1), (1, 2), (2, 3)]


def test_spectrum_of_ad_sz_qubit():
    vals = sorted(superop_spectrum(ad(spin_operators(0.5)[2])).real)
    assert np.allclose(vals, [-1, 0, 0, 1])


def test_choi_identity_and_transpose():
    ident = SuperOperator.identity(2)
    omega = vec(np.eye(2))
    assert np.allclose(choi_matrix(ident), np.outer(omega, omega))
    assert is_completely_positive(ident)
    transpose = SuperOperator.from_map(lambda r: r.T, 2)
    assert not is_completely_positive(transpose)
    assert np.isclose(np.linalg.eigvalsh(choi_matrix(transpose)).min(), -1)


def test_choi_of_dephasing_channel():
    # p-dephasing: rho -> (1-p) rho + p Z rho Z
    z = pauli()[2]
    for p, cp in ((0.3, True), (-0.1, False)):
        ch = SuperOperator.from_map(lambda r: (1 - p) * r + p * z @ r @ z, 2)
        assert is_completely_positive(ch) is cp


@given(complex_matrices(3))
def test_matrix_json_roundtrip(a):
    assert np.array_equal(matrix_from_json(matrix_to_json(a)), a)


def test_matrix_json_layout_and_errors():
    obj = matrix_to_json(np.array([[1 + 2j, 3], [4, 5j]]))
    assert obj == {"dim": 2, "entries": [1, 2, 3, 0, 4, 0, 0, 5]}
    with pytest.raises(ValueError):
        matrix_from_json({"dim": 2, "entries": [1, 2]})
