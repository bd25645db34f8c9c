import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oqcontrol.qops import (I2, I4, SIGMA_MINUS, SIGMA_PLUS, SIGMA_X, SIGMA_Y, SIGMA_Z,
                            anticommutator, check_density_matrix, commutator, eig_hermitian,
                            from_coords, hs_inner, superoperator_matrix, tensor, to_coords)

from conftest import random_density, random_hermitian

seeds = st.integers(0, 2 ** 32 - 1)


def test_tensor_examples():
    np.testing.assert_array_equal(tensor(SIGMA_Z, I2), np.diag([1, 1, -1, -1]))
    np.testing.assert_array_equal(tensor(I2, SIGMA_Z), np.diag([1, -1, 1, -1]))
    expected = np.zeros((4, 4))
    expected[2, 0] = expected[3, 1] = 1
    np.testing.assert_array_equal(tensor(SIGMA_PLUS, I2), expected)


def test_tensor_matches_elementwise_oracle(rng):
    a = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    b = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    out = np.empty((4, 4), dtype=complex)
    for i in range(2):
        for j in range(2):
            for k in range(2):
                for m in range(2):
                    out[2 * i + k, 2 * j + m] = a[i, j] * b[k, m]
    np.testing.assert_allclose(tensor(a, b), out)


def test_hs_inner_examples():
    assert hs_inner(I4, I4) == pytest.approx(4)
    assert hs_inner(np.diag([1.0, 0, 0, 0]), I4 / 4) == pytest.approx(0.25)
    assert abs(hs_inner(tensor(SIGMA_X, I2), tensor(SIGMA_Y, I2))) < 1e-15


def test_commutator_examples(rng):
    np.testing.assert_allclose(commutator(SIGMA_X, SIGMA_Y), 2j * SIGMA_Z)
    np.testing.assert_allclose(anticommutator(SIGMA_PLUS, SIGMA_MINUS), I2)
    a = random_hermitian(rng)
    np.testing.assert_allclose(commutator(a, a), 0)


def test_eig_examples():
    np.testing.assert_allclose(eig_hermitian(np.diag([0.7, 0.1, 0.1, 0.1])), [0.1, 0.1, 0.1, 0.7])
    np.testing.assert_allclose(eig_hermitian(I4 / 4), [0.25] * 4)
    np.testing.assert_allclose(eig_hermitian(tensor(SIGMA_X, I2)), [-1, -1, 1, 1], atol=1e-14)


def test_eig_rejects_non_hermitian():
    with pytest.raises(ValueError):
        eig_hermitian(np.triu(np.ones((4, 4))))


def test_eig_reconstruction(rng):
    for _ in range(20):
        a = random_hermitian(rng)
        lam, v = eig_hermitian(a, vectors=True)
        assert np.all(np.diff(lam) >= 0)
        assert np.max(np.abs(v @ np.diag(lam) @ v.conj().T - a)) <= 1e-10


def test_check_density_matrix_rejects():
    with pytest.raises(ValueError):
        check_density_matrix(np.diag([0.5, 0.5, 0.5, 0.5]))
    with pytest.raises(ValueError):
        check_density_matrix(np.diag([1.5, -0.5, 0, 0]))
    with pytest.raises(ValueError):
        check_density_matrix(np.eye(2) / 2)


@given(seeds, st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False))
def test_tensor_bilinear(seed, alpha):
    rng = np.random.default_rng(seed)
    a, b = random_hermitian(rng, 2), random_hermitian(rng, 2)
    np.testing.assert_allclose(tensor(alpha * a, b), alpha * tensor(a, b), atol=1e-12)


@given(seeds)
def test_hs_inner_properties(seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    b = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    assert hs_inner(a, b) == pytest.approx(np.conj(hs_inner(b, a)))
    assert hs_inner(a, a).real >= 0 and abs(hs_inner(a, a).imag) < 1e-12


@given(seeds)
def test_cyclic_trace(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4)) for _ in range(3))
    assert np.trace(a @ b @ c) == pytest.approx(np.trace(b @ c @ a))


@given(seeds, st.integers(1, 4))
def test_density_spectrum_sums_to_one(seed, rank):
    rho = random_density(np.random.default_rng(seed), rank)
    assert np.sum(eig_hermitian(rho)) == pytest.approx(1.0, abs=1e-9)


@given(seeds)
def test_coords_roundtrip_and_inner_product(seed):
    rng = np.random.default_rng(seed)
    a, b = random_hermitian(rng), random_hermitian(rng)
    np.testing.assert_allclose(from_coords(to_coords(a)), a, atol=1e-12)
    assert to_coords(a) @ to_coords(b) == pytest.approx(np.trace(a @ b).real)


def test_superoperator_matrix_of_conjugation(rng):
    u = tensor(SIGMA_X, SIGMA_Z)
    m = superoperator_matrix(lambda r: u @ r @ u)
    a = random_hermitian(rng)
    np.testing.assert_allclose(m @ to_coords(a), to_coords(u @ a @ u), atol=1e-12)
