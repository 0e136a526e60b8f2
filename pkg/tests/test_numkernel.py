import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_hermitian, random_unitary
from oracles import power_iteration_norm
from perturba.config import DEFAULT_TOLS
from perturba.errors import NotHermitian, NotSkewHermitian
from perturba.numkernel import exp_skew, herm_eig, operator_norm, polar_svd


def test_operator_norm_identity():
    assert operator_norm(np.eye(3)) == pytest.approx(1.0, abs=1e-14)


def test_operator_norm_diagonal():
    assert operator_norm(np.diag([0.5, -2.0])) == pytest.approx(2.0, abs=1e-14)


def test_operator_norm_vs_power_iteration(rng):
    # fixed seed gives a healthy spectral gap, so power iteration converges
    a = rng.standard_normal((5, 5)) + 1j * rng.standard_normal((5, 5))
    assert operator_norm(a) == pytest.approx(power_iteration_norm(a), abs=1e-10)


def test_operator_norm_submultiplicative_and_unitary_invariant(rng):
    for _ in range(50):
        n = int(rng.integers(2, 9))
        a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        b = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        assert operator_norm(a @ b) <= operator_norm(a) * operator_norm(b) + 1e-10
        u = random_unitary(n, rng)
        assert abs(operator_norm(u @ a) - operator_norm(a)) <= 1e-10
        assert abs(operator_norm(a @ u) - operator_norm(a)) <= 1e-10


def test_herm_eig_diagonal():
    spec = herm_eig(np.diag([0.1, 0.9]))
    np.testing.assert_allclose(spec.eigenvalues, [0.9, 0.1], atol=1e-14)


def test_herm_eig_two_by_two_closed_form():
    spec = herm_eig(np.array([[0.5, 0.45], [0.45, 0.5]], dtype=complex))
    np.testing.assert_allclose(spec.eigenvalues, [0.95, 0.05], atol=1e-14)
    top = spec.eigenvectors[:, 0]
    expected = np.array([1.0, 1.0]) / np.sqrt(2)
    # eigenvectors match up to a phase
    phase = top[0] / expected[0]
    np.testing.assert_allclose(top, phase * expected, atol=1e-12)


def test_herm_eig_rejects_non_hermitian():
    with pytest.raises(NotHermitian):
        herm_eig(np.array([[0.0, 1.0], [0.0, 0.0]]))


@pytest.mark.parametrize("n", [2, 8, 32, 128])
def test_herm_eig_reconstruction(rng, n):
    h = random_hermitian(n, rng, scale=2.0)
    spec = herm_eig(h)
    tol = DEFAULT_TOLS.recon_tol(n, operator_norm(h))
    assert operator_norm(h - spec.reconstruct()) <= tol
    v = spec.eigenvectors
    assert operator_norm(v.conj().T @ v - np.eye(n)) <= tol
    assert list(spec.eigenvalues) == sorted(spec.eigenvalues, reverse=True)


def test_polar_svd_diagonal_example():
    pol = polar_svd(np.diag([1.0, 0.9, 0.0]).astype(complex))
    np.testing.assert_allclose(pol.isometric_part, np.diag([1.0, 1.0, 0.0]), atol=1e-12)
    np.testing.assert_allclose(pol.positive_part, np.diag([1.0, 0.9, 0.0]), atol=1e-12)
    np.testing.assert_allclose(pol.singular_values, [1.0, 0.9, 0.0], atol=1e-12)


def test_polar_svd_unitary_input(rng):
    u = random_unitary(5, rng)
    pol = polar_svd(u)
    assert operator_norm(pol.isometric_part - u) <= 1e-12
    assert operator_norm(pol.positive_part - np.eye(5)) <= 1e-12


def test_polar_svd_zero_matrix():
    pol = polar_svd(np.zeros((3, 2)))
    assert operator_norm(pol.isometric_part) == 0.0
    assert operator_norm(pol.positive_part) == 0.0


@pytest.mark.parametrize("shape", [(6, 6), (8, 3), (3, 8), (1, 5), (128, 128)])
def test_polar_svd_reconstruction_and_structure(rng, shape):
    a = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    pol = polar_svd(a)
    n = max(shape)
    tol = DEFAULT_TOLS.recon_tol(n, operator_norm(a))
    assert operator_norm(a - pol.isometric_part @ pol.positive_part) <= tol
    # the isometric part is a partial isometry; its support commutes with |v|
    g = pol.isometric_part.conj().T @ pol.isometric_part
    assert operator_norm(g @ g - g) <= tol
    f = pol.isometric_part @ pol.isometric_part.conj().T
    assert operator_norm(f @ f - f) <= tol
    assert operator_norm(g @ pol.positive_part - pol.positive_part @ g) <= tol


def test_polar_svd_rank_threshold(rng):
    # singular directions below the relative cutoff stay in the kernel
    u = random_unitary(4, rng)
    w = random_unitary(4, rng)
    a = (u * np.array([1.0, 0.5, 1e-13, 0.0])) @ w.conj().T
    pol = polar_svd(a)
    g = pol.isometric_part.conj().T @ pol.isometric_part
    assert int(round(np.trace(g).real)) == 2


def test_exp_skew_zero():
    np.testing.assert_allclose(exp_skew(np.zeros((3, 3))), np.eye(3), atol=1e-15)


def test_exp_skew_rotation_closed_form():
    th = 0.1
    k = np.array([[0.0, -th], [th, 0.0]])
    u = exp_skew(k)
    expected = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    np.testing.assert_allclose(u, expected, atol=1e-13)
    assert operator_norm(u - np.eye(2)) == pytest.approx(2 * np.sin(th / 2), abs=1e-12)


def test_exp_skew_scalar_phase():
    th = 0.3
    u = exp_skew(1j * th * np.eye(3))
    np.testing.assert_allclose(u, np.exp(1j * th) * np.eye(3), atol=1e-13)


def test_exp_skew_rejects_non_skew():
    with pytest.raises(NotSkewHermitian):
        exp_skew(np.eye(2))


def test_exp_skew_unitary_and_bounded(rng):
    for _ in range(20):
        n = int(rng.integers(2, 17))
        g = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        k = (g - g.conj().T) / 2
        u = exp_skew(k)
        nk = operator_norm(k)
        assert operator_norm(u @ u.conj().T - np.eye(n)) <= DEFAULT_TOLS.recon_tol(n, 1.0)
        assert operator_norm(u - np.eye(n)) <= nk * np.exp(nk) + 1e-12


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=2, max_value=10), st.integers(min_value=0, max_value=2**31 - 1))
def test_herm_eig_roundtrip_property(n, seed):
    h = random_hermitian(n, np.random.default_rng(seed))
    spec = herm_eig(h)
    assert operator_norm(h - spec.reconstruct()) <= DEFAULT_TOLS.recon_tol(n, operator_norm(h))


def test_determinism_bitwise(rng):
    a = rng.standard_normal((12, 12)) + 1j * rng.standard_normal((12, 12))
    h = (a + a.conj().T) / 2
    s1 = herm_eig(h)
    s2 = herm_eig(h.copy())
    assert np.array_equal(s1.eigenvalues, s2.eigenvalues)
    assert np.array_equal(s1.eigenvectors, s2.eigenvectors)
    p1 = polar_svd(a)
    p2 = polar_svd(a.copy())
    assert np.array_equal(p1.isometric_part, p2.isometric_part)
