import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm as scipy_expm

from stochlawson.linalg import (
    LinAlgFailure,
    as_matrix,
    commutator,
    expm,
    expm_pair,
    is_commuting,
    kron,
    solve,
    spectral_radius,
)

from .conftest import commuting_family


def test_expm_zero_is_identity_bitwise():
    out = expm(np.zeros((2, 2)))
    assert np.array_equal(out, np.eye(2))
    assert out.dtype == np.float64


def test_expm_diagonal():
    a, b = -1.3, 0.7
    assert np.allclose(expm(np.diag([a, b])), np.diag([math.exp(a), math.exp(b)]), rtol=1e-14, atol=0)


def test_expm_rotation_against_series():
    theta = 0.3
    A = np.array([[0.0, theta], [-theta, 0.0]])
    closed = np.array([[math.cos(theta), math.sin(theta)], [-math.sin(theta), math.cos(theta)]])
    # truncated Taylor series as an independent check of the closed form
    series, term = np.eye(2), np.eye(2)
    for k in range(1, 30):
        term = term @ A / k
        series = series + term
    assert np.max(np.abs(series - closed)) < 1e-14
    assert np.max(np.abs(expm(A) - closed)) < 1e-14


def test_expm_matches_scipy_on_random_matrices(rng):
    worst = 0.0
    for _ in range(300):
        d = rng.integers(1, 5)
        A = rng.standard_normal((d, d))
        A *= rng.uniform(0.01, 10.0) / np.linalg.norm(A, 1)
        ref = scipy_expm(A)
        worst = max(worst, np.linalg.norm(expm(A) - ref) / np.linalg.norm(ref))
    assert worst < 1e-12


def test_expm_batched_matches_single(rng):
    stack = rng.standard_normal((7, 3, 3)) * 2.0
    out = expm(stack)
    for k in range(7):
        assert np.allclose(out[k], expm(stack[k]), rtol=1e-15, atol=1e-15)


def test_expm_complex():
    A = np.array([[1j, 0.0], [0.0, -2.0]])
    assert np.allclose(expm(A), np.diag([np.exp(1j), math.exp(-2.0)]), atol=1e-15)


@pytest.mark.parametrize("bad", [np.ones((2, 3)), np.array([[np.nan, 0.0], [0.0, 1.0]]), np.array([[np.inf]])])
def test_expm_rejects_bad_input(bad):
    with pytest.raises(ValueError):
        expm(bad)


def test_kron_examples(rng):
    assert np.array_equal(kron(np.eye(2), np.eye(2)), np.eye(4))
    a, b, c, d = 2.0, 3.0, 5.0, 7.0
    assert np.array_equal(kron(np.diag([a, b]), np.diag([c, d])), np.diag([a * c, a * d, b * c, b * d]))
    A, B = rng.standard_normal((2, 2)), rng.standard_normal((2, 2))
    ev = np.sort_complex(np.linalg.eigvals(kron(A, B)))
    prods = np.sort_complex(np.outer(np.linalg.eigvals(A), np.linalg.eigvals(B)).ravel())
    assert np.allclose(ev, prods, atol=1e-12)


def test_spectral_radius_examples():
    assert spectral_radius(np.eye(3)) == pytest.approx(1.0, abs=1e-14)
    assert spectral_radius(np.diag([2.0, -3.0])) == pytest.approx(3.0, abs=1e-14)
    assert spectral_radius(np.array([[0.0, 1.0], [-1.0, 0.0]])) == pytest.approx(1.0, abs=1e-14)


def test_spectral_radius_rejects_nonfinite():
    with pytest.raises(ValueError):
        spectral_radius(np.array([[np.nan]]))


def test_commutator_examples(rng):
    A = rng.standard_normal((3, 3))
    assert np.array_equal(commutator(A, A), np.zeros((3, 3)))
    assert np.allclose(commutator(np.eye(3), A), 0.0, atol=0)
    lam, b, sig = -1.0, 1.0, 1.0
    C = commutator(np.array([[lam, b], [0.0, lam]]), np.array([[0.0, sig], [-sig, 0.0]]))
    # [[lam,b],[0,lam]] J - J [[lam,b],[0,lam]] = [[-b, 0], [0, b]] (hand multiplication)
    assert np.allclose(C, [[-b * sig, 0.0], [0.0, b * sig]])
    assert not is_commuting(np.array([[lam, b], [0.0, lam]]), np.array([[0.0, sig], [-sig, 0.0]]))


def test_commutator_dimension_mismatch():
    with pytest.raises(ValueError):
        commutator(np.eye(2), np.eye(3))


def test_solve_examples(rng):
    b = np.array([1.0, 2.0])
    assert np.array_equal(solve(np.eye(2), b), b)
    assert np.allclose(solve(np.diag([2.0, 4.0]), np.array([2.0, 4.0])), [1.0, 1.0])
    A = rng.standard_normal((3, 3)) + 3 * np.eye(3)
    x = rng.standard_normal(3)
    assert np.allclose(solve(A, A @ x), x, rtol=1e-12)


def test_solve_singular_reports_condition():
    with pytest.raises(LinAlgFailure, match="cond"):
        solve(np.array([[1.0, 2.0], [2.0, 4.0]]), np.array([1.0, 1.0]))


def test_as_matrix_validation():
    with pytest.raises(ValueError):
        as_matrix(np.ones((2, 3)), square=True)
    assert as_matrix(2.5).shape == (1, 1)


# properties ------------------------------------------------------------------

seeds = st.integers(0, 2**32 - 1)


@settings(max_examples=60, deadline=None)
@given(seeds, st.integers(1, 4))
def test_commuting_exponentials_multiply(seed, d):
    rng = np.random.default_rng(seed)
    A, B = commuting_family(rng, d, 1, scale=0.8)
    assert is_commuting(A, B, 1e-14) or np.max(np.abs(commutator(A, B))) < 1e-13
    lhs = expm(A) @ expm(B)
    rhs = expm(A + B)
    assert np.max(np.abs(lhs - rhs)) <= 1e-10 * max(1.0, np.max(np.abs(rhs)))


@settings(max_examples=60, deadline=None)
@given(seeds, st.integers(1, 5), st.floats(0.01, 20.0))
def test_skew_exponential_is_orthogonal(seed, d, scale):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((d, d))
    S = (X - X.T) * scale / max(np.linalg.norm(X - X.T), 1e-300)
    assert abs(np.linalg.norm(expm(S), 2) - 1.0) <= 1e-12


@settings(max_examples=60, deadline=None)
@given(seeds, st.integers(1, 4))
def test_spectral_radius_of_kron_square(seed, d):
    A = np.random.default_rng(seed).standard_normal((d, d))
    r = spectral_radius(A)
    assert abs(spectral_radius(kron(A, A)) - r * r) <= 1e-9 * max(1.0, r * r)


@settings(max_examples=60, deadline=None)
@given(seeds, st.floats(-3, 3), st.floats(-3, 3))
def test_commutator_bilinear_antisymmetric(seed, alpha, beta):
    rng = np.random.default_rng(seed)
    A, B, C = (rng.standard_normal((3, 3)) for _ in range(3))
    assert np.allclose(commutator(A, B), -commutator(B, A), atol=1e-13)
    lhs = commutator(alpha * A + beta * C, B)
    rhs = alpha * commutator(A, B) + beta * commutator(C, B)
    assert np.allclose(lhs, rhs, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(seeds, st.integers(1, 4), st.floats(0.001, 30.0))
def test_expm_pair_matches_two_calls(seed, d, scale):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((3, d, d))
    A *= scale / np.linalg.norm(A[0], 1)
    pos, neg = expm_pair(A)
    assert np.array_equal(pos, expm(A))
    assert np.allclose(neg, expm(-A), rtol=1e-14, atol=1e-300)
