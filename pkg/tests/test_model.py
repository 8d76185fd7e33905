import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stochlawson.linalg import commutator
from stochlawson.model import (
    CommutativityError,
    IntegrationGrid,
    Interpretation,
    LinearMap,
    SemiLinearSde,
    delta_L,
    delta_L_stage,
    exact_linear_solution,
    g_tilde,
    gamma_star,
    ito_from_stratonovich,
    split_commuting,
    stratonovich_from_ito,
    validate_commutativity,
)

from .conftest import commuting_family, random_semilinear

J = np.array([[0.0, 1.0], [-1.0, 0.0]])


def scalar(lam, mu, interpretation="ito", g=(None, None)):
    return SemiLinearSde(A=([[lam]], [[mu]]), g=g, interpretation=interpretation)


def test_gamma_star():
    assert gamma_star("ito") == 0.5
    assert gamma_star(Interpretation.STRATONOVICH) == 0.0


def test_g_tilde_examples(rng):
    x = rng.standard_normal((4, 1))
    g0 = lambda t, x: np.sin(x)
    c = 0.7
    g1 = lambda t, x: np.full_like(x, c)
    strat = scalar(-1.0, 0.4, "stratonovich", (g0, g1))
    assert np.array_equal(g_tilde(strat, 0, 0.0, x), np.sin(x))
    no_noise = SemiLinearSde(A=([[-1.0]], [[0.0]]), g=(g0, g1))
    assert np.array_equal(g_tilde(no_noise, 0, 0.0, x), np.sin(x))
    mu = 0.4
    ito = scalar(-1.0, mu, "ito", (g0, g1))
    assert np.allclose(g_tilde(ito, 0, 0.0, x), np.sin(x) - mu * c, rtol=0, atol=1e-15)
    with pytest.raises(IndexError):
        g_tilde(ito, 2, 0.0, x)


def test_delta_l_examples():
    zero = SemiLinearSde(A=(np.zeros((2, 2)), np.zeros((2, 2))))
    assert np.array_equal(delta_L(zero, 0.1, [0.3]), np.zeros((2, 2)))
    lam, mu, h, w = -0.7, 0.3, 0.1, 0.25
    assert delta_L(scalar(lam, mu), h, [w])[0, 0] == pytest.approx((lam - mu**2 / 2) * h + mu * w, abs=1e-16)
    assert delta_L(scalar(lam, mu, "stratonovich"), h, [w])[0, 0] == pytest.approx(lam * h + mu * w, abs=1e-16)


def test_delta_l_stage_batched():
    sde = scalar(-1.0, 0.5)
    out = delta_L_stage(sde, 0.1, np.array([[0.0], [0.2]]))
    assert out.shape == (2, 1, 1)
    assert out[1, 0, 0] == pytest.approx((-1.0 - 0.125) * 0.1 + 0.1)


def test_exact_linear_solution_examples():
    sde = scalar(0.05, 0.2)
    assert exact_linear_solution(sde, 1.0, [1.0], [0.3])[0] == pytest.approx(math.exp(0.09), rel=1e-15)
    assert np.allclose(exact_linear_solution(sde, 0.0, [2.0], [0.0]), [2.0])
    diag = SemiLinearSde(A=(np.diag([-1.0, 0.5]),))
    out = exact_linear_solution(diag, 2.0, [1.0, 3.0], np.zeros(0))
    assert np.allclose(out, [math.exp(-2.0), 3.0 * math.exp(1.0)], rtol=1e-14)
    with pytest.raises(ValueError):
        exact_linear_solution(scalar(0.0, 0.1, g=(LinearMap([[1.0]]), None)), 1.0, [1.0], [0.0])


def test_commutativity():
    assert validate_commutativity([np.ones((2, 2))])
    A1 = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert validate_commutativity([2.5 * A1, A1])
    report = validate_commutativity([np.array([[-1.0, 1.0], [0.0, -1.0]]), J])
    assert not report
    assert report.violations[0][:2] == (0, 1)
    assert report.violations[0][2] > 0
    with pytest.raises(CommutativityError, match=r"\[A_0, A_1\]"):
        SemiLinearSde(A=(np.array([[-1.0, 1.0], [0.0, -1.0]]), J))


def test_split_commuting_examples():
    A1 = np.array([[1.0, 2.0], [0.5, -1.0]])
    A0, res = split_commuting(3.0 * A1, A1)
    assert np.allclose(A0, 3.0 * A1) and np.allclose(res, 0.0)
    A0, res = split_commuting(np.eye(2), np.zeros((2, 2)))
    assert np.array_equal(A0, np.zeros((2, 2))) and np.array_equal(res, np.eye(2))
    A0, res = split_commuting(np.array([[1.0, 1.0], [0.0, 1.0]]), J)
    assert np.allclose(A0, [[0.0, 0.5], [-0.5, 0.0]])


def test_sde_validation():
    with pytest.raises(ValueError):
        SemiLinearSde(A=(np.eye(2), np.eye(3)))
    with pytest.raises(ValueError):
        SemiLinearSde(A=(np.eye(2),), g=(None, None))
    with pytest.raises(ValueError):
        SemiLinearSde(A=(np.eye(2),), g=(lambda t, x: x[..., :1],))
    with pytest.raises(ValueError):
        SemiLinearSde(A=(np.array([[np.nan]]),))
    sde = SemiLinearSde(A=(np.eye(2), J, 2 * J))
    assert (sde.d, sde.M) == (2, 2)


def test_integration_grid():
    grid = IntegrationGrid(0.0, 1.0, 4, [1.0])
    assert grid.h == 0.25 and grid.times[-1] == 1.0
    with pytest.raises(ValueError):
        IntegrationGrid(0.0, 1.0, 0, [1.0])
    with pytest.raises(ValueError):
        IntegrationGrid(1.0, 1.0, 2, [1.0])


def test_conversion_additive_noise_is_identity(rng):
    g1 = lambda t, x: np.ones_like(x) * 0.3
    sde = SemiLinearSde(A=(-np.eye(2), np.zeros((2, 2))), g=(None, g1), jac=(None, np.zeros((2, 2))))
    strat = stratonovich_from_ito(sde)
    x = rng.standard_normal((5, 2))
    assert np.allclose(strat.drift_generator(), sde.drift_generator())
    assert np.allclose(strat.eval_g(0, 0.0, x), 0.0)


def test_conversion_pure_linear_diffusion():
    # Itô GBM dX = lam X dt + mu X dW  <->  Stratonovich drift lam - mu^2/2
    lam, mu = -0.4, 0.6
    strat = stratonovich_from_ito(scalar(lam, mu))
    assert strat.interpretation is Interpretation.STRATONOVICH
    assert strat.A[0][0, 0] == pytest.approx(lam - 0.5 * mu**2)
    assert strat.linear_only
    # both closed forms give the same solution for the same path
    W, t = 0.37, 1.3
    a = exact_linear_solution(scalar(lam, mu), t, [1.0], [W])
    b = exact_linear_solution(strat, t, [1.0], [W])
    assert np.allclose(a, b, rtol=1e-14)


def test_conversion_of_noise_remainder_matches_hand_formula(rng):
    # diffusion b(x) = B x + c sin(x) -> correction 1/2 (B + c cos(x)) (B x + c sin(x))
    B = np.array([[0.0, 0.3], [-0.3, 0.1]])
    c = np.array([0.2, -0.1])
    g1 = lambda t, x: c * np.sin(x)
    j1 = lambda t, x: c[:, None] * 0 + np.einsum("i,...i->...i", c, np.cos(x))[..., None] * np.eye(2)
    sde = SemiLinearSde(A=(-np.eye(2), B), g=(None, g1), jac=(None, j1))
    strat = stratonovich_from_ito(sde)
    x = rng.standard_normal((6, 2))
    b = x @ B.T + c * np.sin(x)
    Jb = B + np.einsum("i,pi->pi", c, np.cos(x))[:, :, None] * np.eye(2)
    expected_drift = -x - 0.5 * np.einsum("pij,pj->pi", Jb, b)
    got = x @ strat.A[0].T + strat.eval_g(0, 0.0, x)
    assert np.allclose(got, expected_drift, atol=1e-14)


def test_conversion_needs_jacobian():
    sde = SemiLinearSde(A=([[0.0]], [[0.0]]), g=(None, lambda t, x: np.sin(x)))
    with pytest.raises(ValueError, match="Jacobian"):
        stratonovich_from_ito(sde)


# properties ------------------------------------------------------------------

seeds = st.integers(0, 2**32 - 1)


@settings(max_examples=40, deadline=None)
@given(seeds, st.integers(1, 3), st.integers(0, 2))
def test_exact_solution_flow_property(seed, d, M):
    rng = np.random.default_rng(seed)
    sde = SemiLinearSde(A=tuple(commuting_family(rng, d, M)))
    X0 = rng.standard_normal(d)
    t1, t2 = 0.4, 1.1
    W1 = rng.standard_normal(M) * math.sqrt(t1)
    W2 = W1 + rng.standard_normal(M) * math.sqrt(t2 - t1)
    direct = exact_linear_solution(sde, t2, X0, W2)
    stepped = exact_linear_solution(sde, t2, exact_linear_solution(sde, t1, X0, W1), W2, t0=t1, W0=W1)
    assert np.allclose(direct, stepped, rtol=1e-10, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(seeds, st.integers(1, 3), st.integers(1, 2))
def test_g_tilde_noise_channels_unchanged(seed, d, M):
    rng = np.random.default_rng(seed)
    sde = random_semilinear(rng, d, M)
    x = rng.standard_normal((5, d))
    for m in range(1, M + 1):
        assert np.array_equal(g_tilde(sde, m, 0.3, x), sde.eval_g(m, 0.3, x))


@settings(max_examples=40, deadline=None)
@given(seeds, st.integers(1, 3), st.integers(0, 2), st.floats(0.1, 5.0))
def test_delta_l_homogeneous(seed, d, M, alpha):
    rng = np.random.default_rng(seed)
    sde = SemiLinearSde(A=tuple(commuting_family(rng, d, M)))
    h, dW = 0.1, rng.standard_normal(M) * 0.3
    lhs = delta_L(sde, alpha * h, alpha * dW)
    rhs = alpha * delta_L(sde, h, dW)
    assert np.max(np.abs(lhs - rhs)) <= 1e-14 * max(1.0, np.max(np.abs(rhs)))


@settings(max_examples=40, deadline=None)
@given(seeds, st.integers(1, 4))
def test_split_commuting_exact(seed, d):
    rng = np.random.default_rng(seed)
    full, A1 = rng.standard_normal((d, d)), rng.standard_normal((d, d))
    A0, res = split_commuting(full, A1)
    # exact up to one rounding of each entry
    eps = np.finfo(float).eps
    assert np.all(np.abs(A0 + res - full) <= 2 * eps * (np.abs(full) + np.abs(A0)))
    scale = np.max(np.abs(A0)) * np.max(np.abs(A1)) * d
    assert np.max(np.abs(commutator(A0, A1))) <= 4 * eps * scale


@settings(max_examples=30, deadline=None)
@given(seeds, st.integers(1, 3), st.integers(1, 2))
def test_conversion_round_trip(seed, d, M):
    rng = np.random.default_rng(seed)
    sde = random_semilinear(rng, d, M)
    back = ito_from_stratonovich(stratonovich_from_ito(sde))
    x = rng.standard_normal((5, d))
    drift = lambda s: x @ s.A[0].T + s.eval_g(0, 0.2, x)
    assert np.max(np.abs(drift(back) - drift(sde))) <= 1e-12 * (1 + np.max(np.abs(drift(sde))))
    for m in range(1, M + 1):
        assert np.array_equal(back.A[m], sde.A[m])
