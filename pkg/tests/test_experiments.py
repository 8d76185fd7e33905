import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stochlawson.experiments import (
    DivergenceThresholdError,
    ErrorTable,
    ExperimentConfig,
    ExperimentError,
    confidence_interval,
    error_table_csv,
    estimate_order,
    moment_csv,
    moment_evolution,
    strong_error,
    weak_error,
)
from stochlawson.noise import sample_paths
from stochlawson.problems import damped_oscillator, make_problem, orthogonal_noise
from stochlawson.schemes import run_paths

# two-sided 97.5% Student-t quantile with one degree of freedom, tan(0.475 pi)
T975_1 = math.tan(0.475 * math.pi)


def test_estimate_order_exact_line():
    h = 2.0 ** -np.arange(3, 8)
    slope, icept = estimate_order(h, 3.0 * h)
    assert slope == pytest.approx(1.0, abs=1e-12)
    assert icept == pytest.approx(math.log2(3.0), abs=1e-12)


def test_estimate_order_rejections():
    with pytest.raises(ValueError):
        estimate_order([0.1, 0.1, 0.05], [1.0, 1.0, 0.5])
    with pytest.raises(ValueError):
        estimate_order([0.1, 0.05, 0.025], [1.0, 0.0, 0.5])
    with pytest.raises(ValueError):
        estimate_order([0.1, 0.05], [1.0, 0.5])


def test_estimate_order_noisy_synthetic(rng):
    h = 2.0 ** -np.arange(2, 9)
    err = h**1.5 * (1 + 0.01 * rng.uniform(-1, 1, h.size))
    assert 1.45 <= estimate_order(h, err)[0] <= 1.55


def test_confidence_interval_examples():
    assert confidence_interval([0.3, 0.3, 0.3]) == 0.0
    delta = 0.25
    assert confidence_interval([1.0 - delta, 1.0 + delta]) == pytest.approx(T975_1 * delta, rel=1e-9)
    with pytest.raises(ValueError):
        confidence_interval([1.0])


def test_confidence_interval_coverage():
    rng = np.random.default_rng(5)
    reps, n = 10**4, 8
    draws = rng.standard_normal((reps, n)) * 2.0 + 1.0
    hits = sum(abs(d.mean() - 1.0) <= confidence_interval(d) for d in draws)
    # binomial standard error of the coverage is about 0.002
    assert abs(hits / reps - 0.95) < 0.01


def test_error_table_invariants():
    with pytest.raises(ValueError):
        ErrorTable("x", [0.1, 0.2, 0.05], np.ones(3), np.ones(3), np.ones(3))
    t = ErrorTable("x", [0.1, 0.05], [1.0, 0.5], [0.0, 0.0], [0.0, 0.0])
    assert math.isnan(t.order) and math.isnan(t.order_ci())
    t = ErrorTable("x", [0.4, 0.2, 0.1, 0.05], [4.0, 2.0, 1.0, 0.5], np.zeros(4), np.zeros(4))
    assert t.order == pytest.approx(1.0) and t.order_ci() == pytest.approx(0.0, abs=1e-12)


def test_config_validation():
    with pytest.raises(ExperimentError):
        ExperimentConfig(h=(0.1, 0.1)).validate()
    with pytest.raises(ExperimentError):
        ExperimentConfig(paths=0).validate()
    with pytest.raises(ExperimentError):
        ExperimentConfig(h=()).validate()
    with pytest.raises(ExperimentError):
        ExperimentConfig(schemes=("no-such-scheme",)).validate()
    with pytest.raises(ExperimentError):
        ExperimentConfig(functional="x^3").validate()
    assert "workers" not in ExperimentConfig().describe()


SMALL = ExperimentConfig(
    problem="oscillator", params={"lam": 1.0}, schemes=("em-dsl", "platen-dsl"),
    h=(2.0**-3, 2.0**-4, 2.0**-5), batches=4, paths=10, seed=3, reference_factor=4,
)


def test_reference_scheme_has_zero_error():
    cfg = replace(SMALL, schemes=("platen15-dsl",), reference_factor=1)
    t = strong_error(cfg)["platen15-dsl"]
    assert t.error[-1] == 0.0
    assert np.all(t.error[:-1] > 0)


def test_common_noise_consistency():
    cfg = replace(SMALL, schemes=("platen15-dsl",), batches=2, paths=5)
    t = strong_error(cfg)["platen15-dsl"]
    prob = make_problem("oscillator", lam=1.0)
    base = 2.0**-5 / 4
    noise = sample_paths(cfg.seed, range(10), 1, int(round(1.0 / base)), base, need_dz=True)
    ref = run_paths(prob.sde, "platen15-dsl", 0.0, prob.X0, noise).final
    for k, F in enumerate((16, 8, 4)):
        y = run_paths(prob.sde, "platen15-dsl", 0.0, prob.X0, noise.coarsen(F)).final
        direct = np.mean(np.linalg.norm(y - ref, axis=1))
        assert t.error[k] == pytest.approx(direct, rel=1e-12)


def test_weak_constant_functional_is_zero():
    cfg = replace(SMALL, functional="one")
    for t in weak_error(cfg).values():
        assert np.all(t.error == 0.0)


def test_weak_analytic_and_control_variate_agree_in_expectation():
    cfg = ExperimentConfig(
        problem="gbm", params={"lam": -1.0, "mu": 0.5}, schemes=("em-dsl",),
        h=(0.25, 0.125, 0.0625), batches=10, paths=2000, seed=4,
    )
    cv = weak_error(cfg)["em-dsl"]
    plain = weak_error(replace(cfg, control_variate=False))["em-dsl"]
    # same samples: the two estimates differ by the Monte Carlo error of the exact solution
    assert np.all(np.abs(cv.error - plain.error) < 4 * plain.ci + 1e-12)
    assert np.all(cv.ci < plain.ci)


def test_determinism_across_workers():
    a = strong_error(replace(SMALL, workers=1, group_paths=10))
    b = strong_error(replace(SMALL, workers=3, group_paths=10))
    for name in a:
        assert np.array_equal(a[name].error, b[name].error)
        assert np.array_equal(a[name].ci, b[name].ci)
    assert error_table_csv(a, replace(SMALL, workers=1)) == error_table_csv(b, replace(SMALL, workers=3))


def test_csv_format():
    tables = strong_error(SMALL)
    text = error_table_csv(tables, SMALL)
    lines = text.splitlines()
    assert lines[0].startswith("# config {")
    assert lines[1] == "h,err_em-dsl,ci_em-dsl,time_em-dsl,err_platen-dsl,ci_platen-dsl,time_platen-dsl"
    assert len(lines) == 2 + 3
    assert float(lines[2].split(",")[0]) == 0.125


def test_timing_is_opt_in():
    assert np.all(np.isnan(strong_error(SMALL)["em-dsl"].seconds))
    assert np.all(strong_error(replace(SMALL, timing=True))["em-dsl"].seconds >= 0)


def test_divergence_threshold():
    cfg = ExperimentConfig(
        problem="scalar", params={"lam": 0.0, "sigma": 1000.0}, schemes=("em-dsl",),
        h=(0.05, 0.025, 0.0125), batches=2, paths=5, reference="em-dsl", reference_factor=1,
    )
    with pytest.raises(DivergenceThresholdError):
        strong_error(cfg)


def test_slope_stability_on_clean_table():
    cfg = ExperimentConfig(
        problem="oscillator", params={"lam": 1.0}, schemes=("platen-dsl",),
        h=tuple(2.0**-k for k in range(4, 10)), batches=4, paths=20, seed=8, reference_factor=8,
    )
    t = strong_error(cfg)["platen-dsl"]
    full = estimate_order(t.h, t.error)[0]
    trimmed = estimate_order(t.h[1:], t.error[1:])[0]
    assert abs(full - trimmed) < 0.1


def test_moment_evolution_deterministic_decay():
    lam, h = -0.8, 0.05
    prob = damped_oscillator(lam, 0.0, 0.0)
    s = moment_evolution(prob, ["em-dsl", "platen-dsl"], h, 20, 50)
    expected = np.exp(2 * lam * s.t)
    for name in s.mc:
        assert np.allclose(s.mc[name][:, 0], expected, rtol=1e-12)
        assert s.truncated[name] is None
    assert np.allclose(s.exact[:, 0], expected, rtol=1e-12)


def test_moment_evolution_matches_iterated_operator():
    # h = 0.1 keeps the per-step factors light-tailed, so the standard error is trustworthy
    prob = orthogonal_noise(-2.0, 1.0, math.sqrt(2.5))
    s = moment_evolution(prob, ["em-dsl", "platen-dsl"], 0.1, 20, 20000, seed=2)
    for name in s.mc:
        for n in range(5, 21, 5):
            diff = np.abs(s.mc[name][n, :2] - s.iterated[name][n, :2])
            assert np.all(diff <= 4 * s.se[name][n, :2] + 1e-14)


def test_moment_csv_header():
    prob = damped_oscillator(-0.5, 1.0, 0.3)
    s = moment_evolution(prob, ["em-dsl"], 0.1, 3, 10)
    lines = moment_csv(s, "{}").splitlines()
    assert lines[0] == "# config {}"
    assert lines[1] == "t,mc_em-dsl_1,mc_em-dsl_2,exact_1,exact_2"
    assert len(lines) == 2 + 4


@settings(max_examples=40, deadline=None)
@given(st.floats(0.2, 3.0), st.floats(-3.0, 3.0), st.integers(3, 8))
def test_order_of_power_law(p, c, n):
    h = 2.0 ** -np.arange(1, n + 1)
    slope, icept = estimate_order(h, 2.0**c * h**p)
    assert slope == pytest.approx(p, abs=1e-9) and icept == pytest.approx(c, abs=1e-8)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=2, max_size=30), st.floats(-5, 5))
def test_ci_shift_invariant(means, shift):
    a = confidence_interval(means)
    b = confidence_interval(np.asarray(means) + shift)
    assert b == pytest.approx(a, rel=1e-6, abs=1e-9)
