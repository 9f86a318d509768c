"""Tests for the fractional process analytics and samplers.

Expected values marked as frozen were computed with the independent
brute-force oracles defined at the bottom of this file (high-resolution
trapezoid sums and adaptive nested quadrature), not with the code under test.
"""

import math
import warnings

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import gamma as G

from fracvol.errors import DomainError, LongRangeDependenceError, SamplerError
from fracvol.processes import (
    FouParams,
    TimeGrid,
    build_kernel_table,
    fbm_cov,
    fbm_cov_matrix,
    fou_convolution_operators,
    fou_cov,
    fou_cov_timedomain,
    fou_kernel,
    fou_kernel_integral,
    fou_stationary_var,
    phi_forecast,
    require_long_range,
    sample_fbm,
    sample_fou,
    sigma_h_sq,
    theta,
    _tail_covariance,
)

P5 = FouParams(rate=0.5, hurst=0.5)
P7 = FouParams(rate=0.5, hurst=0.7)
P9 = FouParams(rate=0.5, hurst=0.9)


# ---------------------------------------------------------------------------
# sigma_h_sq


def test_sigma_h_sq_brownian_case_exact():
    assert sigma_h_sq(0.5) == 1.0


def test_sigma_h_sq_frozen_oracle_values():
    # frozen: 1/(Gamma(2h+1) sin(pi h)) evaluated with scipy.special.gamma
    assert sigma_h_sq(0.7) == pytest.approx(0.995088135903925, abs=1e-12)
    assert sigma_h_sq(0.9) == pytest.approx(1.930262904584769, abs=1e-12)


def test_sigma_h_sq_cross_check_inline():
    v = sigma_h_sq(0.9)
    assert v == pytest.approx(1.0 / (G(2.8) * math.sin(0.9 * math.pi)), rel=1e-14)


def test_sigma_h_sq_continuity_near_half():
    hs = np.linspace(0.45, 0.55, 21)
    vals = np.array([sigma_h_sq(h) for h in hs])
    assert np.all(np.isfinite(vals))
    assert abs(sigma_h_sq(0.5000001) - 1.0) < 1e-5


def test_sigma_h_sq_domain():
    for bad in (0.0, 1.0, -0.2, 1.7):
        with pytest.raises(DomainError):
            sigma_h_sq(bad)


def test_require_long_range():
    assert require_long_range(0.7) == 0.7
    with pytest.raises(LongRangeDependenceError):
        require_long_range(0.5)
    with pytest.raises(DomainError):
        require_long_range(1.2)


# ---------------------------------------------------------------------------
# fbm_cov


def test_fbm_cov_brownian_reductions():
    assert fbm_cov(0.7, 0.7, 0.5) == pytest.approx(0.7, abs=1e-15)
    assert fbm_cov(0.3, 0.8, 0.5) == pytest.approx(0.3, abs=1e-15)


def test_fbm_cov_variance_equals_sigma_sq_at_one():
    assert fbm_cov(1.0, 1.0, 0.7) == pytest.approx(sigma_h_sq(0.7), rel=1e-14)


def test_fbm_cov_symmetry_and_self_similarity():
    rng = np.random.default_rng(0)
    for h in (0.3, 0.5, 0.75, 0.9):
        s, t = rng.uniform(0.01, 4.0, 2)
        assert fbm_cov(s, t, h) == pytest.approx(fbm_cov(t, s, h), rel=1e-14)
        for a in (0.5, 2.0, 3.7):
            assert fbm_cov(a * s, a * t, h) == pytest.approx(
                a ** (2 * h) * fbm_cov(s, t, h), rel=1e-12
            )


@pytest.mark.parametrize("h", [0.3, 0.5, 0.6, 0.7, 0.9])
@pytest.mark.parametrize("n", [16, 64])
def test_fbm_cov_matrix_positive_semidefinite(h, n):
    t = np.linspace(1.0 / n, 2.0, n)
    cov = fbm_cov_matrix(t, h)
    evals = np.linalg.eigvalsh(cov)
    assert evals.min() > -1e-10 * evals.max()
    np.linalg.cholesky(cov + 1e-12 * evals.max() * np.eye(n))


# ---------------------------------------------------------------------------
# kernel and its integrals


def test_kernel_markovian_closed_form():
    ts = np.arange(0.1, 5.0001, 0.1)
    for a in (0.5, 2.0):
        p = FouParams(rate=a, hurst=0.5)
        vals = np.array([fou_kernel(t, p) for t in ts])
        assert np.max(np.abs(vals - np.exp(-a * ts))) < 1e-12


def test_kernel_frozen_oracle_value():
    # frozen: brute-force 4e6-point trapezoid of the defining integral
    assert fou_kernel(1.0, P7) == pytest.approx(0.7240921410652325, abs=1e-8)


def test_kernel_matches_adaptive_quadrature_oracle():
    for (a, h, t) in ((0.5, 0.7, 1.0), (0.5, 0.9, 2.5), (1.5, 0.65, 0.3), (0.5, 0.3, 1.0)):
        inner, _ = quad(lambda s: np.exp(-a * s), 0.0, t,
                        weight="alg", wvar=(0.0, h - 0.5))
        oracle = (t ** (h - 0.5) - a * inner) / G(h + 0.5)
        assert fou_kernel(t, FouParams(a, h)) == pytest.approx(oracle, abs=1e-10)


def test_kernel_domain_error():
    with pytest.raises(DomainError):
        fou_kernel(0.0, P7)
    with pytest.raises(DomainError):
        fou_kernel(-1.0, P7)


def test_kernel_quadrature_branches_accurate_at_switch():
    # the asymptotic-series branch takes over near rate*t = 60: both sides of
    # the switch must match the adaptive-quadrature oracle
    for t in (59.5, 60.5, 200.0):
        p = FouParams(rate=1.0, hurst=0.7)
        inner, _ = quad(lambda s: np.exp(-s), 0.0, t,
                        weight="alg", wvar=(0.0, 0.2), epsabs=1e-14)
        oracle = (t ** 0.2 - inner) / G(1.2)
        assert fou_kernel(t, p) == pytest.approx(oracle, rel=1e-8)


def test_theta_endpoint_and_markovian_closed_form():
    assert theta(1.0, 1.0, P7) == 0.0
    assert theta(0.0, 1.0, P5) == pytest.approx(2.0 * (1.0 - math.exp(-0.5)), abs=1e-10)
    a = 2.0
    p = FouParams(rate=a, hurst=0.5)
    for t, horizon in ((0.0, 1.0), (0.3, 2.0), (1.9, 2.0)):
        assert theta(t, horizon, p) == pytest.approx(
            (1.0 - math.exp(-a * (horizon - t))) / a, abs=1e-12
        )


def test_theta_frozen_nested_quadrature_value():
    # frozen: nested quadrature of the double integral (oracle in this file)
    assert theta(0.0, 1.0, P9) == pytest.approx(0.6594279609795052, abs=1e-6)
    assert theta(0.0, 1.0, P7) == pytest.approx(0.7300645600022397, abs=1e-6)


def test_theta_matches_fresh_nested_quadrature():
    got = theta(0.2, 1.5, P9)
    assert got == pytest.approx(_theta_oracle(1.3, P9), abs=1e-6)


def test_theta_monotone_in_t_and_domain():
    ts = np.linspace(0.0, 1.0, 11)
    vals = [theta(t, 1.0, P7) for t in ts]
    assert all(a >= b - 1e-15 for a, b in zip(vals, vals[1:]))
    assert theta(0.0, 2.0, P7) > theta(0.0, 1.0, P7)  # nondecreasing in horizon
    with pytest.raises(DomainError):
        theta(1.1, 1.0, P7)


def test_kernel_table_contents():
    grid = TimeGrid(0.0, 0.1, 11)
    table = build_kernel_table(P7, grid, 1.0)
    assert table.kernel_values[0] == 0.0  # limit at t=0 for h > 1/2
    assert np.all(table.kernel_values >= 0.0)
    assert table.theta_values[-1] == pytest.approx(0.0, abs=1e-14)
    assert table.theta_values[0] == pytest.approx(theta(0.0, 1.0, P7), rel=1e-12)
    # theta column is the running integral of the kernel: nonincreasing in t
    assert np.all(np.diff(table.theta_values) <= 1e-15)


# ---------------------------------------------------------------------------
# stationary variance and covariance


def test_fou_stationary_var_trivial():
    assert fou_stationary_var(FouParams(2.0, 0.5)) == pytest.approx(0.25, abs=1e-14)
    assert fou_stationary_var(FouParams(0.5, 0.5)) == pytest.approx(1.0, abs=1e-14)


def test_fou_stationary_var_gamma_oracle():
    expect = 0.5 * 0.5 ** (-1.4) * G(2.4) * sigma_h_sq(0.7)
    assert fou_stationary_var(P7) == pytest.approx(expect, rel=1e-14)


def test_fou_cov_lag_zero_is_variance():
    for p in (P5, P7, P9):
        assert fou_cov(0.0, p) == fou_stationary_var(p)


def test_fou_cov_markovian_closed_form():
    p = FouParams(rate=1.0, hurst=0.5)
    expect = math.exp(-2.0) * fou_stationary_var(p)
    assert fou_cov(2.0, p) == pytest.approx(expect, abs=1e-9)
    assert expect == pytest.approx(0.06767, abs=1e-5)


def test_fou_cov_two_displays_agree():
    # the exponential-moment and cosine-integral forms of the autocovariance
    for p, lag in ((P9, 1.0), (P7, 1.0), (P7, 3.0), (FouParams(1.0, 0.8), 0.5)):
        assert fou_cov(lag, p) == pytest.approx(fou_cov_timedomain(lag, p), abs=1e-6)


def test_fou_cov_timedomain_frozen_value():
    # frozen: adaptive quadrature of the exponential-moment display
    assert fou_cov_timedomain(1.0, P9) == pytest.approx(5.365394321765451, abs=1e-9)


def test_fou_cov_domain():
    with pytest.raises(DomainError):
        fou_cov(-0.1, P7)


# ---------------------------------------------------------------------------
# fBm sampler


def test_sample_fbm_zero_at_origin_and_reproducible():
    grid = TimeGrid(0.0, 0.25, 5)
    b1 = sample_fbm(0.8, grid, 64, seed=11)
    b2 = sample_fbm(0.8, grid, 64, seed=11)
    assert np.all(b1.values[:, 0] == 0.0)
    assert np.array_equal(b1.values, b2.values)
    assert np.array_equal(b1.driver_increments, b2.driver_increments)
    b3 = sample_fbm(0.8, grid, 64, seed=12)
    assert not np.array_equal(b1.values, b3.values)


def test_sample_fbm_block_prefix_stability():
    # paths are generated in seeded blocks: a longer run extends a shorter one
    grid = TimeGrid(0.0, 0.1, 8)
    small = sample_fbm(0.7, grid, 500, seed=5)
    large = sample_fbm(0.7, grid, 3000, seed=5)
    assert np.array_equal(small.values, large.values[:500])


@pytest.mark.parametrize("h", [0.5, 0.7])
def test_sample_fbm_covariance_statistics(h):
    grid = TimeGrid(0.0, 1.0 / 15.0, 16)
    n = 60_000
    batch = sample_fbm(h, grid, n, seed=2024)
    v = batch.values
    emp = (v.T @ v) / n
    ana = fbm_cov_matrix(grid.points, h)
    se = np.sqrt((np.outer(np.diag(ana), np.diag(ana)) + ana ** 2) / n)
    se[se == 0.0] = np.inf
    assert np.max(np.abs(emp - ana) / se) < 4.5


def test_sample_fbm_driver_increment_variance():
    grid = TimeGrid(0.0, 0.125, 9)
    batch = sample_fbm(0.7, grid, 50_000, seed=3)
    ratio = batch.driver_increments.var(axis=0) / grid.step
    assert np.all(np.abs(ratio - 1.0) < 0.05)


def test_sample_fbm_driver_matches_path_increments_at_half():
    grid = TimeGrid(0.0, 0.2, 6)
    batch = sample_fbm(0.5, grid, 200, seed=9)
    assert np.max(np.abs(batch.driver_increments - np.diff(batch.values, axis=1))) < 1e-6


def test_sample_fbm_cholesky_method_matches_law():
    grid = TimeGrid(0.0, 0.25, 5)
    batch = sample_fbm(0.7, grid, 40_000, seed=21, method="cholesky")
    emp = (batch.values.T @ batch.values) / batch.n_paths
    ana = fbm_cov_matrix(grid.points, 0.7)
    se = np.sqrt((np.outer(np.diag(ana), np.diag(ana)) + ana ** 2) / batch.n_paths)
    se[se == 0.0] = np.inf
    assert np.max(np.abs(emp - ana) / se) < 4.5


def test_sample_fbm_requires_zero_start():
    with pytest.raises(DomainError):
        sample_fbm(0.7, TimeGrid(0.5, 0.1, 4), 10, seed=0)


# ---------------------------------------------------------------------------
# fOU sampler


def test_sample_fou_zero_mean():
    grid = TimeGrid(0.0, 0.1, 11)
    batch = sample_fou(P7, grid, 40.0, 50_000, seed=77)
    sd = math.sqrt(fou_stationary_var(P7) / batch.n_paths)
    assert np.max(np.abs(batch.values.mean(axis=0))) < 4.0 * sd


def test_sample_fou_markovian_variance():
    grid = TimeGrid(0.0, 0.1, 11)
    batch = sample_fou(P5, grid, 40.0, 50_000, seed=13)
    var = batch.values.var(axis=0)
    assert np.max(np.abs(var / fou_stationary_var(P5) - 1.0)) < 0.04


def test_sample_fou_long_memory_variance_and_lag_cov():
    grid = TimeGrid(0.0, 1.0 / 15.0, 16)
    n = 80_000
    batch = sample_fou(P7, grid, 40.0, n, seed=99)
    z = batch.values
    var_true = fou_stationary_var(P7)
    assert np.max(np.abs(z.var(axis=0) / var_true - 1.0)) < 0.02
    cov_true = fou_cov(1.0, P7)
    emp = float(np.mean(z[:, 0] * z[:, -1]))
    se = math.sqrt((var_true ** 2 + cov_true ** 2) / n)
    assert abs(emp - cov_true) < 4.0 * se


def test_sample_fou_truncation_deficit_matches_prediction():
    # with compensation off, the missing variance is the tail integral
    grid = TimeGrid(0.0, 1.0 / 15.0, 16)
    n = 200_000
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        batch = sample_fou(P7, grid, 40.0, n, seed=31, compensate_tail=False)
    deficit = fou_stationary_var(P7) - batch.values.var(axis=0).mean()
    predicted = _tail_covariance(P7, np.array([0.0]), 40.0)[0, 0]
    noise = fou_stationary_var(P7) * math.sqrt(2.0 / n)
    assert abs(deficit - predicted) < 4.0 * noise


def test_sample_fou_warns_on_short_window():
    grid = TimeGrid(0.0, 0.1, 11)
    with pytest.warns(UserWarning, match="past_horizon"):
        sample_fou(P7, grid, 5.0, 16, seed=0, compensate_tail=False)


def test_sample_fou_driver_variance_and_reproducibility():
    grid = TimeGrid(0.0, 0.05, 21)
    b1 = sample_fou(P7, grid, 40.0, 20_000, seed=55)
    b2 = sample_fou(P7, grid, 40.0, 20_000, seed=55)
    assert np.array_equal(b1.values, b2.values)
    ratio = b1.driver_increments.var(axis=0) / grid.step
    assert np.all(np.abs(ratio - 1.0) < 0.06)


def test_fou_operators_stationary_variance_identity():
    # discrete window + tail compensation reproduce the stationary variance
    grid = TimeGrid(0.0, 1.0 / 15.0, 16)
    w_pos, l_past = fou_convolution_operators(P7, grid, 40.0)
    var0 = float((l_past @ l_past.T)[0, 0])
    assert var0 == pytest.approx(fou_stationary_var(P7), rel=2e-3)


# ---------------------------------------------------------------------------
# phi_forecast


def test_phi_forecast_empty_history_is_zero():
    assert phi_forecast(P7, 0.0, 1.0) == 0.0
    assert phi_forecast(P7, 0.0, 1.0, [], []) == 0.0


def test_phi_forecast_zero_at_horizon():
    assert phi_forecast(P7, 1.0, 1.0, [0.5], [1.0]) == pytest.approx(0.0, abs=1e-14)


def test_phi_forecast_exponential_closed_form():
    a, t, horizon, delta = 0.5, 1.0, 2.5, 0.25
    u = t - delta
    expect = (math.exp(-a * delta) - math.exp(-a * (horizon - u))) / a
    got = phi_forecast(FouParams(a, 0.5), t, horizon, [u], [1.0])
    assert got == pytest.approx(expect, abs=1e-12)


def test_phi_forecast_rejects_future_history():
    with pytest.raises(DomainError):
        phi_forecast(P7, 0.5, 1.0, [0.7], [1.0])


# ---------------------------------------------------------------------------
# independent oracles (kept runnable so frozen values can be regenerated)


def _theta_oracle(x: float, p: FouParams) -> float:
    h, a = p.hurst, p.rate
    lead = x ** (h + 0.5) / ((h + 0.5) * G(h + 0.5))

    def kernel(t):
        inner, _ = quad(lambda s: np.exp(-a * s), 0.0, t,
                        weight="alg", wvar=(0.0, h - 0.5))
        return (t ** (h - 0.5) - a * inner) / G(h + 0.5)

    def remainder(v):
        return kernel(v) - v ** (h - 0.5) / G(h + 0.5)

    rem, _ = quad(remainder, 0.0, x, limit=200)
    return lead + rem


def test_oracle_self_consistency():
    # the nested-quadrature oracle reproduces the markovian closed form
    assert _theta_oracle(1.0, P5) == pytest.approx(2.0 * (1 - math.exp(-0.5)), abs=1e-9)
