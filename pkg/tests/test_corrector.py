"""Tests for the corrector surfaces and the approximate price assembly."""

import math
from dataclasses import replace

import numpy as np
import pytest

from fracvol.errors import DomainError, LongRangeDependenceError
from fracvol.mc import (
    MarketModel,
    PayoffSpec,
    bs_reference,
    build_stein_stein_vbar,
)
from fracvol.corrector import (
    ApproxConfig,
    assemble_price,
    build_corrector_set,
    build_m2,
    m1_derivs,
    residual_report,
)
from fracvol.processes import FouParams


def _model(v0=1.0, alpha=1.0, mu=0.05, rho=-0.5, hurst=0.7, gamma=0.1, beta=0.5):
    return MarketModel(
        mu=mu,
        vbar=build_stein_stein_vbar(beta, alpha, v0),
        gamma=gamma,
        rho=rho,
        fou=FouParams(beta, hurst),
        x0=50.0,
        v0=v0,
    )


_CALL = PayoffSpec("call", 50.0)
_FAST = ApproxConfig(n_z=257, n_t=129)


@pytest.fixture(scope="module")
def constant_vbar_set():
    return build_corrector_set(_model(), _CALL, 1.0, _FAST)


@pytest.fixture(scope="module")
def varying_vbar_set():
    return build_corrector_set(_model(v0=1.5), _CALL, 1.0, _FAST)


# ---------------------------------------------------------------------------
# closed-form derivative displays


def test_m1_derivs_deep_in_the_money_limit():
    model = _model(mu=0.03)
    dm1, _ = m1_derivs(0.0, 1e6, model, 1.0, strike=50.0)
    assert dm1 == pytest.approx(math.exp(0.03), rel=1e-12)


def test_m1_second_derivative_nonnegative():
    model = _model()
    x = np.linspace(5.0, 200.0, 80)
    _, d2m1 = m1_derivs(0.0, x, model, 1.0, strike=50.0)
    assert np.all(d2m1 >= 0.0)


@pytest.mark.parametrize("x", [30.0, 50.0, 70.0])
def test_m1_derivs_match_finite_differences(x):
    # central finite differences of the reference price as the oracle
    model = _model(mu=0.0, v0=0.5, alpha=0.5)
    strike, horizon = 50.0, 1.0
    dm1, d2m1 = m1_derivs(0.0, x, model, horizon, strike=strike)
    h = 2e-4 * x  # eps**(1/4) scaling keeps the second difference clean
    p = lambda xx: bs_reference(xx, strike, 0.0, horizon, 0.0, model.vbar)
    fd1 = (p(x + h) - p(x - h)) / (2 * h)
    fd2 = (p(x + h) - 2 * p(x) + p(x - h)) / (h * h)
    assert dm1 == pytest.approx(fd1, rel=1e-6)
    assert d2m1 == pytest.approx(fd2, rel=1e-6)


# ---------------------------------------------------------------------------
# constant baseline: the degenerate corrector set


def test_constant_vbar_gives_unit_a_and_zero_higher_correctors(constant_vbar_set):
    cs = constant_vbar_set
    assert np.abs(cs.a_field.values - 1.0).max() == 0.0
    assert np.abs(cs.m3.values).max() == 0.0
    assert np.abs(cs.m4.values).max() == 0.0
    assert np.abs(cs.m5.values).max() == 0.0


def test_constraint_holds_to_machine_precision(constant_vbar_set, varying_vbar_set):
    for cs in (constant_vbar_set, varying_vbar_set):
        vbar_t = np.asarray(cs.model.vbar(cs.grid.t))[:, None]
        res = (1.0 - cs.a_field.values) * vbar_t * cs.f_field.values - cs.m3.values
        scale = max(np.abs(cs.m3.values).max(), 1.0)
        assert np.abs(res).max() < 1e-12 * scale


def test_m1_surface_matches_reference(constant_vbar_set):
    cs = constant_vbar_set
    model = cs.model
    z0 = math.log(50.0)
    for t in (0.0, 0.4):
        for x in (40.0, 50.0, 62.0):
            ref = bs_reference(x, 50.0, t, 1.0, model.mu, model.vbar)
            # linear-in-t interpolation error dominates at mid-level times
            assert cs.m1.at(t, math.log(x)) == pytest.approx(ref, abs=1e-4)
    assert cs.m1.at(1.0, z0) == pytest.approx(0.0, abs=1e-12)


def test_terminal_identity(constant_vbar_set):
    cs = constant_vbar_set
    model = cs.model
    for x in (30.0, 50.0, 64.7, 110.0):
        got = assemble_price(cs, model, 1.0, x, phi=0.37)
        assert got == pytest.approx(max(x - 50.0, 0.0), abs=1e-7)


def test_gamma_zero_recovers_leading_order(constant_vbar_set):
    cs = constant_vbar_set
    model = replace(cs.model, gamma=0.0)
    ref = bs_reference(50.0, 50.0, 0.0, 1.0, cs.model.mu, cs.model.vbar)
    assert assemble_price(cs, model, 0.0, 50.0, phi=0.5) == pytest.approx(ref, abs=1e-6)


def test_gamma_linearity_of_correction(constant_vbar_set):
    cs = constant_vbar_set
    m1 = cs.m1.at(0.0, math.log(50.0))
    deltas = []
    for gamma in (0.05, 0.1, 0.2):
        model = replace(cs.model, gamma=gamma)
        deltas.append(assemble_price(cs, model, 0.0, 50.0, phi=0.2) - m1)
    assert deltas[1] == pytest.approx(2.0 * deltas[0], rel=1e-9)
    assert deltas[2] == pytest.approx(4.0 * deltas[0], rel=1e-9)


def test_rho_decomposition(varying_vbar_set):
    # price(rho1) - price(rho2) = (rho1-rho2) * gamma * (a m2 + m5)
    cs = varying_vbar_set
    t, x = 0.2, 47.0
    z = math.log(x)
    gamma = 0.13
    rho1, rho2 = 0.4, -0.6
    p1 = assemble_price(cs, replace(cs.model, gamma=gamma, rho=rho1), t, x, phi=0.1)
    p2 = assemble_price(cs, replace(cs.model, gamma=gamma, rho=rho2), t, x, phi=0.1)
    expect = (rho1 - rho2) * gamma * (
        cs.a_field.at(t, z) * cs.m2.at(t, z) + cs.m5.at(t, z)
    )
    assert p1 - p2 == pytest.approx(expect, rel=1e-10)


def test_surfaces_do_not_depend_on_gamma_or_rho():
    a = build_corrector_set(_model(gamma=0.05, rho=0.3), _CALL, 1.0, _FAST)
    b = build_corrector_set(_model(gamma=2.0, rho=-0.9), _CALL, 1.0, _FAST)
    assert np.array_equal(a.m2.values, b.m2.values)
    assert np.array_equal(a.m1.values, b.m1.values)
    assert np.array_equal(a.a_field.values, b.a_field.values)


# ---------------------------------------------------------------------------
# m2 construction


def test_m2_zero_when_kernel_mass_zero(constant_vbar_set):
    cs = build_corrector_set(_model(), _CALL, 1.0, _FAST)
    cs.theta_table.theta_values[:] = 0.0
    build_m2(cs)
    assert np.abs(cs.m2.values).max() == 0.0


def test_m2_zero_for_linear_payoff():
    cs = build_corrector_set(_model(), PayoffSpec("call", 0.0), 1.0, _FAST)
    assert np.abs(cs.m2.values).max() == 0.0
    assert np.abs(cs.f_field.values).max() == 0.0


def test_m2_transform_route_agrees_with_backward_solver():
    model = _model()  # v0 == alpha: constant baseline
    cs_pde = build_corrector_set(model, _CALL, 1.0, _FAST)
    cs_tr = build_corrector_set(model, _CALL, 1.0, replace(_FAST, m2_route="transform"))
    g = cs_pde.grid
    z0 = math.log(50.0)
    window = np.ix_(g.t <= 0.9, np.abs(g.z - z0) <= 2.0)
    diff = np.abs(cs_pde.m2.values - cs_tr.m2.values)[window]
    scale = np.abs(cs_pde.m2.values[window]).max()
    assert diff.max() < 0.02 * scale


def test_m2_transform_route_requires_constant_baseline():
    with pytest.raises(DomainError):
        build_corrector_set(_model(v0=1.5), _CALL, 1.0,
                            replace(_FAST, m2_route="transform"))


def test_literal_step2_surface_only_for_comparison():
    cs = build_corrector_set(_model(), _CALL, 1.0, replace(_FAST, literal_step2=True))
    assert cs.literal_m2 is not None
    # comparison surface disagrees with the corrector that feeds the price
    rel = np.abs(cs.literal_m2.values - cs.m2.values).max()
    assert rel > 0.1 * np.abs(cs.m2.values).max()
    # and the assembled price uses cs.m2, untouched by the flag
    cs_plain = build_corrector_set(_model(), _CALL, 1.0, _FAST)
    assert np.array_equal(cs.m2.values, cs_plain.m2.values)


# ---------------------------------------------------------------------------
# (m3, a) construction in the time-dependent case


def test_a_routes_agree_below_pole_sweep(varying_vbar_set):
    cs_march = build_corrector_set(
        _model(v0=1.5), _CALL, 1.0, replace(_FAST, a_route="ode_march")
    )
    cs = varying_vbar_set
    g = cs.grid
    z0 = math.log(50.0)
    window = np.ix_(g.t <= 0.85, (g.z >= z0 - 2.0) & (g.z <= z0 - 0.05))
    diff = np.abs(cs.a_field.values - cs_march.a_field.values)[window]
    assert diff.max() < 5e-3


def test_masked_fraction_reported(varying_vbar_set):
    assert 0.0 < varying_vbar_set.masked_fraction < 0.9


def test_a_terminal_row_is_one(varying_vbar_set):
    assert np.abs(varying_vbar_set.a_field.values[-1] - 1.0).max() < 1e-12


# ---------------------------------------------------------------------------
# residual report


def test_residuals_zero_for_zero_payoff():
    zero_payoff = PayoffSpec("custom", custom_x=np.array([0.0, 1e6]),
                             custom_g=np.array([0.0, 0.0]))
    cs = build_corrector_set(_model(), zero_payoff, 1.0,
                             replace(_FAST, solver_path="numeric_pde"))
    rep = residual_report(cs)
    for name in ("m1", "m2", "m3", "m4", "m5", "constraint"):
        assert rep[name].linf == 0.0


def test_residuals_shrink_at_second_order():
    model = _model()
    reports = []
    for n_z, n_t in ((129, 65), (257, 129)):
        cs = build_corrector_set(model, _CALL, 1.0, ApproxConfig(n_z=n_z, n_t=n_t))
        reports.append(residual_report(cs))
    for name in ("m1", "m2"):
        ratio = reports[0][name].linf / reports[1][name].linf
        assert 3.0 < ratio < 5.0
    assert reports[1]["constraint"].linf < 1e-12


def test_rejects_short_memory_hurst():
    with pytest.raises(LongRangeDependenceError):
        build_corrector_set(_model(hurst=0.5), _CALL, 1.0, _FAST)
    with pytest.raises(LongRangeDependenceError):
        build_corrector_set(_model(hurst=0.25), _CALL, 1.0, _FAST)


def test_out_of_grid_evaluation_raises(constant_vbar_set):
    cs = constant_vbar_set
    with pytest.raises(DomainError):
        assemble_price(cs, cs.model, 0.0, 50.0 * math.exp(7.0))
    with pytest.raises(DomainError):
        assemble_price(cs, cs.model, 2.0, 50.0)
