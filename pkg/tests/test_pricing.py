import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from hedgeledger import pricing
from hedgeledger.market import GbmSpec, InvalidInputError, TimeGrid, simulate_gbm_paths
from hedgeledger.pricing import CallSpec, PricingModel

ATM = CallSpec(100.0, 1.0)

# Frozen oracle values, computed once with 40-digit mpmath arithmetic.
BS_ATM = 7.965567455405796734             # Black value, f0 = K = 100, sigma 0.2, T = 1
PROB_ATM_MU10 = 14.665260653636595191     # same, forward drifted by exp(0.1)
DENSITY_ATM = 0.019847627373850588276     # lognormal density at F = f0 = 100, sigma 0.2, t = 1
GAMMA_RATE_ATM = 3.9695254747701176551    # K^2 sigma^2 / 2 times that density
TIME_VALUE = {50.0: 0.00094310908807501942, 80.0: 1.1859295132104258221, 120.0: 2.1472988105781469100,
              150.0: 0.19247532329705224203}


def erf_series(x: Fraction, terms: int = 40) -> float:
    """Maclaurin series of erf in exact rationals, times a 40-digit 2/sqrt(pi)."""
    total = Fraction(0)
    power = x
    fact = 1
    for n in range(terms):
        total += (-1) ** n * power / (fact * (2 * n + 1))
        power *= x * x
        fact *= n + 1
    two_over_sqrt_pi = Fraction("1.128379167095512573896158903121545171688")
    return float(total * two_over_sqrt_pi)


def test_erf_against_series_oracle():
    assert abs(pricing.erf_like(1.0) - erf_series(Fraction(1))) < 1e-12
    assert abs(pricing.erf_like(0.5) - erf_series(Fraction(1, 2))) < 1e-12


def test_erf_limits():
    assert pricing.erf_like(0.0) == 0.0
    assert pricing.erf_like(np.inf) == 1.0
    assert pricing.erf_like(-np.inf) == -1.0


@settings(max_examples=100, deadline=None)
@given(st.floats(-8, 8), st.floats(1e-6, 3))
def test_erf_odd_and_increasing(x, step):
    assert pricing.erf_like(-x) == -pricing.erf_like(x)
    assert pricing.erf_like(x + step) >= pricing.erf_like(x)


@settings(max_examples=50, deadline=None)
@given(st.floats(-8, 8))
def test_norm_cdf_relation(x):
    assert pricing.norm_cdf(x) == pytest.approx(0.5 * (1 + pricing.erf_like(x / math.sqrt(2))), abs=1e-15)


def test_frozen_price_values():
    assert abs(pricing.bs_price(100.0, 0.0, ATM, 0.2) - BS_ATM) < 1e-12
    assert abs(pricing.probabilistic_price(100.0, 0.0, ATM, 0.2, 0.1) - PROB_ATM_MU10) < 1e-12
    assert pricing.probabilistic_price(100.0, 0.0, ATM, 0.2, 0.0) == pricing.bs_price(100.0, 0.0, ATM, 0.2)


def test_density_and_gamma_rate_values():
    assert abs(pricing.lognormal_density(100.0, 1.0, 100.0, 0.2) - DENSITY_ATM) < 1e-15
    assert abs(pricing.gamma_integrand(1.0, ATM, 100.0, 0.2) - GAMMA_RATE_ATM) < 1e-12


@pytest.mark.parametrize("F", [40.0, 90.0, 100.0, 115.0, 260.0])
def test_density_matches_scipy_lognormal(F):
    sigma, t, f0 = 0.3, 2.0, 100.0
    s = sigma * math.sqrt(t)
    ref = stats.lognorm.pdf(F, s, scale=f0 * math.exp(-0.5 * s * s))
    assert pricing.lognormal_density(F, t, f0, sigma) == pytest.approx(ref, rel=1e-12)


def test_density_integrates_to_one():
    total, _ = integrate.quad(lambda F: pricing.lognormal_density(F, 1.0, 100.0, 0.2), 0, np.inf, limit=200)
    assert total == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("f0", sorted(TIME_VALUE))
def test_time_value_frozen(f0):
    assert abs(pricing.time_value_closed_form(ATM, f0, 0.2, 1.0) - TIME_VALUE[f0]) < 1e-12


@pytest.mark.parametrize("f0", [50.0, 100.0, 150.0])
@pytest.mark.parametrize("sigma", [0.1, 0.4])
def test_time_value_three_routes(f0, sigma):
    T = 2.0
    closed = pricing.time_value_closed_form(ATM, f0, sigma, T)
    quad, _ = integrate.quad(lambda t: pricing.gamma_integrand(t, ATM, f0, sigma), 0.0, T, epsabs=1e-13,
                             epsrel=1e-13, limit=500)
    assert abs(closed - quad) < 1e-10
    assert abs(closed - pricing.time_value_from_j(ATM, f0, sigma, T)) < 1e-10


def test_time_value_vanishes_without_time_or_vol():
    # at the money the value shrinks like sqrt(T); away from it, exponentially
    assert abs(pricing.time_value_closed_form(ATM, 100.0, 0.2, 1e-24)) < 1e-10
    assert abs(pricing.time_value_closed_form(ATM, 80.0, 0.2, 1e-4)) < 1e-10
    assert pricing.time_value_closed_form(ATM, 100.0, 0.2, 0.0) == 0.0
    assert pricing.time_value_closed_form(ATM, 120.0, 0.0, 1.0) == 0.0
    with pytest.raises(InvalidInputError):
        pricing.time_value_closed_form(ATM, 100.0, 0.2, -1.0)


@pytest.mark.parametrize("a,b,x", [(0.1, 0.5, 1.0), (0.2, -0.3, 2.0), (0.3, 0.0, 1.5)])
def test_j_integral_against_quadrature(a, b, x):
    ref, _ = integrate.quad(lambda y: math.exp(-a * a * y * y - b * b / (y * y)), 0.0, x, epsabs=1e-14, limit=200)
    assert pricing.j_integral(a, b, x) == pytest.approx(ref, abs=1e-12)


@pytest.mark.parametrize("model", list(PricingModel))
@pytest.mark.parametrize("F", [60.0, 100.0, 100.5, 140.0])
def test_terminal_agreement(model, F):
    v = pricing.option_value(model, F, ATM.expiry, ATM, 0.25, 0.1)
    assert v == max(F - ATM.strike, 0.0)


@pytest.mark.parametrize("F", [70.0, 95.0, 100.0, 108.0, 150.0])
@pytest.mark.parametrize("t", [0.0, 0.25, 0.5])
def test_greeks_against_finite_differences(F, t):
    sigma, mu = 0.25, 0.07
    h = 1e-4 * F
    fd_delta = (pricing.bs_price(F + h, t, ATM, sigma) - pricing.bs_price(F - h, t, ATM, sigma)) / (2 * h)
    assert pricing.bs_delta(F, t, ATM, sigma) == pytest.approx(fd_delta, rel=1e-6)
    d_plus, d_minus = pricing.bs_delta(F + h, t, ATM, sigma), pricing.bs_delta(F - h, t, ATM, sigma)
    assert pricing.bs_gamma(F, t, ATM, sigma) == pytest.approx((d_plus - d_minus) / (2 * h), rel=1e-6)
    g_plus = pricing.probabilistic_price(F + h, t, ATM, sigma, mu)
    g_minus = pricing.probabilistic_price(F - h, t, ATM, sigma, mu)
    assert pricing.probabilistic_delta(F, t, ATM, sigma, mu) == pytest.approx((g_plus - g_minus) / (2 * h), rel=1e-6)


@pytest.mark.parametrize("F", [80.0, 100.0, 125.0])
@pytest.mark.parametrize("t", [0.1, 0.5, 0.8])
def test_black_scholes_pde_residual(F, t):
    sigma = 0.2
    dt, dF = 1e-5, 5e-4 * F
    theta = (pricing.bs_price(F, t + dt, ATM, sigma) - pricing.bs_price(F, t - dt, ATM, sigma)) / (2 * dt)
    up, mid, down = (pricing.bs_price(x, t, ATM, sigma) for x in (F + dF, F, F - dF))
    gamma = (up - 2 * mid + down) / dF**2
    assert abs(theta + 0.5 * sigma**2 * F**2 * gamma) < 1e-4


def test_intrinsic_delta_convention():
    assert pricing.intrinsic_delta(100.0, ATM) == 0.0
    assert pricing.intrinsic_delta(100.0 + 1e-12, ATM) == 1.0
    assert pricing.intrinsic_delta(99.0, ATM) == 0.0


@settings(max_examples=100, deadline=None)
@given(st.floats(1.0, 400.0), st.floats(1.0, 400.0), st.floats(0.0, 1.0))
def test_intrinsic_convex(x, y, w):
    mid = pricing.intrinsic_price(w * x + (1 - w) * y, ATM)
    assert mid <= w * pricing.intrinsic_price(x, ATM) + (1 - w) * pricing.intrinsic_price(y, ATM) + 1e-9


@settings(max_examples=100, deadline=None)
@given(st.floats(1.0, 400.0), st.floats(0.0, 0.999), st.floats(0.01, 1.0))
def test_black_scholes_dominates_intrinsic(F, t, sigma):
    assert pricing.bs_price(F, t, ATM, sigma) >= pricing.intrinsic_price(F, ATM) - 1e-12


def test_probabilistic_price_has_zero_drift_along_paths():
    """g(t, F_t) is a martingale under the drifted dynamics."""
    mu, sigma, n = 0.1, 0.2, 50_000
    gbm, grid = GbmSpec(100.0, mu, sigma), TimeGrid(0.0, 0.25, 1)
    F1 = simulate_gbm_paths(gbm, grid, 17, np.arange(n))[:, -1]
    g0 = pricing.probabilistic_price(100.0, 0.0, ATM, sigma, mu)
    g1 = pricing.probabilistic_price(F1, 0.25, ATM, sigma, mu)
    diff = g1 - g0
    assert abs(diff.mean()) < 4 * diff.std(ddof=1) / np.sqrt(n)


def test_invalid_prices_rejected():
    with pytest.raises(InvalidInputError):
        pricing.bs_price(-1.0, 0.0, ATM, 0.2)
    with pytest.raises(InvalidInputError):
        CallSpec(0.0, 1.0)
