"""Closed-form call pricers, their deltas, and the analytic time value.

Three option values are provided for a European call on a driftless-numeraire
underlying:

* risk-neutral ``f`` (Black-Scholes, zero rate),
* probabilistic ``g`` (expected payoff under a GBM with real drift ``mu0``),
* intrinsic ``I`` (payoff evaluated at the current price).

All functions accept numpy arrays for the price argument.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .market import InvalidInputError

SQRT2 = math.sqrt(2.0)
SQRT2PI = math.sqrt(2.0 * math.pi)


class PricingModel(str, enum.Enum):
    RISK_NEUTRAL = "risk_neutral"
    PROBABILISTIC = "probabilistic"
    INTRINSIC = "intrinsic"


@dataclass(frozen=True, slots=True)
class CallSpec:
    strike: float
    expiry: float

    def __post_init__(self):
        if not self.strike > 0:
            raise InvalidInputError(f"strike must be positive, got {self.strike!r}")
        if not self.expiry > 0:
            raise InvalidInputError(f"expiry must be positive, got {self.expiry!r}")


@dataclass(frozen=True, slots=True)
class TimeValueParams:
    """Parameters of the Gaussian-type integral behind the closed form."""

    a: float
    b: float

    @classmethod
    def from_market(cls, spec: CallSpec, f0: float, sigma0: float) -> "TimeValueParams":
        if not sigma0 > 0:
            raise InvalidInputError("sigma0 must be positive")
        return cls(sigma0 / (2.0 * SQRT2), math.log(spec.strike / f0) / (sigma0 * SQRT2))


def erf_like(x):
    """Error function: odd, erf(0) = 0, erf(+-inf) = +-1."""
    return special.erf(x)


def norm_cdf(x):
    # ndtr == (1 + erf(x / sqrt 2)) / 2 but keeps relative accuracy in the lower tail
    return special.ndtr(x)


def _tau(t, spec: CallSpec):
    tau = spec.expiry - np.asarray(t, dtype=float)
    if np.any(tau < 0):
        raise InvalidInputError(f"t exceeds expiry {spec.expiry}")
    return tau


def _black(fwd, strike, sigma0, tau):
    """Undiscounted Black call value and N(d1); payoff where sigma*sqrt(tau) == 0."""
    fwd = np.asarray(fwd, dtype=float)
    vol = sigma0 * np.sqrt(tau)
    live = vol > 0
    safe_vol = np.where(live, vol, 1.0)
    with np.errstate(divide="ignore"):
        d1 = (np.log(fwd / strike) + 0.5 * vol**2) / safe_vol
    d2 = d1 - vol
    price = np.where(live, fwd * norm_cdf(d1) - strike * norm_cdf(d2), np.maximum(fwd - strike, 0.0))
    delta = np.where(live, norm_cdf(d1), (fwd > strike).astype(float))
    return price, delta


def _check_price(f):
    if np.any(np.asarray(f) <= 0):
        raise InvalidInputError("price must be positive")


def bs_price(f, t, spec: CallSpec, sigma0: float):
    """Zero-rate Black-Scholes call value at time ``t``; payoff at expiry."""
    _check_price(f)
    price, _ = _black(f, spec.strike, sigma0, _tau(t, spec))
    return price if np.ndim(price) else float(price)


def bs_delta(f, t, spec: CallSpec, sigma0: float):
    _check_price(f)
    _, delta = _black(f, spec.strike, sigma0, _tau(t, spec))
    return delta if np.ndim(delta) else float(delta)


def bs_gamma(f, t, spec: CallSpec, sigma0: float):
    _check_price(f)
    tau = _tau(t, spec)
    vol = sigma0 * np.sqrt(tau)
    f = np.asarray(f, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        d1 = (np.log(f / spec.strike) + 0.5 * vol**2) / vol
        g = np.exp(-0.5 * d1**2) / (SQRT2PI * f * vol)
    g = np.where(vol > 0, g, 0.0)
    return g if np.ndim(g) else float(g)


def probabilistic_price(f, t, spec: CallSpec, sigma0: float, mu0: float):
    """Expected payoff under GBM with drift ``mu0``.

    This is the Black value at the drifted forward ``f * exp(mu0 * tau)``, a
    GBM-specific closed form for the conditional expected payoff.
    """
    _check_price(f)
    tau = _tau(t, spec)
    if mu0 == 0.0:
        price, _ = _black(f, spec.strike, sigma0, tau)
    else:
        price, _ = _black(np.asarray(f) * np.exp(mu0 * tau), spec.strike, sigma0, tau)
    return price if np.ndim(price) else float(price)


def probabilistic_delta(f, t, spec: CallSpec, sigma0: float, mu0: float):
    _check_price(f)
    tau = _tau(t, spec)
    if mu0 == 0.0:
        _, delta = _black(f, spec.strike, sigma0, tau)
    else:
        growth = np.exp(mu0 * tau)
        _, nd1 = _black(np.asarray(f) * growth, spec.strike, sigma0, tau)
        delta = growth * nd1
    return delta if np.ndim(delta) else float(delta)


def intrinsic_price(f, spec: CallSpec):
    _check_price(f)
    out = np.maximum(np.asarray(f, dtype=float) - spec.strike, 0.0)
    return out if np.ndim(out) else float(out)


def intrinsic_delta(f, spec: CallSpec):
    """Heaviside step of ``f - K``, with the value 0 at ``f == K``."""
    _check_price(f)
    out = (np.asarray(f) > spec.strike).astype(float)
    return out if np.ndim(out) else float(out)


def option_value(model: PricingModel, f, t, spec: CallSpec, sigma0: float, mu0: float = 0.0):
    model = PricingModel(model)
    if model is PricingModel.RISK_NEUTRAL:
        return bs_price(f, t, spec, sigma0)
    if model is PricingModel.PROBABILISTIC:
        return probabilistic_price(f, t, spec, sigma0, mu0)
    return intrinsic_price(f, spec)


def option_delta(model: PricingModel, f, t, spec: CallSpec, sigma0: float, mu0: float = 0.0):
    model = PricingModel(model)
    if model is PricingModel.RISK_NEUTRAL:
        return bs_delta(f, t, spec, sigma0)
    if model is PricingModel.PROBABILISTIC:
        return probabilistic_delta(f, t, spec, sigma0, mu0)
    return intrinsic_delta(f, spec)


def lognormal_density(F, t, f0: float, sigma0: float):
    """Density of F(t) for driftless GBM started at ``f0``."""
    F = np.asarray(F, dtype=float)
    if np.any(F <= 0) or t <= 0 or sigma0 <= 0:
        raise InvalidInputError("lognormal_density needs F > 0, t > 0, sigma0 > 0")
    var = sigma0**2 * t
    out = np.exp(-((np.log(F / f0) + 0.5 * var) ** 2) / (2.0 * var)) / (F * sigma0 * math.sqrt(2.0 * math.pi * t))
    return out if np.ndim(out) else float(out)


def gamma_integrand(t, spec: CallSpec, f0: float, sigma0: float):
    """Expected rate of intrinsic-hedge gains at time ``t`` (strike crossings).

    Equals ``sigma0**2 K**2 / 2 * lognormal_density(K, t)``.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise InvalidInputError("gamma_integrand needs t > 0")
    K = spec.strike
    var = sigma0**2 * t
    out = 0.5 * sigma0 * K / np.sqrt(2.0 * math.pi * t) * np.exp(-((math.log(K / f0) + 0.5 * var) ** 2) / (2.0 * var))
    return out if np.ndim(out) else float(out)


def time_value_closed_form(spec: CallSpec, f0: float, sigma0: float, T: float) -> float:
    """Call time value over horizon ``T`` from the error-function closed form."""
    if not sigma0 >= 0 or not T >= 0:
        raise InvalidInputError("time value needs sigma0 >= 0 and T >= 0")
    if sigma0 == 0 or T == 0:
        return 0.0
    K = spec.strike
    log_kf = math.log(K / f0)
    den = sigma0 * math.sqrt(2.0 * T)
    k1 = (0.5 * sigma0**2 * T - log_kf) / den
    k2 = (0.5 * sigma0**2 * T + log_kf) / den
    # b > 0 (f0 < K) takes +(f0 - K); b < 0 takes (K - f0); both vanish at b = 0
    lead = (f0 - K) if f0 < K else (K - f0)
    return 0.5 * (lead + f0 * float(erf_like(k1)) + K * float(erf_like(k2)))


def j_integral(a: float, b: float, x: float) -> float:
    """Definite integral of exp(-a^2 y^2 - b^2 / y^2) for y in (0, x]."""
    if not a > 0 or not x > 0:
        raise InvalidInputError("j_integral needs a > 0 and x > 0")
    e_plus, e_minus = math.exp(2 * a * b), math.exp(-2 * a * b)
    tail = e_plus * float(erf_like(a * x + b / x)) + e_minus * float(erf_like(a * x - b / x))
    if b > 0:
        lower = e_minus - e_plus
    elif b < 0:
        lower = e_plus - e_minus
    else:
        lower = 0.0
    return math.sqrt(math.pi) / (4 * a) * (lower + tail)


def time_value_from_j(spec: CallSpec, f0: float, sigma0: float, T: float) -> float:
    """Same time value, evaluated through the substituted integral y = sqrt(t)."""
    p = TimeValueParams.from_market(spec, f0, sigma0)
    if not T > 0:
        raise InvalidInputError("T must be positive")
    return sigma0 * spec.strike / SQRT2PI * math.exp(-2 * p.a * p.b) * j_integral(p.a, p.b, math.sqrt(T))
