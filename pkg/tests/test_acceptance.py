"""Acceptance suite: each test is one numbered criterion and prints one PASS/FAIL line."""

import itertools
import time

import numpy as np
import pytest
from scipy import integrate

from hedgeledger import pricing
from hedgeledger.hedging import (ALL_STRATEGIES, HedgeKind, HedgeStrategy, drift_decomposition,
                                 intrinsic_monotonicity_audit, intrinsic_time_value_estimate, run_paths)
from hedgeledger.market import GbmSpec, TimeGrid
from hedgeledger.pricing import CallSpec, PricingModel
from hedgeledger.storage import (CurveFactorModel, InfeasibleStorageError, StorageSpec, brute_force_optimize,
                                 intrinsic_optimize, run_rolling_intrinsic, theta_gamma_probe)
from hedgeledger.storage.curve import seasonal_curve
from hedgeledger.verify import ledger_residuals

pytestmark = pytest.mark.slow

F0_GRID = (50.0, 80.0, 100.0, 120.0, 200.0)
SIGMA_GRID = (0.1, 0.2, 0.4)
T_GRID = (0.25, 1.0, 4.0)
BS_ATM = 7.965567455405796734  # 40-digit mpmath evaluation of the Black value, f0 = K = 100, sigma 0.2, T = 1
EPS = np.finfo(float).eps
RN = HedgeStrategy(HedgeKind.RISK_NEUTRAL_DELTA)


def _grid():
    for f0, sigma, T in itertools.product(F0_GRID, SIGMA_GRID, T_GRID):
        yield f0, sigma, T, CallSpec(100.0, T)


def test_01_closed_form_identity(verdict):
    t0 = time.perf_counter()
    worst = max(abs(pricing.time_value_closed_form(call, f0, s, T)
                    - (pricing.bs_price(f0, 0.0, call, s) - pricing.intrinsic_price(f0, call)))
                for f0, s, T, call in _grid())
    dt = time.perf_counter() - t0
    ok = worst < 1e-8 and dt < 1.0
    assert verdict(1, "closed form = Black-Scholes time value", ok, f"max diff {worst:.2e} < 1e-8, {dt:.2f}s")


def test_02_quadrature_oracle(verdict):
    t0 = time.perf_counter()
    worst = 0.0
    for f0, s, T, call in _grid():
        quad, _ = integrate.quad(lambda t: pricing.gamma_integrand(t, call, f0, s), 0.0, T,
                                 epsabs=1e-13, epsrel=1e-13, limit=500)
        worst = max(worst, abs(pricing.time_value_closed_form(call, f0, s, T) - quad))
    dt = time.perf_counter() - t0
    ok = worst < 1e-6 and dt < 5.0
    assert verdict(2, "closed form = integrated gamma rate", ok, f"max diff {worst:.2e} < 1e-6, {dt:.2f}s")


def test_03_ledger_identities(verdict):
    t0 = time.perf_counter()
    gbm, call = GbmSpec(100.0, 0.05, 0.2), CallSpec(100.0, 1.0)
    ratios = {}
    for strategy in ALL_STRATEGIES:
        run = run_paths(gbm, TimeGrid(0.0, 1.0, 512), call, PricingModel.RISK_NEUTRAL, strategy, 1000, 3,
                        retain_ledgers=True)
        r = ledger_residuals(run.ledgers)
        ratios[strategy.kind.value] = max(r["cash"], r["self_financing"], r["portfolio"]) / (EPS * r["scale"])
    dt = time.perf_counter() - t0
    worst = max(ratios.values())
    ok = worst <= 64 and dt < 30.0
    assert verdict(3, "ledger identities, 5 strategies x 1e3 paths x 512 steps", ok,
                   f"worst residual {worst:.1f} ulps of scale (bound 64), {dt:.1f}s")


def test_04_variance_collapse(verdict):
    t0 = time.perf_counter()
    gbm, call = GbmSpec(100.0, 0.0, 0.2), CallSpec(100.0, 1.0)
    steps = (64, 256, 1024, 4096)
    stds, last = [], None
    for n in steps:
        last = run_paths(gbm, TimeGrid(0.0, 1.0, n), call, PricingModel.RISK_NEUTRAL, RN, 20_000, 4)
        stds.append(last.distribution.std)
    slope = np.polyfit(np.log(steps), np.log(stds), 1)[0]
    factor = stds[0] / stds[-1]
    z = abs(last.distribution.mean - BS_ATM) / last.distribution.se
    dt = time.perf_counter() - t0
    ok = factor >= 4 and -0.65 <= slope <= -0.35 and z < 4 and dt < 120
    assert verdict(4, "variance collapse under delta hedging", ok,
                   f"std 64->4096 factor {factor:.2f} (>=4), slope {slope:.3f}, mean z {z:.2f}, {dt:.0f}s")


def test_05_unhedged_expectation(verdict):
    t0 = time.perf_counter()
    call = CallSpec(100.0, 1.0)
    none = HedgeStrategy(HedgeKind.NONE)
    zs = {}
    for mu, target in ((0.0, pricing.bs_price(100.0, 0.0, call, 0.2)),
                       (0.1, pricing.probabilistic_price(100.0, 0.0, call, 0.2, 0.1))):
        run = run_paths(GbmSpec(100.0, mu, 0.2), TimeGrid(0.0, 1.0, 8), call, PricingModel.RISK_NEUTRAL, none,
                        100_000, 5)
        zs[mu] = abs(run.distribution.mean - target) / run.distribution.se
    dt = time.perf_counter() - t0
    ok = max(zs.values()) < 4 and dt < 120
    assert verdict(5, "unhedged mean = f (mu=0) and g (mu=0.1)", ok,
                   f"z(mu=0) {zs[0.0]:.2f}, z(mu=0.1) {zs[0.1]:.2f}, {dt:.0f}s")


def test_06_intrinsic_monotonicity(verdict):
    t0 = time.perf_counter()
    call = CallSpec(100.0, 1.0)
    violations = 0
    for mu in (0.0, 0.1):
        run = run_paths(GbmSpec(100.0, mu, 0.2), TimeGrid(0.0, 1.0, 512), call, PricingModel.INTRINSIC,
                        HedgeStrategy(HedgeKind.INTRINSIC_DELTA), 10_000, 6, retain_ledgers=True)
        violations += len(intrinsic_monotonicity_audit(run, max_report=10**6).violations)
    dt = time.perf_counter() - t0
    ok = violations == 0 and dt < 60
    assert verdict(6, "intrinsic hedge never loses", ok, f"{violations} violations in 2 x 1e4 x 512, {dt:.0f}s")


def test_07_intrinsic_time_value(verdict):
    t0 = time.perf_counter()
    zs = {}
    for f0 in (100.0, 50.0, 150.0):
        call = CallSpec(100.0, 1.0)
        run = run_paths(GbmSpec(f0, 0.0, 0.2), TimeGrid(0.0, 1.0, 2048), call, PricingModel.INTRINSIC,
                        HedgeStrategy(HedgeKind.INTRINSIC_DELTA), 100_000, 7)
        value, se = intrinsic_time_value_estimate(run)
        zs[f0] = abs(value - pricing.time_value_closed_form(call, f0, 0.2, 1.0)) / se
    dt = time.perf_counter() - t0
    ok = max(zs.values()) < 4 and dt < 600
    assert verdict(7, "time value from intrinsic hedging", ok,
                   ", ".join(f"z(f0={k:g}) {v:.2f}" for k, v in zs.items()) + f", {dt:.0f}s")


def test_08_drift_decomposition(verdict):
    t0 = time.perf_counter()
    call, grid = CallSpec(100.0, 1.0), TimeGrid(0.0, 1.0, 1024)
    gbm = GbmSpec(100.0, 0.1, 0.2)
    zs = {}
    for kind in (HedgeKind.NONE, HedgeKind.RISK_NEUTRAL_DELTA, HedgeKind.DRIFT_ADJUSTED_DELTA):
        run = run_paths(gbm, grid, call, PricingModel.RISK_NEUTRAL, HedgeStrategy(kind), 20_000, 8)
        for leg in (PricingModel.RISK_NEUTRAL, PricingModel.PROBABILISTIC):
            zs[f"{kind.value}/{leg.value}"] = drift_decomposition(run, leg).z
    # risk-neutral hedge across drifts: independent seeds, two-sample z
    means = {}
    for i, mu in enumerate((-0.1, 0.0, 0.1)):
        d = run_paths(GbmSpec(100.0, mu, 0.2), grid, call, PricingModel.RISK_NEUTRAL, RN, 20_000, 80 + i).distribution
        means[mu] = (d.mean, d.se)
    pair_z = max(abs(a[0] - b[0]) / np.hypot(a[1], b[1]) for a, b in itertools.combinations(means.values(), 2))
    dt = time.perf_counter() - t0
    ok = max(zs.values()) < 4 and pair_z < 4
    assert verdict(8, "drift decomposition of the mean", ok,
                   f"max z {max(zs.values()):.2f} over {len(zs)} strategy/leg pairs, "
                   f"RN drift-independence z {pair_z:.2f}, {dt:.0f}s")


def test_09_storage_optimizer_exact(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(9)
    diffs, done = [], 0
    while done < 20:
        levels = int(rng.integers(2, 6))
        spec = StorageSpec(0, levels - 1, int(rng.integers(1, levels)), int(rng.integers(1, levels)),
                           int(rng.integers(0, levels)), int(rng.integers(0, levels)))
        curve = rng.uniform(5.0, 50.0, int(rng.integers(1, 6)))
        try:
            _, bf = brute_force_optimize(curve, spec)
        except InfeasibleStorageError:
            continue
        _, dp = intrinsic_optimize(curve, spec)
        diffs.append(float(abs(dp - bf)))
        done += 1
    dt = time.perf_counter() - t0
    ok = max(diffs) == 0.0 and dt < 1.0
    assert verdict(9, "DP = brute force on 20 random instances", ok, f"max diff {max(diffs)!r}, {dt:.2f}s")


def test_10_storage_estimators(verdict):
    t0 = time.perf_counter()
    storage = StorageSpec(0, 6, 2, 3, 0, 0, 1)
    curve, model = seasonal_curve(12, phase=3), CurveFactorModel(0.4, 2.0)
    hedged = run_rolling_intrinsic(storage, model, curve, 10_000, 10)
    naked = run_rolling_intrinsic(storage, model, curve, 10_000, 10, hedged=False)
    e = hedged.estimates
    dt = time.perf_counter() - t0
    ok = (e["exercise_vs_hedge_cash_z"] < 4 and e["hedge_cash_formula_identical"]
          and hedged.distribution.std < naked.distribution.std and dt < 300)
    assert verdict(10, "storage time-value estimators", ok,
                   f"V_a {e['exercise']['value']:.4f}, V_b {e['hedge_cash']['value']:.4f}, "
                   f"z {e['exercise_vs_hedge_cash_z']:.2f}, V_b==V_c {e['hedge_cash_formula_identical']}, "
                   f"std {hedged.distribution.std:.3f} < {naked.distribution.std:.3f}, {dt:.0f}s")


def test_11_frozen_curve_theta(verdict):
    storage = StorageSpec(0, 6, 2, 3, 0, 0, 1)
    run = run_rolling_intrinsic(storage, CurveFactorModel(0.4, 2.0), seasonal_curve(12, phase=3), 32, 11,
                                retain_ledgers=True)
    probe = theta_gamma_probe(run, paths=range(32))
    ok = probe.max_abs_dS_exact == 0 and probe.passed
    assert verdict(11, "frozen-curve replay leaves S unchanged", ok,
                   f"max |dS| exact {probe.max_abs_dS_exact}, float {probe.max_abs_dS_float:.1e}, "
                   f"{probe.steps_checked} replays")
