"""Named invariant checks used by the ``verify`` command."""

from __future__ import annotations

import numpy as np
from scipy import integrate

from . import pricing
from .hedging import (HedgeKind, HedgeLedgers, HedgeStrategy, drift_decomposition, intrinsic_monotonicity_audit,
                      run_paths)
from .pricing import PricingModel
from .reports import Check
from .storage import CurveFactorModel, brute_force_optimize, intrinsic_optimize, run_rolling_intrinsic, theta_gamma_probe
from .storage.dispatch import StorageSpec
from .storage.rolling import self_financing_residuals

EPS = float(np.finfo(float).eps)
Z_BOUND = 4.0


def ledger_residuals(led: HedgeLedgers) -> dict:
    """Largest violation of each per-step accounting identity, plus the scale it is measured against."""
    dF = np.diff(led.F, axis=1)
    dh = np.diff(led.h, axis=1)
    dP = np.diff(led.P, axis=1)
    d_hp = np.diff(led.H + led.P, axis=1)
    scale = max(1.0, float(np.max(np.abs(led.F)) * max(1.0, np.max(np.abs(led.h)))),
                float(np.max(np.abs(led.P))), float(np.max(np.abs(led.C))))
    return {
        "cash": float(np.max(np.abs(dP + led.F[:, 1:] * dh), initial=0.0)),
        "self_financing": float(np.max(np.abs(d_hp - led.h[:, :-1] * dF), initial=0.0)),
        "portfolio": float(np.max(np.abs(led.Pi - (led.C + led.H + led.P)))),
        "scale": scale,
    }


def ledger_checks(led: HedgeLedgers, label: str = "") -> list[Check]:
    r = ledger_residuals(led)
    bound = 64 * EPS * r["scale"]
    suffix = f"[{label}]" if label else ""
    return [Check(f"ledger.cash_booking{suffix}", r["cash"], bound, r["cash"] <= bound, "dP = -(F+dF) dh"),
            Check(f"ledger.self_financing{suffix}", r["self_financing"], bound, r["self_financing"] <= bound,
                  "d(H+P) = h dF"),
            Check(f"ledger.portfolio{suffix}", r["portfolio"], bound, r["portfolio"] <= bound, "Pi = C+H+P")]


def closed_form_checks(call, f0: float, sigma0: float) -> list[Check]:
    T = call.expiry
    tv = pricing.time_value_closed_form(call, f0, sigma0, T)
    bs_tv = float(pricing.bs_price(f0, 0.0, call, sigma0) - pricing.intrinsic_price(f0, call))
    quad, _ = integrate.quad(lambda t: pricing.gamma_integrand(t, call, f0, sigma0), 0.0, T,
                             epsabs=1e-13, epsrel=1e-13, limit=500)
    d1, d2 = abs(tv - bs_tv), abs(tv - quad)
    return [Check("time_value.closed_form_vs_bs", d1, 1e-8, d1 < 1e-8),
            Check("time_value.closed_form_vs_quadrature", d2, 1e-6, d2 < 1e-6)]


def vanilla_checks(cfg, workers: int = 1) -> list[Check]:
    gbm, call, grid = cfg.gbm(), cfg.call(), cfg.grid()
    n, seed = cfg.run["n_paths"], cfg.run["master_seed"]
    strategy, model = cfg.hedge_strategy(), cfg.pricing_model()
    checks = closed_form_checks(call, gbm.f0, gbm.sigma0)

    run = run_paths(gbm, grid, call, model, strategy, n, seed, retain_ledgers=True, workers=workers)
    checks += ledger_checks(run.require_ledgers(), strategy.label)

    # relabelled option leg: same hedge sequence, bit-identical terminal values
    same = True
    for other in PricingModel:
        if other is not model:
            alt = run_paths(gbm, grid, call, other, strategy, n, seed, workers=workers)
            same &= bool(np.array_equal(alt.distribution.samples, run.distribution.samples))
    checks.append(Check("terminal_value.model_independent", 0.0 if same else 1.0, 0.0, same,
                        "Pi_e identical under every pricing model label"))

    for m in (PricingModel.RISK_NEUTRAL, PricingModel.PROBABILISTIC):
        d = drift_decomposition(run, m)
        checks.append(Check(f"drift_decomposition.{m.value}", d.z, Z_BOUND, d.z < Z_BOUND,
                            f"measured {d.measured_mean:.6g} vs predicted {d.predicted_mean:.6g} (z)"))

    intr = run_paths(gbm, grid, call, PricingModel.INTRINSIC, HedgeStrategy(HedgeKind.INTRINSIC_DELTA), n, seed,
                     retain_ledgers=True, workers=workers)
    audit = intrinsic_monotonicity_audit(intr)
    checks.append(Check("intrinsic.monotonicity_violations", float(len(audit.violations)), 0.0, audit.passed,
                        f"{audit.n_paths} paths x {audit.n_steps} steps"))
    return checks


def optimizer_checks(storage: StorageSpec, seed: int, n_instances: int = 20) -> list[Check]:
    """DP against exhaustive enumeration on small random instances sharing the lattice pitch."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_instances):
        levels = int(rng.integers(2, 6))
        spec = StorageSpec(0, levels - 1, int(rng.integers(1, levels)), int(rng.integers(1, levels)),
                           int(rng.integers(0, levels)), int(rng.integers(0, levels)), 1)
        periods = int(rng.integers(1, 6))
        curve = rng.uniform(1, 50, periods).round(2)
        try:
            _, dp = intrinsic_optimize(curve, spec)
        except ValueError:
            continue
        _, bf = brute_force_optimize(curve, spec)
        worst = max(worst, abs(dp - bf))
    return [Check("storage.dp_vs_brute_force", worst, 0.0, worst == 0.0, f"{n_instances} random instances")]


def storage_checks(cfg, workers: int = 1) -> list[Check]:
    storage, model, curve = cfg.storage_spec(), cfg.factor_model(), cfg.curve()
    n, seed = cfg.run["n_paths"], cfg.run["master_seed"]
    checks = optimizer_checks(storage, seed)

    run = run_rolling_intrinsic(storage, model, curve, n, seed, hedged=True, retain_ledgers=True, workers=workers)
    led = run.require_ledgers()
    est = run.estimates
    z = est["exercise_vs_hedge_cash_z"]
    checks.append(Check("storage.exercise_vs_hedge_cash", z, Z_BOUND, z < Z_BOUND, "|V_a - V_b| in combined SE"))
    same = est["hedge_cash_formula_identical"]
    checks.append(Check("storage.hedge_cash_accumulators_identical", 0.0 if same else 1.0, 0.0, same))
    mirror = float(np.max(np.abs(led.H + led.I)))
    checks.append(Check("storage.hedge_mirrors_intrinsic", mirror, 0.0, mirror == 0.0, "H = -I after rebalance"))
    sf = float(np.max(np.abs(self_financing_residuals(led))))
    sf_bound = 64 * EPS * max(1.0, float(np.max(np.abs(led.P))), float(np.max(np.abs(led.H))))
    checks.append(Check("storage.self_financing", sf, sf_bound, sf <= sf_bound))

    # per-maturity martingale test on the observed increments
    worst_z = 0.0
    N = len(curve)
    for k in range(N - 1):
        dF = led.curve[:, k + 1, k + 1:] - led.curve[:, k, k + 1:]
        se = dF.std(axis=0, ddof=1) / np.sqrt(dF.shape[0])
        m = dF.mean(axis=0)
        with np.errstate(divide="ignore", invalid="ignore"):
            zk = np.where(se > 0, np.abs(m) / se, np.where(m == 0, 0.0, np.inf))
        worst_z = max(worst_z, float(np.max(zk, initial=0.0)))
    checks.append(Check("storage.curve_martingale", worst_z, Z_BOUND, worst_z < Z_BOUND, "max |mean dF| / SE over maturities"))

    probe = theta_gamma_probe(run)
    checks.append(Check("storage.frozen_curve_theta", float(probe.max_abs_dS_exact), 0.0, probe.passed,
                        f"{probe.steps_checked} exact replays"))

    unhedged = run_rolling_intrinsic(storage, model, curve, n, seed, hedged=False, workers=workers)
    ratio = run.distribution.std / unhedged.distribution.std if unhedged.distribution.std > 0 else 0.0
    # with no curve motion there is no risk to remove; only rounding noise is left
    degenerate = unhedged.distribution.std <= 1e-12 * max(1.0, abs(unhedged.distribution.mean))
    ok = degenerate or run.distribution.std < unhedged.distribution.std
    checks.append(Check("storage.variance_reduction", ratio, 1.0, ok,
                        "degenerate: no terminal risk" if degenerate else "std hedged / std unhedged"))

    frozen = run_rolling_intrinsic(storage, CurveFactorModel(0.0, model.beta), curve, min(n, 64), seed)
    e = frozen.estimates
    worst = max(abs(e["exercise"]["value"]), abs(e["hedge_cash"]["value"]), abs(e["hedge_cash_formula"]["value"]))
    checks.append(Check("storage.zero_vol_estimators", worst, 0.0, worst == 0.0, "all time-value estimators at sigma=0"))
    return checks
