"""Rolling-intrinsic exercise and hedging of a storage option.

Observation grid equals delivery grid: step ``k`` delivers period ``k``. Each
step runs, in causal order,

1. exercise of the delivering period at the old curve, ``dE = r_k F_k``;
2. curve evolution, observing ``dF`` for the remaining periods;
3. a cold re-solve of the intrinsic dispatch at the new curve and level;
4. rebalancing of the forward hedge to the new plan, paid at the new prices:
   ``dP = -sum_j (F_j + dF_j) dr_j``.

The hedge for period ``k`` is delivered physically, so no cash moves at
exercise; without a hedge the exercise volume is traded at the spot price.
The initial hedge is placed at ``t = 0`` on the initial curve (zero cost to
the portfolio value).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from ..hedging import ConfigError, LedgerUnavailableError, map_blocks
from ..market import SeedSpec, path_generator
from ..stats import TerminalDistribution, mean_and_se, z_score
from .curve import CurveFactorModel, ForwardCurve, correlated_shocks, lognormal_step
from .dispatch import StorageSpec, sequential_value, solve_batch

MAX_STORAGE_CELLS = 2_000_000_000


@dataclass
class StorageLedgers:
    """Per-path, per-step records; row 0 is the state after the initial hedge."""

    t: np.ndarray
    level: np.ndarray
    I: np.ndarray
    E: np.ndarray
    S: np.ndarray
    H: np.ndarray
    P: np.ndarray
    Pi: np.ndarray
    curve: np.ndarray        # (paths, rows, periods); delivered entries hold their delivery price
    hedge: np.ndarray        # (paths, rows, periods) positions after rebalance
    plan: np.ndarray         # (paths, rows, periods) intrinsic plan after re-solve
    exercise: np.ndarray     # (paths, steps) dE
    hedge_flow: np.ndarray   # (paths, steps) rebalance cash after the initial set-up
    spot_cash: np.ndarray    # (paths, steps) cash paid for unhedged exercise volume


@dataclass
class RollingRun:
    storage: StorageSpec
    model: CurveFactorModel
    curve0: ForwardCurve
    master_seed: int
    hedged: bool
    intrinsic0: float
    distribution: TerminalDistribution
    exercise_total: np.ndarray
    hedge_cash: np.ndarray
    hedge_cash_formula: np.ndarray
    ledgers: StorageLedgers | None = None
    estimates: dict = field(default_factory=dict)

    def require_ledgers(self) -> StorageLedgers:
        if self.ledgers is None:
            raise LedgerUnavailableError("run was made without retain_ledgers=True")
        return self.ledgers


def curve_shocks(master_seed: int, path_indices, n: int) -> np.ndarray:
    """iid normals of shape (paths, n - 1, n): one row of shocks per evolution step."""
    out = np.empty((len(path_indices), max(n - 1, 0), n))
    for row, i in enumerate(path_indices):
        out[row] = path_generator(SeedSpec(master_seed, int(i))).standard_normal((max(n - 1, 0), n))
    return out


def _positions_value(pos: np.ndarray, curve: np.ndarray, start: int) -> np.ndarray:
    return -sequential_value(pos[:, start:], curve[:, start:])


def _run_block(args):
    storage, model, curve0, master_seed, indices, hedged, keep = args
    B, N = len(indices), len(curve0)
    dt = curve0.period
    sig = model.sigmas(N)
    eps = curve_shocks(master_seed, indices, N)
    F = np.tile(curve0.values, (B, 1))
    lvl = np.full(B, storage.initial_index, dtype=np.int64)

    sol = solve_batch(F, storage, lvl)
    plan = sol.plan.copy()
    I = sol.value.copy()
    I0 = float(I[0])
    h = np.zeros((B, N))
    E = np.zeros(B)
    P = np.zeros(B)
    if hedged:
        dh = plan - h
        P = P - np.sum(F * dh, axis=1)
        h = plan.copy()
    H = _positions_value(h, F, 0)
    cash_roll = np.zeros(B)
    cash_formula = np.zeros(B)

    if keep:
        rec = {k: np.empty((B, N + 1)) for k in ("level", "I", "E", "H", "P")}
        curves = np.empty((B, N + 1, N))
        hedges = np.empty((B, N + 1, N))
        plans = np.empty((B, N + 1, N))
        ex, flows, spot = (np.zeros((B, N)) for _ in range(3))

        def record(row):
            rec["level"][:, row] = storage.level(lvl)
            rec["I"][:, row], rec["E"][:, row] = I, E
            rec["H"][:, row], rec["P"][:, row] = H, P
            curves[:, row], hedges[:, row], plans[:, row] = F, h, plan

        record(0)

    for k in range(N):
        # (1) exercise the delivering period at the old curve
        r_k = plan[:, k].copy()
        spot_px = F[:, k]
        dE = r_k * spot_px
        E = E + dE
        spot_cash = -(r_k - h[:, k]) * spot_px
        P = P + spot_cash
        h[:, k] = 0.0
        plan[:, k] = 0.0
        lvl = lvl + np.rint(r_k / storage.volume_step).astype(np.int64)
        flow = np.zeros(B)
        if k + 1 < N:
            # (2) evolve the remaining curve
            z = correlated_shocks(eps[:, k, k + 1:], curve0.delivery[k + 1:], model.beta)
            F[:, k + 1:] = lognormal_step(F[:, k + 1:], sig[k + 1:], dt, z)
            # (3) re-solve on the new curve from the new level
            sol = solve_batch(F[:, k + 1:], storage, lvl)
            plan[:, k + 1:] = sol.plan
            I = sol.value
            # (4) rebalance at the new prices
            if hedged:
                dr = plan[:, k + 1:] - h[:, k + 1:]
                flow = -np.sum(F[:, k + 1:] * dr, axis=1)
                h[:, k + 1:] = plan[:, k + 1:]
        else:
            I = np.zeros(B)
        P = P + flow
        cash_roll = cash_roll + flow
        cash_formula = cash_formula + flow
        H = _positions_value(h, F, k + 1)
        if keep:
            ex[:, k], flows[:, k], spot[:, k] = dE, flow, spot_cash
            record(k + 1)

    pi_e = I + H + P
    led = None
    if keep:
        led = (rec, curves, hedges, plans, ex, flows, spot)
    return pi_e, E, cash_roll, cash_formula, I0, led


def run_rolling_intrinsic(storage: StorageSpec, model: CurveFactorModel, curve0: ForwardCurve, n_paths: int,
                          master_seed: int, hedged: bool = True, retain_ledgers: bool = False, workers: int = 1,
                          block_paths: int | None = None) -> RollingRun:
    """Monte Carlo of rolling-intrinsic exercise with time-value estimators.

    ``estimates`` holds three estimates of the time value, each with its SE:

    * ``exercise``: ``-E(T_e) - I(0)`` (expected terminal value less intrinsic),
    * ``hedge_cash``: cumulative cash from rebalancing trades after set-up,
    * ``hedge_cash_formula``: the same sum written as ``-sum (F + dF) dr``.
    """
    if int(n_paths) != n_paths or n_paths < 1:
        raise ConfigError(f"n_paths must be a positive integer, got {n_paths!r}")
    N = len(curve0)
    if N < 1:
        raise ConfigError("curve has no delivery periods")
    if n_paths * N * N * storage.n_levels > MAX_STORAGE_CELLS:
        raise ConfigError("storage run exceeds the work limit; reduce paths, periods or levels")
    if block_paths is None:
        block_paths = max(1, min(2048, -(-int(n_paths) // max(workers, 1))))
    tasks = [(storage, model, curve0, int(master_seed), np.arange(s, min(s + block_paths, n_paths)), hedged,
              retain_ledgers) for s in range(0, int(n_paths), block_paths)]
    results = map_blocks(_run_block, tasks, workers)
    pi_e = np.concatenate([r[0] for r in results])
    E = np.concatenate([r[1] for r in results])
    cash = np.concatenate([r[2] for r in results])
    cash_f = np.concatenate([r[3] for r in results])
    I0 = results[0][4]
    ledgers = None
    if retain_ledgers:
        rec = {k: np.concatenate([r[5][0][k] for r in results]) for k in results[0][5][0]}
        parts = [np.concatenate([r[5][i] for r in results]) for i in range(1, 7)]
        t = curve0.t + curve0.period * np.arange(N + 1)
        S = rec["I"] - rec["E"]
        Pi = rec["I"] + rec["H"] + rec["P"]
        ledgers = StorageLedgers(t, rec["level"], rec["I"], rec["E"], S, rec["H"], rec["P"], Pi, *parts)
    run = RollingRun(storage, model, curve0, int(master_seed), hedged, I0, TerminalDistribution.from_samples(pi_e),
                     E, cash, cash_f, ledgers)
    run.estimates = time_value_estimates(run)
    return run


def time_value_estimates(run: RollingRun) -> dict:
    va, sa = mean_and_se(-run.exercise_total - run.intrinsic0)
    vb, sb = mean_and_se(run.hedge_cash)
    vc, sc = mean_and_se(run.hedge_cash_formula)
    pair_mean, pair_se = mean_and_se(-run.exercise_total - run.intrinsic0 - run.hedge_cash)
    se_comb = float(np.hypot(sa, sb))
    return {
        "intrinsic_value": run.intrinsic0,
        "exercise": {"value": va, "se": sa},
        "hedge_cash": {"value": vb, "se": sb},
        "hedge_cash_formula": {"value": vc, "se": sc},
        "exercise_vs_hedge_cash_z": z_score(va - vb, se_comb),
        "exercise_vs_hedge_cash_paired_z": z_score(pair_mean, pair_se),
        "hedge_cash_formula_identical": bool(np.array_equal(run.hedge_cash, run.hedge_cash_formula)),
        "expected_terminal_value": run.distribution.mean,
        "terminal_std": run.distribution.std,
    }


def recompute_hedge_cash(led: StorageLedgers) -> np.ndarray:
    """-sum_t sum_T (F + dF) dr from stored curves and positions (post set-up)."""
    n_paths, rows, N = led.hedge.shape
    total = np.zeros(n_paths)
    for k in range(N - 1):
        dr = led.hedge[:, k + 1, k + 1:] - led.hedge[:, k, k + 1:]
        total = total + (-np.sum(led.curve[:, k + 1, k + 1:] * dr, axis=1))
    return total


@dataclass(frozen=True)
class ThetaProbe:
    max_abs_dS_exact: Fraction
    max_abs_dS_float: float
    float_bound: float
    steps_checked: int

    @property
    def passed(self) -> bool:
        return self.max_abs_dS_exact == 0 and self.max_abs_dS_float <= self.float_bound


def frozen_step_dS(curve_values, storage: StorageSpec, level: float, exact: bool = True):
    """Change of S = I - E over one delivery step with the curve held fixed."""
    vals = [Fraction(float(v)) for v in curve_values] if exact else [float(v) for v in curve_values]
    arr = np.array(vals, dtype=object if exact else float)[None, :]
    sol = solve_batch(arr, storage, storage.level_index(level))
    I_before = sol.value[0]
    r = sol.plan[0, 0]
    dE = r * arr[0, 0]
    if arr.shape[1] > 1:
        nxt = storage.level_index(level) + int(round(float(r) / storage.volume_step))
        I_after = solve_batch(arr[:, 1:], storage, nxt).value[0]
    else:
        I_after = 0 if exact else 0.0
    return (I_after - I_before) - dE


def theta_gamma_probe(run: RollingRun, paths=None, steps=None) -> ThetaProbe:
    """Replay recorded steps with the curve frozen: the explicit time dependence of S must vanish.

    The exact replay uses rational arithmetic, so ``dS == 0`` is checked without
    rounding; the float replay is bounded by one volume step times the largest price.
    """
    led = run.require_ledgers()
    n_paths, rows, N = led.curve.shape
    paths = range(min(n_paths, 8)) if paths is None else paths
    steps = range(N) if steps is None else steps
    worst_exact, worst_float, bound, count = Fraction(0), 0.0, 0.0, 0
    for p in paths:
        for k in steps:
            curve_k = led.curve[p, k, k:]
            level = float(led.level[p, k])
            d_exact = frozen_step_dS(curve_k, run.storage, level, exact=True)
            d_float = frozen_step_dS(curve_k, run.storage, level, exact=False)
            worst_exact = max(worst_exact, abs(d_exact))
            worst_float = max(worst_float, abs(float(d_float)))
            bound = max(bound, run.storage.volume_step * float(np.max(curve_k)))
            count += 1
    return ThetaProbe(worst_exact, worst_float, bound, count)


def self_financing_residuals(led: StorageLedgers) -> np.ndarray:
    """d(H + P) - sum h dF + dE per step; zero up to rounding for any hedge."""
    n_paths, rows, N = led.hedge.shape
    res = np.zeros((n_paths, N))
    for k in range(N):
        d_hp = (led.H[:, k + 1] + led.P[:, k + 1]) - (led.H[:, k] + led.P[:, k])
        if k + 1 < N:
            dF = led.curve[:, k + 1, k + 1:] - led.curve[:, k, k + 1:]
            gain = np.sum(led.hedge[:, k, k + 1:] * dF, axis=1)
        else:
            gain = np.zeros(n_paths)
        res[:, k] = d_hp - gain + led.exercise[:, k]
    return res
