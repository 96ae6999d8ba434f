"""Self-financing ledger for a call plus linear hedge plus cash account.

Every step follows the causal order of the retarded action: the price move is
observed first, the option leg is repriced, the new hedge is chosen at the
*new* price, and the hedge adjustment is paid for at that new price::

    dP = -(F + dF) * dh        =>    d(H + P) = h * dF

Bookkeeping is exact discrete accounting; no Ito truncation is applied.
All state fields may be floats or numpy arrays (one entry per path), which is
how :func:`run_paths` vectorises over a block of paths.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import pricing
from .market import GbmSpec, InvalidInputError, TimeGrid, simulate_gbm_paths
from .pricing import CallSpec, PricingModel
from .stats import TerminalDistribution, mean_and_se, z_score

MAX_PATH_STEPS = 2_000_000_000
MAX_LEDGER_CELLS = 50_000_000
DEFAULT_BLOCK_CELLS = 4_000_000


class ConfigError(ValueError):
    """Run configuration is invalid or exceeds resource limits."""


class LedgerInvariantError(RuntimeError):
    """A portfolio state violated Pi = C + H + P on entry to a step."""


class LedgerUnavailableError(RuntimeError):
    """An estimator needs per-path ledgers that were not retained."""


class HedgeKind(str, enum.Enum):
    NONE = "none"
    RISK_NEUTRAL_DELTA = "risk_neutral_delta"
    DRIFT_ADJUSTED_DELTA = "drift_adjusted_delta"
    INTRINSIC_DELTA = "intrinsic_delta"
    BID_OFFER = "bid_offer"


DELTA_KINDS = (HedgeKind.RISK_NEUTRAL_DELTA, HedgeKind.DRIFT_ADJUSTED_DELTA, HedgeKind.INTRINSIC_DELTA)

_DELTA_MODEL = {
    HedgeKind.RISK_NEUTRAL_DELTA: PricingModel.RISK_NEUTRAL,
    HedgeKind.DRIFT_ADJUSTED_DELTA: PricingModel.PROBABILISTIC,
    HedgeKind.INTRINSIC_DELTA: PricingModel.INTRINSIC,
}


@dataclass(frozen=True)
class HedgeStrategy:
    """Hedging policy.

    ``BID_OFFER`` relaxes the position towards the ``inner`` delta hedge at
    rate ``k`` (1/years): ``dh = -k (h + delta) dt``.
    """

    kind: HedgeKind = HedgeKind.NONE
    k: float = 0.0
    inner: HedgeKind = HedgeKind.RISK_NEUTRAL_DELTA

    def __post_init__(self):
        object.__setattr__(self, "kind", HedgeKind(self.kind))
        object.__setattr__(self, "inner", HedgeKind(self.inner))
        if self.inner not in DELTA_KINDS:
            raise ConfigError(f"bid-offer inner strategy must be a delta hedge, got {self.inner.value}")
        if not (self.k >= 0 and math.isfinite(self.k)):
            raise ConfigError(f"bid-offer rate k must be finite and >= 0, got {self.k!r}")

    def validate_step(self, dt: float):
        if self.kind is HedgeKind.BID_OFFER and not self.k * dt < 1.0:
            raise ConfigError(f"bid-offer needs k*dt < 1 for a stable explicit update (k*dt = {self.k * dt:g})")

    @property
    def label(self) -> str:
        if self.kind is HedgeKind.BID_OFFER:
            return f"bid_offer(k={self.k:g},{self.inner.value})"
        return self.kind.value


ALL_STRATEGIES = (
    HedgeStrategy(HedgeKind.NONE),
    HedgeStrategy(HedgeKind.RISK_NEUTRAL_DELTA),
    HedgeStrategy(HedgeKind.DRIFT_ADJUSTED_DELTA),
    HedgeStrategy(HedgeKind.INTRINSIC_DELTA),
    HedgeStrategy(HedgeKind.BID_OFFER, k=50.0),
)


@dataclass(frozen=True)
class PortfolioState:
    t: float
    F: object
    C: object
    h: object
    H: object
    P: object
    Pi: object


@dataclass(frozen=True)
class LedgerRow:
    step: int
    F: object
    dF: object
    dh: object
    dP: object
    dH: object
    dC: object
    dPi: object
    state: PortfolioState


def _delta_for(kind: HedgeKind, t, F, call: CallSpec, gbm: GbmSpec):
    return pricing.option_delta(_DELTA_MODEL[kind], F, t, call, gbm.sigma0, gbm.mu0)


def target_hedge(strategy: HedgeStrategy, t, F, h_current, call: CallSpec, gbm: GbmSpec, dt: float = 0.0):
    """Hedge position chosen at time ``t`` and price ``F``.

    Deltas are evaluated with time-to-expiry floored at ``dt / 2`` so the last
    rebalance before expiry stays finite.
    """
    kind = strategy.kind
    if kind is HedgeKind.NONE:
        return h_current
    t_eff = min(t, call.expiry - 0.5 * dt) if dt > 0 else t
    if kind is HedgeKind.BID_OFFER:
        delta = _delta_for(strategy.inner, t_eff, F, call, gbm)
        return h_current - strategy.k * (h_current + delta) * dt
    return -_delta_for(kind, t_eff, F, call, gbm)


def option_leg(model: PricingModel, t, F, call: CallSpec, gbm: GbmSpec):
    """Option value under ``model``; the payoff exactly at (or after) expiry."""
    if t >= call.expiry:
        return pricing.intrinsic_price(F, call)
    return pricing.option_value(model, F, t, call, gbm.sigma0, gbm.mu0)


def initial_state(F0, model: PricingModel, call: CallSpec, gbm: GbmSpec, t0: float = 0.0) -> PortfolioState:
    """Portfolio before any hedge: h = H = P = 0 and Pi = C."""
    C = option_leg(model, t0, F0, call, gbm)
    zero = np.zeros_like(C) if np.ndim(C) else 0.0
    return PortfolioState(t0, F0, C, zero, zero, zero, C)


def _consistent(state: PortfolioState) -> bool:
    total = state.C + state.H + state.P
    scale = np.abs(state.C) + np.abs(state.H) + np.abs(state.P) + 1.0
    return bool(np.all(np.abs(state.Pi - total) <= 1e-9 * scale))


def step_ledger(state: PortfolioState, dF, strategy: HedgeStrategy, model: PricingModel,
                call: CallSpec, gbm: GbmSpec, t_new: float, step: int = 0):
    """Advance one step: observe dF, reprice, rehedge at the new price, book cash.

    A zero-length step (``t_new == state.t`` with ``dF == 0``) is the initial hedge
    set-up, which is value-neutral.
    """
    if not _consistent(state):
        raise LedgerInvariantError(f"Pi != C + H + P on entry to step {step}")
    dt = t_new - state.t
    F_new = state.F + dF
    C_new = option_leg(model, t_new, F_new, call, gbm)
    h_new = target_hedge(strategy, t_new, F_new, state.h, call, gbm, dt)
    dh = h_new - state.h
    dP = -F_new * dh
    H_new = h_new * F_new
    P_new = state.P + dP
    Pi_new = C_new + H_new + P_new
    new = PortfolioState(t_new, F_new, C_new, h_new, H_new, P_new, Pi_new)
    row = LedgerRow(step, state.F, dF, dh, dP, H_new - state.H, C_new - state.C, Pi_new - state.Pi, new)
    return new, row


@dataclass
class HedgeLedgers:
    """Per-path ledgers; row 0 is the state right after the t=0 hedge set-up."""

    t: np.ndarray
    F: np.ndarray
    h: np.ndarray
    C: np.ndarray
    H: np.ndarray
    P: np.ndarray
    Pi: np.ndarray

    @property
    def dF(self):
        return np.diff(self.F, axis=1)

    @property
    def dh(self):
        return np.diff(self.h, axis=1)

    @property
    def dP(self):
        return np.diff(self.P, axis=1)


@dataclass
class HedgeRun:
    gbm: GbmSpec
    grid: TimeGrid
    call: CallSpec
    model: PricingModel
    strategy: HedgeStrategy
    master_seed: int
    distribution: TerminalDistribution
    hedge_gain: np.ndarray
    payoff: np.ndarray
    ledgers: HedgeLedgers | None = None
    extras: dict = field(default_factory=dict)

    def require_ledgers(self) -> HedgeLedgers:
        if self.ledgers is None:
            raise LedgerUnavailableError("run was made without retain_ledgers=True")
        return self.ledgers


def _run_block(args):
    gbm, grid, call, model, strategy, master_seed, indices, keep = args
    paths = simulate_gbm_paths(gbm, grid, master_seed, indices)
    times = grid.times
    state = initial_state(paths[:, 0].copy(), model, call, gbm, times[0])
    state, _ = step_ledger(state, np.zeros(len(indices)), strategy, model, call, gbm, times[0], step=0)
    if keep:
        rows = {name: np.empty((len(indices), grid.n_steps + 1)) for name in ("F", "h", "C", "H", "P", "Pi")}
        for name in rows:
            rows[name][:, 0] = getattr(state, name)
    gain = np.zeros(len(indices))
    drift_rn = np.zeros(len(indices))
    drift_p = np.zeros(len(indices))
    track = gbm.mu0 != 0.0
    for i in range(grid.n_steps):
        dF = paths[:, i + 1] - state.F
        gain += state.h * dF
        if track:
            # drift integrals of the risk-neutral and probabilistic decompositions
            m = gbm.mu0 * state.F * (times[i + 1] - times[i])
            drift_rn += (pricing.bs_delta(state.F, times[i], call, gbm.sigma0) + state.h) * m
            drift_p += state.h * m
        state, _ = step_ledger(state, dF, strategy, model, call, gbm, times[i + 1], step=i + 1)
        if keep:
            for name in rows:
                rows[name][:, i + 1] = getattr(state, name)
    payoff = np.asarray(state.C, dtype=float)
    drift = {PricingModel.RISK_NEUTRAL: drift_rn, PricingModel.PROBABILISTIC: drift_p}
    return np.asarray(state.Pi, dtype=float), gain, payoff, (rows if keep else None), drift


def _blocks(n_paths: int, n_steps: int, block_paths: int | None, workers: int = 1):
    size = block_paths or max(1, min(-(-n_paths // max(workers, 1)), DEFAULT_BLOCK_CELLS // max(n_steps, 1)))
    return [np.arange(s, min(s + size, n_paths)) for s in range(0, n_paths, size)]


def map_blocks(fn, tasks, workers: int):
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


def run_paths(gbm: GbmSpec, grid: TimeGrid, call: CallSpec, model: PricingModel, strategy: HedgeStrategy,
              n_paths: int, master_seed: int, retain_ledgers: bool = False, workers: int = 1,
              block_paths: int | None = None) -> HedgeRun:
    """Monte Carlo over independent paths; results do not depend on ``workers``."""
    model = PricingModel(model)
    if int(n_paths) != n_paths or n_paths < 1:
        raise ConfigError(f"n_paths must be a positive integer, got {n_paths!r}")
    if not math.isclose(grid.t_end, call.expiry, rel_tol=0, abs_tol=1e-12):
        raise ConfigError(f"grid must end at the option expiry ({grid.t_end} != {call.expiry})")
    if n_paths * grid.n_steps > MAX_PATH_STEPS:
        raise ConfigError(f"{n_paths} paths x {grid.n_steps} steps exceeds the limit of {MAX_PATH_STEPS} path-steps")
    if retain_ledgers and n_paths * (grid.n_steps + 1) * 6 > MAX_LEDGER_CELLS:
        raise ConfigError("retained ledgers would exceed the memory limit; reduce paths or steps")
    strategy.validate_step(grid.dt)
    grid = TimeGrid(grid.t_start, call.expiry, grid.n_steps)

    tasks = [(gbm, grid, call, model, strategy, master_seed, idx, retain_ledgers)
             for idx in _blocks(int(n_paths), grid.n_steps, block_paths, workers)]
    results = map_blocks(_run_block, tasks, workers)
    pi_e = np.concatenate([r[0] for r in results])
    gain = np.concatenate([r[1] for r in results])
    payoff = np.concatenate([r[2] for r in results])
    ledgers = None
    if retain_ledgers:
        ledgers = HedgeLedgers(grid.times, *(np.concatenate([r[3][k] for r in results]) for k in ("F", "h", "C", "H", "P", "Pi")))
    drift = {m: np.concatenate([r[4][m] for r in results]) for m in results[0][4]}
    return HedgeRun(gbm, grid, call, model, strategy, int(master_seed), TerminalDistribution.from_samples(pi_e),
                    gain, payoff, ledgers, {"drift_integral": drift})


def initial_value(run: HedgeRun, model: PricingModel | None = None) -> float:
    model = PricingModel(model or run.model)
    return float(option_leg(model, run.grid.t_start, run.gbm.f0, run.call, run.gbm))


@dataclass(frozen=True)
class DriftDecomposition:
    model: PricingModel
    initial_value: float
    integral_mean: float
    integral_se: float
    predicted_mean: float
    measured_mean: float
    measured_se: float
    residual_se: float
    z: float

    def as_dict(self) -> dict:
        d = dict(self.__dict__)
        d["model"] = self.model.value
        return d


def drift_decomposition(run: HedgeRun, model: PricingModel | None = None) -> DriftDecomposition:
    """Compare the measured mean terminal value with its drift-integral prediction.

    Risk-neutral leg:   <Pi_e> = f(0) + sum <(f' + h) mu F dt>
    Probabilistic leg:  <Pi_e> = g(0) + sum <h mu F dt>
    The integrals are accumulated during the run, and the residual is
    estimated path by path, so its standard error is paired.
    """
    model = PricingModel(model or run.model)
    if model is PricingModel.INTRINSIC:
        raise ValueError("drift decomposition is defined for the risk-neutral and probabilistic legs")
    integral = run.extras["drift_integral"][model]
    c0 = initial_value(run, model)
    pi_e = run.distribution.samples
    resid = pi_e - (c0 + integral)
    i_mean, i_se = mean_and_se(integral)
    r_mean, r_se = mean_and_se(resid)
    return DriftDecomposition(model, c0, i_mean, i_se, c0 + i_mean, run.distribution.mean, run.distribution.se,
                              r_se, z_score(r_mean, r_se))


@dataclass(frozen=True)
class VarianceCheck:
    sample_variance: float
    drift_term: float
    diffusion_term: float
    cross_term: float
    two_term_prediction: float
    z_two_term: float
    z_with_cross: float
    two_term_prediction_minus_convention: float
    z_two_term_minus_convention: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def _variance_parts(run: HedgeRun, sign: float):
    led = run.require_ledgers()
    t = led.t[:-1]
    F = led.F[:, :-1]
    h = led.h[:, :-1]
    dt = np.diff(led.t)[None, :]
    x = pricing.bs_delta(F, t[None, :], run.call, run.gbm.sigma0) + sign * h
    A = np.sum(x * run.gbm.mu0 * F * dt, axis=1)
    Q = np.sum(x**2 * run.gbm.sigma0**2 * F**2 * dt, axis=1)
    return A, Q


def variance_formula_check(run: HedgeRun) -> VarianceCheck:
    """Terminal variance against drift and diffusion integrals.

    With x = f' + h the terminal value is f(0) + A + M, A the drift integral of
    x mu dt and M the martingale part. The two-term prediction is Var(A) +
    <int x^2 sigma^2 dt>; the omitted 2 Cov(A, M) term is reported separately.
    The x = f' - h convention is evaluated too for comparison.
    """
    if run.model is not PricingModel.RISK_NEUTRAL:
        raise ValueError("variance check is defined for the risk-neutral leg")
    pi = run.distribution.samples
    n = pi.size
    c0 = initial_value(run)
    out = {}
    for sign, tag in ((1.0, ""), (-1.0, "_minus")):
        A, Q = _variance_parts(run, sign)
        M = pi - c0 - A
        dpi, dA, dM = pi - pi.mean(), A - A.mean(), M - M.mean()
        per_path = dpi**2 - dA**2 - Q
        two = float(np.var(A, ddof=1) + Q.mean())
        m2, se2 = mean_and_se(per_path)
        out[tag] = (A, Q, M, two, z_score(m2, se2))
        if tag == "":
            cross = 2.0 * float(np.sum(dA * dM) / (n - 1))
            m3, se3 = mean_and_se(per_path - 2.0 * dA * dM)
            z3 = z_score(m3, se3)
            drift_term, diff_term = float(np.var(A, ddof=1)), float(Q.mean())
    return VarianceCheck(float(np.var(pi, ddof=1)), drift_term, diff_term, cross, out[""][3], out[""][4], z3,
                         out["_minus"][3], out["_minus"][4])


@dataclass(frozen=True)
class MonotonicityAudit:
    n_paths: int
    n_steps: int
    violations: list
    min_increment: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return not self.violations


def intrinsic_increments(F: np.ndarray, call: CallSpec) -> np.ndarray:
    """Per-step change of the intrinsically hedged portfolio along price rows."""
    F0, F1 = F[..., :-1], F[..., 1:]
    return (pricing.intrinsic_price(F1, call) - pricing.intrinsic_price(F0, call)
            - pricing.intrinsic_delta(F0, call) * (F1 - F0))


def _require_intrinsic(run: HedgeRun):
    if run.strategy.kind is not HedgeKind.INTRINSIC_DELTA or run.model is not PricingModel.INTRINSIC:
        raise ValueError("needs strategy=intrinsic_delta with the intrinsic pricing model")


def intrinsic_monotonicity_audit(run: HedgeRun, max_report: int = 20) -> MonotonicityAudit:
    """Check that the intrinsically hedged portfolio never decreases.

    Increments are recomputed from the ledger and compared against a rounding
    floor of a few ulps of the prices involved; each breach is reported as
    ``(path, step, increment)``.
    """
    _require_intrinsic(run)
    led = run.require_ledgers()
    inc = np.diff(led.Pi, axis=1)
    scale = np.maximum(np.maximum(np.abs(led.F[:, :-1]), np.abs(led.F[:, 1:])), run.call.strike)
    scale = scale + np.abs(led.H[:, :-1]) + np.abs(led.P[:, :-1])
    tol = 16 * np.finfo(float).eps * scale
    bad = np.argwhere(inc < -tol)
    violations = [(int(p), int(s) + 1, float(inc[p, s])) for p, s in bad[:max_report]]
    return MonotonicityAudit(inc.shape[0], inc.shape[1], violations, float(inc.min()), float(tol.max()))


def intrinsic_time_value_estimate(run: HedgeRun) -> tuple[float, float]:
    """Time value as the mean gain of the intrinsically hedged portfolio: (value, se)."""
    _require_intrinsic(run)
    if run.gbm.mu0 != 0.0:
        raise ValueError("intrinsic time value estimate assumes a driftless market (mu0 = 0)")
    d = run.distribution
    return d.mean - float(pricing.intrinsic_price(run.gbm.f0, run.call)), d.se
