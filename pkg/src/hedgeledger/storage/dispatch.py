"""Intrinsic storage dispatch on a volume lattice.

Sign convention: ``r_j`` is the change of the storage level during delivery
period ``j`` -- positive for injection (buying gas), negative for withdrawal
(selling). The intrinsic value on a curve ``F`` is ``I = -sum_j r_j F_j``, so
selling high and buying low gives ``I > 0``.

The storage feasibility set is a volume box, per-period rate bounds and a hard
terminal level. Because its constraint matrix is an interval matrix, the
linear dispatch problem has an optimum on any lattice whose pitch divides all
bounds, and backward dynamic programming over that lattice is exact.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

NEG_INF = float("-inf")


class InfeasibleStorageError(ValueError):
    def __init__(self, message: str, period: int):
        super().__init__(message)
        self.period = period


def _units(x: float, pitch: float, what: str) -> int:
    n = x / pitch
    k = round(n)
    if not math.isclose(n, k, rel_tol=0, abs_tol=1e-9):
        raise ValueError(f"{what} ({x}) is not a multiple of the volume step {pitch}")
    return int(k)


@dataclass(frozen=True)
class StorageSpec:
    q_min: float
    q_max: float
    rate_in_max: float
    rate_out_max: float
    q_initial: float
    q_terminal: float
    volume_step: float = 1.0

    def __post_init__(self):
        if not self.volume_step > 0:
            raise ValueError("volume_step must be positive")
        if not self.q_min <= self.q_max:
            raise ValueError("q_min must not exceed q_max")
        for name in ("q_initial", "q_terminal"):
            q = getattr(self, name)
            if not self.q_min <= q <= self.q_max:
                raise ValueError(f"{name}={q} outside [{self.q_min}, {self.q_max}]")
        if not (self.rate_in_max > 0 and self.rate_out_max > 0):
            raise ValueError("rate bounds must be positive")
        # exactness of the lattice: every gap is a whole number of steps
        _units(self.q_max - self.q_min, self.volume_step, "q_max - q_min")
        _units(self.q_initial - self.q_min, self.volume_step, "q_initial - q_min")
        _units(self.q_terminal - self.q_min, self.volume_step, "q_terminal - q_min")
        _units(self.rate_in_max, self.volume_step, "rate_in_max")
        _units(self.rate_out_max, self.volume_step, "rate_out_max")

    @property
    def n_levels(self) -> int:
        return _units(self.q_max - self.q_min, self.volume_step, "q_max - q_min") + 1

    @property
    def max_in(self) -> int:
        return _units(self.rate_in_max, self.volume_step, "rate_in_max")

    @property
    def max_out(self) -> int:
        return _units(self.rate_out_max, self.volume_step, "rate_out_max")

    def level_index(self, q) -> np.ndarray:
        return np.rint((np.asarray(q, dtype=float) - self.q_min) / self.volume_step).astype(np.int64)

    def level(self, idx):
        return self.q_min + np.asarray(idx) * self.volume_step

    @property
    def initial_index(self) -> int:
        return int(self.level_index(self.q_initial))

    @property
    def terminal_index(self) -> int:
        return int(self.level_index(self.q_terminal))

    def actions(self) -> list[int]:
        """Lattice actions ordered by tie-break priority: 0, -1, +1, -2, +2, ..."""
        out = [0]
        for m in range(1, max(self.max_in, self.max_out) + 1):
            if m <= self.max_out:
                out.append(-m)
            if m <= self.max_in:
                out.append(m)
        return out


def first_infeasible_period(storage: StorageSpec, level_idx: int, n_periods: int) -> int | None:
    """Earliest period after which the terminal level can no longer be reached."""
    lo = hi = int(level_idx)
    L, tgt = storage.n_levels, storage.terminal_index
    for j in range(n_periods + 1):
        remaining = n_periods - j
        need_lo = max(0, tgt - remaining * storage.max_out)
        need_hi = min(L - 1, tgt + remaining * storage.max_in)
        if max(lo, need_lo) > min(hi, need_hi):
            return j
        lo, hi = max(0, lo - storage.max_out), min(L - 1, hi + storage.max_in)
    return None


@dataclass
class DispatchSolution:
    plan: np.ndarray        # (B, M) volume per period, positive = injection
    value: np.ndarray       # (B,) intrinsic value -sum r F, summed left to right
    dp_value: np.ndarray    # (B,) optimal value from the backward recursion


def _shift(V: np.ndarray, a: int, fill) -> np.ndarray:
    """out[:, q] = V[:, q + a], ``fill`` where q + a leaves the lattice."""
    out = np.full_like(V, fill)
    L = V.shape[1]
    if a >= 0:
        out[:, : L - a] = V[:, a:]
    else:
        out[:, -a:] = V[:, : L + a]
    return out


def sequential_value(plan: np.ndarray, curve: np.ndarray) -> np.ndarray:
    """-sum_j r_j F_j accumulated strictly left to right (reproducible rounding)."""
    acc = np.zeros(plan.shape[0], dtype=plan.dtype)
    for j in range(plan.shape[1]):
        acc = acc + plan[:, j] * curve[:, j]
    return -acc


def solve_batch(curves, storage: StorageSpec, level_idx) -> DispatchSolution:
    """Optimal dispatch for a batch of curves ``(B, M)`` and start levels ``(B,)``.

    Works for float arrays and for object arrays of ``Fraction`` (exact mode).
    Ties go to the action listed first in :meth:`StorageSpec.actions`.
    """
    curves = np.asarray(curves)
    if curves.ndim == 1:
        curves = curves[None, :]
    exact = curves.dtype == object
    B, M = curves.shape
    L = storage.n_levels
    level_idx = np.broadcast_to(np.asarray(level_idx, dtype=np.int64), (B,))
    zero = 0 if exact else 0.0
    V = np.full((B, L), NEG_INF, dtype=object if exact else float)
    V[:, storage.terminal_index] = zero
    step = Fraction(storage.volume_step) if exact else storage.volume_step
    policies = []
    for j in range(M - 1, -1, -1):
        price = curves[:, j][:, None]
        best = np.full_like(V, NEG_INF)
        pol = np.zeros((B, L), dtype=np.int64)
        for a in storage.actions():
            cand = _shift(V, a, NEG_INF) - (a * step) * price
            better = cand > best
            best = np.where(better, cand, best)
            pol = np.where(better, a, pol)
        V = best
        policies.append(pol)
    policies.reverse()
    dp_value = V[np.arange(B), level_idx]
    if np.any(dp_value == NEG_INF):
        b = int(np.flatnonzero(dp_value == NEG_INF)[0])
        period = first_infeasible_period(storage, int(level_idx[b]), M)
        raise InfeasibleStorageError(
            f"terminal level {storage.q_terminal} unreachable from level {storage.level(level_idx[b])} "
            f"within {M} periods (first violated at period {period})", period if period is not None else 0)
    plan = np.zeros((B, M), dtype=object if exact else float)
    q = level_idx.copy()
    rows = np.arange(B)
    for j in range(M):
        a = policies[j][rows, q]
        plan[:, j] = [int(x) * step for x in a] if exact else a * step
        q = q + a
    return DispatchSolution(plan, sequential_value(plan, curves), dp_value)


def intrinsic_optimize(curve_values, storage: StorageSpec, level: float | None = None):
    """Optimal intrinsic plan for one curve: returns ``(plan, I)``."""
    level = storage.q_initial if level is None else level
    sol = solve_batch(np.asarray(curve_values)[None, :], storage, storage.level_index(level))
    return sol.plan[0], sol.value[0]


def brute_force_optimize(curve_values, storage: StorageSpec, level: float | None = None):
    """Exhaustive search over every lattice action sequence (small instances only)."""
    level = storage.q_initial if level is None else level
    q0 = int(storage.level_index(level))
    L, tgt = storage.n_levels, storage.terminal_index
    acts = range(-storage.max_out, storage.max_in + 1)
    best_val, best_plan = None, None
    curve_values = list(curve_values)
    for seq in itertools.product(acts, repeat=len(curve_values)):
        q, ok = q0, True
        for a in seq:
            q += a
            if not 0 <= q < L:
                ok = False
                break
        if not ok or q != tgt:
            continue
        val = -sum(a * storage.volume_step * f for a, f in zip(seq, curve_values))
        if best_val is None or val > best_val:
            best_val, best_plan = val, seq
    if best_val is None:
        raise InfeasibleStorageError("no feasible lattice plan", 0)
    return np.array(best_plan) * storage.volume_step, best_val


def random_feasible_plan(storage: StorageSpec, n_periods: int, rng: np.random.Generator, level=None) -> np.ndarray:
    """Uniformly chosen feasible action at each period (feasibility kept via reachability)."""
    level = storage.q_initial if level is None else level
    q = int(storage.level_index(level))
    L, tgt = storage.n_levels, storage.terminal_index
    plan = []
    for j in range(n_periods):
        remaining = n_periods - j - 1
        ok = [a for a in range(-storage.max_out, storage.max_in + 1)
              if 0 <= q + a < L and tgt - remaining * storage.max_out <= q + a <= tgt + remaining * storage.max_in]
        a = int(rng.choice(ok))
        plan.append(a)
        q += a
    return np.array(plan) * storage.volume_step
