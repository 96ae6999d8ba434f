"""Seeded price-process generation and the bond-to-currency numeraire change.

All prices are denominated in units of a risk-less bond (zero interest rate).
:func:`to_currency_units` converts a series back to currency units.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class InvalidInputError(ValueError):
    """Raised when market or grid parameters are outside their domain."""


@dataclass(frozen=True, slots=True)
class TimeGrid:
    t_start: float
    t_end: float
    n_steps: int

    def __post_init__(self):
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise InvalidInputError(f"n_steps must be a positive integer, got {self.n_steps!r}")
        if not np.isfinite(self.t_start) or not np.isfinite(self.t_end):
            raise InvalidInputError("grid bounds must be finite")
        if self.t_end <= self.t_start:
            raise InvalidInputError(f"t_end ({self.t_end}) must exceed t_start ({self.t_start})")

    @property
    def dt(self) -> float:
        return (self.t_end - self.t_start) / self.n_steps

    @property
    def times(self) -> np.ndarray:
        # last point pinned to t_end so that expiry checks are exact
        t = self.t_start + self.dt * np.arange(self.n_steps + 1)
        t[-1] = self.t_end
        return t


@dataclass(frozen=True, slots=True)
class GbmSpec:
    """Geometric Brownian motion dF = mu0 F dt + sigma0 F dW."""

    f0: float
    mu0: float = 0.0
    sigma0: float = 0.2

    def __post_init__(self):
        if not self.f0 > 0:
            raise InvalidInputError(f"f0 must be positive, got {self.f0!r}")
        if not self.sigma0 >= 0:
            raise InvalidInputError(f"sigma0 must be non-negative, got {self.sigma0!r}")
        if not np.isfinite(self.mu0):
            raise InvalidInputError("mu0 must be finite")


@dataclass(frozen=True, slots=True)
class SeedSpec:
    master_seed: int
    path_index: int = 0

    def __post_init__(self):
        if self.path_index < 0:
            raise InvalidInputError("path_index must be non-negative")


@dataclass(frozen=True, slots=True)
class NumeraireRate:
    r: float

    def __post_init__(self):
        if not np.isfinite(self.r):
            raise InvalidInputError("rate must be finite")


@dataclass(frozen=True)
class PricePath:
    grid: TimeGrid
    values: np.ndarray

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.values)


def path_generator(seed: SeedSpec) -> np.random.Generator:
    """Independent counter-based stream for one path.

    The stream depends only on ``(master_seed, path_index)``, so paths can be
    produced in any order or on any worker.
    """
    ss = np.random.SeedSequence(int(seed.master_seed) & 0xFFFFFFFFFFFFFFFF,
                                spawn_key=(int(seed.path_index),))
    return np.random.Generator(np.random.Philox(ss))


def normal_draws(master_seed: int, path_indices, n: int) -> np.ndarray:
    """Standard normals, one row of length ``n`` per path index."""
    idx = np.asarray(path_indices, dtype=np.int64)
    out = np.empty((idx.size, n))
    for row, i in enumerate(idx):
        out[row] = path_generator(SeedSpec(master_seed, int(i))).standard_normal(n)
    return out


def gbm_from_normals(spec: GbmSpec, grid: TimeGrid, z: np.ndarray) -> np.ndarray:
    """Exact log-space GBM stepping driven by given normals (last axis = time)."""
    dt = grid.dt
    log_inc = (spec.mu0 - 0.5 * spec.sigma0**2) * dt + spec.sigma0 * np.sqrt(dt) * z
    logs = np.cumsum(log_inc, axis=-1)
    values = np.empty(z.shape[:-1] + (z.shape[-1] + 1,))
    values[..., 0] = spec.f0
    values[..., 1:] = spec.f0 * np.exp(logs)
    return values


def simulate_gbm_path(spec: GbmSpec, grid: TimeGrid, seed: SeedSpec) -> PricePath:
    z = path_generator(seed).standard_normal(grid.n_steps)
    return PricePath(grid, gbm_from_normals(spec, grid, z))


def simulate_gbm_paths(spec: GbmSpec, grid: TimeGrid, master_seed: int, path_indices) -> np.ndarray:
    """Block of paths, shape ``(len(path_indices), n_steps + 1)``.

    Row ``j`` is bit-identical to ``simulate_gbm_path`` for ``path_indices[j]``.
    """
    z = normal_draws(master_seed, path_indices, grid.n_steps)
    return gbm_from_normals(spec, grid, z)


def expected_increment(spec: GbmSpec, f, dt):
    """Drift of the price over ``dt``: mu0 * f * dt."""
    return spec.mu0 * f * dt


def to_currency_units(value, t, rate: NumeraireRate):
    """Rescale a bond-denominated amount observed at time ``t`` to currency."""
    return np.exp(rate.r * np.asarray(t)) * value


def from_currency_units(value, t, rate: NumeraireRate):
    return to_currency_units(value, t, NumeraireRate(-rate.r))
