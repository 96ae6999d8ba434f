"""Forward curves and their driftless lognormal evolution.

Each delivery point follows ``dF(T)/F(T) = sigma(T) dW_t(T)`` with
``corr(dW(u), dW(v)) = exp(-beta |u - v|)``. Along an increasing delivery grid
this correlation is that of a Gauss-Markov chain, so correlated shocks are
built with an AR(1) recursion instead of a matrix factorisation; it stays exact
for ``beta = 0`` (one common factor) and ``beta = inf`` (independent points).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class ForwardCurve:
    t: float
    delivery: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.delivery, dtype=float)
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "delivery", d)
        object.__setattr__(self, "values", v)
        if d.shape != v.shape or d.ndim != 1:
            raise ValueError("delivery and values must be 1-d arrays of equal length")
        if np.any(v <= 0):
            raise ValueError("forward prices must be positive")
        if d.size and np.any(d <= self.t):
            raise ValueError("delivery times must lie after the observation time")
        if d.size > 1:
            gaps = np.diff(d)
            if np.any(gaps <= 0) or not np.allclose(gaps, gaps[0], rtol=1e-9, atol=1e-12):
                raise ValueError("delivery grid must be uniformly spaced and increasing")

    @property
    def period(self) -> float:
        if self.delivery.size > 1:
            return float(self.delivery[1] - self.delivery[0])
        return float(self.delivery[0] - self.t)

    def __len__(self):
        return int(self.values.size)


@dataclass(frozen=True)
class CurveFactorModel:
    sigma: object = 0.3
    beta: float = 1.0

    def __post_init__(self):
        if np.any(np.asarray(self.sigma, dtype=float) < 0):
            raise ValueError("sigma must be non-negative")
        if not self.beta >= 0:
            raise ValueError("beta must be non-negative (inf allowed)")

    def sigmas(self, n: int) -> np.ndarray:
        s = np.asarray(self.sigma, dtype=float)
        if s.ndim == 0:
            return np.full(n, float(s))
        if s.size != n:
            raise ValueError(f"sigma has {s.size} entries for {n} delivery points")
        return s

    def correlation(self, delivery) -> np.ndarray:
        d = np.asarray(delivery, dtype=float)
        gap = np.abs(d[:, None] - d[None, :])
        with np.errstate(invalid="ignore"):
            c = np.exp(-self.beta * gap)
        return np.where(gap == 0, 1.0, c)

    def covariance_rate(self, curve: ForwardCurve) -> np.ndarray:
        """Per-unit-time covariance of curve increments: s(u)s(v)F(u)F(v)e^{-beta|u-v|}."""
        sf = self.sigmas(len(curve)) * curve.values
        return np.outer(sf, sf) * self.correlation(curve.delivery)


def correlated_shocks(eps: np.ndarray, delivery: np.ndarray, beta: float) -> np.ndarray:
    """Map iid normals (last axis = delivery) to shocks with exp(-beta |u-v|) correlation."""
    z = np.empty_like(eps)
    if eps.shape[-1] == 0:
        return z
    gaps = np.diff(np.asarray(delivery, dtype=float))
    rho = np.exp(-beta * gaps) if math.isfinite(beta) else np.zeros_like(gaps)
    z[..., 0] = eps[..., 0]
    for j in range(1, eps.shape[-1]):
        r = rho[j - 1]
        z[..., j] = r * z[..., j - 1] + math.sqrt(max(0.0, 1.0 - r * r)) * eps[..., j]
    return z


def lognormal_step(values: np.ndarray, sigmas: np.ndarray, dt: float, z: np.ndarray) -> np.ndarray:
    """Exact martingale step F -> F exp(-s^2 dt / 2 + s sqrt(dt) z)."""
    return values * np.exp(-0.5 * sigmas**2 * dt + sigmas * math.sqrt(dt) * z)


def step_curve(curve: ForwardCurve, model: CurveFactorModel, dt: float, rng: np.random.Generator):
    """Evolve the curve by ``dt``; delivery points with T <= t + dt drop off.

    Returns ``(new_curve, increments)`` where increments are defined for the
    surviving delivery points.
    """
    t_new = curve.t + dt
    keep = curve.delivery > t_new + 1e-12
    d = curve.delivery[keep]
    v = curve.values[keep]
    sig = model.sigmas(len(curve))[keep]
    z = correlated_shocks(rng.standard_normal(d.size), d, model.beta)
    new_v = lognormal_step(v, sig, dt, z)
    return ForwardCurve(t_new, d, new_v), new_v - v


def load_curve_csv(path) -> ForwardCurve:
    """Read a curve with columns ``T, F`` (header required); observed at t = T_0 - dT."""
    with open(Path(path), newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or not {"T", "F"} <= set(rows[0]):
        raise ValueError(f"{path}: expected CSV columns 'T' and 'F'")
    T = np.array([float(r["T"]) for r in rows])
    F = np.array([float(r["F"]) for r in rows])
    dT = float(T[1] - T[0]) if T.size > 1 else float(T[0])
    return ForwardCurve(float(T[0] - dT), T, F)


def write_curve_csv(curve: ForwardCurve, path):
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["T", "F"])
        for T, F in zip(curve.delivery, curve.values):
            w.writerow([repr(float(T)), repr(float(F))])


def seasonal_curve(n_periods: int = 12, base: float = 20.0, amplitude: float = 5.0, period: float = 1.0 / 12,
                   phase: float = 0.0) -> ForwardCurve:
    """Cosine-seasonal curve on a monthly-style grid; winter peak at phase 0."""
    j = np.arange(n_periods)
    values = base + amplitude * np.cos(2.0 * math.pi * (j - phase) / 12.0)
    return ForwardCurve(0.0, period * (j + 1), values)
