from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

QUANTILE_LEVELS = (0.01, 0.05, 0.25, 0.50, 0.75, 0.95, 0.99)


@dataclass(frozen=True)
class TerminalDistribution:
    """Summary of terminal portfolio values over Monte Carlo paths.

    ``samples`` is ordered by path index, so every statistic is independent of
    how the paths were distributed over workers.
    """

    samples: np.ndarray
    mean: float
    std: float
    se: float
    quantiles: dict = field(default_factory=dict)

    @classmethod
    def from_samples(cls, samples) -> "TerminalDistribution":
        x = np.asarray(samples, dtype=float)
        n = x.size
        if n == 0:
            raise ValueError("no samples")
        mean = float(np.mean(x))
        std = float(np.std(x, ddof=1)) if n > 1 else 0.0
        qs = np.quantile(x, QUANTILE_LEVELS)
        return cls(x, mean, std, std / np.sqrt(n), {f"{int(round(q * 100))}%": float(v) for q, v in zip(QUANTILE_LEVELS, qs)})

    @property
    def n(self) -> int:
        return int(self.samples.size)

    def summary(self) -> dict:
        return {"n_paths": self.n, "mean": self.mean, "std": self.std, "se": self.se, "quantiles": dict(self.quantiles)}


def mean_and_se(x) -> tuple[float, float]:
    x = np.asarray(x, dtype=float).ravel()
    if x.size < 2:
        return float(np.mean(x)), 0.0
    return float(np.mean(x)), float(np.std(x, ddof=1) / np.sqrt(x.size))


def z_score(diff: float, se: float) -> float:
    """Discrepancy in standard-error units; exact zero counts as 0 even if se == 0."""
    if diff == 0.0:
        return 0.0
    return abs(diff) / se if se > 0 else float("inf")
