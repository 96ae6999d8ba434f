"""Machine-readable outputs: JSON run reports, CSV ledgers and comparison tables.

Reports contain only quantities determined by the scenario and seed, so two
runs of the same scenario produce byte-identical files regardless of worker
count. Wall-clock timings go to a separate ``timing.json``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__, pricing
from .hedging import HedgeLedgers, HedgeRun, drift_decomposition, initial_value
from .pricing import PricingModel
from .storage.rolling import RollingRun, StorageLedgers

ENGINE = "hedgeledger"
VANILLA_COLUMNS = ("path", "step", "t", "F", "dF", "h", "dh", "C", "H", "P", "Pi")
STORAGE_COLUMNS = ("path", "t", "level", "I", "E", "S", "H", "P", "Pi")


def clean(obj):
    """Make a structure JSON-safe: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    return obj


def dumps(report: dict) -> str:
    return json.dumps(clean(report), indent=2, sort_keys=True) + "\n"


def write_json(report: dict, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(report))
    return path


def header(cfg, command: str) -> dict:
    return {"engine": ENGINE, "engine_version": __version__, "command": command, "kind": cfg.kind,
            "config_hash": cfg.config_hash, "config": cfg.semantic_dict(), "master_seed": cfg.run["master_seed"]}


def vanilla_report(cfg, run: HedgeRun, command: str = "simulate") -> dict:
    gbm, call = run.gbm, run.call
    rep = header(cfg, command)
    rep.update({
        "strategy": run.strategy.label,
        "pricing_model": run.model.value,
        "n_paths": run.distribution.n,
        "n_steps": run.grid.n_steps,
        "path_steps": run.distribution.n * run.grid.n_steps,
        "terminal": run.distribution.summary(),
    })
    hg = run.hedge_gain
    po = run.payoff
    est = {
        "initial_value": initial_value(run),
        "risk_neutral_price": float(pricing.bs_price(gbm.f0, 0.0, call, gbm.sigma0)),
        "probabilistic_price": float(pricing.probabilistic_price(gbm.f0, 0.0, call, gbm.sigma0, gbm.mu0)),
        "intrinsic_price": float(pricing.intrinsic_price(gbm.f0, call)),
        "mean_payoff": {"value": float(np.mean(po)), "se": float(np.std(po, ddof=1) / math.sqrt(po.size)) if po.size > 1 else 0.0},
        "mean_hedge_gain": {"value": float(np.mean(hg)), "se": float(np.std(hg, ddof=1) / math.sqrt(hg.size)) if hg.size > 1 else 0.0},
    }
    if run.model is not PricingModel.INTRINSIC:
        est["drift_decomposition"] = drift_decomposition(run).as_dict()
    rep["estimators"] = est
    return rep


def storage_report(cfg, run: RollingRun, plan0: np.ndarray, command: str = "simulate") -> dict:
    rep = header(cfg, command)
    N = len(run.curve0)
    rep.update({
        "hedged": run.hedged,
        "n_paths": run.distribution.n,
        "n_steps": N,
        "path_steps": run.distribution.n * N,
        "curve": {"t": run.curve0.t, "T": run.curve0.delivery, "F": run.curve0.values},
        "intrinsic_plan": plan0,
        "terminal": run.distribution.summary(),
        "estimators": run.estimates,
    })
    return rep


def write_vanilla_ledgers(led: HedgeLedgers, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n_paths, rows = led.F.shape
    zeros = np.zeros((n_paths, 1))
    dF = np.hstack([zeros, np.diff(led.F, axis=1)])
    dh = np.hstack([led.h[:, :1], np.diff(led.h, axis=1)])  # step 0 books the set-up trade from h = 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(VANILLA_COLUMNS)
        for p in range(n_paths):
            for s in range(rows):
                w.writerow([p, s] + [repr(float(x)) for x in (led.t[s], led.F[p, s], dF[p, s], led.h[p, s],
                                                              dh[p, s], led.C[p, s], led.H[p, s], led.P[p, s],
                                                              led.Pi[p, s])])
    return path


def read_vanilla_ledgers(path) -> HedgeLedgers:
    """Inverse of :func:`write_vanilla_ledgers` (values round-trip exactly)."""
    with open(Path(path), newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or tuple(rows[0].keys()) != VANILLA_COLUMNS:
        raise ValueError(f"{path}: expected columns {', '.join(VANILLA_COLUMNS)}")
    n_paths = max(int(r["path"]) for r in rows) + 1
    n_rows = max(int(r["step"]) for r in rows) + 1
    if len(rows) != n_paths * n_rows:
        raise ValueError(f"{path}: ragged ledger ({len(rows)} rows for {n_paths} paths x {n_rows} steps)")
    arr = {k: np.empty((n_paths, n_rows)) for k in ("F", "h", "C", "H", "P", "Pi")}
    t = np.empty(n_rows)
    for r in rows:
        p, s = int(r["path"]), int(r["step"])
        t[s] = float(r["t"])
        for k in arr:
            arr[k][p, s] = float(r[k])
    return HedgeLedgers(t, arr["F"], arr["h"], arr["C"], arr["H"], arr["P"], arr["Pi"])


def write_storage_ledgers(led: StorageLedgers, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n_paths, rows = led.I.shape
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(STORAGE_COLUMNS)
        for p in range(n_paths):
            for s in range(rows):
                w.writerow([p] + [repr(float(x)) for x in (led.t[s], led.level[p, s], led.I[p, s], led.E[p, s],
                                                           led.S[p, s], led.H[p, s], led.P[p, s], led.Pi[p, s])])
    return path


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    bound: float
    passed: bool
    note: str = ""

    def as_dict(self) -> dict:
        return {"name": self.name, "value": self.value, "bound": self.bound, "passed": self.passed, "note": self.note}


def format_table(headers, rows) -> str:
    cells = [[str(h) for h in headers]] + [[_fmt(c) for c in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(headers))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "PASS" if x else "FAIL"
    if isinstance(x, float):
        return f"{x:.6g}"
    return str(x)


def checks_table(checks) -> str:
    return format_table(("check", "value", "bound", "result"), [(c.name, c.value, c.bound, c.passed) for c in checks])


COMPARISON_COLUMNS = ("strategy", "mean", "std", "se", "q5", "q50", "q95")


def comparison_rows(runs) -> list[tuple]:
    out = []
    for run in runs:
        d = run.distribution
        out.append((run.strategy.label, d.mean, d.std, d.se, d.quantiles["5%"], d.quantiles["50%"], d.quantiles["95%"]))
    return out


def write_comparison_csv(rows, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(COMPARISON_COLUMNS)
        for r in rows:
            w.writerow([r[0]] + [repr(float(x)) for x in r[1:]])
    return path
