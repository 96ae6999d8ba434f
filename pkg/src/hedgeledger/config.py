"""Scenario files: one YAML document fully describes a run.

Two scenario kinds share the layout ``kind / market / instrument / strategy /
run``. Parsing fills defaults, rejects unknown keys and reports the offending
field together with its line in the source file.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .hedging import ConfigError, HedgeKind, HedgeStrategy
from .market import GbmSpec, TimeGrid
from .pricing import CallSpec, PricingModel
from .storage import CurveFactorModel, ForwardCurve, StorageSpec, load_curve_csv
from .storage.curve import seasonal_curve

REQUIRED = object()
KINDS = ("vanilla", "storage")
MAX_SEED = 2**64 - 1


class ScenarioError(ConfigError):
    """Schema violation, located by dotted field name and (when known) line."""

    def __init__(self, field_name: str, message: str, line: int | None = None):
        where = f"{field_name} (line {line})" if line else field_name
        super().__init__(f"{where}: {message}")
        self.field = field_name
        self.line = line
        self.detail = message

    def as_dict(self) -> dict:
        return {"error": "config", "field": self.field, "line": self.line, "message": self.detail}


# --- field kinds -------------------------------------------------------------

def _num(v):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValueError(f"expected a number, got {v!r}")
    return float(v)


def _int(v):
    if isinstance(v, bool):
        raise ValueError(f"expected an integer, got {v!r}")
    if isinstance(v, float) and v.is_integer():
        v = int(v)
    if not isinstance(v, int):
        raise ValueError(f"expected an integer, got {v!r}")
    return v


def _bool(v):
    if not isinstance(v, bool):
        raise ValueError(f"expected true/false, got {v!r}")
    return v


def _str(v):
    if not isinstance(v, str):
        raise ValueError(f"expected a string, got {v!r}")
    return v


def _num_or_list(v):
    if isinstance(v, list):
        return [_num(x) for x in v]
    return _num(v)


def _positive(v):
    if not v > 0 or not math.isfinite(v):
        raise ValueError(f"must be a finite number > 0, got {v!r}")


def _nonneg(v):
    if isinstance(v, list):
        for x in v:
            _nonneg(x)
        return
    if not v >= 0 or not math.isfinite(v):
        raise ValueError(f"must be a finite number >= 0, got {v!r}")


def _finite(v):
    if not math.isfinite(v):
        raise ValueError(f"must be finite, got {v!r}")


def _seed(v):
    if not 0 <= v <= MAX_SEED:
        raise ValueError(f"must be an unsigned 64-bit integer, got {v!r}")


def _at_least_one(v):
    if v < 1:
        raise ValueError(f"must be >= 1, got {v!r}")


def _beta(v):
    if not v >= 0:
        raise ValueError(f"must be >= 0 (inf allowed), got {v!r}")


def _choice(values):
    def check(v):
        if v not in values:
            raise ValueError(f"must be one of {', '.join(values)}; got {v!r}")
    return check


def _zero_drift(v):
    if v != 0.0:
        raise ValueError("storage runs assume a drift-less market; mu0 must be 0")


_HEDGES = tuple(k.value for k in HedgeKind)
_MODELS = tuple(m.value for m in PricingModel)

# field -> (parser, default, check)
SCHEMA = {
    "vanilla": {
        "market": {"f0": (_num, REQUIRED, _positive), "mu0": (_num, 0.0, _finite), "sigma0": (_num, 0.2, _nonneg)},
        "instrument": {"strike": (_num, REQUIRED, _positive), "expiry": (_num, REQUIRED, _positive)},
        "strategy": {"hedge": (_str, "risk_neutral_delta", _choice(_HEDGES)),
                     "model": (_str, "risk_neutral", _choice(_MODELS)),
                     "k": (_num, 0.0, _nonneg),
                     "inner": (_str, "risk_neutral_delta", _choice(_HEDGES[1:4]))},
        "run": {"n_steps": (_int, 256, _at_least_one), "n_paths": (_int, 10000, _at_least_one),
                "master_seed": (_int, 0, _seed), "retain_ledgers": (_bool, False, None), "out": (_str, "out", None)},
    },
    "storage": {
        "market": {"sigma": (_num_or_list, 0.3, _nonneg), "beta": (_num, 1.0, _beta), "mu0": (_num, 0.0, _zero_drift),
                   "curve_csv": (_str, None, None), "seasonal": (dict, None, None)},
        "instrument": {"q_min": (_num, 0.0, _finite), "q_max": (_num, REQUIRED, _finite),
                       "rate_in_max": (_num, REQUIRED, _positive), "rate_out_max": (_num, REQUIRED, _positive),
                       "q_initial": (_num, 0.0, _finite), "q_terminal": (_num, 0.0, _finite),
                       "volume_step": (_num, 1.0, _positive)},
        "strategy": {"hedged": (_bool, True, None)},
        "run": {"n_paths": (_int, 10000, _at_least_one), "master_seed": (_int, 0, _seed),
                "retain_ledgers": (_bool, False, None), "out": (_str, "out", None)},
    },
}

SEASONAL = {"n_periods": (_int, 12, _at_least_one), "base": (_num, 20.0, _positive), "amplitude": (_num, 5.0, _finite),
            "period": (_num, 1.0 / 12, _positive), "phase": (_num, 0.0, _finite)}

# fields that do not change any number in a report
NON_SEMANTIC = {("run", "out")}


def _line_map(node, prefix=(), out=None) -> dict:
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            key = prefix + (str(k.value),)
            out[key] = k.start_mark.line + 1
            _line_map(v, key, out)
    return out


def _fill(block: dict, schema: dict, path: tuple, lines: dict) -> dict:
    name = ".".join(path)
    if block is None:
        block = {}
    if not isinstance(block, dict):
        raise ScenarioError(name, "expected a mapping", lines.get(path))
    extra = sorted(set(block) - set(schema))
    if extra:
        raise ScenarioError(f"{name}.{extra[0]}", f"unknown field (allowed: {', '.join(schema)})",
                            lines.get(path + (str(extra[0]),)))
    out = {}
    for key, (parse, default, check) in schema.items():
        fpath = path + (key,)
        fname = ".".join(fpath)
        if key not in block or block[key] is None:
            if default is REQUIRED:
                raise ScenarioError(fname, "required field is missing", lines.get(path))
            out[key] = copy.deepcopy(default)
            continue
        try:
            if parse is dict:
                value = _fill(block[key], SEASONAL, fpath, lines)
            else:
                value = parse(block[key])
                if check is not None:
                    check(value)
        except ScenarioError:
            raise
        except ValueError as exc:
            raise ScenarioError(fname, str(exc), lines.get(fpath)) from None
        out[key] = value
    return out


@dataclass
class ScenarioConfig:
    kind: str
    market: dict
    instrument: dict
    strategy: dict
    run: dict
    base_dir: Path = field(default=Path("."), compare=False, repr=False)

    # --- parsing -------------------------------------------------------------
    @classmethod
    def from_dict(cls, data: dict, lines: dict | None = None, base_dir=".") -> "ScenarioConfig":
        lines = lines or {}
        if not isinstance(data, dict):
            raise ScenarioError("<root>", "scenario must be a mapping")
        kind = data.get("kind")
        if kind not in KINDS:
            raise ScenarioError("kind", f"must be one of {', '.join(KINDS)}; got {kind!r}", lines.get(("kind",)))
        schema = SCHEMA[kind]
        extra = sorted(set(data) - set(schema) - {"kind"})
        if extra:
            raise ScenarioError(extra[0], "unknown top-level section", lines.get((str(extra[0]),)))
        blocks = {name: _fill(data.get(name), schema[name], (name,), lines) for name in schema}
        cfg = cls(kind, **blocks, base_dir=Path(base_dir))
        cfg._cross_checks(lines)
        return cfg

    @classmethod
    def from_text(cls, text: str, base_dir=".") -> "ScenarioConfig":
        try:
            data = yaml.safe_load(text)
            lines = _line_map(yaml.compose(text)) if data is not None else {}
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            raise ScenarioError("<yaml>", str(getattr(exc, "problem", exc)), mark.line + 1 if mark else None) from None
        return cls.from_dict(data, lines, base_dir)

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ScenarioError("--config", f"cannot read {path}: {exc.strerror}") from None
        return cls.from_text(text, base_dir=path.parent)

    def _cross_checks(self, lines: dict):
        if self.kind == "vanilla":
            try:
                self.hedge_strategy().validate_step(self.grid().dt)
            except ConfigError as exc:
                raise ScenarioError("strategy.k", str(exc), lines.get(("strategy", "k"))) from None
            return
        m = self.market
        if (m["curve_csv"] is None) == (m["seasonal"] is None):
            raise ScenarioError("market", "give exactly one of curve_csv or seasonal", lines.get(("market",)))
        try:
            self.storage_spec()
        except ValueError as exc:
            raise ScenarioError("instrument", str(exc), lines.get(("instrument",))) from None
        if m["curve_csv"] is not None:
            p = self.base_dir / m["curve_csv"]
            if not p.is_file():
                raise ScenarioError("market.curve_csv", f"file not found: {p}", lines.get(("market", "curve_csv")))
        try:
            curve = self.curve()
            self.factor_model().sigmas(len(curve))
        except ValueError as exc:
            raise ScenarioError("market", str(exc), lines.get(("market",))) from None

    # --- serialization -------------------------------------------------------
    def to_dict(self) -> dict:
        return {"kind": self.kind, "market": copy.deepcopy(self.market), "instrument": dict(self.instrument),
                "strategy": dict(self.strategy), "run": dict(self.run)}

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def semantic_dict(self) -> dict:
        d = self.to_dict()
        for section, key in NON_SEMANTIC:
            d[section].pop(key, None)
        return d

    @property
    def config_hash(self) -> str:
        """sha256 of the canonical JSON form; independent of key order and output location."""
        text = json.dumps(self.semantic_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    def with_overrides(self, **kw) -> "ScenarioConfig":
        """Apply CLI overrides (None means keep) and re-validate."""
        d = self.to_dict()
        for key in ("n_paths", "n_steps", "master_seed", "retain_ledgers", "out"):
            if kw.get(key) is not None:
                if key == "n_steps" and self.kind == "storage":
                    raise ScenarioError("--steps", "storage steps follow the delivery grid of the curve")
                d["run"][key] = kw[key]
        return ScenarioConfig.from_dict(d, base_dir=self.base_dir)

    # --- builders ------------------------------------------------------------
    def gbm(self) -> GbmSpec:
        m = self.market
        return GbmSpec(m["f0"], m["mu0"], m["sigma0"])

    def call(self) -> CallSpec:
        return CallSpec(self.instrument["strike"], self.instrument["expiry"])

    def grid(self) -> TimeGrid:
        return TimeGrid(0.0, self.instrument["expiry"], self.run["n_steps"])

    def hedge_strategy(self, kind: str | None = None) -> HedgeStrategy:
        s = self.strategy
        return HedgeStrategy(HedgeKind(kind or s["hedge"]), s["k"], HedgeKind(s["inner"]))

    def pricing_model(self) -> PricingModel:
        return PricingModel(self.strategy["model"])

    def storage_spec(self) -> StorageSpec:
        return StorageSpec(**self.instrument)

    def factor_model(self) -> CurveFactorModel:
        sigma = self.market["sigma"]
        return CurveFactorModel(np.asarray(sigma, dtype=float) if isinstance(sigma, list) else sigma,
                                self.market["beta"])

    def curve(self) -> ForwardCurve:
        if self.market["curve_csv"] is not None:
            return load_curve_csv(self.base_dir / self.market["curve_csv"])
        return seasonal_curve(**self.market["seasonal"])
