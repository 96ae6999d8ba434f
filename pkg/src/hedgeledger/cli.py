"""Command-line front end.

Every command reads one scenario file. Failures are reported as a JSON object
on stderr with a nonzero exit status (2 for invalid input, 1 for failed checks
or runtime errors).
"""

from __future__ import annotations

import functools
import json
import sys
import time
from pathlib import Path

import click
from scipy import integrate

from . import pricing, reports
from .config import ScenarioConfig, ScenarioError
from .hedging import ALL_STRATEGIES, ConfigError, HedgeKind, HedgeStrategy, run_paths
from .storage import intrinsic_optimize, run_rolling_intrinsic
from .storage.dispatch import InfeasibleStorageError
from .verify import ledger_checks, storage_checks, vanilla_checks


class ChecksFailed(Exception):
    pass


def _fail(payload: dict, code: int):
    click.echo(json.dumps(reports.clean(payload), sort_keys=True), err=True)
    sys.exit(code)


def guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ScenarioError as exc:
            _fail(exc.as_dict(), 2)
        except InfeasibleStorageError as exc:
            _fail({"error": "infeasible", "message": str(exc), "period": exc.period}, 2)
        except ConfigError as exc:
            _fail({"error": "config", "field": None, "line": None, "message": str(exc)}, 2)
        except ChecksFailed as exc:
            _fail({"error": "checks_failed", "failed": exc.args[0]}, 1)
        except (OSError, ValueError, RuntimeError) as exc:
            _fail({"error": type(exc).__name__, "message": str(exc)}, 1)
    return wrapper


def config_option(fn):
    return click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False),
                        help="Scenario YAML file.")(fn)


def run_options(fn):
    opts = [
        click.option("--seed", type=int, default=None, help="Master seed (unsigned 64-bit)."),
        click.option("--paths", type=int, default=None, help="Number of Monte Carlo paths."),
        click.option("--steps", type=int, default=None, help="Number of time steps (vanilla only)."),
        click.option("--out", type=click.Path(file_okay=False), default=None, help="Output directory."),
        click.option("--ledgers", is_flag=True, default=False, help="Write per-step CSV ledgers."),
        click.option("--workers", type=click.IntRange(min=1), default=1, show_default=True,
                     help="Worker processes; results do not depend on this."),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return config_option(fn)


def load(config_path, seed=None, paths=None, steps=None, out=None, ledgers=False) -> ScenarioConfig:
    cfg = ScenarioConfig.load(config_path)
    return cfg.with_overrides(master_seed=seed, n_paths=paths, n_steps=steps, out=out,
                              retain_ledgers=True if ledgers else None)


def _out_dir(cfg) -> Path:
    d = Path(cfg.run["out"])
    d.mkdir(parents=True, exist_ok=True)
    return d


def _timing(out: Path, name: str, seconds: float, path_steps: int):
    reports.write_json({"wall_clock_seconds": seconds, "path_steps": path_steps}, out / f"{name}.timing.json")


@click.group()
@click.version_option(package_name="hedgeledger")
def main():
    """Simulate, verify and compare hedging ledgers for calls and storage."""


@main.command()
@config_option
@click.option("--time", "t", type=float, default=0.0, show_default=True, help="Valuation time (vanilla).")
@guarded
def price(config_path, t):
    """Print prices (vanilla) or the intrinsic value and plan (storage)."""
    cfg = ScenarioConfig.load(config_path)
    if cfg.kind == "vanilla":
        gbm, call = cfg.gbm(), cfg.call()
        if not 0.0 <= t <= call.expiry:
            raise ScenarioError("--time", f"must lie in [0, {call.expiry}]")
        out = {
            "f": float(pricing.bs_price(gbm.f0, t, call, gbm.sigma0)),
            "g": float(pricing.probabilistic_price(gbm.f0, t, call, gbm.sigma0, gbm.mu0)),
            "I": float(pricing.intrinsic_price(gbm.f0, call)),
            "delta_f": float(pricing.bs_delta(gbm.f0, t, call, gbm.sigma0)),
            "delta_g": float(pricing.probabilistic_delta(gbm.f0, t, call, gbm.sigma0, gbm.mu0)),
            "time_value": pricing.time_value_closed_form(call, gbm.f0, gbm.sigma0, call.expiry - t),
            "t": t,
        }
    else:
        curve = cfg.curve()
        plan, value = intrinsic_optimize(curve.values, cfg.storage_spec())
        out = {"I": float(value), "plan": plan, "T": curve.delivery, "F": curve.values}
    click.echo(reports.dumps(out), nl=False)


@main.command("time-value")
@config_option
@guarded
def time_value(config_path):
    """Time value of the configured call by three independent routes."""
    cfg = ScenarioConfig.load(config_path)
    if cfg.kind != "vanilla":
        raise ScenarioError("kind", "time-value needs a vanilla scenario")
    gbm, call = cfg.gbm(), cfg.call()
    T = call.expiry
    quad, err = integrate.quad(lambda s: pricing.gamma_integrand(s, call, gbm.f0, gbm.sigma0), 0.0, T,
                               epsabs=1e-13, epsrel=1e-13, limit=500)
    out = {
        "closed_form": pricing.time_value_closed_form(call, gbm.f0, gbm.sigma0, T),
        "j_integrals": pricing.time_value_from_j(call, gbm.f0, gbm.sigma0, T),
        "quadrature": quad,
        "quadrature_error_estimate": err,
        "black_scholes_minus_intrinsic": float(pricing.bs_price(gbm.f0, 0.0, call, gbm.sigma0)
                                               - pricing.intrinsic_price(gbm.f0, call)),
    }
    click.echo(reports.dumps(out), nl=False)


def _simulate_vanilla(cfg, workers, strategy=None, name="report"):
    out = _out_dir(cfg)
    strategy = strategy or cfg.hedge_strategy()
    keep = cfg.run["retain_ledgers"]
    t0 = time.perf_counter()
    run = run_paths(cfg.gbm(), cfg.grid(), cfg.call(), cfg.pricing_model(), strategy, cfg.run["n_paths"],
                    cfg.run["master_seed"], retain_ledgers=keep, workers=workers)
    rep = reports.vanilla_report(cfg, run)
    reports.write_json(rep, out / f"{name}.json")
    if keep:
        reports.write_vanilla_ledgers(run.ledgers, out / f"{name}.ledgers.csv")
    _timing(out, name, time.perf_counter() - t0, rep["path_steps"])
    return run, rep


def _simulate_storage(cfg, workers, hedged=None, name="report"):
    out = _out_dir(cfg)
    hedged = cfg.strategy["hedged"] if hedged is None else hedged
    keep = cfg.run["retain_ledgers"]
    storage, curve = cfg.storage_spec(), cfg.curve()
    plan0, _ = intrinsic_optimize(curve.values, storage)
    t0 = time.perf_counter()
    run = run_rolling_intrinsic(storage, cfg.factor_model(), curve, cfg.run["n_paths"], cfg.run["master_seed"],
                                hedged=hedged, retain_ledgers=keep, workers=workers)
    rep = reports.storage_report(cfg, run, plan0)
    reports.write_json(rep, out / f"{name}.json")
    if keep:
        reports.write_storage_ledgers(run.ledgers, out / f"{name}.storage_ledger.csv")
    _timing(out, name, time.perf_counter() - t0, rep["path_steps"])
    return run, rep


@main.command()
@run_options
@guarded
def simulate(config_path, seed, paths, steps, out, ledgers, workers):
    """Run the configured scenario and write report.json (and ledgers with --ledgers)."""
    cfg = load(config_path, seed, paths, steps, out, ledgers)
    if cfg.kind == "vanilla":
        _, rep = _simulate_vanilla(cfg, workers)
    else:
        _, rep = _simulate_storage(cfg, workers)
    term = rep["terminal"]
    click.echo(f"{cfg.kind}: n_paths={rep['n_paths']} n_steps={rep['n_steps']} "
               f"mean={term['mean']:.6g} std={term['std']:.6g} se={term['se']:.3g} -> {Path(cfg.run['out']) / 'report.json'}")


@main.command()
@run_options
@click.option("--replay", type=click.Path(dir_okay=False, exists=True), default=None,
              help="Check the accounting identities of a saved vanilla ledger CSV instead of running.")
@guarded
def verify(config_path, seed, paths, steps, out, ledgers, workers, replay):
    """Run the invariant checks; exit status 1 if any check fails."""
    cfg = load(config_path, seed, paths, steps, out, ledgers)
    if replay is not None:
        checks = ledger_checks(reports.read_vanilla_ledgers(replay), "replay")
    elif cfg.kind == "vanilla":
        checks = vanilla_checks(cfg, workers)
    else:
        checks = storage_checks(cfg, workers)
    click.echo(reports.checks_table(checks))
    if out is not None:
        rep = reports.header(cfg, "verify")
        rep["checks"] = [c.as_dict() for c in checks]
        reports.write_json(rep, _out_dir(cfg) / "verify.json")
    failed = [c.name for c in checks if not c.passed]
    if failed:
        raise ChecksFailed(failed)


@main.command()
@run_options
@guarded
def sweep(config_path, seed, paths, steps, out, ledgers, workers):
    """Run every hedging strategy on the same paths and write a comparison table."""
    cfg = load(config_path, seed, paths, steps, out, ledgers)
    out_dir = _out_dir(cfg)
    if cfg.kind == "vanilla":
        runs = []
        for base in ALL_STRATEGIES:
            strategy = base
            if base.kind is HedgeKind.BID_OFFER and cfg.strategy["k"] > 0:
                strategy = HedgeStrategy(HedgeKind.BID_OFFER, cfg.strategy["k"], HedgeKind(cfg.strategy["inner"]))
            run, _ = _simulate_vanilla(cfg, workers, strategy, name=f"report_{strategy.kind.value}")
            runs.append(run)
        rows = reports.comparison_rows(runs)
    else:
        rows = []
        for hedged in (True, False):
            run, _ = _simulate_storage(cfg, workers, hedged, name="report_hedged" if hedged else "report_unhedged")
            d = run.distribution
            rows.append(("rolling_intrinsic" if hedged else "none", d.mean, d.std, d.se,
                         d.quantiles["5%"], d.quantiles["50%"], d.quantiles["95%"]))
    reports.write_comparison_csv(rows, out_dir / "comparison.csv")
    table = reports.format_table(reports.COMPARISON_COLUMNS, rows)
    (out_dir / "comparison.txt").write_text(table + "\n")
    click.echo(table)


if __name__ == "__main__":
    main()
