"""Batch command-line front end.

One command per process: parse a YAML config, dispatch to the owning
module, and emit CSV/JSON artifacts plus a manifest.  Exit codes: 0 on
success, 2 for configuration errors, 3 for numerical failures.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import time

import numpy as np

from .config import COMMANDS, ConfigError, RunConfig, load_config
from .convergence import control_convergence, value_convergence
from .discrete import expected_liquidation_time_discrete, solve_discrete
from .extensions import (
    RegimeParams,
    TwoExchangeParams,
    regime_fluid_fixed_point,
    two_exchange_expansion,
    two_exchange_patch,
)
from .fluid import exp_fluid_infinite, fluid_solution, power_fluid
from .intensity import PowerLawIntensity
from .numerics import NonFiniteStateError
from .reports import write_csv, write_json, write_manifest, write_schema_sidecar
from .simulate import (
    ConstantSpreadPolicy,
    execution_curve_ode,
    fluid_spread_policy,
    optimal_policy,
    simulate_policy,
)


def _emit_table(cfg: RunConfig, name: str, columns: dict, docs: dict,
                artifacts: list, extra_json: dict | None = None) -> None:
    base = os.path.join(cfg.out_dir, name)
    if cfg.formats in ("csv", "both"):
        write_csv(base + ".csv", columns)
        write_schema_sidecar(base + ".schema.json", name, docs)
        artifacts += [base + ".csv", base + ".schema.json"]
    if cfg.formats in ("json", "both"):
        payload = {"table": name, "columns": {k: np.asarray(v) for k, v in columns.items()}}
        if extra_json:
            payload.update(extra_json)
        write_json(base + ".json", payload)
        artifacts.append(base + ".json")


def _cmd_solve(cfg: RunConfig, artifacts: list) -> None:
    sec = cfg.section
    sol = solve_discrete(cfg.model, cfg.market, sec["delta"], sec["n_max"])
    n = np.arange(sol.n_max + 1)
    columns = {
        "n": n,
        "x": n * sol.delta,
        "coefficient": sol.coefficients,
        "value": sol.values,
        "spread": sol.spreads,
    }
    docs = {
        "n": "inventory level (units of delta)",
        "x": "physical inventory n*delta",
        "coefficient": "value coefficient (c_n, d_n, or stationary value)",
        "value": "value at the configured horizon",
        "spread": "optimal spread at the configured horizon",
    }
    if isinstance(cfg.model, PowerLawIntensity) and cfg.market.infinite_horizon:
        lam_eff = cfg.model.lam * sol.delta ** (cfg.model.alpha - 1.0)
        columns["expected_liquidation_time"] = expected_liquidation_time_discrete(
            sol.coefficients, lam_eff, cfg.model.alpha, cfg.market.r)
        docs["expected_liquidation_time"] = "mean time to sell all n units optimally"
    _emit_table(cfg, "solve", columns, docs, artifacts,
                extra_json={"non_unique_risk": sol.non_unique_risk})


def _cmd_fluid(cfg: RunConfig, artifacts: list) -> None:
    fl = fluid_solution(cfg.model, cfg.market)
    xs = cfg.section["x_grid"]
    values = np.array([fl.value(x) for x in xs])
    spreads = np.array([fl.spread(x) for x in xs])
    _emit_table(cfg, "fluid", {"x": xs, "value": values, "spread": spreads},
                {"x": "inventory", "value": "fluid-limit value",
                 "spread": "fluid-limit optimal spread"}, artifacts)


def _cmd_converge(cfg: RunConfig, artifacts: list) -> None:
    sec = cfg.section
    report = value_convergence(cfg.model, cfg.market, sec["x_probe"],
                               sec["delta0"], sec["k_max"])
    spread_table = control_convergence(cfg.model, cfg.market, sec["x_probe"],
                                       report.deltas)
    columns = {
        "delta": report.deltas,
        "value": report.values,
        "ratio": report.ratios,
        "spread": report.spreads,
        "spread_err": spread_table.pointwise_err,
    }
    docs = {
        "delta": "trading unit",
        "value": "discrete value at the probe inventory",
        "ratio": "discrete value / fluid value",
        "spread": "discrete optimal spread at the probe",
        "spread_err": "|discrete spread - fluid spread|",
    }
    extra = {
        "x_probe": report.x_probe,
        "fluid_value": report.fluid_value,
        "fluid_spread": report.fluid_spread,
        "monotone_ok": report.monotone_ok,
        "rate_estimate": report.rate_estimate,
        "cell_averaged_spread": spread_table.averaged,
        "cell_averaged_err": spread_table.averaged_err,
    }
    _emit_table(cfg, "converge", columns, docs, artifacts, extra_json=extra)


def _build_policy(cfg: RunConfig):
    sec = cfg.section
    kind = sec["policy"]
    if kind == "optimal":
        return optimal_policy(cfg.model, cfg.market, sec["delta"], sec["n_units"])
    if kind == "fluid":
        return fluid_spread_policy(cfg.model, cfg.market, sec["delta"], sec["n_units"])
    return ConstantSpreadPolicy(sec["constant_spread"])


def _cmd_simulate(cfg: RunConfig, artifacts: list) -> None:
    sec = cfg.section
    policy = _build_policy(cfg)
    curve_times = None
    if sec["curve_points"] > 0:
        if cfg.market.infinite_horizon:
            raise ConfigError("simulate.curve_points: inventory curves need a "
                              "finite horizon")
        cp = sec["curve_points"]
        curve_times = np.linspace(0.0, cfg.market.horizon, cp + 2)[1:-1]
    result = simulate_policy(cfg.model, cfg.market, sec["n_units"], sec["delta"],
                             policy, sec["n_paths"], cfg.seed,
                             threads=cfg.threads, curve_times=curve_times,
                             keep_paths=sec["dump_paths"], method=sec["method"])
    if sec["dump_paths"]:
        stats, paths = result
    else:
        stats, paths = result, None

    payload = {
        "n_paths": stats.n_paths,
        "mean_revenue": stats.mean_revenue,
        "std_error": stats.std_error,
        "liquidation_fraction": stats.liquidation_fraction,
        "seed": cfg.seed,
        "threads": cfg.threads,
    }
    path = os.path.join(cfg.out_dir, "ensemble.json")
    write_json(path, payload)
    artifacts.append(path)

    if curve_times is not None:
        _emit_table(cfg, "curve", {
            "time": stats.curve_times,
            "mean_inventory": stats.mean_inventory_curve,
            "std_error": stats.curve_std_error,
        }, {
            "time": "observation time",
            "mean_inventory": "ensemble mean of remaining inventory",
            "std_error": "standard error of the mean inventory",
        }, artifacts)

    if paths is not None:
        pid, idx, times, spreads, cash = [], [], [], [], []
        for p in paths:
            for i, (t, s) in enumerate(zip(p.fill_times, p.fill_spreads)):
                pid.append(p.path_id)
                idx.append(i)
                times.append(t)
                spreads.append(s)
                cash.append(math.exp(-cfg.market.r * t) * s * sec["delta"])
        _emit_table(cfg, "paths", {
            "path_id": np.asarray(pid), "fill_index": np.asarray(idx),
            "time": np.asarray(times), "spread": np.asarray(spreads),
            "discounted_cash": np.asarray(cash),
        }, {
            "path_id": "simulation path index",
            "fill_index": "fill counter within the path",
            "time": "fill time",
            "spread": "spread earned at the fill",
            "discounted_cash": "exp(-r t) * spread * delta",
        }, artifacts)


def _cmd_curves(cfg: RunConfig, artifacts: list) -> None:
    sec = cfg.section
    curve = execution_curve_ode(cfg.model, cfg.market, sec["n_units"],
                                sec["t_grid"], step_count=sec["step_count"])
    x0 = float(sec["n_units"])
    times = curve.times
    if cfg.market.infinite_horizon:
        baseline = np.full_like(times, math.nan)
    else:
        baseline = x0 * (1.0 - times / cfg.market.horizon)
    try:
        fl = fluid_solution(cfg.model, cfg.market)
        fluid_curve = np.array([fl.trade_curve(t, x0) for t in times])
    except ValueError:
        fluid_curve = np.full_like(times, math.nan)
    _emit_table(cfg, "curves", {
        "time": times,
        "mean_inventory": curve.inventory[curve.initial_units],
        "trading_rate": curve.trading_rate,
        "baseline_linear": baseline,
        "fluid_curve": fluid_curve,
    }, {
        "time": "time since start",
        "mean_inventory": "average remaining inventory E(x0, t)",
        "trading_rate": "-dE/dt, the average fill rate",
        "baseline_linear": "constant-rate reference x0*(1 - t/T)",
        "fluid_curve": "deterministic fluid-limit inventory",
    }, artifacts)


def _cmd_regimes(cfg: RunConfig, artifacts: list) -> None:
    sec = cfg.section
    thetas = sec["theta_grid"]
    c0s, c1s = [], []
    for th in thetas:
        params = RegimeParams(lambda0=sec["lambda0"], lambda1=sec["lambda1"],
                              theta0=float(th), theta1=float(th),
                              r=sec["r"], alpha=sec["alpha"])
        c0, c1 = regime_fluid_fixed_point(params)
        c0s.append(c0)
        c1s.append(c1)
    _emit_table(cfg, "regimes", {
        "theta": thetas, "c0": np.asarray(c0s), "c1": np.asarray(c1s),
    }, {
        "theta": "symmetric switching rate",
        "c0": "active-regime value constant",
        "c1": "slow-regime value constant",
    }, artifacts)


def _cmd_exchanges(cfg: RunConfig, artifacts: list) -> None:
    sec = cfg.section
    eps = sec.get("eps")
    lam1 = sec["lambda1"] * eps if eps is not None else sec["lambda1"]
    params = TwoExchangeParams(lambda0=sec["lambda0"], lambda1=lam1,
                               delta_block=sec["delta_block"], alpha=sec["alpha"],
                               r=sec["r"], x_max=sec["x_max"],
                               grid_step=sec["grid_step"])
    sol = two_exchange_patch(params)
    columns = {
        "x": sol.x_grid,
        "value": sol.value,
        "value_single": params.single_exchange_value(sol.x_grid),
        "spread_continuous": sol.spread_continuous,
        "spread_block": sol.spread_block,
    }
    docs = {
        "x": "inventory",
        "value": "two-exchange stationary value",
        "value_single": "single-exchange reference value",
        "spread_continuous": "optimal spread on the continuous venue",
        "spread_block": "optimal spread on the block venue",
    }
    if eps is not None:
        base = TwoExchangeParams(lambda0=sec["lambda0"], lambda1=sec["lambda1"],
                                 delta_block=sec["delta_block"], alpha=sec["alpha"],
                                 r=sec["r"], x_max=sec["x_max"],
                                 grid_step=sec["grid_step"])
        expansion = two_exchange_expansion(base, eps)
        columns["value_expansion"] = np.array([expansion.value(x) for x in sol.x_grid])
        docs["value_expansion"] = "first-order weak-block-venue expansion"
    _emit_table(cfg, "exchanges", columns, docs, artifacts,
                extra_json={"x_seed": sol.x_seed})


def _cmd_figures(cfg: RunConfig, artifacts: list) -> None:
    # figure 1: fluid spreads for three depth models normalized to rate 1 at s = 1
    xs = cfg.section["x_grid"]
    r = 0.1
    curves = {
        "spread_power_alpha2": [power_fluid(x, math.inf, 1.0, 2.0, r)[1] for x in xs],
        "spread_power_alpha3": [power_fluid(x, math.inf, 1.0, 3.0, r)[1] for x in xs],
        "spread_exp": [exp_fluid_infinite(x, math.e, 1.0, r)[1] for x in xs],
    }
    columns = {"x": xs}
    columns.update({k: np.asarray(v) for k, v in curves.items()})
    _emit_table(cfg, "figure1", columns, {
        "x": "inventory",
        "spread_power_alpha2": "fluid spread, rate s**-2",
        "spread_power_alpha3": "fluid spread, rate s**-3",
        "spread_exp": "fluid spread, rate e**(1-s)",
    }, artifacts)


_HANDLERS = {
    "solve": _cmd_solve,
    "fluid": _cmd_fluid,
    "converge": _cmd_converge,
    "simulate": _cmd_simulate,
    "curves": _cmd_curves,
    "regimes": _cmd_regimes,
    "exchanges": _cmd_exchanges,
    "figures": _cmd_figures,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lobliq",
        description="Optimal limit-order liquidation: solvers, fluid limits, "
                    "convergence reports, and Monte Carlo.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=f"run the {name} command")
        p.add_argument("--config", required=True, help="YAML config file")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--seed", type=int, help="root RNG seed (overrides config)")
        p.add_argument("--threads", type=int, help="worker threads (overrides config)")
        p.add_argument("--format", choices=("csv", "json", "both"),
                       help="artifact formats (overrides config)")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    started = time.monotonic()
    try:
        cfg = load_config(args.config, args.command)
        if args.out is not None:
            cfg.out_dir = args.out
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be nonnegative")
            cfg.seed = args.seed
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigError("--threads must be >= 1")
            cfg.threads = args.threads
        if args.format is not None:
            cfg.formats = args.format
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    artifacts: list[str] = []
    try:
        os.makedirs(cfg.out_dir, exist_ok=True)
        _HANDLERS[cfg.command](cfg, artifacts)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ArithmeticError, NonFiniteStateError, ValueError) as exc:
        print(f"numerical failure in {cfg.command!r}: {exc}", file=sys.stderr)
        return 3

    write_manifest(cfg.out_dir, cfg.command, cfg.raw, cfg.seed,
                   time.monotonic() - started, artifacts)
    return 0


if __name__ == "__main__":
    sys.exit(main())
