"""Command-line interface.

Commands: ``security``, ``optimize``, ``bribery``, ``risk``, ``simulate``.
Settings come from an optional YAML/JSON ``--config`` file (global keys plus one
section per command, see ``data/config_schema.json``); flags override file
values. Exit codes: 0 success, 2 invalid input, 3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from fractions import Fraction
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .allocation import equalize_iterative, equilibrium_check, maximin_allocate, maximin_objective
from .bribery import bribery_cost_single, min_bribery_cost_ssp
from .errors import InfeasibleAllocationError, ModelError
from .io import InputError, parse_number, read_allocation_csv, read_stakes_csv, write_json, write_matrix_csv
from .model import (
    AllocationMatrix,
    AttackPlan,
    EconomicParams,
    ModelKind,
    StakeTable,
    attack_profitable,
    validate_allocation,
)
from .risk import (
    CovModel,
    ReturnMatrix,
    correlation_matrix,
    format_correlation_csv,
    format_correlation_json,
    fsd_check,
    ingest_prices,
    volatility_shock,
)
from .security import min_attack_cost, strong_security, tightened_threshold, validator_bound, weak_security
from .simulate import (
    SimulationConfig,
    compare_reward_schemes,
    resolve_seed,
    run_trials,
    shock_experiment,
    summarize,
    write_outputs,
)

log = logging.getLogger("multissp")

EXIT_OK, EXIT_INPUT, EXIT_INTERNAL = 0, 2, 3


def _number(x):
    return parse_number(x)


def _int(x):
    value = parse_number(x)
    if isinstance(value, Fraction) or (isinstance(value, float) and not value.is_integer()):
        raise InputError(f"expected an integer, got {x!r}")
    return int(value)


def _bool(x):
    if isinstance(x, bool):
        return x
    text = str(x).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise InputError(f"expected a boolean, got {x!r}")


def _str(x):
    return str(x)


def _numbers(x):
    if isinstance(x, str):
        x = [part for part in x.replace(";", ",").split(",") if part.strip()]
    return [parse_number(v) for v in x]


def _matrix_or_path(x):
    if isinstance(x, (list, tuple)):
        return [[float(parse_number(v)) for v in row] for row in x]
    return str(x)


def _stakes_or_path(x):
    if isinstance(x, (list, tuple)):
        return [float(parse_number(v)) for v in x]
    return str(x)


def _bins(x):
    if not isinstance(x, dict):
        raise InputError("bins must map metric names to edge lists")
    return {str(k): tuple(float(parse_number(v)) for v in edges) for k, edges in x.items()}


GLOBAL_KEYS = {"seed": _int, "out": _str, "format": _str, "plot": _bool}

PARAM_KEYS = {"pi": _number, "theta": _number, "r": _number, "R": _number}

COMMAND_KEYS = {
    "security": {"allocation": _matrix_or_path, "stakes": _stakes_or_path, "attack": _matrix_or_path,
                 "n": _int, **PARAM_KEYS},
    "optimize": {"allocation": _matrix_or_path, "stakes": _stakes_or_path, "k": _int, "probes": _int,
                 "max_iters": _int, "tol": _number, **PARAM_KEYS},
    "bribery": {"allocation": _matrix_or_path, "stakes": _stakes_or_path, **PARAM_KEYS},
    "risk": {"prices": _str, "window": _int, "shock_asset": _str, "shock_factor": _number, "theta": _number,
             "holdings": None},
    "simulate": {
        "n_operators": _int, "n_ssps": _int, "stake_low": _number, "stake_high": _number,
        "concentration": _numbers, "reward_mode": _str, "rate_low": _number, "rate_high": _number,
        "reward_low": _number, "reward_high": _number, "pi_low": _number, "pi_high": _number,
        "theta": _number, "n_trials": _int, "prices": _numbers, "bins": _bins, "workers": _int,
        "compare_rewards": _bool, "shock_factor": _number, "shock_ssp": _int, "shock_vol": _number,
        "shock_corr": _number,
    },
}

SIM_CONFIG_KEYS = {
    "n_operators", "n_ssps", "stake_low", "stake_high", "concentration", "reward_mode", "rate_low",
    "rate_high", "reward_low", "reward_high", "pi_low", "pi_high", "theta", "n_trials", "prices", "bins",
}


def _holdings(x):
    if not isinstance(x, dict):
        raise InputError("holdings must map asset ids to token amounts")
    return {str(k): float(parse_number(v)) for k, v in x.items()}


COMMAND_KEYS["risk"]["holdings"] = _holdings


def load_config(path, command):
    """Read the config file and return ``(global settings, command section)``, both validated."""
    if path is None:
        return {}, {}
    path = Path(path)
    if not path.is_file():
        raise InputError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as exc:
        raise InputError(f"{path}: cannot parse config: {exc}") from None
    if not isinstance(raw, dict):
        raise InputError(f"{path}: top level must be a mapping")
    allowed = set(GLOBAL_KEYS) | set(COMMAND_KEYS)
    unknown = sorted(set(raw) - allowed)
    if unknown:
        raise InputError(f"{path}: unknown keys {unknown}")
    glob = {k: GLOBAL_KEYS[k](v) for k, v in raw.items() if k in GLOBAL_KEYS and v is not None}
    section = raw.get(command) or {}
    if not isinstance(section, dict):
        raise InputError(f"{path}: section {command!r} must be a mapping")
    keys = COMMAND_KEYS[command]
    unknown = sorted(set(section) - set(keys))
    if unknown:
        raise InputError(f"{path}: unknown keys in {command!r}: {unknown}")
    return glob, {k: keys[k](v) for k, v in section.items() if v is not None}


def merged_settings(args, command):
    glob, section = load_config(args.config, command)
    settings = {"format": "csv", "plot": False, "out": "."} | glob | section
    for key, conv in (GLOBAL_KEYS | COMMAND_KEYS[command]).items():
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = conv(value)
    if settings["format"] not in ("csv", "json"):
        raise InputError(f"--format must be csv or json, got {settings['format']!r}")
    return settings


def _load_allocation(value):
    if value is None:
        raise InputError("an allocation is required (--allocation or config)")
    if isinstance(value, str):
        return read_allocation_csv(value)
    alloc = AllocationMatrix(np.array(value, dtype=float))
    return alloc, [str(i) for i in range(alloc.n)], [str(j) for j in range(alloc.k)]


def _load_stakes(value, alloc=None):
    """Stake values and validator ids (``None`` when the source has no ids)."""
    if value is None:
        if alloc is None:
            raise InputError("stakes are required (--stakes or config)")
        return alloc.row_sums(), None
    if isinstance(value, str):
        stakes, ids = read_stakes_csv(value)
        return stakes.stakes, ids
    return np.array(value, dtype=float), None


def _stake_table(values):
    try:
        return StakeTable(values)
    except ValueError as exc:
        raise InputError(str(exc)) from None


def _params(s, delta=None, need_pi=True):
    if need_pi and "pi" not in s:
        raise InputError("attack profit --pi is required")
    if "theta" not in s:
        raise InputError("attack threshold --theta is required")
    r, total = s.get("r"), s.get("R")
    if r is None and total is not None and delta:
        r = total / delta
    try:
        params = EconomicParams(pi=s.get("pi", 0), theta=s["theta"], r=r, R=total)
        if delta is not None and (params.r is not None or params.R is not None):
            params = params.with_total_stake(delta)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    return params


def _check_feasible(alloc, stakes):
    report = validate_allocation(alloc, stakes)
    if not report.feasible:
        raise InfeasibleAllocationError(report)
    return report


def _out_dir(settings) -> Path:
    out = Path(settings["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _plots():
    try:
        from . import plots
    except ImportError as exc:  # pragma: no cover - depends on the environment
        raise InputError(f"--plot needs matplotlib ({exc})") from None
    return plots


# ------------------------------------------------------------------ commands


def cmd_security(settings) -> dict:
    alloc, vids, sids = _load_allocation(settings.get("allocation"))
    stakes = _stake_table(_load_stakes(settings.get("stakes"), alloc)[0])
    feasibility = _check_feasible(alloc, stakes)
    delta = stakes.total
    params = _params(settings, delta)
    n = settings.get("n", stakes.n)
    cols = alloc.column_sums()

    costs = {}
    for model in (ModelKind.isolated(), ModelKind.shared(), ModelKind.single()):
        costs[model.variant] = min_attack_cost(alloc, params, model).to_dict()

    payload = {
        "feasibility": feasibility.to_dict(),
        "n_validators": stakes.n,
        "n_ssps": alloc.k,
        "validators": vids,
        "ssps": sids,
        "delta": delta,
        "ssp_stake": dict(zip(sids, cols.tolist())),
        "params": {"pi": params.pi, "theta": params.theta, "r": params.r, "R": params.R},
        "weak_security": weak_security(delta, params).to_dict(),
        "tightened_threshold": tightened_threshold(alloc, params),
        "isolated_secure": bool(params.pi < tightened_threshold(alloc, params)),
        "min_attack_cost": costs,
        "ordering_holds": costs["shared"]["min_cost"] >= costs["single"]["min_cost"] >= costs["isolated"]["min_cost"],
    }
    if params.r is not None:
        payload["validator_bound"] = validator_bound(delta, params).to_dict()
    if settings.get("attack") is not None:
        plan_value = settings["attack"]
        if isinstance(plan_value, str):
            plan_alloc, _, _ = read_allocation_csv(plan_value)
            alpha = AttackPlan(plan_alloc.entries)
        else:
            alpha = AttackPlan(np.array(plan_value, dtype=float))
        try:
            payload["profitability"] = {
                m.variant: attack_profitable(alpha, alloc, params, m).to_dict()
                for m in (ModelKind.isolated(), ModelKind.shared(), ModelKind.single())
            }
        except ValueError as exc:
            raise InputError(f"attack plan: {exc}") from None
        committed = alpha.total
        payload["attack_committed"] = committed
        payload["attack_source"] = "input"
    else:
        committed = params.theta * delta
        payload["attack_committed"] = float(committed)
        payload["attack_source"] = "capture threshold theta*delta"
    if params.R is not None:
        payload["strong_security"] = strong_security(committed, params, n).to_dict()

    out = _out_dir(settings)
    write_json(out / "security.json", payload)
    if settings["plot"]:
        plots = _plots()
        plots.attack_costs({k: v["min_cost"] for k, v in costs.items()}, out / "attack_costs.png")
    return payload


def cmd_optimize(settings) -> dict:
    alloc0 = vids = sids = None
    if settings.get("allocation") is not None:
        alloc0, vids, sids = _load_allocation(settings["allocation"])
    values, stake_ids = _load_stakes(settings.get("stakes"), alloc0)
    stakes = _stake_table(values)
    if alloc0 is not None:
        _check_feasible(alloc0, stakes)
    k = settings.get("k", alloc0.k if alloc0 is not None else None)
    if k is None or k < 1:
        raise InputError("number of SSPs --k must be >= 1")
    if alloc0 is not None and k != alloc0.k:
        raise InputError(f"--k {k} disagrees with the allocation's {alloc0.k} SSPs")
    vids = vids or stake_ids or [str(i) for i in range(stakes.n)]
    sids = sids or [str(j) for j in range(k)]
    params = _params(settings | {"theta": settings.get("theta", Fraction(1, 3))}, stakes.total, need_pi=False)
    if params.r is None:
        params = replace(params, r=0, R=0)
    probes = settings.get("probes", 100)
    seed = settings.get("seed", 0)

    best = maximin_allocate(stakes, k)
    payload = {
        "k": k,
        "delta": stakes.total,
        "objective": float(maximin_objective(stakes, k, params.theta)),
        "equilibrium": equilibrium_check(best, stakes, params, probes, seed=seed).to_dict(),
    }
    out = _out_dir(settings)
    _write_table(out, "allocation", best.entries, vids, sids, settings["format"])
    if alloc0 is not None:
        eq = equalize_iterative(alloc0, settings.get("max_iters"), settings.get("tol"), stakes)
        payload["input"] = equilibrium_check(alloc0, stakes, params, probes, seed=seed).to_dict()
        payload["iterative"] = {
            "objective": float(params.theta * eq.column_sums().min()),
            "column_stakes": eq.column_sums().tolist(),
            "equilibrium": equilibrium_check(eq, stakes, params, probes, seed=seed).to_dict(),
        }
        _write_table(out, "allocation_iterative", eq.entries, vids, sids, settings["format"])
    write_json(out / "equilibrium.json", payload)
    if settings["plot"] and alloc0 is not None:
        _plots().column_stakes(alloc0.column_sums(), best.column_sums(), out / "column_stakes.png")
    return payload


def _write_table(out, name, matrix, row_ids, col_ids, fmt):
    if fmt == "json":
        write_json(out / f"{name}.json", {"validators": row_ids, "ssps": col_ids, "entries": np.asarray(matrix).tolist()})
    else:
        write_matrix_csv(out / f"{name}.csv", matrix, row_ids, col_ids)


def cmd_bribery(settings) -> dict:
    alloc, vids, sids = _load_allocation(settings.get("allocation"))
    stakes = _stake_table(_load_stakes(settings.get("stakes"), alloc)[0])
    _check_feasible(alloc, stakes)
    params = _params(settings | {"pi": settings.get("pi", 0)}, stakes.total)
    params.require_rate()
    cols = alloc.column_sums()
    plans = []
    for j in range(alloc.k):
        if cols[j] == 0:
            plans.append({"ssp": j, "ssp_id": sids[j], "degenerate": True, "coalition": [],
                          "lambda_star": None, "coalition_stake": 0.0, "target": 0.0, "cost": 0.0})
            continue
        plan = min_bribery_cost_ssp(j, alloc, stakes, params).to_dict()
        plan["coalition"] = [vids[i] for i in plan["coalition"]]
        plans.append({"ssp_id": sids[j], "degenerate": False} | plan)
    weakest = min(range(alloc.k), key=lambda j: (plans[j]["cost"], j))
    c_single = bribery_cost_single(stakes, params)
    payload = {
        "c_multi": plans[weakest]["cost"],
        "weakest_ssp": sids[weakest],
        "c_single": c_single,
        "multi_below_single": plans[weakest]["cost"] < c_single,
        "degenerate_ssps": [sids[j] for j in range(alloc.k) if cols[j] == 0],
        "plans": plans,
    }
    out = _out_dir(settings)
    write_json(out / "bribery.json", payload)
    columns = ("ssp_id", "degenerate", "coalition", "lambda_star", "coalition_stake", "target", "cost")
    if settings["format"] == "json":
        write_json(out / "bribery_plans.json", plans)
    else:
        import csv

        with (out / "bribery_plans.csv").open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(columns)
            for p in plans:
                writer.writerow([
                    ";".join(p["coalition"]) if c == "coalition" else ("" if p[c] is None else
                    (int(p[c]) if isinstance(p[c], bool) else repr(p[c]) if isinstance(p[c], float) else p[c]))
                    for c in columns
                ])
    if settings["plot"]:
        _plots().bribery_costs(plans, c_single, out / "bribery.png")
    return payload


def cmd_risk(settings) -> dict:
    if "prices" not in settings:
        raise InputError("a price CSV is required (--prices)")
    path = Path(settings["prices"])
    if not path.is_file():
        raise InputError(f"file not found: {path}")
    series = ingest_prices(path)
    window = settings.get("window", 366)
    rm = ReturnMatrix.from_series(series, window=window)
    corr = correlation_matrix(rm)
    cov = CovModel.from_returns(rm)
    out = _out_dir(settings)
    (out / "correlation.csv").write_text(format_correlation_csv(rm.assets, corr), encoding="utf-8")
    (out / "correlation.json").write_text(format_correlation_json(rm.assets, corr), encoding="utf-8")
    write_matrix_csv(out / "covariance.csv", cov.covariances, rm.assets, rm.assets, corner="Asset")

    theta = settings.get("theta", Fraction(1, 3))
    holdings = settings.get("holdings") or {}
    # security samples: holding times price over the window (default holding worth 1 USD at the start)
    dates = sorted(set.intersection(*(set(s.dates) for s in series)))[-window:]
    samples = {}
    for s in series:
        index = dict(zip(s.dates, s.prices))
        prices = np.array([index[d] for d in dates])
        units = holdings.get(s.asset, 1.0 / prices[0])
        samples[s.asset] = units * prices
    fsd = []
    for a in rm.assets:
        for b in rm.assets:
            if a != b:
                fsd.append({"weaker": a, "stronger": b} | fsd_check(samples[a], samples[b], theta).to_dict())
    payload = {
        "assets": list(rm.assets),
        "n_returns": int(rm.returns.shape[0]),
        "first_date": rm.dates[0].isoformat(),
        "last_date": rm.dates[-1].isoformat(),
        "volatility": dict(zip(rm.assets, cov.volatilities.tolist())),
        "fsd": fsd,
    }
    if settings.get("shock_asset") is not None:
        factor = settings.get("shock_factor", 3)
        try:
            shocked = volatility_shock(cov, settings["shock_asset"], factor)
        except KeyError as exc:
            raise InputError(str(exc.args[0])) from None
        write_matrix_csv(out / "covariance_shocked.csv", shocked.covariances, rm.assets, rm.assets, corner="Asset")
        payload["shock"] = {
            "asset": settings["shock_asset"],
            "factor": float(factor),
            "volatility": dict(zip(rm.assets, shocked.volatilities.tolist())),
            "correlation_unchanged": bool(np.allclose(shocked.correlation(), cov.correlation(), equal_nan=True)),
        }
    write_json(out / "risk.json", payload)
    if settings["plot"]:
        _plots().correlation_heatmap(rm.assets, corr, out / "correlation.png")
    return payload


def cmd_simulate(settings) -> dict:
    sim_kwargs = {k: v for k, v in settings.items() if k in SIM_CONFIG_KEYS}
    for key in ("concentration", "prices"):
        if key in sim_kwargs:
            sim_kwargs[key] = tuple(float(x) for x in sim_kwargs[key])
    if "bins" in sim_kwargs:
        from .simulate import DEFAULT_BINS

        sim_kwargs["bins"] = dict(DEFAULT_BINS) | sim_kwargs["bins"]
    try:
        cfg = resolve_seed(SimulationConfig(seed=settings.get("seed"), **sim_kwargs))
    except ValueError as exc:
        raise InputError(str(exc)) from None
    results = run_trials(cfg, workers=settings.get("workers"))
    rewards = compare_reward_schemes(cfg) if settings.get("compare_rewards", True) else None
    report = summarize(results, rewards)
    if report.summary["ordering_violations"]:
        raise AssertionError(f"cost ordering violated in {report.summary['ordering_violations']} trials")
    if settings.get("shock_factor") is not None:
        from .simulate import default_price_model

        cov = default_price_model(cfg.n_ssps, settings.get("shock_vol", 0.6), settings.get("shock_corr", 0.75))
        outcome = shock_experiment(cfg, float(settings["shock_factor"]), settings.get("shock_ssp", 0), cov)
        report.summary["shock"] = outcome.to_dict()
    out = _out_dir(settings)
    paths = write_outputs(results, report, out)
    if settings["plot"]:
        plots = _plots()
        models = report.summary["models"]
        plots.attack_costs({m: models[m]["min_attack_cost"]["mean"] for m in models}, out / "attack_costs.png",
                           {m: models[m]["min_attack_cost"]["std"] for m in models})
        plots.margin_histograms(report.histograms, out / "margins.png")
        if rewards is not None:
            plots.reward_schemes(report.summary["reward_schemes"], report.histograms, out / "reward_schemes.png")
        if "shock" in report.summary:
            plots.margin_shift(report.summary["shock"]["margin_shift"], out / "shock_margin_shift.png")
    return {"paths": {k: str(v) for k, v in paths.items()}, "seed": cfg.seed,
            "ordering_violations": report.summary["ordering_violations"]}


COMMANDS = {
    "security": cmd_security,
    "optimize": cmd_optimize,
    "bribery": cmd_bribery,
    "risk": cmd_risk,
    "simulate": cmd_simulate,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML or JSON config file")
    common.add_argument("--out", help="output directory (default: current directory)")
    common.add_argument("--seed", help="random seed")
    common.add_argument("--format", choices=("csv", "json"), help="format of tabular outputs")
    common.add_argument("--plot", action="store_const", const=True, help="also render PNG figures")
    common.add_argument("-v", "--verbose", action="store_true")

    params = argparse.ArgumentParser(add_help=False)
    params.add_argument("--pi", help="attack profit (USD)")
    params.add_argument("--theta", help="attack threshold, e.g. 1/3")
    params.add_argument("--r", help="reward rate")
    params.add_argument("--R", help="total reward (USD)")

    parser = argparse.ArgumentParser(prog="multissp", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("security", parents=[common, params], help="security verdicts and attack costs")
    p.add_argument("--allocation", help="allocation matrix CSV")
    p.add_argument("--stakes", help="validator,stake CSV (default: allocation row sums)")
    p.add_argument("--attack", help="attack plan CSV in allocation layout")
    p.add_argument("--n", help="validator count for the strong-security average")

    p = sub.add_parser("optimize", parents=[common, params], help="maximin allocation and equilibrium check")
    p.add_argument("--allocation", help="starting allocation CSV (optional)")
    p.add_argument("--stakes", help="validator,stake CSV")
    p.add_argument("--k", help="number of SSPs")
    p.add_argument("--probes", help="random deviations tried by the equilibrium check")
    p.add_argument("--max-iters", dest="max_iters")
    p.add_argument("--tol")

    p = sub.add_parser("bribery", parents=[common, params], help="cheapest bribery coalitions")
    p.add_argument("--allocation", help="allocation matrix CSV")
    p.add_argument("--stakes", help="validator,stake CSV (default: allocation row sums)")

    p = sub.add_parser("risk", parents=[common], help="correlations, shocks and dominance from prices")
    p.add_argument("--prices", help="date,asset,close CSV")
    p.add_argument("--window", help="number of most recent common dates used (default 366)")
    p.add_argument("--shock-asset", dest="shock_asset")
    p.add_argument("--shock-factor", dest="shock_factor")
    p.add_argument("--theta")

    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo comparison of the architectures")
    p.add_argument("--trials", dest="n_trials")
    p.add_argument("--operators", dest="n_operators")
    p.add_argument("--ssps", dest="n_ssps")
    p.add_argument("--theta")
    p.add_argument("--reward-mode", dest="reward_mode", choices=("rate", "amount"))
    p.add_argument("--workers")
    p.add_argument("--no-rewards", dest="compare_rewards", action="store_const", const=False,
                   help="skip the reward-scheme comparison")
    p.add_argument("--shock-factor", dest="shock_factor", help="also run a volatility-shock experiment")
    p.add_argument("--shock-ssp", dest="shock_ssp")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        settings = merged_settings(args, args.command)
        result = COMMANDS[args.command](settings)
    except InfeasibleAllocationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ModelError, ValueError, IndexError, KeyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except AssertionError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    log.info(json.dumps(result, default=str)[:2000])
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
