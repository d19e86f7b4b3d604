"""Command-line front end: ``coupledar {simulate,fit,correlate,scenario}``.

Settings come from built-in defaults, then an optional TOML file
(``--config``), then command-line flags; flags win. Every artifact embeds
the resolved configuration. Exit codes: 0 success, 2 invalid input or
configuration, 3 convergence failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
import warnings
from pathlib import Path

import numpy as np
import tomli

from . import __version__
from .correlation import StationaryMeans, rho_tilde, sign_region, stationary_means_from_panel
from .diagnostics import gelman_rubin
from .exceptions import CoupledARError, ConvergenceError, InvalidHyperparameterError
from .inference import PosteriorDraws, SamplerConfig, sample, write_diagnostics
from .ingest import HEADER as LONG_HEADER
from .ingest import load_panel
from .model import (
    DEFAULT_INTENSITY_CAP,
    HyperParams,
    SimConfig,
    draw_group_effects,
    read_panel_csv,
    save_panel,
    simulate_panel,
)
from .posterior import PriorSpec
from .simstudy import BUILTIN, RHAT_GATE, Scenario, run_scenario

logger = logging.getLogger("coupledar")

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NOT_CONVERGED = 3

CORRELATION_NAMES = ("mu_omega", "mu_lambda", "mu_psi", "mu_delta")


class UsageError(Exception):
    pass


def _load_toml(path):
    if path is None:
        return {}
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"config file {path} does not exist")
    try:
        return tomli.loads(path.read_text())
    except tomli.TOMLDecodeError as exc:
        raise UsageError(f"{path}: {exc}") from None


def _pick(flag, table, key, default):
    if flag is not None:
        return flag
    return table.get(key, default)


def _sampler(args, conf, default_preset):
    preset = "fast" if args.fast else "full" if args.full else conf.get("preset", default_preset)
    seed = args.seed if args.seed is not None else conf.get("seed", 0)
    table = dict(conf.get("sampler", {}))
    table.pop("seed", None)
    if preset == "fast":
        cfg = SamplerConfig.fast(seed=seed)
    elif preset == "full":
        cfg = SamplerConfig.full(seed=seed)
    elif preset == "default":
        cfg = SamplerConfig(seed=seed)
    else:
        raise UsageError(f"unknown sampler preset {preset!r}")
    if args.chains is not None:
        table["n_chains"] = args.chains
    try:
        return preset, cfg.replace(**table)
    except TypeError as exc:
        raise UsageError(f"[sampler]: {exc}") from None


def _prior(conf):
    try:
        return PriorSpec(**conf.get("prior", {}))
    except TypeError as exc:
        raise UsageError(f"[prior]: {exc}") from None


def _write_json(path, doc):
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def _read_panel(path):
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"panel file {path} does not exist")
    with path.open() as fh:
        first = fh.readline().strip().lower()
    if tuple(h.strip() for h in first.split(",")) == LONG_HEADER:
        panel, track = load_panel(path)
        return panel, {"format": "long", "indicator_violations": [list(v) for v in track.violations],
                       **track.metadata}
    return read_panel_csv(path), {"format": "panel"}


def _out_dir(args, conf):
    out = Path(_pick(args.out, conf, "out", "out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _workers(args, conf):
    value = _pick(args.workers, conf, "workers", None)
    if value is None:
        return os.cpu_count() or 1
    return int(value)


def cmd_simulate(args, conf):
    table = conf.get("simulate", {})
    scenario_id = _pick(args.scenario, table, "scenario", "S1")
    if scenario_id not in BUILTIN:
        raise UsageError(f"unknown scenario {scenario_id!r}")
    base = Scenario.builtin(scenario_id)
    hyper = HyperParams.from_dict({**base.truth.to_dict(), **conf.get("hyper", {})})
    seed = args.seed if args.seed is not None else conf.get("seed", 0)
    g = int(_pick(args.g, table, "g", base.g))
    T = int(_pick(args.T, table, "T", base.T))
    splitting = bool(args.splitting or table.get("splitting_enabled", False))
    effects_seq, sim_seq = np.random.SeedSequence(seed).spawn(2)
    sim_seed = int(sim_seq.generate_state(1, np.uint64)[0])
    cfg = SimConfig(
        g=g,
        T=T,
        x0=table.get("x0"),
        y0=table.get("y0", 50),
        seed=sim_seed,
        splitting_enabled=splitting,
        init_convention=table.get("init_convention", "NOT_YET_FORMED"),
        intensity_cap=float(table.get("intensity_cap", DEFAULT_INTENSITY_CAP)),
    )
    effects = draw_group_effects(hyper, g, effects_seq)
    panel = simulate_panel(hyper, effects, cfg)
    header = _header("simulate", seed, {"scenario": scenario_id, "sim": cfg.to_dict(), "hyper": hyper.to_dict()})
    out = _out_dir(args, conf)
    save_panel(
        panel,
        out / "panel.csv",
        {
            "config": header,
            "hyper": hyper.to_dict(),
            "effects": {k: v.tolist() for k, v in zip(("omega_X", "lambda_X", "psi", "delta"), effects.as_matrix())},
        },
    )
    logger.info("wrote %s", out / "panel.csv")
    return EXIT_OK


def cmd_fit(args, conf):
    table = conf.get("fit", {})
    panel_path = _pick(args.panel, table, "panel", None)
    if panel_path is None:
        raise UsageError("fit needs a panel file")
    splitting = bool(args.splitting or table.get("splitting_enabled", False))
    panel, load_meta = _read_panel(panel_path)
    preset, cfg = _sampler(args, conf, "default")
    prior = _prior(conf)
    header = _header(
        "fit",
        cfg.seed,
        {
            "panel": str(panel_path),
            "panel_load": load_meta,
            "splitting_enabled": splitting,
            "preset": preset,
            "sampler": cfg.to_dict(),
            "prior": prior.to_dict(),
        },
    )
    start = time.perf_counter()
    draws = sample(panel, prior, cfg, splitting_enabled=splitting, n_jobs=_workers(args, conf))
    logger.info("sampling took %.1f s", time.perf_counter() - start)
    out = _out_dir(args, conf)
    draws.to_csv(out / "draws.csv", header=header)
    write_diagnostics(draws, out / "diagnostics.json", prior, header)
    worst = max(gelman_rubin(draws, n) for n in draws.names)
    if not worst <= RHAT_GATE:
        print(f"not converged: max R-hat {worst:.3f} exceeds {RHAT_GATE}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def _hyper_from_file(path):
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"hyperparameter file {path} does not exist")
    if path.suffix.lower() == ".csv":
        return {k: float(v) for k, v in PosteriorDraws.from_csv(path).mean().items()}
    doc = json.loads(path.read_text())
    if "parameters" in doc:
        return {k: v["mean"] for k, v in doc["parameters"].items()}
    if "hyper" in doc:
        return doc["hyper"]
    return doc


def cmd_correlate(args, conf):
    table = conf.get("correlate", {})
    panel_path = _pick(args.panel, table, "panel", None)
    if panel_path is None:
        raise UsageError("correlate needs a panel file")
    hyper_path = _pick(args.hyper, table, "hyper", None)
    hyper = dict(_hyper_from_file(hyper_path)) if hyper_path else {}
    hyper.update(conf.get("hyper", {}))
    missing = [n for n in CORRELATION_NAMES if n not in hyper]
    if missing:
        raise UsageError(f"hyperparameters missing: {', '.join(missing)}")
    hyper = {n: float(hyper[n]) for n in CORRELATION_NAMES}
    if hyper["mu_psi"] == 0:
        raise InvalidHyperparameterError("mu_psi must be nonzero (mu_psi != 0) for the correlation approximation")
    tolerance = float(_pick(args.tolerance, table, "tolerance", 0.1))
    force = bool(args.force or table.get("force", False))

    panel, load_meta = _read_panel(panel_path)
    mu_x = table.get("mu_x")
    if mu_x is not None:
        means = StationaryMeans(mu_x=mu_x, mu_y=table["mu_y"])
    else:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            means = stationary_means_from_panel(panel)
        if means.warnings and not force:
            for note in means.warnings:
                print(f"stationarity check failed: {note}", file=sys.stderr)
            print("the approximation assumes weakly stationary series; rerun with --force to override",
                  file=sys.stderr)
            return EXIT_INVALID
    report = rho_tilde(means, hyper, tolerance, group_labels=panel.group_labels)
    header = _header(
        "correlate",
        None,
        {
            "panel": str(panel_path),
            "hyper_source": None if hyper_path is None else str(hyper_path),
            "hyper": hyper,
            "tolerance": tolerance,
            "force": force,
            "means_source": means.source.value,
        },
    )
    doc = {"config": header, **report.to_dict()}
    doc["means"] = {"mu_x": [float(v) for v in means.mu_x], "mu_y": means.mu_y}
    for i, entry in enumerate(doc["groups"]):
        entry["sign_region"] = sign_region(i, means, hyper).value
    out = _out_dir(args, conf)
    _write_json(out / "rho.json", doc)
    if not report.consistent:
        logger.warning("per-group estimates disagree: dispersion %.3g > %.3g", report.dispersion, tolerance)
    return EXIT_OK


def cmd_scenario(args, conf):
    table = conf.get("scenario", {})
    scenario_id = _pick(args.id, table, "id", "S1")
    n_rep = int(_pick(args.replicates, table, "replicates", 20))
    preset, cfg = _sampler(args, conf, "fast")
    prior = _prior(conf)
    try:
        scenario = Scenario.builtin(scenario_id, n_replicates=n_rep, sampler=cfg)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    seed = cfg.seed
    header = _header("scenario", seed, {"preset": preset, "scenario": scenario.to_dict(), "prior": prior.to_dict()})
    report = run_scenario(scenario, seed, prior=prior, n_jobs=_workers(args, conf))
    logger.info("scenario %s took %.1f s", scenario_id, report.wall_time)
    out = _out_dir(args, conf)
    report.to_json(out / "metrics.json", header)
    report.to_metrics_csv(out / "metrics.csv", header)
    report.to_bias_csv(out / "bias.csv", header)
    report.to_confounding_csv(out / "confounding.csv", header)
    return EXIT_OK


def _header(command, seed, settings):
    return {"command": command, "seed": seed, "version": __version__, **settings}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML file with settings (flags override it)")
    common.add_argument("--seed", type=int, help="master random seed")
    common.add_argument("--out", help="output directory (default: out)")
    common.add_argument("--workers", type=int, help="parallel workers for chains or replicates")
    common.add_argument("--fast", action="store_true", help="desk-scale sampler: 4000 iterations, 1000 burn-in, thin 4")
    common.add_argument("--full", action="store_true", help="long sampler: 20000 iterations, 2000 burn-in, thin 20")
    common.add_argument("--force", action="store_true", help="proceed despite stationarity warnings")
    common.add_argument("--chains", type=int, help="number of chains")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="coupledar", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="simulate a panel")
    p.add_argument("--scenario", choices=sorted(BUILTIN), help="take true values from a built-in scenario")
    p.add_argument("--g", type=int, help="number of groups")
    p.add_argument("--T", type=int, help="number of transitions")
    p.add_argument("--splitting", action="store_true", help="simulate with formation and splitting")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", parents=[common], help="sample the posterior for a panel")
    p.add_argument("panel", nargs="?", help="panel CSV (t,y,x1..) or long CSV (year,series,count)")
    p.add_argument("--splitting", action="store_true", help="fit the formation/splitting model")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("correlate", parents=[common], help="approximate the net correlation between groups")
    p.add_argument("panel", nargs="?", help="panel CSV")
    p.add_argument("--hyper", help="hyperparameters: diagnostics JSON, draws CSV or a flat JSON mapping")
    p.add_argument("--tolerance", type=float, help="allowed spread of per-group estimates (default 0.1)")
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("scenario", parents=[common], help="run a simulation-study scenario")
    p.add_argument("--id", choices=sorted(BUILTIN), help="scenario id")
    p.add_argument("--replicates", type=int, help="number of replicates (default 20)")
    p.set_defaults(func=cmd_scenario)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    if args.fast and args.full:
        print("error: --fast and --full are mutually exclusive", file=sys.stderr)
        return EXIT_INVALID
    try:
        conf = _load_toml(args.config)
        return args.func(args, conf)
    except ConvergenceError as exc:
        print(f"convergence failure: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except (UsageError, CoupledARError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
