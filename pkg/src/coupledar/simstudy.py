"""Simulation-study harness: built-in scenarios, replicate sweeps and accuracy metrics."""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed

from .diagnostics import gelman_rubin
from .exceptions import CoupledARError, ConvergenceError
from .inference import SamplerConfig, sample
from .model import HYPER_NAMES, HyperParams, SimConfig, draw_group_effects, simulate_panel
from .posterior import PriorSpec

logger = logging.getLogger(__name__)

RHAT_GATE = 1.1
CONFOUNDING_NAMES = ("omega_Y", "lambda_Y", "mu_psi", "mu_delta")

_SHARED = dict(
    omega_Y=0.9,
    lambda_Y=0.9,
    mu_omega=0.9,
    mu_lambda=0.06,
    sigma_omega=0.2,
    sigma_lambda=0.2,
    sigma_psi=0.04,
    sigma_delta=0.04,
)
_NEGATIVE_COUPLING = dict(gamma=-0.05, mu_psi=-0.5, mu_delta=0.2)

BUILTIN = {
    "S1": (10, 20, _NEGATIVE_COUPLING),
    "S2": (42, 20, _NEGATIVE_COUPLING),
    "S3": (50, 50, _NEGATIVE_COUPLING),
    "S4": (42, 20, dict(gamma=-0.15, mu_psi=0.15, mu_delta=0.15)),
    "S5": (42, 20, dict(gamma=0.05, mu_psi=-0.05, mu_delta=-0.05)),
}


@dataclass(frozen=True)
class Scenario:
    id: str
    g: int
    T: int
    truth: HyperParams
    n_replicates: int = 20
    sampler: SamplerConfig = field(default_factory=SamplerConfig.fast)

    def __post_init__(self):
        if self.id not in BUILTIN and self.id != "CUSTOM":
            raise ValueError(f"scenario id must be one of {sorted(BUILTIN)} or CUSTOM, got {self.id!r}")
        if int(self.g) < 2 or int(self.T) < 1:
            raise ValueError("scenario needs g >= 2 and T >= 1")
        if int(self.n_replicates) < 1:
            raise ValueError("n_replicates must be positive")

    @classmethod
    def builtin(cls, scenario_id, n_replicates=20, sampler=None):
        try:
            g, T, coupling = BUILTIN[scenario_id]
        except KeyError:
            raise ValueError(f"unknown scenario {scenario_id!r}; choose from {sorted(BUILTIN)}") from None
        return cls(
            id=scenario_id,
            g=g,
            T=T,
            truth=HyperParams(**_SHARED, **coupling),
            n_replicates=n_replicates,
            sampler=SamplerConfig.fast() if sampler is None else sampler,
        )

    def replace(self, **changes):
        return replace(self, **changes)

    def to_dict(self):
        return {
            "id": self.id,
            "g": int(self.g),
            "T": int(self.T),
            "truth": self.truth.to_dict(),
            "n_replicates": int(self.n_replicates),
            "sampler": self.sampler.to_dict(),
        }


def rmse(estimates, truth):
    est = np.asarray(estimates, dtype=float)
    if est.size == 0:
        raise ValueError("rmse needs at least one estimate")
    return float(np.sqrt(np.mean((est - truth) ** 2)))


def bias(estimate, truth):
    return estimate - truth


def relative_bias(estimate, truth):
    if truth == 0:
        raise ZeroDivisionError("relative bias is undefined for a true value of 0")
    return (estimate - truth) / truth


@dataclass
class ReplicateResult:
    index: int
    seed: int
    status: str  # "ok", "not_converged" or "failed"
    estimates: dict = None
    medians: dict = None
    max_rhat: float = None
    message: str = ""
    confounding: np.ndarray = None

    def to_dict(self):
        return {
            "replicate": self.index,
            "seed": self.seed,
            "status": self.status,
            "max_rhat": self.max_rhat,
            "estimates": self.estimates,
            "medians": self.medians,
            "message": self.message,
        }


class MetricsReport:
    """Accuracy metrics over the converged replicates of one scenario."""

    def __init__(self, scenario, master_seed, replicates, wall_time=None):
        self.scenario = scenario
        self.master_seed = master_seed
        self.replicates = list(replicates)
        self.wall_time = wall_time
        included = [r for r in self.replicates if r.status == "ok"]
        self.n_included = len(included)
        self.n_excluded = len(self.replicates) - self.n_included
        truth = scenario.truth.to_dict()
        self.metrics = {}
        for name in HYPER_NAMES:
            est = np.array([r.estimates[name] for r in included])
            b = est - truth[name]
            rb = b / truth[name] if truth[name] != 0 else None
            self.metrics[name] = {
                "truth": truth[name],
                "rmse": rmse(est, truth[name]),
                "mean_bias": float(b.mean()),
                "median_bias": float(np.median(b)),
                "median_relative_bias": None if rb is None else float(np.median(rb)),
                "bias_samples": [float(v) for v in b],
                "relative_bias_samples": None if rb is None else [float(v) for v in rb],
            }

    def rmse(self, name):
        return self.metrics[name]["rmse"]

    def median_bias(self, name):
        return self.metrics[name]["median_bias"]

    def to_dict(self, header=None):
        return {
            "config": header or {},
            "scenario": self.scenario.to_dict(),
            "master_seed": self.master_seed,
            "n_replicates": len(self.replicates),
            "n_included": self.n_included,
            "n_excluded": self.n_excluded,
            "metrics": self.metrics,
            "replicates": [r.to_dict() for r in self.replicates],
        }

    def to_json(self, path, header=None):
        Path(path).write_text(json.dumps(self.to_dict(header), indent=2) + "\n")
        return path

    def _csv(self, path, header, columns, rows):
        with Path(path).open("w", newline="") as fh:
            if header is not None:
                fh.write("# " + json.dumps(header, sort_keys=True) + "\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(columns)
            writer.writerows(rows)
        return path

    def to_metrics_csv(self, path, header=None):
        """Flat ``scenario,parameter,metric,value`` table."""
        rows = []
        for name, m in self.metrics.items():
            for metric in ("rmse", "mean_bias", "median_bias", "median_relative_bias"):
                value = m[metric]
                rows.append([self.scenario.id, name, metric, "" if value is None else repr(value)])
        return self._csv(path, header, ["scenario", "parameter", "metric", "value"], rows)

    def to_bias_csv(self, path, header=None):
        """Per-replicate ``scenario,replicate,parameter,bias,relative_bias`` samples."""
        truth = self.scenario.truth.to_dict()
        rows = []
        for r in self.replicates:
            if r.status != "ok":
                continue
            for name in HYPER_NAMES:
                b = r.estimates[name] - truth[name]
                rb = "" if truth[name] == 0 else repr(b / truth[name])
                rows.append([self.scenario.id, r.index, name, repr(b), rb])
        return self._csv(path, header, ["scenario", "replicate", "parameter", "bias", "relative_bias"], rows)

    def to_confounding_csv(self, path, header=None):
        """Pooled draws of the auxiliary and coupling parameters for bivariate checks."""
        rows = []
        for r in self.replicates:
            if r.status != "ok" or r.confounding is None:
                continue
            for k, row in enumerate(r.confounding):
                rows.append([self.scenario.id, r.index, k + 1, *(repr(float(v)) for v in row)])
        return self._csv(path, header, ["scenario", "replicate", "draw", *CONFOUNDING_NAMES], rows)


def _default_fit(panel, sampler_cfg, prior):
    return sample(panel, prior, sampler_cfg)


def _run_replicate(scenario, index, seq, fit_fn, prior):
    effects_seq, sim_seq, fit_seq = seq.spawn(3)
    seed = int(seq.generate_state(1, np.uint64)[0])
    try:
        effects = draw_group_effects(scenario.truth, scenario.g, effects_seq)
        sim_seed = int(sim_seq.generate_state(1, np.uint64)[0])
        panel = simulate_panel(scenario.truth, effects, SimConfig(g=scenario.g, T=scenario.T, seed=sim_seed))
        fit_seed = int(fit_seq.generate_state(1, np.uint32)[0])
        draws = fit_fn(panel, scenario.sampler.replace(seed=fit_seed), prior)
    except CoupledARError as exc:
        return ReplicateResult(index=index, seed=seed, status="failed", message=str(exc))
    means = draws.mean()
    medians = draws.median()
    rhats = [gelman_rubin(draws, n) for n in draws.names]
    max_rhat = float(max(rhats))
    status = "ok" if max_rhat <= RHAT_GATE else "not_converged"
    return ReplicateResult(
        index=index,
        seed=seed,
        status=status,
        estimates={n: float(means[n]) for n in HYPER_NAMES},
        medians={n: float(medians[n]) for n in HYPER_NAMES},
        max_rhat=max_rhat,
        message="" if status == "ok" else f"max R-hat {max_rhat:.3f} > {RHAT_GATE}",
        confounding=np.stack([draws.pooled(n) for n in CONFOUNDING_NAMES], axis=1),
    )


def run_scenario(scenario, master_seed=0, *, fit_fn=None, prior=None, n_jobs=1):
    """Simulate, fit and score ``scenario.n_replicates`` independent replicates.

    Each replicate draws fresh group effects, simulates a panel and fits it;
    the posterior mean is the point estimate (medians are kept too).
    Replicates that fail or have R-hat above 1.1 on any parameter are
    excluded from the metrics and counted. ``fit_fn(panel, sampler_cfg,
    prior)`` replaces the sampler, e.g. in tests. Results do not depend on
    ``n_jobs``.
    """
    fit_fn = _default_fit if fit_fn is None else fit_fn
    prior = PriorSpec() if prior is None else prior
    seqs = np.random.SeedSequence(master_seed).spawn(scenario.n_replicates)
    start = time.perf_counter()
    if n_jobs == 1:
        results = [_run_replicate(scenario, r + 1, s, fit_fn, prior) for r, s in enumerate(seqs)]
    else:
        results = Parallel(n_jobs=n_jobs)(
            delayed(_run_replicate)(scenario, r + 1, s, fit_fn, prior) for r, s in enumerate(seqs)
        )
    wall = time.perf_counter() - start
    results.sort(key=lambda r: r.index)
    ok = [r for r in results if r.status == "ok"]
    if not ok:
        detail = "; ".join(f"replicate {r.index}: {r.status} {r.message}" for r in results)
        raise ConvergenceError(f"all {len(results)} replicates of {scenario.id} failed ({detail})")
    if len(ok) < len(results):
        logger.warning("%s: excluded %d of %d replicates", scenario.id, len(results) - len(ok), len(results))
    logger.info("%s: %d replicates in %.1f s", scenario.id, len(results), wall)
    return MetricsReport(scenario, master_seed, results, wall_time=wall)


def truth_fit(truth):
    """A ``fit_fn`` returning constant draws at ``truth`` (for checking the metrics plumbing)."""
    from .inference import PosteriorDraws
    from .posterior import ParamLayout

    def fit(panel, sampler_cfg, prior):
        layout = ParamLayout(panel.g)
        row = np.concatenate([truth.as_array(), np.zeros(4 * panel.g)])
        draws = np.broadcast_to(row, (2, 10, row.size)).copy()
        return PosteriorDraws(draws, layout.constrained_names)

    return fit

