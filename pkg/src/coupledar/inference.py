"""Posterior sampling for the coupled model and export of its results."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed

from . import nuts
from .diagnostics import (
    effective_sample_size,
    gelman_rubin,
    is_degenerate,
    prior_posterior_overlap,
)
from .exceptions import ConvergenceError, InvalidPanelError
from .model import HYPER_NAMES, GroupEffects, HyperParams
from .posterior import N_FIXED, PosteriorModel, PriorSpec, model_logp_grad

logger = logging.getLogger(__name__)

INIT_SD = 0.1
MAX_INIT_ATTEMPTS = 100
MAX_DIVERGENT_FRACTION = 0.5


@dataclass(frozen=True)
class SamplerConfig:
    """Settings for :func:`sample`. ``n_iterations`` includes the ``burnin`` iterations."""

    n_chains: int = 4
    n_iterations: int = 2000
    burnin: int = 1000
    thin: int = 1
    target_accept: float = 0.8
    max_tree_depth: int = 10
    seed: int = 0

    def __post_init__(self):
        for name in ("n_chains", "n_iterations", "thin", "max_tree_depth"):
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        if not 0 <= self.burnin < self.n_iterations:
            raise ValueError("burnin must satisfy 0 <= burnin < n_iterations")
        if not 0 < self.target_accept < 1:
            raise ValueError("target_accept must lie in (0, 1)")

    @classmethod
    def fast(cls, seed=0, **overrides):
        """Desk-scale budget: 4000 iterations, 1000 burn-in, thinning 4."""
        return cls(n_iterations=4000, burnin=1000, thin=4, seed=seed, **overrides)

    @classmethod
    def full(cls, seed=0, **overrides):
        """Long-run protocol: 20000 iterations, 2000 burn-in, thinning 20."""
        return cls(n_iterations=20000, burnin=2000, thin=20, seed=seed, **overrides)

    @property
    def n_kept(self):
        return len(range(self.burnin, self.n_iterations, self.thin))

    def replace(self, **changes):
        return replace(self, **changes)

    def to_dict(self):
        return asdict(self)


class PosteriorDraws:
    """Thinned post-burn-in draws on the constrained scale.

    ``draws`` has shape ``(n_chains, n_kept, n_params)`` with columns named by
    ``names``: the eleven hyperparameters followed by the per-group effects
    ``omega_X[i]``, ``lambda_X[i]``, ``psi[i]``, ``delta[i]``.
    """

    def __init__(self, draws, names, accept_stat=None, divergences=None, step_size=None,
                 tree_depth=None, n_leapfrog=None, unconstrained=None, config=None):
        self.draws = np.asarray(draws, dtype=float)
        self.names = tuple(names)
        if self.draws.ndim != 3 or self.draws.shape[2] != len(self.names):
            raise ValueError("draws must have shape (n_chains, n_kept, len(names))")
        self.index = {n: k for k, n in enumerate(self.names)}
        self.accept_stat = accept_stat
        self.divergences = np.zeros(self.n_chains, dtype=int) if divergences is None else np.asarray(divergences)
        self.step_size = step_size
        self.tree_depth = tree_depth
        self.n_leapfrog = n_leapfrog
        self.unconstrained = unconstrained
        self.config = config

    @property
    def n_chains(self):
        return self.draws.shape[0]

    @property
    def n_kept(self):
        return self.draws.shape[1]

    @property
    def g(self):
        return (len(self.names) - N_FIXED) // 4

    def get(self, name):
        """``(n_chains, n_kept)`` array for one parameter."""
        try:
            return self.draws[:, :, self.index[name]]
        except KeyError:
            raise KeyError(f"unknown parameter {name!r}") from None

    def pooled(self, name):
        return self.get(name).ravel()

    def mean(self):
        return dict(zip(self.names, self.draws.reshape(-1, len(self.names)).mean(axis=0)))

    def median(self):
        return dict(zip(self.names, np.median(self.draws.reshape(-1, len(self.names)), axis=0)))

    def hyper_mean(self):
        m = self.mean()
        return HyperParams(**{n: m[n] for n in HYPER_NAMES})

    def effects_mean(self):
        m = self.draws.reshape(-1, len(self.names)).mean(axis=0)[N_FIXED:]
        g = self.g
        return GroupEffects(*(m[k * g : (k + 1) * g] for k in range(4)))

    def permute_chains(self, order):
        order = np.asarray(order)
        return PosteriorDraws(self.draws[order], self.names, divergences=self.divergences[order])

    def to_csv(self, path, header=None):
        """Write ``chain,iter,<names...>`` with 1-based chain and kept-iteration numbers.

        ``header`` (a JSON-serializable dict) is written first as a ``#`` comment line.
        """
        path = Path(path)
        with path.open("w", newline="") as fh:
            if header is not None:
                fh.write("# " + json.dumps(header, sort_keys=True) + "\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["chain", "iter", *self.names])
            for c in range(self.n_chains):
                for k in range(self.n_kept):
                    writer.writerow([c + 1, k + 1, *(repr(float(v)) for v in self.draws[c, k])])
        return path

    @classmethod
    def from_csv(cls, path):
        path = Path(path)
        with path.open(newline="") as fh:
            reader = csv.reader(line for line in fh if not line.startswith("#"))
            header = next(reader)
            rows = [row for row in reader if row]
        if header[:2] != ["chain", "iter"]:
            raise ValueError(f"{path}: expected chain,iter,... header")
        data = np.array([[float(v) for v in row] for row in rows])
        chains = data[:, 0].astype(int)
        n_chains = chains.max()
        per = [data[chains == c + 1, 2:] for c in range(n_chains)]
        return cls(np.stack(per), header[2:])


def _chain_seeds(seed, n_chains):
    children = np.random.SeedSequence(seed).spawn(n_chains)
    inits = [np.random.default_rng(c.spawn(1)[0]) for c in children]
    kernel = [int(c.generate_state(1, np.uint32)[0]) for c in children]
    return inits, kernel


def _initial_point(model, rng):
    for _ in range(MAX_INIT_ATTEMPTS):
        theta = rng.normal(0.0, INIT_SD, model.layout.size)
        lp, grad = model.logp_and_grad(theta)
        if np.isfinite(lp) and np.all(np.isfinite(grad)):
            return theta
    raise ConvergenceError("no finite initial point found")


def _run_one_chain(data, theta0, cfg, kernel_seed):
    init_buffer, window_ends = nuts.adaptation_schedule(cfg.burnin)
    return nuts.run_chain(
        model_logp_grad,
        data,
        theta0,
        cfg.n_iterations,
        cfg.burnin,
        cfg.target_accept,
        cfg.max_tree_depth,
        kernel_seed,
        init_buffer,
        window_ends,
    )


def sample(panel, prior=None, cfg=None, *, splitting_enabled=False, n_jobs=1):
    """Draw from the posterior of the coupled model given ``panel``.

    Runs ``cfg.n_chains`` independent NUTS chains (in parallel when
    ``n_jobs != 1``) and returns thinned post-burn-in draws on the constrained
    scale. Results depend only on ``cfg.seed``, not on ``n_jobs``.
    """
    cfg = SamplerConfig() if cfg is None else cfg
    model = PosteriorModel(panel, prior, splitting_enabled)
    if model.impossible:
        raise InvalidPanelError("panel has positive counts after a group split; likelihood is zero")
    init_rngs, kernel_seeds = _chain_seeds(cfg.seed, cfg.n_chains)
    inits = [_initial_point(model, rng) for rng in init_rngs]

    if n_jobs == 1:
        results = [_run_one_chain(model.data, th, cfg, s) for th, s in zip(inits, kernel_seeds)]
    else:
        results = Parallel(n_jobs=n_jobs)(
            delayed(_run_one_chain)(model.data, th, cfg, s) for th, s in zip(inits, kernel_seeds)
        )

    keep = np.arange(cfg.burnin, cfg.n_iterations, cfg.thin)
    raw = np.stack([r[0] for r in results])
    stats = np.stack([r[1] for r in results])
    post = stats[:, cfg.burnin :]
    divergences = post[:, :, 4].sum(axis=1).astype(int)
    n_post = cfg.n_iterations - cfg.burnin
    if divergences.sum():
        logger.warning("%d divergent transitions after warmup (per chain: %s)",
                       int(divergences.sum()), divergences.tolist())
    worst = divergences.max() / n_post
    if worst > MAX_DIVERGENT_FRACTION:
        raise ConvergenceError(
            f"{worst:.0%} of post-warmup transitions diverged in at least one chain"
        )
    unconstrained = raw[:, keep]
    return PosteriorDraws(
        model.layout.constrain(unconstrained),
        model.layout.constrained_names,
        accept_stat=post[:, :, 0].mean(axis=1),
        divergences=divergences,
        step_size=np.array([r[2] for r in results]),
        tree_depth=stats[:, keep, 2].astype(int),
        n_leapfrog=stats[:, keep, 3].astype(int),
        unconstrained=unconstrained,
        config=cfg,
    )


def summarize(draws, prior=None, names=None):
    """Per-parameter summary: mean, sd, 2.5/97.5% quantiles, R-hat, ESS, PPO.

    PPO is reported for hyperparameters only (they carry the fixed priors);
    random effects get ``None`` there.
    """
    prior = PriorSpec() if prior is None else prior
    names = draws.names if names is None else names
    out = {}
    for name in names:
        pooled = draws.pooled(name)
        entry = {
            "mean": float(pooled.mean()),
            "sd": float(pooled.std(ddof=1)),
            "q2.5": float(np.quantile(pooled, 0.025)),
            "q97.5": float(np.quantile(pooled, 0.975)),
            "rhat": gelman_rubin(draws, name),
            "ess": effective_sample_size(draws, name),
            "degenerate": is_degenerate(draws, name),
            "ppo_percent": None,
            "weakly_identifiable": None,
        }
        if name in HYPER_NAMES:
            ppo, weak = prior_posterior_overlap(draws, name, prior)
            entry["ppo_percent"] = ppo
            entry["weakly_identifiable"] = weak
        out[name] = entry
    return out


def write_diagnostics(draws, path, prior=None, header=None):
    """Write the :func:`summarize` table as JSON, hyperparameters first.

    ``header`` (e.g. the resolved run configuration) is embedded verbatim.
    """
    summary = summarize(draws, prior)
    doc = {
        "config": header or {},
        "parameters": {n: summary[n] for n in HYPER_NAMES},
        "random_effects": {n: summary[n] for n in draws.names if n not in HYPER_NAMES},
        "sampler": {
            "n_chains": draws.n_chains,
            "n_kept_per_chain": draws.n_kept,
            "divergences": [int(v) for v in draws.divergences],
            "accept_stat": None if draws.accept_stat is None else [float(v) for v in draws.accept_stat],
            "step_size": None if draws.step_size is None else [float(v) for v in draws.step_size],
        },
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=False, allow_nan=True) + "\n")
    return doc
