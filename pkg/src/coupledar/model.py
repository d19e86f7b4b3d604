"""Generative model: coupled Poisson autoregression of groups and an auxiliary series.

Each group ``i`` and the auxiliary population ``Y`` are conditionally Poisson
given the previous time step. Their log-intensities are

    log mu_i,t = omega_i + lambda_i log(x_i,t-1 + 1)
                 + psi_i log(sum_{j != i} x_j,t-1 + 1) + delta_i log(y_t-1 + 1)
    log mu_t^Y = omega_Y + lambda_Y log(y_t-1 + 1) + gamma log(sum_j x_j,t-1 + 1)

with per-group random effects drawn from Gaussians around population means.
An optional formation/splitting factor ``C`` in {0, 1} multiplies the group
intensity so that a group can appear once and, after dropping to zero, stays
at zero.
"""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from ._validation import check_counts, check_positive, check_positive_int
from .exceptions import (
    DimensionMismatchError,
    IntensityExplosionError,
    InvalidHyperparameterError,
    InvalidPanelError,
)

DEFAULT_INTENSITY_CAP = math.exp(30.0)
DEFAULT_X0 = 5
DEFAULT_Y0 = 50

HYPER_NAMES = (
    "omega_Y",
    "lambda_Y",
    "gamma",
    "mu_omega",
    "mu_lambda",
    "mu_psi",
    "mu_delta",
    "sigma_omega",
    "sigma_lambda",
    "sigma_psi",
    "sigma_delta",
)
EFFECT_NAMES = ("omega_X", "lambda_X", "psi", "delta")


@dataclass(frozen=True)
class HyperParams:
    """Population-level parameters of the coupled model.

    The ``mu_*``/``sigma_*`` pairs are the means and standard deviations of
    the Gaussian random effects; ``omega_Y``, ``lambda_Y`` and ``gamma`` are
    the intercept, autoregression and group coupling of the auxiliary series.
    """

    omega_Y: float
    lambda_Y: float
    gamma: float
    mu_omega: float
    mu_lambda: float
    mu_psi: float
    mu_delta: float
    sigma_omega: float
    sigma_lambda: float
    sigma_psi: float
    sigma_delta: float

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not np.isfinite(value):
                raise InvalidHyperparameterError(f"{f.name} must be finite, got {value!r}")
            object.__setattr__(self, f.name, float(value))
        for name in ("sigma_omega", "sigma_lambda", "sigma_psi", "sigma_delta"):
            if getattr(self, name) <= 0:
                raise InvalidHyperparameterError(
                    f"{name} must be strictly positive, got {getattr(self, name)!r}"
                )

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        missing = [n for n in HYPER_NAMES if n not in d]
        if missing:
            raise InvalidHyperparameterError(f"missing hyperparameters: {', '.join(missing)}")
        return cls(**{n: d[n] for n in HYPER_NAMES})

    def as_array(self):
        return np.array([getattr(self, n) for n in HYPER_NAMES])

    def replace(self, **changes):
        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class GroupEffects:
    """Realized per-group random effects, one entry per group."""

    omega_X: np.ndarray
    lambda_X: np.ndarray
    psi: np.ndarray
    delta: np.ndarray

    def __post_init__(self):
        arrays = []
        for name in EFFECT_NAMES:
            arr = np.array(getattr(self, name), dtype=float)
            if arr.ndim != 1:
                raise DimensionMismatchError(f"{name} must be a vector")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
            arrays.append(arr)
        lengths = {a.shape[0] for a in arrays}
        if len(lengths) != 1:
            raise DimensionMismatchError(f"effect vectors have different lengths {sorted(lengths)}")
        if arrays[0].shape[0] < 2:
            raise DimensionMismatchError("at least two groups are required")

    @property
    def g(self):
        return self.omega_X.shape[0]

    def group(self, i):
        """The four coefficients ``(omega, lambda, psi, delta)`` of group ``i``."""
        return (self.omega_X[i], self.lambda_X[i], self.psi[i], self.delta[i])

    def as_matrix(self):
        return np.stack([self.omega_X, self.lambda_X, self.psi, self.delta])

    def __eq__(self, other):
        if not isinstance(other, GroupEffects):
            return NotImplemented
        return all(np.array_equal(getattr(self, n), getattr(other, n)) for n in EFFECT_NAMES)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Panel:
    """Aligned count series: ``x`` is ``(g, T+1)``, ``y`` is ``(T+1,)``.

    ``times`` labels the columns (years for real data, ``0..T`` otherwise).
    A panel with a single column (``T == 0``) carries no transitions and is
    only useful for prior-only sampling.
    """

    x: np.ndarray
    y: np.ndarray
    group_labels: tuple = None
    times: np.ndarray = None

    def __post_init__(self):
        x = check_counts(self.x, "x", ndim=2)
        y = check_counts(self.y, "y", ndim=1)
        if x.shape[0] < 2:
            raise InvalidPanelError(f"a panel needs at least 2 groups, got {x.shape[0]}")
        if x.shape[1] != y.shape[0]:
            raise DimensionMismatchError(
                f"x has {x.shape[1]} time steps but y has {y.shape[0]}"
            )
        if y.shape[0] < 1:
            raise InvalidPanelError("a panel needs at least one time step")
        labels = self.group_labels
        if labels is None:
            labels = tuple(f"x{i + 1}" for i in range(x.shape[0]))
        labels = tuple(str(s) for s in labels)
        if len(labels) != x.shape[0]:
            raise DimensionMismatchError("group_labels length must equal the number of groups")
        times = np.arange(y.shape[0]) if self.times is None else np.asarray(self.times, dtype=np.int64)
        if times.shape != y.shape:
            raise DimensionMismatchError("times must have one entry per time step")
        for arr in (x, y, times):
            arr.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "group_labels", labels)
        object.__setattr__(self, "times", times)

    @property
    def g(self):
        return self.x.shape[0]

    @property
    def T(self):
        return self.x.shape[1] - 1

    def __eq__(self, other):
        if not isinstance(other, Panel):
            return NotImplemented
        return (
            np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.times, other.times)
            and self.group_labels == other.group_labels
        )

    __hash__ = None

    def interval_violations(self):
        """``(group index, step)`` pairs where a group reappears after dropping to zero."""
        out = []
        for i in range(self.g):
            positive = np.flatnonzero(self.x[i] > 0)
            if positive.size == 0:
                continue
            gaps = np.flatnonzero(self.x[i, positive[0] : positive[-1] + 1] == 0)
            if gaps.size:
                # report the first positive count after the first gap
                first_gap = positive[0] + gaps[0]
                reappear = positive[positive > first_gap][0]
                out.append((i, int(reappear)))
        return out

    def to_csv(self, path):
        """Write ``t,y,x1,...,xg`` with one row per time step."""
        path = Path(path)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["t", "y"] + [f"x{i + 1}" for i in range(self.g)])
            for k in range(self.T + 1):
                writer.writerow([int(self.times[k]), int(self.y[k])] + [int(v) for v in self.x[:, k]])
        return path


def read_panel_csv(path, group_labels=None):
    """Read a panel written by :meth:`Panel.to_csv`.

    Group labels are taken from a sidecar ``<stem>.json`` (key
    ``group_labels``) when present and not given explicitly.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InvalidPanelError(f"{path} is empty") from None
        if len(header) < 4 or header[0] != "t" or header[1] != "y":
            raise InvalidPanelError(f"{path}: header must be t,y,x1,...,xg")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise InvalidPanelError(f"{path}: line {lineno} has {len(row)} fields")
            try:
                rows.append([int(v) for v in row])
            except ValueError:
                raise InvalidPanelError(f"{path}: line {lineno} is not integer-valued") from None
    if not rows:
        raise InvalidPanelError(f"{path} has no data rows")
    data = np.array(rows, dtype=np.int64)
    if group_labels is None:
        sidecar = path.with_suffix(".json")
        if sidecar.exists():
            group_labels = json.loads(sidecar.read_text()).get("group_labels")
    return Panel(x=data[:, 2:].T, y=data[:, 1], group_labels=group_labels, times=data[:, 0])


class InitConvention(str, enum.Enum):
    """How a group is treated before the first observed step.

    ``NOT_YET_FORMED`` sets ``A(X_0)=0, B(X_0)=1``: a group with zero initial
    count may still form later. ``ALREADY_FORMED`` sets ``A(X_0)=1, B(X_0)=0``:
    the group existed before the window, so a zero means it has split.
    """

    NOT_YET_FORMED = "NOT_YET_FORMED"
    ALREADY_FORMED = "ALREADY_FORMED"


@dataclass(frozen=True)
class SimConfig:
    g: int
    T: int
    x0: tuple = None
    y0: int = DEFAULT_Y0
    seed: int = 0
    splitting_enabled: bool = False
    init_convention: InitConvention = InitConvention.NOT_YET_FORMED
    intensity_cap: float = DEFAULT_INTENSITY_CAP

    def __post_init__(self):
        g = check_positive_int(self.g, "g", minimum=2)
        check_positive_int(self.T, "T", minimum=1)
        x0 = (DEFAULT_X0,) * g if self.x0 is None else tuple(int(v) for v in self.x0)
        if len(x0) != g:
            raise DimensionMismatchError(f"x0 has length {len(x0)}, expected g={g}")
        if any(v < 0 for v in x0) or int(self.y0) < 0:
            raise InvalidPanelError("initial counts must be nonnegative")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        check_positive(self.intensity_cap, "intensity_cap")
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "y0", int(self.y0))
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "init_convention", InitConvention(self.init_convention))

    def to_dict(self):
        d = asdict(self)
        d["x0"] = list(self.x0)
        d["init_convention"] = self.init_convention.value
        return d


def _check_sigmas(hyper):
    for name in ("sigma_omega", "sigma_lambda", "sigma_psi", "sigma_delta"):
        if not getattr(hyper, name) > 0:
            raise InvalidHyperparameterError(f"{name} must be strictly positive")


def draw_group_effects(hyper, g, seed):
    """Draw independent Gaussian random effects for ``g`` groups."""
    _check_sigmas(hyper)
    g = check_positive_int(g, "g", minimum=2)
    rng = np.random.default_rng(seed)
    return GroupEffects(
        omega_X=rng.normal(hyper.mu_omega, hyper.sigma_omega, g),
        lambda_X=rng.normal(hyper.mu_lambda, hyper.sigma_lambda, g),
        psi=rng.normal(hyper.mu_psi, hyper.sigma_psi, g),
        delta=rng.normal(hyper.mu_delta, hyper.sigma_delta, g),
    )


def group_log_intensity(effects_i, x_i_prev, others_sum_prev, y_prev):
    omega, lam, psi, delta = effects_i
    return (
        omega
        + lam * math.log1p(x_i_prev)
        + psi * math.log1p(others_sum_prev)
        + delta * math.log1p(y_prev)
    )


def aux_log_intensity(hyper, y_prev, group_total_prev):
    return hyper.omega_Y + hyper.lambda_Y * math.log1p(y_prev) + hyper.gamma * math.log1p(group_total_prev)


def indicator_track(x_row, init_convention=InitConvention.NOT_YET_FORMED):
    """Formation/splitting indicators ``(A, B, C)`` for one group's series.

    For ``t >= 1``, ``A_t = 1{x_{t-1} > 0}`` and ``B_t = 1`` while the group
    has never been observed positive (``x_0 .. x_{t-1}`` all zero, and the
    group not already formed at the start). Step 0 takes its values from the
    initialization convention. ``C = A + B`` is always 0 or 1.
    """
    x_row = np.asarray(x_row)
    n = x_row.shape[0]
    A = np.zeros(n, dtype=np.int64)
    B = np.zeros(n, dtype=np.int64)
    convention = InitConvention(init_convention)
    if n == 0:
        return A, B, A.copy()
    formed = convention is InitConvention.ALREADY_FORMED
    A[0], B[0] = (1, 0) if formed else (0, 1)
    for t in range(1, n):
        A[t] = x_row[t - 1] > 0
        formed = formed or x_row[t - 1] > 0
        B[t] = not formed
    return A, B, A + B


def formation_factor(history_i, init_convention=InitConvention.NOT_YET_FORMED):
    """Factor ``C`` for the step following ``history_i`` (counts at steps ``0..t-1``).

    An empty history returns the step-0 value, which is 1 under both
    conventions.
    """
    history = np.asarray(history_i)
    if history.size == 0:
        return 1
    _, _, C = indicator_track(np.append(history, 0), init_convention)
    return int(C[-1])


def series_streams(seed, g):
    """Independent generators: one per group followed by one for the auxiliary series."""
    children = np.random.SeedSequence(seed).spawn(g + 1)
    return [np.random.Generator(np.random.PCG64(c)) for c in children]


def simulate_steps(
    hyper,
    effects,
    x_prev,
    y_prev,
    n_steps,
    streams,
    *,
    splitting_enabled=False,
    formed=None,
    intensity_cap=DEFAULT_INTENSITY_CAP,
    start_step=1,
):
    """Advance the process ``n_steps`` steps from the state ``(x_prev, y_prev)``.

    ``streams`` are consumed in place, so a caller holding a copy of their
    state can regenerate the same suffix. ``formed`` flags groups that have
    already been positive (only used when splitting is enabled). Returns
    ``(x, y)`` with shapes ``(g, n_steps)`` and ``(n_steps,)``.
    """
    g = effects.g
    x_prev = np.array(x_prev, dtype=np.int64)
    if x_prev.shape != (g,):
        raise DimensionMismatchError(f"state has {x_prev.shape[0]} groups, effects have {g}")
    if len(streams) != g + 1:
        raise DimensionMismatchError("need one stream per group plus one for y")
    formed = (x_prev > 0) if formed is None else np.array(formed, dtype=bool)
    y_prev = int(y_prev)
    coef = effects.as_matrix()
    xs = np.empty((g, n_steps), dtype=np.int64)
    ys = np.empty(n_steps, dtype=np.int64)
    for k in range(n_steps):
        step = start_step + k
        total = int(x_prev.sum())
        lx = np.log1p(x_prev)
        lo = np.log1p(total - x_prev)
        ly = math.log1p(y_prev)
        eta = coef[0] + coef[1] * lx + coef[2] * lo + coef[3] * ly
        with np.errstate(over="ignore"):
            mu = np.exp(eta)
        if splitting_enabled:
            factor = (x_prev > 0) | ~formed
            mu = np.where(factor, mu, 0.0)
        mu_y = math.exp(min(aux_log_intensity(hyper, y_prev, total), 700.0))
        bad = np.flatnonzero(~(mu <= intensity_cap))
        if bad.size:
            i = int(bad[0])
            raise IntensityExplosionError(f"group {i + 1}", step, float(mu[i]), intensity_cap)
        if not mu_y <= intensity_cap:
            raise IntensityExplosionError("auxiliary series", step, mu_y, intensity_cap)
        x_new = np.array([streams[i].poisson(mu[i]) for i in range(g)], dtype=np.int64)
        y_new = int(streams[g].poisson(mu_y))
        formed |= x_new > 0
        xs[:, k] = x_new
        ys[k] = y_new
        x_prev, y_prev = x_new, y_new
    return xs, ys


def simulate_panel(hyper, effects, cfg):
    """Simulate a panel of ``cfg.T`` transitions from ``(cfg.x0, cfg.y0)``."""
    if effects.g != cfg.g:
        raise DimensionMismatchError(f"effects describe {effects.g} groups, config has g={cfg.g}")
    x0 = np.array(cfg.x0, dtype=np.int64)
    formed = x0 > 0
    if cfg.init_convention is InitConvention.ALREADY_FORMED:
        formed[:] = True
    streams = series_streams(cfg.seed, cfg.g)
    xs, ys = simulate_steps(
        hyper,
        effects,
        x0,
        cfg.y0,
        cfg.T,
        streams,
        splitting_enabled=cfg.splitting_enabled,
        formed=formed,
        intensity_cap=cfg.intensity_cap,
    )
    x = np.concatenate([x0[:, None], xs], axis=1)
    y = np.concatenate([[cfg.y0], ys])
    return Panel(x=x, y=y)


def save_panel(panel, csv_path, metadata=None):
    """Write the panel CSV plus a sidecar JSON (same stem) holding ``metadata``."""
    csv_path = Path(csv_path)
    panel.to_csv(csv_path)
    sidecar = {"group_labels": list(panel.group_labels)}
    sidecar.update(metadata or {})
    sidecar_path = csv_path.with_suffix(".json")
    sidecar_path.write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    return csv_path, sidecar_path
