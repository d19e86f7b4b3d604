"""Closed-form approximation to the net correlation between groups.

Under a conditional log-normal approximation with mean and variance both
``log(mu)``, weak stationarity and a compound-symmetric conditional
covariance, every group ``i`` yields its own estimate of the common
correlation::

    rho_i = -A_i / mu_psi - mu_delta * B_i / mu_psi - C_i

The ``g`` estimates should agree when the assumptions hold; their spread is
reported as a consistency check.
"""

from __future__ import annotations

import enum
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import InvalidHyperparameterError, InvalidMeansError, StationarityWarning

DEFAULT_TOLERANCE = 0.1
BOUNDARY_EPS = 1e-12
HALF_MEAN_CHANGE = 0.5


class MeansSource(str, enum.Enum):
    EMPIRICAL = "EMPIRICAL"
    USER_SUPPLIED = "USER_SUPPLIED"


class SignRegion(str, enum.Enum):
    POSITIVE = "POSITIVE"
    NEGATIVE = "NEGATIVE"
    BOUNDARY = "BOUNDARY"


def lognormal_moments(mu_z, sigma2_z):
    """Mean and variance of ``Z`` when ``log Z ~ N(mu_z, sigma2_z)``."""
    if sigma2_z < 0:
        raise ValueError("sigma2_z must be nonnegative")
    mean = math.exp(mu_z + 0.5 * sigma2_z)
    var = math.exp(2.0 * mu_z + sigma2_z) * math.expm1(sigma2_z)
    return mean, var


def taylor_log_mean(mean_x, var_x):
    """Second-order approximation of ``E[log(X + 1)]`` used by the correlation formula.

    Returns ``log(mean_x + 1) + var_x / (2 (mean_x + 1)**2)``. Note the plus
    sign: the textbook delta method subtracts this curvature term, so the
    value exceeds the delta-method estimate by ``var_x / (mean_x + 1)**2``.
    """
    if mean_x < 0 or var_x < 0:
        raise ValueError("mean_x and var_x must be nonnegative")
    return math.log1p(mean_x) + var_x / (2.0 * (mean_x + 1.0) ** 2)


def v_term(mu):
    """Marginal variance ``(mu - 1) * mu**3`` of a series with stationary mean ``mu``."""
    return (mu - 1.0) * mu**3


@dataclass(frozen=True, eq=False)
class StationaryMeans:
    """Per-group stationary means (all > 1) and the auxiliary mean (> 0)."""

    mu_x: np.ndarray
    mu_y: float
    source: MeansSource = MeansSource.USER_SUPPLIED
    warnings: tuple = ()

    def __post_init__(self):
        mu_x = np.array(self.mu_x, dtype=float)
        if mu_x.ndim != 1 or mu_x.size < 1:
            raise InvalidMeansError("mu_x must be a nonempty vector")
        bad = np.flatnonzero(~(mu_x > 1.0))
        if bad.size:
            i = int(bad[0])
            raise InvalidMeansError(
                f"group {i + 1} has stationary mean {mu_x[i]:.6g} <= 1; "
                "its variance term would not be positive"
            )
        if not (np.isfinite(self.mu_y) and self.mu_y > 0):
            raise InvalidMeansError(f"auxiliary mean must be positive, got {self.mu_y!r}")
        mu_x.setflags(write=False)
        object.__setattr__(self, "mu_x", mu_x)
        object.__setattr__(self, "mu_y", float(self.mu_y))
        object.__setattr__(self, "source", MeansSource(self.source))
        object.__setattr__(self, "warnings", tuple(self.warnings))

    @property
    def g(self):
        return self.mu_x.shape[0]


def _mean_params(hyper):
    if isinstance(hyper, dict):
        get = hyper.__getitem__
    else:
        def get(name):
            return getattr(hyper, name)
    return tuple(float(get(n)) for n in ("mu_omega", "mu_lambda", "mu_psi", "mu_delta"))


def _terms(means, hyper):
    """Vectors ``A, B, C, D`` over all groups plus the intermediate quantities."""
    if means.g < 3:
        raise InvalidMeansError(f"at least 3 groups are required, got {means.g}")
    mu_omega, mu_lambda, _, _ = _mean_params(hyper)
    mu = means.mu_x
    m = mu**1.5
    V = v_term(mu)
    sqrtV = np.sqrt(V)

    S = m.sum() - m
    sumV = V.sum() - V
    sum_sqrtV = sqrtV.sum() - sqrtV
    # ordered pairs (j, k), j != k, both different from i
    P = sum_sqrtV**2 - sumV

    m_y = means.mu_y**1.5
    V_y = v_term(means.mu_y)
    L_y = math.log1p(m_y) + V_y / (2.0 * (m_y + 1.0) ** 2)
    L_x = np.log1p(m) + V / (2.0 * (m + 1.0) ** 2)

    D = 2.0 * (S + 1.0) ** 2 / P
    A = -D * (np.log(mu) - mu_omega - mu_lambda * L_x)
    B = D * L_y
    C = (sumV + np.log1p(S) * 2.0 * (S + 1.0) ** 2) / P
    return A, B, C, D, V, V_y, m, m_y


def rho_terms(i, means, hyper):
    """``(A_i, B_i, C_i, D_i)`` for group ``i`` (0-based)."""
    A, B, C, D, *_ = _terms(means, hyper)
    return float(A[i]), float(B[i]), float(C[i]), float(D[i])


def clamp_rho(value):
    """Clamp to ``[-1, 1]``."""
    return np.clip(value, -1.0, 1.0)


@dataclass(frozen=True, eq=False)
class RhoReport:
    rho_tilde: np.ndarray
    rho_star: np.ndarray
    dispersion: float
    consistent: bool
    tolerance: float
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    V: np.ndarray
    V_y: float
    taylor_remainder_x: np.ndarray
    taylor_remainder_y: float
    group_labels: tuple = None
    warnings: tuple = field(default=())

    def to_dict(self):
        labels = self.group_labels or tuple(f"x{i + 1}" for i in range(len(self.rho_tilde)))
        groups = [
            {
                "group": labels[i],
                "rho_tilde": float(self.rho_tilde[i]),
                "rho_star": float(self.rho_star[i]),
                "A": float(self.A[i]),
                "B": float(self.B[i]),
                "C": float(self.C[i]),
                "D": float(self.D[i]),
                "V": float(self.V[i]),
                "taylor_remainder": float(self.taylor_remainder_x[i]),
            }
            for i in range(len(self.rho_tilde))
        ]
        return {
            "groups": groups,
            "V_y": float(self.V_y),
            "taylor_remainder_y": float(self.taylor_remainder_y),
            "dispersion": float(self.dispersion),
            "consistent": bool(self.consistent),
            "tolerance": float(self.tolerance),
            "warnings": list(self.warnings),
        }

    def to_json(self, path, header=None):
        doc = {"config": header or {}, **self.to_dict()}
        Path(path).write_text(json.dumps(doc, indent=2) + "\n")
        return doc


def rho_tilde(means, hyper, tolerance=DEFAULT_TOLERANCE, group_labels=None):
    """Per-group correlation approximations, their clamp to [-1, 1] and consistency."""
    _, _, mu_psi, mu_delta = _mean_params(hyper)
    if mu_psi == 0:
        raise InvalidHyperparameterError("mu_psi must be nonzero for the correlation approximation")
    A, B, C, D, V, V_y, m, m_y = _terms(means, hyper)
    rho = -A / mu_psi - mu_delta * B / mu_psi - C
    dispersion = float(rho.max() - rho.min())
    return RhoReport(
        rho_tilde=rho,
        rho_star=clamp_rho(rho),
        dispersion=dispersion,
        consistent=dispersion <= tolerance,
        tolerance=float(tolerance),
        A=A,
        B=B,
        C=C,
        D=D,
        V=V,
        V_y=V_y,
        taylor_remainder_x=V / (2.0 * (m + 1.0) ** 2),
        taylor_remainder_y=V_y / (2.0 * (m_y + 1.0) ** 2),
        group_labels=group_labels,
        warnings=means.warnings,
    )


def sign_region(i, means, hyper):
    """Sign of ``rho_i`` read off ``s = A_i + mu_delta B_i + mu_psi C_i`` and the sign of ``mu_psi``."""
    _, _, mu_psi, mu_delta = _mean_params(hyper)
    if mu_psi == 0:
        raise InvalidHyperparameterError("mu_psi must be nonzero for the correlation approximation")
    A, B, C, _ = rho_terms(i, means, hyper)
    s = A + mu_delta * B + mu_psi * C
    if abs(s) <= BOUNDARY_EPS:
        return SignRegion.BOUNDARY
    if (mu_psi > 0) == (s < 0):
        return SignRegion.POSITIVE
    return SignRegion.NEGATIVE


def _half_change(series):
    n = series.shape[0]
    if n < 2:
        return 0.0
    first = series[: n // 2].mean()
    second = series[n // 2 :].mean()
    overall = series.mean()
    if overall == 0:
        return 0.0
    return abs(second - first) / overall


def stationary_means_from_panel(panel):
    """Time-averaged means of every series.

    Emits a :class:`StationarityWarning` (also recorded on the result) for
    each series whose first-half and second-half means differ by more than
    50% of its overall mean.
    """
    mu_x = panel.x.mean(axis=1)
    mu_y = float(panel.y.mean())
    notes = []
    for i in range(panel.g):
        change = _half_change(panel.x[i].astype(float))
        if change > HALF_MEAN_CHANGE:
            notes.append(
                f"group {panel.group_labels[i]}: half-series means differ by {change:.0%} of the mean"
            )
    change = _half_change(panel.y.astype(float))
    if change > HALF_MEAN_CHANGE:
        notes.append(f"auxiliary series: half-series means differ by {change:.0%} of the mean")
    for note in notes:
        warnings.warn(f"possible nonstationarity, {note}", StationarityWarning, stacklevel=2)
    bad = np.flatnonzero(~(mu_x > 1.0))
    if bad.size:
        i = int(bad[0])
        raise InvalidMeansError(
            f"group {panel.group_labels[i]} has mean {mu_x[i]:.6g} <= 1; "
            "the correlation approximation needs every group mean above 1"
        )
    return StationaryMeans(mu_x=mu_x, mu_y=mu_y, source=MeansSource.EMPIRICAL, warnings=tuple(notes))
