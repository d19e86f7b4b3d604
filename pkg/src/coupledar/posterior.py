"""Log-posterior of the coupled model and its analytic gradient.

The sampler works on an unconstrained vector laid out as::

    omega_Y, lambda_Y, gamma, mu_omega, mu_lambda, mu_psi, mu_delta,
    log_sigma_omega, log_sigma_lambda, log_sigma_psi, log_sigma_delta,
    z_omega[0..g), z_lambda[0..g), z_psi[0..g), z_delta[0..g)

Random effects are non-centered: ``omega_X[i] = mu_omega + sigma_omega * z_omega[i]``
with ``z ~ N(0, 1)``. Standard deviations are sampled on the log scale; their
half-Gaussian prior is applied on the natural scale plus the log-Jacobian.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.special import gammaln

from .exceptions import DimensionMismatchError
from .model import EFFECT_NAMES, HYPER_NAMES, GroupEffects, HyperParams, indicator_track

N_FIXED = 11
N_LOCATION = 7
_LOG_2PI = math.log(2.0 * math.pi)

UNCONSTRAINED_FIXED_NAMES = HYPER_NAMES[:N_LOCATION] + tuple(
    "log_" + n for n in HYPER_NAMES[N_LOCATION:]
)


@dataclass(frozen=True)
class PriorSpec:
    """Gaussian priors on location parameters, half-Gaussian priors on SDs."""

    gaussian_sd_mu: float = 100.0
    halfgaussian_sd_sigma: float = 100.0

    def __post_init__(self):
        for name in ("gaussian_sd_mu", "halfgaussian_sd_sigma"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be strictly positive, got {value!r}")

    def to_dict(self):
        return {"gaussian_sd_mu": self.gaussian_sd_mu, "halfgaussian_sd_sigma": self.halfgaussian_sd_sigma}

    def log_density(self, name, value):
        """Prior log-density of a named constrained hyperparameter."""
        value = np.asarray(value, dtype=float)
        if name.startswith("sigma_"):
            s = self.halfgaussian_sd_sigma
            out = math.log(2.0) - math.log(s) - 0.5 * _LOG_2PI - 0.5 * (value / s) ** 2
            return np.where(value >= 0, out, -np.inf)
        if name in HYPER_NAMES:
            s = self.gaussian_sd_mu
            return -math.log(s) - 0.5 * _LOG_2PI - 0.5 * (value / s) ** 2
        raise KeyError(f"no prior defined for {name!r}")

    def density(self, name, value):
        return np.exp(self.log_density(name, value))

    def support(self, name):
        """``(mean, sd, lower bound)`` of the named parameter's prior."""
        if name.startswith("sigma_"):
            return 0.0, self.halfgaussian_sd_sigma, 0.0
        if name in HYPER_NAMES:
            return 0.0, self.gaussian_sd_mu, -np.inf
        raise KeyError(f"no prior defined for {name!r}")


class ParamLayout:
    """Name table and transforms for the unconstrained parameter vector of ``g`` groups."""

    def __init__(self, g):
        if g < 1:
            raise ValueError("g must be positive")
        self.g = int(g)
        self.names = UNCONSTRAINED_FIXED_NAMES + tuple(
            f"z_{e.split('_')[0]}[{i + 1}]" for e in EFFECT_NAMES for i in range(self.g)
        )
        self.index = {name: k for k, name in enumerate(self.names)}
        self.constrained_names = HYPER_NAMES + tuple(
            f"{e}[{i + 1}]" for e in EFFECT_NAMES for i in range(self.g)
        )

    @property
    def size(self):
        return N_FIXED + 4 * self.g

    def __len__(self):
        return self.size

    def constrain(self, theta):
        """Map unconstrained draws (``(..., size)``) to hyperparameters then effects."""
        theta = np.asarray(theta, dtype=float)
        if theta.shape[-1] != self.size:
            raise DimensionMismatchError(f"expected {self.size} coordinates, got {theta.shape[-1]}")
        out = np.empty_like(theta)
        out[..., :N_LOCATION] = theta[..., :N_LOCATION]
        sigma = np.exp(theta[..., N_LOCATION:N_FIXED])
        out[..., N_LOCATION:N_FIXED] = sigma
        g = self.g
        for k in range(4):
            z = theta[..., N_FIXED + k * g : N_FIXED + (k + 1) * g]
            mu = theta[..., 3 + k : 4 + k]
            out[..., N_FIXED + k * g : N_FIXED + (k + 1) * g] = mu + sigma[..., k : k + 1] * z
        return out

    def unconstrain(self, constrained):
        constrained = np.asarray(constrained, dtype=float)
        if constrained.shape[-1] != self.size:
            raise DimensionMismatchError(f"expected {self.size} coordinates, got {constrained.shape[-1]}")
        out = np.empty_like(constrained)
        out[..., :N_LOCATION] = constrained[..., :N_LOCATION]
        sigma = constrained[..., N_LOCATION:N_FIXED]
        out[..., N_LOCATION:N_FIXED] = np.log(sigma)
        g = self.g
        for k in range(4):
            eff = constrained[..., N_FIXED + k * g : N_FIXED + (k + 1) * g]
            mu = constrained[..., 3 + k : 4 + k]
            out[..., N_FIXED + k * g : N_FIXED + (k + 1) * g] = (eff - mu) / sigma[..., k : k + 1]
        return out

    def pack(self, hyper, effects):
        """Unconstrained vector reproducing ``hyper`` and ``effects`` exactly."""
        if effects.g != self.g:
            raise DimensionMismatchError(f"effects have {effects.g} groups, layout has {self.g}")
        constrained = np.concatenate([hyper.as_array(), effects.as_matrix().ravel()])
        return self.unconstrain(constrained)

    def unpack(self, theta):
        c = self.constrain(theta)
        hyper = HyperParams(**dict(zip(HYPER_NAMES, c[:N_FIXED])))
        g = self.g
        effects = GroupEffects(*(c[N_FIXED + k * g : N_FIXED + (k + 1) * g] for k in range(4)))
        return hyper, effects


@njit(cache=True)
def model_logp_grad(theta, data):
    """Log-posterior and gradient for the packed model ``data`` (see :class:`PosteriorModel`)."""
    lx, lo, ly, ltot, xo, yo, active, const, sd_mu, sd_sigma = data
    g, T = xo.shape
    n = theta.shape[0]
    grad = np.zeros(n)
    lp = const
    half_log_2pi = 0.5 * math.log(2.0 * math.pi)

    inv_var_mu = 1.0 / (sd_mu * sd_mu)
    for k in range(7):
        lp -= 0.5 * theta[k] * theta[k] * inv_var_mu + math.log(sd_mu) + half_log_2pi
        grad[k] = -theta[k] * inv_var_mu

    inv_var_sigma = 1.0 / (sd_sigma * sd_sigma)
    sig = np.empty(4)
    for k in range(4):
        u = theta[7 + k]
        s = math.exp(u)
        sig[k] = s
        lp += math.log(2.0) - math.log(sd_sigma) - half_log_2pi - 0.5 * s * s * inv_var_sigma + u
        grad[7 + k] = 1.0 - s * s * inv_var_sigma

    for k in range(11, n):
        lp -= 0.5 * theta[k] * theta[k] + half_log_2pi
        grad[k] = -theta[k]

    for t in range(T):
        eta = theta[0] + theta[1] * ly[t] + theta[2] * ltot[t]
        mu = math.exp(eta)
        lp += yo[t] * eta - mu
        r = yo[t] - mu
        grad[0] += r
        grad[1] += r * ly[t]
        grad[2] += r * ltot[t]

    for i in range(g):
        zi_w = theta[11 + i]
        zi_l = theta[11 + g + i]
        zi_p = theta[11 + 2 * g + i]
        zi_d = theta[11 + 3 * g + i]
        w = theta[3] + sig[0] * zi_w
        lam = theta[4] + sig[1] * zi_l
        psi = theta[5] + sig[2] * zi_p
        dlt = theta[6] + sig[3] * zi_d
        sw = 0.0
        sl = 0.0
        sp = 0.0
        sd = 0.0
        for t in range(T):
            if active[i, t] == 0.0:
                continue
            eta = w + lam * lx[i, t] + psi * lo[i, t] + dlt * ly[t]
            mu = math.exp(eta)
            lp += xo[i, t] * eta - mu
            r = xo[i, t] - mu
            sw += r
            sl += r * lx[i, t]
            sp += r * lo[i, t]
            sd += r * ly[t]
        grad[3] += sw
        grad[4] += sl
        grad[5] += sp
        grad[6] += sd
        grad[7] += sw * sig[0] * zi_w
        grad[8] += sl * sig[1] * zi_l
        grad[9] += sp * sig[2] * zi_p
        grad[10] += sd * sig[3] * zi_d
        grad[11 + i] += sw * sig[0]
        grad[11 + g + i] += sl * sig[1]
        grad[11 + 2 * g + i] += sp * sig[2]
        grad[11 + 3 * g + i] += sd * sig[3]

    if not math.isfinite(lp):
        lp = -math.inf
    return lp, grad


class PosteriorModel:
    """Precomputed covariates for one panel; evaluates the log-posterior and gradient.

    With ``splitting_enabled`` a group's observations after it has split
    (formation factor 0) are excluded; a positive count in such a cell makes
    the data impossible and the log-posterior ``-inf`` everywhere.
    """

    def __init__(self, panel, prior=None, splitting_enabled=False, init_convention="NOT_YET_FORMED"):
        self.panel = panel
        self.prior = PriorSpec() if prior is None else prior
        self.splitting_enabled = bool(splitting_enabled)
        self.layout = ParamLayout(panel.g)

        x = panel.x.astype(float)
        y = panel.y.astype(float)
        total = x.sum(axis=0)
        if self.splitting_enabled:
            C = np.stack([indicator_track(row, init_convention)[2] for row in panel.x])
            active = C[:, 1:].astype(float)
        else:
            active = np.ones((panel.g, panel.T))
        xo = x[:, 1:]
        yo = y[1:]
        self.impossible = bool(np.any((active == 0) & (xo > 0)))
        const = -float(np.sum(gammaln(xo + 1.0) * active)) - float(np.sum(gammaln(yo + 1.0)))
        if self.impossible:
            const = -np.inf
        self.n_observations = int(active.sum()) + panel.T
        self.data = (
            np.ascontiguousarray(np.log1p(x[:, :-1])),
            np.ascontiguousarray(np.log1p(total[:-1] - x[:, :-1])),
            np.ascontiguousarray(np.log1p(y[:-1])),
            np.ascontiguousarray(np.log1p(total[:-1])),
            np.ascontiguousarray(xo),
            np.ascontiguousarray(yo),
            np.ascontiguousarray(active),
            const,
            float(self.prior.gaussian_sd_mu),
            float(self.prior.halfgaussian_sd_sigma),
        )

    def _check(self, theta):
        theta = np.ascontiguousarray(theta, dtype=float)
        if theta.shape != (self.layout.size,):
            raise DimensionMismatchError(
                f"theta has shape {theta.shape}, expected ({self.layout.size},) for g={self.panel.g}"
            )
        return theta

    def logp_and_grad(self, theta):
        return model_logp_grad(self._check(theta), self.data)

    def log_density(self, theta):
        return float(self.logp_and_grad(theta)[0])

    def grad(self, theta):
        lp, g = self.logp_and_grad(theta)
        if not np.isfinite(lp):
            raise ValueError("log-posterior is -inf at theta; gradient undefined")
        return g

    def log_likelihood(self, theta):
        """Likelihood part only (the log-posterior with every prior term removed)."""
        theta = self._check(theta)
        lp, _ = model_logp_grad(theta, self.data)
        return float(lp - self.log_prior(theta))

    def log_prior(self, theta):
        theta = self._check(theta)
        s_mu = self.prior.gaussian_sd_mu
        s_sig = self.prior.halfgaussian_sd_sigma
        loc = theta[:N_LOCATION]
        out = np.sum(-0.5 * (loc / s_mu) ** 2 - math.log(s_mu) - 0.5 * _LOG_2PI)
        u = theta[N_LOCATION:N_FIXED]
        sig = np.exp(u)
        out += np.sum(math.log(2.0) - math.log(s_sig) - 0.5 * _LOG_2PI - 0.5 * (sig / s_sig) ** 2 + u)
        z = theta[N_FIXED:]
        out += np.sum(-0.5 * z**2 - 0.5 * _LOG_2PI)
        return float(out)


def log_posterior(theta, panel, prior=None, splitting_enabled=False):
    """Unnormalized log-posterior at the unconstrained vector ``theta``."""
    return PosteriorModel(panel, prior, splitting_enabled).log_density(theta)


def grad_log_posterior(theta, panel, prior=None, splitting_enabled=False):
    """Analytic gradient of :func:`log_posterior`; raises if the density is zero at ``theta``."""
    return PosteriorModel(panel, prior, splitting_enabled).grad(theta)
