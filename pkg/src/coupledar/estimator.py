"""scikit-learn style front ends for fitting and for the correlation approximation.

Both estimators take ``X`` with one row per time step and one column per
group, and ``y`` holding the auxiliary series on the same steps.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_xy
from .correlation import StationaryMeans, rho_tilde, sign_region, stationary_means_from_panel
from .exceptions import DimensionMismatchError
from .inference import SamplerConfig, sample, summarize
from .model import InitConvention, Panel, indicator_track
from .posterior import PosteriorModel, PriorSpec


class CoupledPoissonAR(BaseEstimator):
    """Bayesian fit of the coupled group/auxiliary Poisson autoregression.

    Parameters mirror :class:`~coupledar.inference.SamplerConfig` and
    :class:`~coupledar.posterior.PriorSpec`. After :meth:`fit`:

    ``draws_``
        :class:`~coupledar.inference.PosteriorDraws` on the constrained scale.
    ``hyper_``, ``effects_``
        Posterior means as ``HyperParams`` and ``GroupEffects``.
    ``n_groups_``
        Number of groups seen during fit.
    """

    def __init__(
        self,
        n_chains=4,
        n_iterations=2000,
        burnin=1000,
        thin=1,
        target_accept=0.8,
        max_tree_depth=10,
        splitting_enabled=False,
        prior_sd_mu=100.0,
        prior_sd_sigma=100.0,
        n_jobs=1,
        random_state=0,
    ):
        self.n_chains = n_chains
        self.n_iterations = n_iterations
        self.burnin = burnin
        self.thin = thin
        self.target_accept = target_accept
        self.max_tree_depth = max_tree_depth
        self.splitting_enabled = splitting_enabled
        self.prior_sd_mu = prior_sd_mu
        self.prior_sd_sigma = prior_sd_sigma
        self.n_jobs = n_jobs
        self.random_state = random_state

    def _sampler_config(self):
        return SamplerConfig(
            n_chains=self.n_chains,
            n_iterations=self.n_iterations,
            burnin=self.burnin,
            thin=self.thin,
            target_accept=self.target_accept,
            max_tree_depth=self.max_tree_depth,
            seed=self.random_state,
        )

    def _prior(self):
        return PriorSpec(self.prior_sd_mu, self.prior_sd_sigma)

    def fit(self, X, y):
        x, y = check_xy(X, y)
        panel = Panel(x=x, y=y)
        self.draws_ = sample(
            panel,
            self._prior(),
            self._sampler_config(),
            splitting_enabled=self.splitting_enabled,
            n_jobs=self.n_jobs,
        )
        self.hyper_ = self.draws_.hyper_mean()
        self.effects_ = self.draws_.effects_mean()
        self.n_groups_ = panel.g
        return self

    def summary(self):
        """Posterior summary table with R-hat, ESS and prior-posterior overlap."""
        check_is_fitted(self, "draws_")
        return summarize(self.draws_, self._prior())

    def _panel(self, X, y):
        check_is_fitted(self, "draws_")
        x, y = check_xy(X, y)
        if x.shape[0] != self.n_groups_:
            raise DimensionMismatchError(f"X has {x.shape[0]} groups, model was fit on {self.n_groups_}")
        return Panel(x=x, y=y)

    def predict(self, X, y):
        """One-step-ahead conditional means at the posterior-mean parameters.

        Returns an array of shape ``(n_steps - 1, n_groups + 1)``: row ``t``
        holds the expected group counts and auxiliary count at step ``t + 1``
        given the observations at step ``t``. The last column is the
        auxiliary series.
        """
        panel = self._panel(X, y)
        coef = self.effects_.as_matrix()
        x_prev = panel.x[:, :-1]
        total = x_prev.sum(axis=0)
        eta = (
            coef[0][:, None]
            + coef[1][:, None] * np.log1p(x_prev)
            + coef[2][:, None] * np.log1p(total - x_prev)
            + coef[3][:, None] * np.log1p(panel.y[:-1])
        )
        mu = np.exp(eta)
        if self.splitting_enabled:
            C = np.stack([indicator_track(row, InitConvention.NOT_YET_FORMED)[2] for row in panel.x])
            mu = mu * C[:, 1:]
        h = self.hyper_
        mu_y = np.exp(h.omega_Y + h.lambda_Y * np.log1p(panel.y[:-1]) + h.gamma * np.log1p(total))
        return np.column_stack([mu.T, mu_y])

    def score(self, X, y):
        """Mean Poisson log-likelihood per observation at the posterior-mean parameters."""
        panel = self._panel(X, y)
        model = PosteriorModel(panel, self._prior(), self.splitting_enabled)
        theta = model.layout.pack(self.hyper_, self.effects_)
        return model.log_likelihood(theta) / max(model.n_observations, 1)


class NetGroupCorrelation(BaseEstimator):
    """Closed-form net correlation between groups from stationary means.

    ``hyper`` supplies ``mu_omega, mu_lambda, mu_psi, mu_delta`` (a
    ``HyperParams`` or a mapping). :meth:`fit` estimates the stationary means
    as time averages; after fitting, ``report_`` holds the full
    :class:`~coupledar.correlation.RhoReport` and ``rho_tilde_``,
    ``rho_star_`` and ``sign_regions_`` the per-group results.
    """

    def __init__(self, hyper=None, tolerance=0.1):
        self.hyper = hyper
        self.tolerance = tolerance

    def fit(self, X, y):
        if self.hyper is None:
            raise ValueError("hyper must be set before fitting")
        x, y = check_xy(X, y)
        means = stationary_means_from_panel(Panel(x=x, y=y))
        return self._fit_means(means)

    def fit_means(self, mu_x, mu_y):
        """Use supplied stationary means instead of time averages."""
        if self.hyper is None:
            raise ValueError("hyper must be set before fitting")
        return self._fit_means(StationaryMeans(mu_x=mu_x, mu_y=mu_y))

    def _fit_means(self, means):
        self.means_ = means
        self.report_ = rho_tilde(means, self.hyper, self.tolerance)
        self.rho_tilde_ = self.report_.rho_tilde
        self.rho_star_ = self.report_.rho_star
        self.sign_regions_ = [sign_region(i, means, self.hyper) for i in range(means.g)]
        return self
