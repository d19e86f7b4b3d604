"""Convergence and identifiability diagnostics for multi-chain draws.

All functions accept either a :class:`~coupledar.inference.PosteriorDraws`
plus a parameter name, or a plain ``(n_chains, n_draws)`` array.
"""

import numpy as np
from scipy.stats import gaussian_kde

PPO_THRESHOLD = 35.0
PPO_GRID_SIZE = 4096
PPO_MIN_DRAWS = 100


def _chains(draws, parameter=None):
    if parameter is None:
        arr = np.asarray(draws, dtype=float)
    else:
        arr = np.asarray(draws.get(parameter), dtype=float)
    if arr.ndim != 2:
        raise ValueError(f"expected (n_chains, n_draws) array, got shape {arr.shape}")
    if arr.shape[0] < 2:
        raise ValueError("at least two chains are required")
    if arr.shape[1] < 10:
        raise ValueError("at least 10 draws per chain are required")
    return arr


def is_degenerate(draws, parameter=None):
    """True when every chain has zero variance (R-hat and ESS are then conventions)."""
    arr = _chains(draws, parameter)
    return bool(np.all(np.var(arr, axis=1) == 0))


def gelman_rubin(draws, parameter=None):
    """Potential scale reduction factor from between- and within-chain variances.

    Chains that are all constant give ``W == 0``; identical constants are
    reported as 1.0, differing constants as ``inf``.
    """
    arr = _chains(draws, parameter)
    m, n = arr.shape
    chain_means = arr.mean(axis=1)
    W = arr.var(axis=1, ddof=1).mean()
    B = n * chain_means.var(ddof=1)
    if W == 0:
        return 1.0 if B == 0 else float("inf")
    var_plus = (n - 1) / n * W + B / n
    return float(np.sqrt(var_plus / W))


def _autocovariance(x):
    """Biased autocovariance of each row of ``x`` via FFT."""
    n = x.shape[-1]
    size = 1 << int(np.ceil(np.log2(2 * n)))
    centered = x - x.mean(axis=-1, keepdims=True)
    f = np.fft.rfft(centered, size, axis=-1)
    acov = np.fft.irfft(f * np.conj(f), size, axis=-1)[..., :n]
    return acov / n


def effective_sample_size(draws, parameter=None):
    """Multi-chain ESS with Geyer's initial monotone positive sequence.

    Autocorrelations combine within-chain autocovariances with the pooled
    variance estimate, so poorly mixed chains are penalized. The result is
    capped at ``N * log10(N)`` for ``N`` total draws; constant chains give 0.
    """
    arr = _chains(draws, parameter)
    m, n = arr.shape
    total = m * n
    if is_degenerate(arr):
        return 0.0
    acov = _autocovariance(arr)
    W = acov[:, 0].mean() * n / (n - 1)
    var_plus = W * (n - 1) / n + arr.mean(axis=1).var(ddof=1)
    rho = 1.0 - (W - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0

    # sums of adjacent pairs, truncated at the first non-positive pair
    n_pairs = n // 2
    pairs = rho[: 2 * n_pairs].reshape(n_pairs, 2).sum(axis=1)
    nonpositive = np.flatnonzero(pairs <= 0)
    k = nonpositive[0] if nonpositive.size else n_pairs
    pairs = np.minimum.accumulate(pairs[:k])
    tau = -1.0 + 2.0 * pairs.sum()
    tau = max(tau, 1.0 / np.log10(total))
    return float(total / tau)


def prior_posterior_overlap(draws, parameter=None, prior=None, *, prior_name=None):
    """Percentage overlap between the prior density and a KDE of the pooled draws.

    Returns ``(overlap_percent, weakly_identifiable)`` where the flag is
    ``overlap > 35``. The integral of ``min(posterior, prior)`` is taken by
    trapezoid rule on 4096 nodes spanning the prior mean +/- 6 prior SDs
    (clipped to the prior's support). ``prior`` is a
    :class:`~coupledar.posterior.PriorSpec`; the named parameter selects
    which of its densities applies (``prior_name`` overrides the name when
    ``draws`` is a plain array).
    """
    from .posterior import PriorSpec

    prior = PriorSpec() if prior is None else prior
    name = prior_name or parameter
    if name is None:
        raise ValueError("a parameter name is needed to select the prior density")
    if parameter is not None and not isinstance(draws, np.ndarray):
        pooled = np.asarray(draws.get(parameter), dtype=float).ravel()
    else:
        pooled = np.asarray(draws, dtype=float).ravel()
    if pooled.size < PPO_MIN_DRAWS:
        raise ValueError(f"need at least {PPO_MIN_DRAWS} draws, got {pooled.size}")

    mean, sd, lower = prior.support(name)
    lo = max(mean - 6.0 * sd, lower)
    hi = mean + 6.0 * sd
    grid = np.linspace(lo, hi, PPO_GRID_SIZE)
    prior_pdf = prior.density(name, grid)
    if np.ptp(pooled) == 0:
        # a point mass has no overlap with a continuous prior
        return 0.0, False
    post_pdf = gaussian_kde(pooled, bw_method="silverman")(grid)
    overlap = 100.0 * np.trapezoid(np.minimum(post_pdf, prior_pdf), grid)
    overlap = float(np.clip(overlap, 0.0, 100.0))
    return overlap, is_weakly_identifiable(overlap)


def is_weakly_identifiable(overlap_percent, threshold=PPO_THRESHOLD):
    return bool(overlap_percent > threshold)
