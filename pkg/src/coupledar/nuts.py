"""No-U-turn Hamiltonian Monte Carlo compiled with numba.

One call to :func:`run_chain` performs warmup and sampling for a single
chain. Warmup follows the usual windowed scheme: a fast interval adapting
only the step size (dual averaging), a sequence of doubling slow windows
that estimate a diagonal inverse mass matrix from the draws, and a final
fast interval. Trajectories are built iteratively with multinomial sampling
of the proposal and the generalized (momentum-sum) U-turn criterion.

The log-density is any numba-compiled ``f(theta, data) -> (logp, grad)``.
"""

import math

import numpy as np
from numba import njit

DIVERGENCE_THRESHOLD = 1000.0


def adaptation_schedule(n_warmup, init_buffer=75, term_buffer=50, base_window=25):
    """Return ``(init_buffer, window_ends)`` for the slow metric-adaptation windows.

    ``window_ends`` holds the (exclusive) warmup iteration at which each slow
    window closes. Short warmups shrink the buffers to 15% / 10% of warmup.
    """
    if n_warmup < 20:
        return n_warmup, np.zeros(0, dtype=np.int64)
    if init_buffer + term_buffer + base_window > n_warmup:
        init_buffer = int(0.15 * n_warmup)
        term_buffer = int(0.1 * n_warmup)
        base_window = n_warmup - init_buffer - term_buffer
    ends = []
    start, size = init_buffer, base_window
    last = n_warmup - term_buffer
    while start < last:
        end = start + size
        if end + 2 * size > last:
            end = last
        ends.append(end)
        start, size = end, 2 * size
    return init_buffer, np.array(ends, dtype=np.int64)


@njit(cache=True)
def _kinetic(p, inv_mass):
    k = 0.0
    for j in range(p.shape[0]):
        k += inv_mass[j] * p[j] * p[j]
    return 0.5 * k


@njit(cache=True)
def _leapfrog(logp_grad, data, theta, p, grad, eps, inv_mass):
    p_half = p + 0.5 * eps * grad
    theta_new = theta + eps * inv_mass * p_half
    lp, grad_new = logp_grad(theta_new, data)
    p_new = p_half + 0.5 * eps * grad_new
    return theta_new, p_new, lp, grad_new


@njit(cache=True)
def _no_uturn(p_start, p_end, rho, inv_mass):
    a = 0.0
    b = 0.0
    for j in range(rho.shape[0]):
        a += inv_mass[j] * p_start[j] * rho[j]
        b += inv_mass[j] * p_end[j] * rho[j]
    return a > 0.0 and b > 0.0


@njit(cache=True)
def _logaddexp(a, b):
    if a == -math.inf:
        return b
    if b == -math.inf:
        return a
    m = max(a, b)
    return m + math.log(math.exp(a - m) + math.exp(b - m))


@njit(cache=True)
def _draw_momentum(inv_mass):
    d = inv_mass.shape[0]
    p = np.empty(d)
    for j in range(d):
        p[j] = np.random.standard_normal() / math.sqrt(inv_mass[j])
    return p


@njit(cache=True)
def find_step_size(logp_grad, data, theta, lp, grad, inv_mass, eps):
    """Double or halve ``eps`` until one leapfrog step crosses acceptance 0.8."""
    p = _draw_momentum(inv_mass)
    h0 = -lp + _kinetic(p, inv_mass)
    _, p1, lp1, _ = _leapfrog(logp_grad, data, theta, p, grad, eps, inv_mass)
    h1 = -lp1 + _kinetic(p1, inv_mass)
    if not math.isfinite(h1):
        h1 = math.inf
    direction = 1 if h0 - h1 > math.log(0.8) else -1
    for _ in range(100):
        p = _draw_momentum(inv_mass)
        h0 = -lp + _kinetic(p, inv_mass)
        _, p1, lp1, _ = _leapfrog(logp_grad, data, theta, p, grad, eps, inv_mass)
        h1 = -lp1 + _kinetic(p1, inv_mass)
        if not math.isfinite(h1):
            h1 = math.inf
        delta = h0 - h1
        if direction == 1 and not delta > math.log(0.8):
            break
        if direction == -1 and not delta < math.log(0.8):
            break
        eps = eps * 2.0 if direction == 1 else eps * 0.5
        if eps > 1e7 or eps < 1e-12:
            break
    return eps


@njit(cache=True)
def transition(logp_grad, data, theta, lp, grad, eps, inv_mass, max_depth):
    """One NUTS transition from ``theta``.

    Returns ``(theta, lp, grad, accept_stat, depth, n_leapfrog, divergent)``.
    """
    d = theta.shape[0]
    p0 = _draw_momentum(inv_mass)
    h0 = -lp + _kinetic(p0, inv_mass)

    th_l = theta.copy()
    p_l = p0.copy()
    g_l = grad.copy()
    th_r = theta.copy()
    p_r = p0.copy()
    g_r = grad.copy()
    rho = p0.copy()
    log_w = 0.0

    th_s = theta
    lp_s = lp
    g_s = grad

    ck_p = np.empty((max_depth + 1, d))
    ck_cum = np.empty((max_depth + 1, d))

    depth = 0
    n_leapfrog = 0
    sum_accept = 0.0
    divergent = False

    while depth < max_depth:
        forward = np.random.random() < 0.5
        if forward:
            th = th_r
            p = p_r
            gr = g_r
            step = eps
        else:
            th = th_l
            p = p_l
            gr = g_l
            step = -eps

        n_leaves = 1 << depth
        cum = np.zeros(d)
        sub_log_w = -math.inf
        sub_th = th
        sub_lp = lp
        sub_g = gr
        stop = False
        for n in range(n_leaves):
            th, p, lp_new, gr = _leapfrog(logp_grad, data, th, p, gr, step, inv_mass)
            n_leapfrog += 1
            h = -lp_new + _kinetic(p, inv_mass)
            if not math.isfinite(h):
                h = math.inf
            if h - h0 > DIVERGENCE_THRESHOLD:
                divergent = True
                stop = True
                break
            sum_accept += min(1.0, math.exp(h0 - h))

            lw = h0 - h
            new_log_w = _logaddexp(sub_log_w, lw)
            if math.log(np.random.random()) < lw - new_log_w:
                sub_th = th
                sub_lp = lp_new
                sub_g = gr
            sub_log_w = new_log_w

            for k in range(1, depth + 1):
                if n % (1 << k) == 0:
                    ck_p[k, :] = p
                    ck_cum[k, :] = cum
            cum += p
            for k in range(1, depth + 1):
                if (n + 1) % (1 << k) == 0:
                    if not _no_uturn(ck_p[k], p, cum - ck_cum[k], inv_mass):
                        stop = True
            if stop:
                break

        if stop:
            depth += 1
            break

        if forward:
            th_r = th
            p_r = p
            g_r = gr
        else:
            th_l = th
            p_l = p
            g_l = gr

        if math.log(np.random.random()) < sub_log_w - log_w:
            th_s = sub_th
            lp_s = sub_lp
            g_s = sub_g
        log_w = _logaddexp(log_w, sub_log_w)
        rho = rho + cum
        depth += 1
        if not _no_uturn(p_l, p_r, rho, inv_mass):
            break

    accept = sum_accept / n_leapfrog if n_leapfrog > 0 else 0.0
    return th_s.copy(), lp_s, g_s.copy(), accept, depth, n_leapfrog, divergent


@njit(cache=True)
def run_chain(
    logp_grad,
    data,
    theta0,
    n_iter,
    n_warmup,
    target_accept,
    max_depth,
    seed,
    init_buffer,
    window_ends,
):
    """Warm up and sample one chain; all iterations are returned on the unconstrained scale.

    Returns ``(draws, stats, step_size, inv_mass)`` where ``stats`` columns are
    accept_stat, step_size, tree_depth, n_leapfrog, divergent, lp.
    """
    np.random.seed(seed)
    d = theta0.shape[0]
    theta = theta0.copy()
    lp, grad = logp_grad(theta, data)
    inv_mass = np.ones(d)
    eps = find_step_size(logp_grad, data, theta, lp, grad, inv_mass, 1.0)

    # dual averaging state
    gamma = 0.05
    t0 = 10.0
    kappa = 0.75
    mu = math.log(10.0 * eps)
    s_bar = 0.0
    x_bar = 0.0
    counter = 0

    # Welford accumulators for the current slow window
    w_n = 0
    w_mean = np.zeros(d)
    w_m2 = np.zeros(d)
    window = 0
    n_windows = window_ends.shape[0]

    draws = np.empty((n_iter, d))
    stats = np.empty((n_iter, 6))

    for it in range(n_iter):
        theta, lp, grad, accept, depth, n_lf, div = transition(
            logp_grad, data, theta, lp, grad, eps, inv_mass, max_depth
        )
        draws[it, :] = theta
        stats[it, 0] = accept
        stats[it, 1] = eps
        stats[it, 2] = depth
        stats[it, 3] = n_lf
        stats[it, 4] = 1.0 if div else 0.0
        stats[it, 5] = lp

        if it < n_warmup:
            counter += 1
            a = min(1.0, accept)
            eta = 1.0 / (counter + t0)
            s_bar = (1.0 - eta) * s_bar + eta * (target_accept - a)
            x = mu - s_bar * math.sqrt(counter) / gamma
            x_eta = counter ** (-kappa)
            x_bar = (1.0 - x_eta) * x_bar + x_eta * x
            eps = math.exp(x)

            if window < n_windows and it >= init_buffer:
                w_n += 1
                delta = theta - w_mean
                w_mean += delta / w_n
                w_m2 += delta * (theta - w_mean)
                if it + 1 == window_ends[window]:
                    var = w_m2 / max(w_n - 1, 1)
                    inv_mass = (w_n / (w_n + 5.0)) * var + 1e-3 * (5.0 / (w_n + 5.0))
                    w_n = 0
                    w_mean[:] = 0.0
                    w_m2[:] = 0.0
                    window += 1
                    eps = find_step_size(logp_grad, data, theta, lp, grad, inv_mass, eps)
                    mu = math.log(10.0 * eps)
                    s_bar = 0.0
                    x_bar = 0.0
                    counter = 0
            if it + 1 == n_warmup and counter > 0:
                eps = math.exp(x_bar)
    return draws, stats, eps, inv_mass


@njit(cache=True)
def gaussian_logp_grad(theta, data):
    """Independent Gaussian target ``N(mean, sd**2)``; used to check the sampler."""
    mean, sd = data
    lp = 0.0
    grad = np.empty(theta.shape[0])
    for j in range(theta.shape[0]):
        z = (theta[j] - mean[j]) / sd[j]
        lp -= 0.5 * z * z
        grad[j] = -z / sd[j]
    return lp, grad
