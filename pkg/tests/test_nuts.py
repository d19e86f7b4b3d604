import numpy as np

from coupledar import nuts


def run_gaussian(mean, sd, seed, n_iter=3000, n_warmup=1000):
    data = (np.asarray(mean, float), np.asarray(sd, float))
    init_buffer, ends = nuts.adaptation_schedule(n_warmup)
    return nuts.run_chain(
        nuts.gaussian_logp_grad, data, np.zeros(len(mean)), n_iter, n_warmup, 0.8, 10, seed, init_buffer, ends
    )


def test_adaptation_schedule_windows():
    init_buffer, ends = nuts.adaptation_schedule(1000)
    assert init_buffer == 75
    assert list(ends) == [100, 150, 250, 450, 950]
    init_buffer, ends = nuts.adaptation_schedule(100)
    assert init_buffer == 15 and ends[-1] == 90
    assert len(nuts.adaptation_schedule(10)[1]) == 0


def test_sampler_recovers_gaussian_moments():
    mean = np.array([1.0, -2.0, 0.0, 5.0])
    sd = np.array([0.1, 1.0, 3.0, 10.0])
    draws, stats, eps, inv_mass = run_gaussian(mean, sd, seed=1)
    post = draws[1000:]
    assert np.all(np.abs(post.mean(axis=0) - mean) < 0.15 * sd)
    assert np.all(np.abs(post.std(axis=0) / sd - 1.0) < 0.15)
    # adapted metric approximates the target variances
    assert np.all(np.abs(np.sqrt(inv_mass) / sd - 1.0) < 0.35)
    assert stats[1000:, 4].sum() == 0
    assert 0.6 < stats[1000:, 0].mean() < 0.97


def test_same_seed_same_chain():
    a = run_gaussian([0.0, 0.0], [1.0, 2.0], seed=3, n_iter=300, n_warmup=100)
    b = run_gaussian([0.0, 0.0], [1.0, 2.0], seed=3, n_iter=300, n_warmup=100)
    c = run_gaussian([0.0, 0.0], [1.0, 2.0], seed=4, n_iter=300, n_warmup=100)
    assert np.array_equal(a[0], b[0])
    assert not np.array_equal(a[0], c[0])


def test_divergence_flagged_for_huge_step():
    data = (np.zeros(3), np.array([1e-3, 1.0, 1.0]))
    theta = np.array([0.0, 0.5, 0.5])
    lp, grad = nuts.gaussian_logp_grad(theta, data)
    out = nuts.transition(nuts.gaussian_logp_grad, data, theta, lp, grad, 5.0, np.ones(3), 10)
    assert out[6]
