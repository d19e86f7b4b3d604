import numpy as np
import pytest

from coupledar.exceptions import DimensionMismatchError
from coupledar.model import GroupEffects, HyperParams, Panel
from coupledar.posterior import (
    ParamLayout,
    PosteriorModel,
    PriorSpec,
    grad_log_posterior,
    log_posterior,
)
from oracles import central_difference, reference_log_posterior


def random_panel(rng, g, T, splitting=False):
    x = rng.poisson(3, (g, T + 1))
    if splitting:
        # one positive run per group, possibly absent at the start
        x = np.zeros((g, T + 1), dtype=int)
        for i in range(g):
            start = rng.integers(0, T)
            stop = rng.integers(start + 1, T + 2)
            x[i, start:stop] = rng.integers(1, 6, stop - start)
    return Panel(x=x, y=rng.poisson(20, T + 1))


@pytest.mark.parametrize("splitting", [False, True])
def test_log_posterior_matches_scipy_reference(splitting):
    rng = np.random.default_rng(1)
    for _ in range(20):
        g, T = int(rng.integers(2, 5)), int(rng.integers(1, 9))
        p = random_panel(rng, g, T, splitting)
        theta = rng.normal(0, 0.4, 11 + 4 * g)
        ref = reference_log_posterior(theta, p.x, p.y, splitting=splitting)
        assert log_posterior(theta, p, splitting_enabled=splitting) == pytest.approx(ref, rel=1e-10, abs=1e-9)


def test_gradient_matches_finite_differences_with_splitting():
    rng = np.random.default_rng(2)
    for _ in range(10):
        p = random_panel(rng, 3, 8, splitting=True)
        model = PosteriorModel(p, splitting_enabled=True)
        theta = rng.normal(0, 0.3, model.layout.size)
        fd = central_difference(model.log_density, theta)
        np.testing.assert_allclose(model.grad(theta), fd, rtol=1e-6, atol=1e-7)


def test_prior_scale_enters_density():
    rng = np.random.default_rng(3)
    p = random_panel(rng, 2, 4)
    theta = rng.normal(0, 0.5, 19)
    ref = reference_log_posterior(theta, p.x, p.y, sd_mu=2.0, sd_sigma=3.0)
    assert log_posterior(theta, p, PriorSpec(2.0, 3.0)) == pytest.approx(ref, rel=1e-10)


def test_likelihood_plus_prior_is_posterior():
    rng = np.random.default_rng(4)
    model = PosteriorModel(random_panel(rng, 3, 5))
    theta = rng.normal(0, 0.3, model.layout.size)
    assert model.log_likelihood(theta) + model.log_prior(theta) == pytest.approx(model.log_density(theta))


def test_split_then_positive_is_impossible():
    p = Panel(x=[[2, 0, 3], [1, 1, 1]], y=[4, 4, 4])
    model = PosteriorModel(p, splitting_enabled=True)
    assert model.impossible
    theta = np.zeros(model.layout.size)
    assert model.log_density(theta) == -np.inf
    with pytest.raises(ValueError):
        model.grad(theta)
    # the plain model has no such restriction
    assert np.isfinite(log_posterior(theta, p))


def test_wrong_dimension_raises():
    p = Panel(x=[[1, 2], [3, 4]], y=[1, 2])
    with pytest.raises(DimensionMismatchError):
        grad_log_posterior(np.zeros(5), p)


def test_zero_transitions_panel_is_prior_only():
    p = Panel(x=[[1], [2]], y=[3])
    rng = np.random.default_rng(5)
    theta = rng.normal(0, 1, 19)
    model = PosteriorModel(p)
    assert model.log_likelihood(theta) == pytest.approx(0.0, abs=1e-12)


def test_layout_pack_unpack_round_trip():
    layout = ParamLayout(3)
    hyper = HyperParams(0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.1, 1.2)
    eff = GroupEffects([1.0, 2.0, 3.0], [0.1, 0.2, 0.3], [-1.0, 0.0, 1.0], [0.5, 0.5, 0.4])
    h2, e2 = layout.unpack(layout.pack(hyper, eff))
    assert np.allclose(h2.as_array(), hyper.as_array())
    assert np.allclose(e2.as_matrix(), eff.as_matrix())
    assert layout.names[11] == "z_omega[1]" and layout.constrained_names[-1] == "delta[3]"
