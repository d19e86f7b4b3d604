import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from coupledar.correlation import (
    MeansSource,
    SignRegion,
    StationaryMeans,
    clamp_rho,
    lognormal_moments,
    rho_terms,
    rho_tilde,
    sign_region,
    stationary_means_from_panel,
    taylor_log_mean,
    v_term,
)
from coupledar.exceptions import InvalidHyperparameterError, InvalidMeansError, StationarityWarning
from coupledar.model import Panel
from oracles import delta_method_log_mean, plant_mu_delta, stationarity_rhs

HYPER = {"mu_omega": 0.9, "mu_lambda": 1.2, "mu_psi": 0.3, "mu_delta": 0.2}


def test_lognormal_moments():
    assert lognormal_moments(0, 0) == (1.0, 0.0)
    mean, var = lognormal_moments(0, 1)
    assert mean == pytest.approx(math.exp(0.5))
    assert var == pytest.approx(math.e * (math.e - 1))
    mean, _ = lognormal_moments(math.log(4), math.log(4))
    assert mean == pytest.approx(8.0)


def test_taylor_log_mean_values():
    assert taylor_log_mean(3.0, 0.0) == pytest.approx(math.log(4))
    assert taylor_log_mean(0.0, 0.0) == 0.0
    assert taylor_log_mean(5.0, 2.0) == pytest.approx(math.log(6) + 2 / 72, rel=1e-14)


def test_taylor_log_mean_against_monte_carlo():
    # Gamma with mean 5 and variance 2
    rng = np.random.default_rng(0)
    x = rng.gamma(shape=12.5, scale=0.4, size=2_000_000)
    mc = np.log1p(x).mean()
    # the delta method (curvature term subtracted) tracks the simulation
    assert abs(delta_method_log_mean(5.0, 2.0) - mc) < 0.02
    # the implemented convention adds the curvature term, overshooting by about var/(mean+1)^2
    assert taylor_log_mean(5.0, 2.0) - mc == pytest.approx(2 / 36, abs=0.005)


def test_v_term():
    assert v_term(1.0) == 0.0
    assert v_term(2.0) == 8.0
    assert v_term(0.5) == -0.0625
    with pytest.raises(InvalidMeansError):
        StationaryMeans(mu_x=[0.5, 2.0, 3.0], mu_y=3.0)


def test_stationary_means_validation():
    with pytest.raises(InvalidMeansError, match="group 2"):
        StationaryMeans(mu_x=[2.0, 1.0, 3.0], mu_y=3.0)
    with pytest.raises(InvalidMeansError):
        StationaryMeans(mu_x=[2.0, 2.0, 3.0], mu_y=0.0)


def test_symmetric_D_matches_hand_formula():
    for g in (3, 5, 9):
        mu = 2.5
        means = StationaryMeans(mu_x=[mu] * g, mu_y=4.0)
        V = (mu - 1) * mu**3
        expected = 2 * ((g - 1) * mu**1.5 + 1) ** 2 / ((g - 1) * (g - 2) * V)
        for i in range(g):
            assert rho_terms(i, means, HYPER)[3] == pytest.approx(expected, rel=1e-12)


def test_needs_three_groups():
    with pytest.raises(InvalidMeansError):
        rho_terms(0, StationaryMeans(mu_x=[2.0, 3.0], mu_y=4.0), HYPER)


def test_auxiliary_mean_only_changes_B():
    a = rho_terms(1, StationaryMeans(mu_x=[2.0, 3.0, 4.0, 5.0], mu_y=4.0), HYPER)
    b = rho_terms(1, StationaryMeans(mu_x=[2.0, 3.0, 4.0, 5.0], mu_y=40.0), HYPER)
    assert a[0] == b[0] and a[2] == b[2] and a[3] == b[3]
    assert a[1] != b[1]


def test_rho_tilde_symmetric_means_agree():
    report = rho_tilde(StationaryMeans(mu_x=[3.0] * 6, mu_y=5.0), HYPER)
    assert report.dispersion == 0.0
    assert report.consistent
    assert np.all(report.rho_tilde == report.rho_tilde[0])


def test_rho_tilde_rejects_zero_mu_psi():
    with pytest.raises(InvalidHyperparameterError):
        rho_tilde(StationaryMeans(mu_x=[3.0] * 4, mu_y=5.0), {**HYPER, "mu_psi": 0.0})


def test_round_trip_solving_for_mu_omega():
    # choose rho, then set mu_omega so the stationarity equation holds exactly
    rng = np.random.default_rng(1)
    for _ in range(200):
        g = int(rng.integers(3, 11))
        mu, mu_y = rng.uniform(1.5, 50.0), rng.uniform(1.5, 50.0)
        rho = rng.uniform(-1, 1)
        hyper = {"mu_omega": 0.0, "mu_lambda": rng.uniform(-1, 2), "mu_psi": rng.choice([-1, 1]) * rng.uniform(0.05, 2),
                 "mu_delta": rng.uniform(-1, 1)}
        hyper["mu_omega"] = math.log(mu) - stationarity_rhs(0, [mu] * g, mu_y, **hyper, rho=rho)
        report = rho_tilde(StationaryMeans(mu_x=[mu] * g, mu_y=mu_y), hyper)
        assert np.all(np.abs(report.rho_tilde - rho) < 1e-8)


def test_substituting_rho_back_reproduces_log_mean():
    rng = np.random.default_rng(2)
    for _ in range(100):
        g = int(rng.integers(3, 8))
        mu_x = rng.uniform(1.5, 20.0, g)
        mu_y = rng.uniform(1.5, 20.0)
        hyper = {"mu_omega": rng.uniform(-2, 2), "mu_lambda": rng.uniform(-1, 2),
                 "mu_psi": rng.uniform(0.1, 2), "mu_delta": rng.uniform(-1, 1)}
        report = rho_tilde(StationaryMeans(mu_x=mu_x, mu_y=mu_y), hyper)
        for i in range(g):
            rhs = stationarity_rhs(i, list(mu_x), mu_y, **hyper, rho=report.rho_tilde[i])
            assert rhs == pytest.approx(math.log(mu_x[i]), abs=1e-10)


def test_permuting_groups_permutes_outputs():
    mu_x = np.array([2.0, 3.0, 5.0, 7.0])
    order = [2, 0, 3, 1]
    a = rho_tilde(StationaryMeans(mu_x=mu_x, mu_y=4.0), HYPER).rho_tilde
    b = rho_tilde(StationaryMeans(mu_x=mu_x[order], mu_y=4.0), HYPER).rho_tilde
    np.testing.assert_allclose(b, a[order], rtol=1e-12)


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_clamp_is_idempotent_and_bounded(v):
    c = clamp_rho(v)
    assert -1 <= c <= 1
    assert clamp_rho(c) == c


def test_monotone_log_inequality():
    rng = np.random.default_rng(3)
    x = rng.uniform(1e-6, 1e4, 10000)
    lam = rng.uniform(1, 5, 10000)
    assert np.all(np.log(x) - lam * np.log(x**1.5 + 1) < 0)


def test_sign_region_boundary_point():
    means = StationaryMeans(mu_x=[2.0, 3.0, 4.0], mu_y=5.0)
    A, B, C, _ = rho_terms(0, means, HYPER)
    boundary = {**HYPER, "mu_psi": -A / C, "mu_delta": 0.0}
    assert sign_region(0, means, boundary) is SignRegion.BOUNDARY


def test_sign_region_positive_region_gives_positive_rho():
    means = StationaryMeans(mu_x=[2.0, 3.0, 4.0], mu_y=5.0)
    A, B, C, _ = rho_terms(0, means, HYPER)
    # mu_psi > 0 with s < 0 requires a negative enough mu_delta
    hyper = {**HYPER, "mu_psi": 0.5, "mu_delta": -(A + 0.5 * C) / B - 1.0}
    assert sign_region(0, means, hyper) is SignRegion.POSITIVE
    assert rho_tilde(means, hyper).rho_tilde[0] > 0


def test_means_from_constant_panel():
    p = Panel(x=np.full((3, 10), 4), y=np.full(10, 7))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        means = stationary_means_from_panel(p)
    assert np.all(means.mu_x == 4.0) and means.mu_y == 7.0
    assert means.source is MeansSource.EMPIRICAL


def test_trending_series_warns():
    trend = np.linspace(0, 100, 21).round().astype(int)
    p = Panel(x=np.vstack([trend, np.full(21, 5), np.full(21, 5)]), y=np.full(21, 7))
    with pytest.warns(StationarityWarning):
        means = stationary_means_from_panel(p)
    assert len(means.warnings) == 1


def test_all_zero_group_is_rejected():
    p = Panel(x=np.vstack([np.zeros(10, int), np.full(10, 5), np.full(10, 5)]), y=np.full(10, 7))
    with pytest.raises(InvalidMeansError, match="x1"):
        stationary_means_from_panel(p)


def test_report_json(tmp_path):
    report = rho_tilde(StationaryMeans(mu_x=[2.0, 3.0, 4.0], mu_y=5.0), HYPER, group_labels=("a", "b", "c"))
    doc = report.to_json(tmp_path / "r.json", {"seed": 1})
    assert [e["group"] for e in doc["groups"]] == ["a", "b", "c"]
    assert set(doc["groups"][0]) >= {"rho_tilde", "rho_star", "A", "B", "C", "D", "V"}
    assert doc["dispersion"] >= 0
