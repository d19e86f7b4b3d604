import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coupledar.exceptions import (
    DimensionMismatchError,
    IntensityExplosionError,
    InvalidHyperparameterError,
    InvalidPanelError,
)
from coupledar.model import (
    GroupEffects,
    HyperParams,
    InitConvention,
    Panel,
    SimConfig,
    aux_log_intensity,
    draw_group_effects,
    formation_factor,
    group_log_intensity,
    indicator_track,
    read_panel_csv,
    save_panel,
    series_streams,
    simulate_panel,
    simulate_steps,
)
from oracles import PACK_EXAMPLE_A, PACK_EXAMPLE_B, PACK_EXAMPLE_C, PACK_EXAMPLE_X, formation_factors

S1 = HyperParams(
    omega_Y=0.9, lambda_Y=0.9, gamma=-0.05, mu_omega=0.9, mu_lambda=0.06, mu_psi=-0.5,
    mu_delta=0.2, sigma_omega=0.2, sigma_lambda=0.2, sigma_psi=0.04, sigma_delta=0.04,
)


def test_hyperparams_reject_nonpositive_sigma():
    with pytest.raises(InvalidHyperparameterError):
        S1.replace(sigma_psi=0.0)
    with pytest.raises(InvalidHyperparameterError):
        S1.replace(sigma_omega=-1.0)


def test_hyperparams_dict_round_trip():
    assert HyperParams.from_dict(S1.to_dict()) == S1
    with pytest.raises(InvalidHyperparameterError):
        HyperParams.from_dict({"omega_Y": 1.0})


def test_group_effects_need_two_groups_of_equal_length():
    with pytest.raises(DimensionMismatchError):
        GroupEffects([0.0], [0.0], [0.0], [0.0])
    with pytest.raises(DimensionMismatchError):
        GroupEffects([0.0, 1.0], [0.0, 1.0], [0.0, 1.0], [0.0])


def test_draw_group_effects_rejects_zero_sigma():
    bad = HyperParams(**{**S1.to_dict(), "sigma_omega": 1.0})
    object.__setattr__(bad, "sigma_omega", 0.0)
    with pytest.raises(InvalidHyperparameterError):
        draw_group_effects(bad, 10, 0)


def test_draw_group_effects_is_deterministic():
    assert draw_group_effects(S1, 10, 7) == draw_group_effects(S1, 10, 7)
    assert draw_group_effects(S1, 10, 7) != draw_group_effects(S1, 10, 8)


def test_draw_group_effects_mean_converges():
    # 10000 repeated draws of 10 groups
    means = [draw_group_effects(S1, 10, s).omega_X.mean() for s in range(10000)]
    assert abs(np.mean(means) - 0.9) < 0.01


def test_group_log_intensity_examples():
    assert group_log_intensity((0, 0, 0, 0), 7, 3, 12) == 0
    assert group_log_intensity((1, 1, 1, 1), 0, 0, 0) == 1
    expected = 0.9 + 0.06 * math.log(5) - 0.5 * math.log(10) + 0.2 * math.log(8)
    assert group_log_intensity((0.9, 0.06, -0.5, 0.2), 4, 9, 7) == pytest.approx(expected, rel=1e-14)


def test_aux_log_intensity_examples():
    zero = S1.replace(omega_Y=0.0, lambda_Y=0.0, gamma=0.0)
    assert aux_log_intensity(zero, 10, 20) == 0
    expected = 0.9 + 0.9 * math.log(11) - 0.05 * math.log(21)
    assert aux_log_intensity(S1, 10, 20) == pytest.approx(expected, rel=1e-14)
    assert aux_log_intensity(S1, 0, 0) == S1.omega_Y


def test_indicator_track_reproduces_table():
    A, B, C = indicator_track(PACK_EXAMPLE_X)
    assert tuple(A) == PACK_EXAMPLE_A
    assert tuple(B) == PACK_EXAMPLE_B
    assert tuple(C) == PACK_EXAMPLE_C


def test_indicator_track_init_conventions():
    A, B, C = indicator_track([0, 0, 4], InitConvention.ALREADY_FORMED)
    assert (A[0], B[0], C[0]) == (1, 0, 1)
    # an already-formed group with a zero start has split
    assert tuple(C[1:]) == (0, 0)


def test_formation_factor_examples():
    assert formation_factor([]) == 1
    assert formation_factor([0, 0]) == 1
    assert formation_factor([0, 3]) == 1
    assert formation_factor([2, 0]) == 0
    assert formation_factor([2, 0, 0]) == 0


@given(st.lists(st.integers(0, 5), min_size=1, max_size=12))
def test_indicator_track_matches_oracle_and_is_binary(row):
    A, B, C = indicator_track(row)
    assert np.all(C == A + B)
    assert not np.any((A == 1) & (B == 1))
    assert np.array_equal(C[1:], formation_factors(row))


def test_panel_validation():
    with pytest.raises(InvalidPanelError):
        Panel(x=[[1, -1], [0, 0]], y=[1, 1])
    with pytest.raises(InvalidPanelError):
        Panel(x=[[1, 1]], y=[1, 1])
    with pytest.raises(DimensionMismatchError):
        Panel(x=[[1, 1], [0, 0]], y=[1, 1, 1])


def test_interval_violations():
    p = Panel(x=[[2, 0, 3], [0, 1, 1]], y=[1, 1, 1])
    assert p.interval_violations() == [(0, 2)]


def test_simulation_is_deterministic_and_nonnegative():
    eff = draw_group_effects(S1, 6, 1)
    cfg = SimConfig(g=6, T=15, seed=11)
    a = simulate_panel(S1, eff, cfg)
    b = simulate_panel(S1, eff, cfg)
    assert a == b
    assert a.x.shape == (6, 16) and a.y.shape == (16,)
    assert np.all(a.x >= 0) and np.all(a.y >= 0)
    assert tuple(a.x[:, 0]) == (5,) * 6 and a.y[0] == 50


def test_simulation_prefix_property():
    # simulating T steps then continuing matches a single longer run
    eff = draw_group_effects(S1, 4, 2)
    full = simulate_panel(S1, eff, SimConfig(g=4, T=12, seed=5))
    streams = series_streams(5, 4)
    x1, y1 = simulate_steps(S1, eff, [5] * 4, 50, 7, streams)
    x2, y2 = simulate_steps(S1, eff, x1[:, -1], y1[-1], 5, streams, start_step=8)
    assert np.array_equal(np.concatenate([x1, x2], axis=1), full.x[:, 1:])
    assert np.array_equal(np.concatenate([y1, y2]), full.y[1:])


def test_absorbing_near_zero_regime():
    low = S1.replace(mu_omega=-50.0)
    eff = GroupEffects([-50.0] * 3, [0.0] * 3, [0.0] * 3, [0.0] * 3)
    p = simulate_panel(low.replace(omega_Y=-50.0), eff, SimConfig(g=3, T=10, x0=[0, 0, 0], y0=0))
    assert p.x.sum() == 0 and p.y.sum() == 0


def test_intensity_explosion_is_reported():
    hot = S1.replace(omega_Y=5.0, lambda_Y=1.5, gamma=0.0)
    eff = draw_group_effects(S1, 3, 0)
    with pytest.raises(IntensityExplosionError) as info:
        simulate_panel(hot, eff, SimConfig(g=3, T=50, intensity_cap=1e6))
    assert info.value.step >= 1


def test_splitting_simulation_respects_interval_structure():
    eff = draw_group_effects(S1.replace(mu_omega=0.0), 20, 3)
    p = simulate_panel(S1, eff, SimConfig(g=20, T=30, seed=9, x0=[1] * 10 + [0] * 10, splitting_enabled=True))
    assert p.interval_violations() == []


def test_simconfig_validation():
    with pytest.raises(DimensionMismatchError):
        SimConfig(g=3, T=5, x0=[1, 2])
    with pytest.raises(ValueError):
        SimConfig(g=3, T=5, intensity_cap=0.0)
    with pytest.raises(ValueError):
        SimConfig(g=1, T=5)


def test_panel_csv_round_trip(tmp_path):
    eff = draw_group_effects(S1, 3, 0)
    p = simulate_panel(S1, eff, SimConfig(g=3, T=6, seed=1))
    p = Panel(x=p.x, y=p.y, group_labels=("a", "b", "c"))
    csv_path, _ = save_panel(p, tmp_path / "p.csv", {"note": 1})
    assert read_panel_csv(csv_path) == p
