"""Coupled Poisson autoregressions for grouped populations and an auxiliary population.

Simulation, Bayesian fitting with a compiled NUTS sampler, convergence and
identifiability diagnostics, a closed-form net correlation between groups,
and a simulation-study harness.
"""

__version__ = "0.1.0"

from .correlation import (
    MeansSource,
    RhoReport,
    SignRegion,
    StationaryMeans,
    rho_tilde,
    sign_region,
    stationary_means_from_panel,
)
from .diagnostics import effective_sample_size, gelman_rubin, is_weakly_identifiable, prior_posterior_overlap
from .estimator import CoupledPoissonAR, NetGroupCorrelation
from .exceptions import (
    ConvergenceError,
    CoupledARError,
    DimensionMismatchError,
    IntensityExplosionError,
    IntervalViolationWarning,
    InvalidHyperparameterError,
    InvalidMeansError,
    InvalidPanelError,
    LoadError,
    StationarityWarning,
)
from .ingest import IndicatorTrack, export_long_csv, load_panel
from .inference import PosteriorDraws, SamplerConfig, sample, summarize, write_diagnostics
from .model import (
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
    simulate_panel,
)
from .posterior import PosteriorModel, PriorSpec, grad_log_posterior, log_posterior
from .simstudy import MetricsReport, Scenario, bias, relative_bias, rmse, run_scenario
