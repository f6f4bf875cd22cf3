"""Spectator-qubit mitigation of random-telegraph-noise dephasing.

A data qubit picks up phase noise from a two-state fluctuator (random
telegraph process).  A co-located spectator qubit with much higher noise
sensitivity is measured projectively at adaptively chosen times and angles;
the record is filtered through complex Bayesian maps and used to correct the
data qubit's phase.  This package provides the maps, the measurement
strategies (Greedy family, fixed-angle Theta family including MOAAAR), and
the numerical experiments that quantify the achievable decoherence rates.
"""

from .rtp import RtpParams, RtpTrajectory, jump_matrix, propagate, steady_state
from .maps import MeasurementSetting, SensitivityPair, h_matrix, f_map, f_check
from .state import CoherenceVector, SufficientStats, stats
from .strategies import (
    NoControl,
    NonAdaptive,
    ThetaFamily,
    GreedyFull,
    Greedy4,
    Greedy2,
    berry_wiseman_candidates,
    greedy_full_next_setting,
    extract_greedy4_params,
    tau_effective,
    next_setting,
)
from .evaluate import (
    CoherenceSeries,
    RateFit,
    SweepResult,
    TrajectoryRecord,
    asymptotic_nc_rates,
    coherence_nc,
    eigenstate_stats_asymptotic,
    exact_expected_coherence,
    fit_rate,
    gamma_4state,
    gamma_bar_theta,
    h_theta,
    minimize_h_theta,
    monte_carlo_mean,
    monte_carlo_trajectory,
    scaled_rate,
    stable_eigenstate,
    sweep_theta_tau,
    theta_eigenstate,
)

__all__ = [
    "RtpParams",
    "RtpTrajectory",
    "jump_matrix",
    "propagate",
    "steady_state",
    "MeasurementSetting",
    "SensitivityPair",
    "h_matrix",
    "f_map",
    "f_check",
    "CoherenceVector",
    "SufficientStats",
    "stats",
    "NoControl",
    "NonAdaptive",
    "ThetaFamily",
    "GreedyFull",
    "Greedy4",
    "Greedy2",
    "berry_wiseman_candidates",
    "greedy_full_next_setting",
    "extract_greedy4_params",
    "tau_effective",
    "next_setting",
    "CoherenceSeries",
    "RateFit",
    "SweepResult",
    "TrajectoryRecord",
    "asymptotic_nc_rates",
    "coherence_nc",
    "eigenstate_stats_asymptotic",
    "exact_expected_coherence",
    "fit_rate",
    "gamma_4state",
    "gamma_bar_theta",
    "h_theta",
    "minimize_h_theta",
    "monte_carlo_mean",
    "monte_carlo_trajectory",
    "scaled_rate",
    "stable_eigenstate",
    "sweep_theta_tau",
    "theta_eigenstate",
]

__version__ = "0.1.0"
