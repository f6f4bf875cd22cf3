"""Record averages, eigenstate analysis, closed-form rates, and fitting."""

import itertools

import numpy as np
import pytest

from sqmit.evaluate import (
    CoherenceSeries,
    DegenerateEigenstateError,
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
from sqmit.maps import MeasurementSetting, SensitivityPair, f_map, h_matrix
from sqmit.rtp import RtpParams, steady_state
from sqmit.state import stats
from sqmit.strategies import (
    Greedy4,
    NoControl,
    NonAdaptive,
    PolicyState,
    StrategySpec,
    ThetaFamily,
    next_setting,
)

PARAMS = RtpParams(1.0, 1.0)
SENS = SensitivityPair(kappa=0.2, k_big=20.0)


def _brute_force_expected(spec: StrategySpec, n_steps: int) -> np.ndarray:
    """Record sum via direct enumeration of every outcome string."""
    p0 = steady_state(PARAMS).astype(complex)
    totals = np.zeros(n_steps + 1)
    totals[0] = 1.0
    for record in itertools.product((0, 1), repeat=n_steps):
        a = p0.copy()
        for n, y in enumerate(record):
            st = stats_from(a)
            mu = next_setting(spec, PolicyState(st, n), SENS, PARAMS)
            a = f_map(PARAMS, SENS, mu, y) @ a
            # every record of length n with this prefix shares this partial sum
            totals[n + 1] += abs(a.sum()) / 2 ** (n_steps - 1 - n)
    return totals


def stats_from(a):
    from sqmit.state import CoherenceVector

    return stats(CoherenceVector.from_array(a), SENS)


def test_exact_enumeration_matches_brute_force():
    for spec in (NonAdaptive(np.pi / 2, 0.05), ThetaFamily(1.3)):
        series = exact_expected_coherence(spec, PARAMS, SENS, 5)
        brute = _brute_force_expected(spec, 5)
        assert np.allclose(series.values, brute, atol=1e-12)
        assert series.record_mass == pytest.approx(1.0, abs=1e-10)


def test_exact_enumeration_matches_brute_force_time_varying():
    # Unequal waits per branch: the series is the record-weighted broken-line
    # average of the normalized coherence on a common grid.
    from sqmit.maps import f_check

    spec = Greedy4(1.55, 1.62, 1.55, 1.60, 0.8)
    n_steps = 5
    series = exact_expected_coherence(spec, PARAMS, SENS, n_steps)
    p0 = steady_state(PARAMS)
    records = []
    for record in itertools.product((0, 1), repeat=n_steps):
        a = p0.astype(complex)
        av = p0.copy()
        ts, cs = [0.0], [1.0]
        t = 0.0
        for n, y in enumerate(record):
            mu = next_setting(spec, PolicyState(stats_from(a), n), SENS, PARAMS)
            a = f_map(PARAMS, SENS, mu, y) @ a
            av = f_check(PARAMS, SENS.k_big, mu, y) @ av
            t += mu.tau
            ts.append(t)
            cs.append(abs(a.sum()) / av.sum())
        records.append((av.sum(), np.array(ts), np.array(cs)))
    t_min = min(ts[-1] for _, ts, _ in records)
    grid = np.linspace(0.0, t_min, n_steps + 1)
    brute = sum(w * np.interp(grid, ts, cs) for w, ts, cs in records)
    assert np.allclose(series.times, grid)
    assert np.allclose(series.values, brute, atol=1e-12)
    assert series.record_mass == pytest.approx(1.0, abs=1e-10)


def test_no_control_series_is_closed_form():
    series = exact_expected_coherence(NoControl(), PARAMS, SENS, 8)
    assert np.allclose(series.values, coherence_nc(PARAMS, SENS.kappa, series.times))


def test_single_step_by_hand():
    tau, theta = 0.06, 1.1
    spec = NonAdaptive(theta, tau)
    series = exact_expected_coherence(spec, PARAMS, SENS, 1)
    p0 = steady_state(PARAMS).astype(complex)
    mu = MeasurementSetting(theta, tau)
    expected = sum(
        abs((f_map(PARAMS, SENS, mu, y) @ p0).sum()) for y in (0, 1)
    )
    assert series.values[1] == pytest.approx(expected, abs=1e-15)
    assert series.times[1] == pytest.approx(tau)


def test_enumeration_depth_cap():
    with pytest.raises(ValueError):
        exact_expected_coherence(ThetaFamily(1.5), PARAMS, SENS, 23)


def test_monte_carlo_agrees_with_exact():
    spec = ThetaFamily(1.3)
    exact = exact_expected_coherence(spec, PARAMS, SENS, 6)
    rng = np.random.default_rng(2)
    mc = monte_carlo_mean(spec, PARAMS, SENS, 6, 4000, rng)
    dev = np.abs(mc.values - exact.values)
    assert np.all(dev <= 4.0 * mc.std_err + 1e-10)


def test_monte_carlo_trajectory_is_deterministic_given_seed():
    a = monte_carlo_trajectory(ThetaFamily(1.2), PARAMS, SENS, 8,
                               np.random.default_rng(4))
    b = monte_carlo_trajectory(ThetaFamily(1.2), PARAMS, SENS, 8,
                               np.random.default_rng(4))
    assert np.array_equal(a.coherence, b.coherence)
    assert np.array_equal(a.outcomes, b.outcomes)


def test_asymptotic_nc_rates_values():
    rate, shift = asymptotic_nc_rates(RtpParams(3.0, 1.0), 0.1)
    assert rate == pytest.approx(0.001875)
    assert shift == pytest.approx(0.05)
    rate, shift = asymptotic_nc_rates(PARAMS, 0.2)
    assert rate == pytest.approx(0.02)
    assert shift == 0.0


def test_scaled_rate_roundtrip():
    assert scaled_rate(1e-4, PARAMS, SENS) == pytest.approx(
        1e-4 * 2 * 400 / (1.0 * 0.04)
    )


def test_stable_eigenstate_of_pure_wait_is_steady_state():
    h = h_matrix(PARAMS, 0.3, 0.0)
    vec, lam = stable_eigenstate(h)
    # the probability propagator has eigenvalue 1 with the uniform covector;
    # its dominant right eigenvector is the stationary distribution
    assert lam == pytest.approx(1.0)
    assert np.allclose(vec.as_array(), steady_state(PARAMS), atol=1e-12)
    with pytest.raises(DegenerateEigenstateError):
        stable_eigenstate(np.eye(2))


def test_eigenstate_is_fixed_point_of_null_map():
    Theta = 1.4
    e = theta_eigenstate(Theta, +1, PARAMS, SENS).as_array()
    mu = MeasurementSetting(Theta, Theta / SENS.k_big)
    f0 = f_map(PARAMS, SENS, mu, 0)
    out = f0 @ e
    assert np.allclose(out / out.sum(), e, atol=1e-12)


def test_gamma_bar_theta_approaches_scaled_cost():
    sens = SensitivityPair(0.2, 100.0)
    for Theta in (1.0, 1.2, 1.5, 1.8):
        rate = gamma_bar_theta(Theta, PARAMS, sens)
        assert scaled_rate(rate, PARAMS, sens) == pytest.approx(
            float(h_theta(Theta)), rel=0.02
        )


def test_h_theta_closed_values():
    assert float(h_theta(np.pi / 2)) == pytest.approx(np.pi**2 / 3 - 2, abs=1e-12)
    t_star, h_star = minimize_h_theta()
    assert t_star == pytest.approx(1.500548, abs=1e-4)
    assert h_star == pytest.approx(1.254214, abs=1e-6)


def test_eigenstate_asymptotics_tighten_with_separation():
    params = RtpParams(1.3, 0.7)
    for s in (+1, -1):
        errs = []
        for k in (100.0, 1000.0):
            sens = SensitivityPair(0.2, k)
            st = stats(theta_eigenstate(1.4, s, params, sens), sens)
            alpha0, zeta0 = eigenstate_stats_asymptotic(1.4, s, params, sens)
            errs.append(abs(st.alpha - alpha0) + abs(st.zeta - zeta0))
        assert errs[1] < errs[0] / 5.0  # first-order remainder shrinks like 1/K


def test_gamma_4state_matches_fitted_exact_rate():
    spec = Greedy4(1.57, 1.61, 1.57, 1.60, 0.75)
    closed = gamma_4state(spec, PARAMS, SENS)
    fit = fit_rate(exact_expected_coherence(spec, PARAMS, SENS, 12))
    assert closed == pytest.approx(fit.slope, rel=0.01)
    with pytest.raises(ValueError):
        gamma_4state(spec, RtpParams(2.0, 1.0), SENS)


def test_fit_rate_recovers_known_slope():
    t = np.linspace(0.0, 0.5, 40)  # early-time window where 1 - C is linear
    series = CoherenceSeries(times=t, values=np.exp(-0.02 * t))
    fit = fit_rate(series)
    assert fit.slope == pytest.approx(0.02, rel=0.01)
    assert fit.r_squared > 0.999
    assert fit.n_discarded == 2
    flat = CoherenceSeries(times=t, values=np.ones_like(t))
    dfit = fit_rate(flat)
    assert dfit.degenerate and dfit.slope == 0.0


def test_sweep_grid_shapes_and_argmin():
    res = sweep_theta_tau(PARAMS, SENS, [1.45, 1.55], [1.45, 1.55], n_steps=8)
    assert res.rates.shape == (2, 2)
    assert np.all(res.rates > 0)
    i, j = res.argmin
    assert res.rates[i, j] == res.rates.min()
    assert not res.flagged.all()
