"""End-to-end acceptance criteria for the dephasing-mitigation simulator.

Each test prints one PASS/FAIL line; together they pin the quantitative
behavior of the package: the asymptotic cost function and its minimum, the
propagator and measurement-map algebra against independent oracles, exact
record sums against Monte Carlo, the ordering and closed forms of the
decoherence rates, the sweep optimum, eigenstate asymptotics, the greedy
optimizer internals, and the no-control baseline.
"""

import functools

import numpy as np
from scipy.linalg import expm

from sqmit.evaluate import (
    asymptotic_nc_rates,
    coherence_nc,
    eigenstate_stats_asymptotic,
    exact_expected_coherence,
    fit_rate,
    gamma_4state,
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
from sqmit.rtp import RtpParams, jump_matrix, steady_state
from sqmit.state import CoherenceVector, stats
from sqmit.strategies import (
    GreedyFull,
    NoControl,
    NonAdaptive,
    ThetaFamily,
    berry_wiseman_candidates,
    extract_greedy4_params,
    one_measurement_reward,
)

PARAMS = RtpParams(1.0, 1.0)
KAPPA = 0.2
THETA_STAR, H_STAR = minimize_h_theta()
H_HALF_PI = np.pi**2 / 3.0 - 2.0


def _report(num: int, name: str, ok: bool, detail: str) -> None:
    print(f"criterion {num:2d} {name}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"criterion {num} {name}: {detail}"


@functools.lru_cache(maxsize=None)
def _greedy4_extraction(k_big: float):
    """Condensed four-parameter policy from pinned greedy sample records."""
    sens = SensitivityPair(KAPPA, k_big)
    rng = np.random.default_rng(0)
    recs = [
        monte_carlo_trajectory(GreedyFull(), PARAMS, sens, 30, rng)
        for _ in range(10)
    ]
    decisions = [r.decisions for r in recs]
    spec = extract_greedy4_params(decisions, n_transient=5, k_big=k_big)
    return spec, decisions


def test_criterion_01_cost_function_and_minimum():
    ok_val = abs(float(h_theta(np.pi / 2)) - H_HALF_PI) < 1e-6
    ok_min = abs(THETA_STAR - 1.50055) < 1e-4 and abs(H_STAR - 1.254) < 1e-3
    _report(1, "cost function and its minimum", ok_val and ok_min,
            f"h(pi/2)={float(h_theta(np.pi / 2)):.7f}, "
            f"min=({THETA_STAR:.6f}, {H_STAR:.6f})")


def test_criterion_02_map_algebra():
    rng = np.random.default_rng(1)
    worst_sum, worst_comp = 0.0, 0.0
    for _ in range(1000):
        params = RtpParams(rng.uniform(0.1, 10.0), rng.uniform(0.1, 10.0))
        sens = SensitivityPair(rng.uniform(0.0, 2.0), rng.uniform(0.5, 200.0))
        mu = MeasurementSetting(rng.uniform(-np.pi, np.pi), rng.uniform(1e-3, 2.0))
        total = f_map(params, sens, mu, 0) + f_map(params, sens, mu, 1)
        worst_sum = max(worst_sum, np.abs(
            total - h_matrix(params, mu.tau, sens.kappa)).max())
        t1, t2 = rng.uniform(1e-3, 2.0, size=2)
        k = rng.uniform(-30.0, 30.0)
        comp = h_matrix(params, t2, k) @ h_matrix(params, t1, k)
        worst_comp = max(worst_comp, np.abs(
            comp - h_matrix(params, t1 + t2, k)).max())
    ok = worst_sum < 1e-13 and worst_comp < 1e-12
    _report(2, "measurement maps sum to the propagator", ok,
            f"max outcome-sum dev {worst_sum:.2e}, max composition dev {worst_comp:.2e}")


def test_criterion_03_propagator_oracles():
    # matrix-exponential oracle at k = 0
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(200):
        params = RtpParams(rng.uniform(0.1, 10.0), rng.uniform(0.1, 10.0))
        t = rng.uniform(1e-3, 5.0)
        worst = max(worst, np.abs(
            h_matrix(params, t, 0.0) - expm(jump_matrix(params) * t)).max())
    ok_expm = worst < 1e-10

    # Monte-Carlo oracle: <e^{ikx} 1[z_end] | z_start> from sampled telegraph noise
    params = RtpParams(1.0, 1.0)
    k, t_end, n = 0.2, 0.7, 1_000_000
    h = h_matrix(params, t_end, k)
    ok_mc = True
    worst_sigma = 0.0
    for col, z0 in enumerate((1, -1)):
        half = n // 2
        t = np.zeros(half)
        z = np.full(half, z0, dtype=float)
        x = np.zeros(half)
        idx = np.arange(half)
        while idx.size:
            rate = np.where(z[idx] == 1.0, params.gamma_down, params.gamma_up)
            dt = rng.exponential(1.0 / rate)
            rem = t_end - t[idx]
            step = np.minimum(dt, rem)
            x[idx] += z[idx] * step
            t[idx] += step
            flip = idx[dt < rem]
            z[flip] = -z[flip]
            idx = flip
        phase = np.exp(1j * k * x)
        for row, z_end in enumerate((1.0, -1.0)):
            samples = np.where(z == z_end, phase, 0.0)
            for part, target in (
                (samples.real, h[row, col].real),
                (samples.imag, h[row, col].imag),
            ):
                se = part.std(ddof=1) / np.sqrt(half)
                n_sigma = abs(part.mean() - target) / se
                worst_sigma = max(worst_sigma, n_sigma)
                ok_mc = ok_mc and n_sigma <= 3.0
    _report(3, "propagator vs independent oracles", ok_expm and ok_mc,
            f"max expm dev {worst:.2e}, worst MC pull {worst_sigma:.2f} sigma")


def _acceptance_strategies(k_big: float):
    g4, _ = _greedy4_extraction(k_big)
    return [
        ("fixed pi/2 basis", NonAdaptive(np.pi / 2, 1.0 / k_big)),
        ("theta family 1.0", ThetaFamily(1.0)),
        ("theta family optimum", ThetaFamily(THETA_STAR)),
        ("condensed greedy", g4),
    ]


def test_criterion_04_exact_vs_monte_carlo():
    sens = SensitivityPair(KAPPA, 20.0)
    rng = np.random.default_rng(3)
    ok = True
    details = []
    for name, spec in _acceptance_strategies(20.0):
        exact = exact_expected_coherence(spec, PARAMS, sens, 15)
        mc = monte_carlo_mean(spec, PARAMS, sens, 15, 10_000, rng)
        # time-varying policies grid their series; align the exact curve on
        # the Monte-Carlo time points before comparing
        ref = np.interp(mc.times, exact.times, exact.values)
        dev = np.abs(mc.values - ref)
        margin = 3.0 * mc.std_err + 1e-12
        ok_here = bool(np.all(dev <= margin))
        ok = ok and ok_here
        details.append(f"{name} max dev {dev.max():.1e}")
    _report(4, "exact record sum vs Monte Carlo", ok, "; ".join(details))


def _fitted_rates_at_20():
    sens = SensitivityPair(KAPPA, 20.0)
    rates = {"no control": fit_rate(
        exact_expected_coherence(NoControl(), PARAMS, sens, 15)).slope}
    for name, spec in _acceptance_strategies(20.0):
        series = exact_expected_coherence(spec, PARAMS, sens, 15)
        rates[name] = fit_rate(series).slope
    return rates


def test_criterion_05_rate_ordering():
    r = _fitted_rates_at_20()
    chain = ["no control", "fixed pi/2 basis", "theta family 1.0",
             "condensed greedy", "theta family optimum"]
    vals = [r[name] for name in chain]
    ok = vals[0] > vals[1] > vals[2] > vals[3]
    # the greedy condensation may land within 5% of the family optimum
    ok = ok and (vals[3] >= vals[4] or abs(vals[3] - vals[4]) <= 0.05 * vals[4])
    _report(5, "decoherence-rate ordering", ok,
            ", ".join(f"{n}={v:.3e}" for n, v in zip(chain, vals)))


def test_criterion_06_closed_form_rates():
    k_values = (5.0, 10.0, 20.0, 50.0, 100.0)
    ok = True
    details = []
    scaled_star, scaled_greedy = {}, {}
    for k in k_values:
        sens = SensitivityPair(KAPPA, k)
        g4, _ = _greedy4_extraction(k)
        for label, spec, store in (
            ("family", ThetaFamily(THETA_STAR), scaled_star),
            ("greedy", g4, scaled_greedy),
        ):
            closed = gamma_4state(spec, PARAMS, sens)
            fitted = fit_rate(exact_expected_coherence(spec, PARAMS, sens, 15)).slope
            rel = abs(closed - fitted) / fitted
            ok = ok and rel < 0.03
            store[k] = scaled_rate(closed, PARAMS, sens)
            if rel >= 0.03:
                details.append(f"{label} K={k:g} closed/fit dev {rel:.1%}")
    ok_100 = abs(scaled_star[100.0] - 1.244) <= 0.01
    ok = ok and ok_100
    # scaled rates approach the asymptotic cost with deviation ~ gamma_bar/K
    for store, limit in ((scaled_star, H_STAR), (scaled_greedy, H_HALF_PI)):
        devs = np.array([abs(store[k] - limit) for k in k_values])
        ok = ok and bool(np.all(np.diff(devs) < 0.0))
        dk = devs * np.array(k_values)
        ok = ok and dk.max() / dk.min() < 3.0
    details.append(f"scaled family rate at K=100: {scaled_star[100.0]:.4f}")
    _report(6, "closed-form rates vs exact fits", ok, "; ".join(details))


def test_criterion_07_sweep_optimum():
    sens = SensitivityPair(KAPPA, 100.0)
    grid = np.linspace(1.4, 1.6, 30)
    res = sweep_theta_tau(PARAMS, sens, grid, grid, n_steps=15)
    i, j = res.argmin
    cell = grid[1] - grid[0]
    ok_loc = abs(grid[i] - 1.5) <= cell + 1e-12 and abs(grid[j] - 1.5) <= cell + 1e-12
    ok_val = abs(res.rates[i, j] - 1.244) <= 0.01
    ok_fit = bool(np.all(res.r_squared > 0.998))
    _report(7, "scaled-rate sweep optimum", ok_loc and ok_val and ok_fit,
            f"min {res.rates[i, j]:.4f} at ({grid[i]:.4f}, {grid[j]:.4f}), "
            f"min R^2 {res.r_squared.min():.5f}")


def test_criterion_08_eigenstate_asymptotics():
    sens = SensitivityPair(KAPPA, 100.0)
    ok = True
    details = []
    for Theta in (1.0, THETA_STAR):
        for s in (+1, -1):
            e = theta_eigenstate(Theta, s, PARAMS, sens)
            st = stats(e, sens)
            alpha0, zeta0 = eigenstate_stats_asymptotic(Theta, s, PARAMS, sens)
            ok = ok and abs(st.zeta - zeta0) < 1e-3
            ok = ok and abs(st.alpha - alpha0) / abs(alpha0) < 0.01

        # geometric approach to the attractor after one non-null outcome
        mu = MeasurementSetting(Theta, Theta / sens.k_big)
        f0 = f_map(PARAMS, sens, mu, 0)
        e_vec, _ = stable_eigenstate(f0)
        a = f_map(PARAMS, sens, mu, 1) @ e_vec.as_array()
        dist = []
        for _ in range(40):
            a = a / a.sum()
            dist.append(np.linalg.norm(a - e_vec.as_array()))
            a = f0 @ a
        d = np.array(dist)
        # log-linear only once the perturbation is small and above the
        # floating-point floor
        keep = (d > 1e-11) & (d < 0.05)
        n = np.arange(d.size)[keep]
        logd = np.log(d[keep])
        slope, intercept = np.polyfit(n, logd, 1)
        resid = logd - (slope * n + intercept)
        r2 = 1.0 - resid.var() / logd.var()
        ok = ok and r2 > 0.999
        details.append(f"Theta={Theta:.4f} approach R^2={r2:.6f}")
    _report(8, "eigenstate asymptotics", ok, "; ".join(details))


def test_criterion_09_greedy_internals():
    sens = SensitivityPair(KAPPA, 20.0)
    rng = np.random.default_rng(6)
    grid = np.linspace(-np.pi, np.pi, 2001)[1:]
    worst = 0.0
    for _ in range(500):
        z = rng.normal(size=2) + 1j * rng.normal(size=2)
        a = CoherenceVector.from_array(z)
        tau = rng.uniform(0.005, 0.3)
        cands = berry_wiseman_candidates(a, tau, PARAMS, sens)
        best_c = max(one_measurement_reward(a, th, tau, PARAMS, sens) for th in cands)
        best_g = max(one_measurement_reward(a, th, tau, PARAMS, sens) for th in grid)
        worst = max(worst, best_g - best_c)
    ok_cand = worst < 1e-8

    spec, decisions = _greedy4_extraction(20.0)
    values = np.array([spec.theta_gt, spec.theta_lt, spec.delta_gt, spec.delta_lt])
    ok_params = bool(np.all(np.abs(values - np.pi / 2) <= 0.025 * np.pi / 2))

    flat = [rec for traj in decisions for rec in traj]
    ok_order = all(abs(theta) > 20.0 * tau for _, theta, tau in flat)
    _report(9, "greedy optimizer internals", ok_cand and ok_params and ok_order,
            f"worst candidate gap {worst:.1e}, params {np.round(values, 5)}, "
            f"{len(flat)} settings all with |theta| > K*tau: {ok_order}")


def test_criterion_10_no_control_baseline():
    rate, _ = asymptotic_nc_rates(PARAMS, KAPPA)
    ok_rate = abs(rate - 0.02) < 1e-15
    t = np.linspace(1.0 / PARAMS.gamma_bar, 5.0 / PARAMS.gamma_bar, 400)
    rel = np.abs(coherence_nc(PARAMS, KAPPA, t) / np.exp(-rate * t) - 1.0)
    ok_curve = bool(np.all(rel < 0.01))
    _report(10, "no-control baseline", ok_rate and ok_curve,
            f"rate={rate}, max relative dev {rel.max():.2%}")
