"""Evaluation of data-qubit coherence under spectator-measurement policies.

Three independent routes to the same physics live here:

* exact expectation by enumerating every measurement record (branch tree),
* Monte-Carlo sampling of measurement records,
* closed forms: the no-control coherence, the dominant-eigenvector rate of
  the Theta family, its wide-separation cost function ``h_theta``, and the
  four-state closed-form rate of the reduced Greedy policy.

Rates are often quoted in scaled form, rate * 2 k_big^2 / (gamma_breve *
kappa^2), which is asymptotically K-independent.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .maps import MeasurementSetting, SensitivityPair, _h_entries, f_check, f_map
from .rtp import RtpParams, steady_state
from .state import CoherenceVector, phase_space_row, stats
from .strategies import (
    Greedy2,
    Greedy4,
    GreedyFull,
    NoControl,
    NonAdaptive,
    PolicyState,
    StrategySpec,
    ThetaFamily,
    greedy_full_next_setting,
    next_setting,
)

_MAX_ENUMERATION_STEPS = 22
_PRUNE_TOL = 1e-14
_EIG_DEGENERACY_TOL = 1e-12


class DegenerateEigenstateError(RuntimeError):
    """The wait-and-measure map has no unique dominant eigenvector."""


@dataclass(frozen=True)
class CoherenceSeries:
    """Expected coherence sampled on a time grid."""

    times: np.ndarray
    values: np.ndarray
    std_err: Optional[np.ndarray] = None
    pruned_mass: float = 0.0
    record_mass: float = 1.0


@dataclass(frozen=True)
class RateFit:
    """Linear fit of 1 - C(t); ``slope`` is the decoherence rate."""

    slope: float
    intercept: float
    r_squared: float
    n_discarded: int
    n_used: int
    degenerate: bool = False


@dataclass(frozen=True)
class TrajectoryRecord:
    """One sampled measurement record and its filtered summaries.

    ``decisions`` pairs the alpha that drove each adaptive choice with the
    (theta, tau) actually used, which is what the Greedy condensation eats.
    """

    times: np.ndarray
    coherence: np.ndarray
    log_r: float
    outcomes: np.ndarray
    decisions: list = field(default_factory=list)
    phase_rows: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# Closed forms: no control
# ---------------------------------------------------------------------------


def coherence_nc(params: RtpParams, kappa: float, t) -> np.ndarray:
    """|I^T H(t, kappa) P_ss|: coherence with no spectator measurements."""
    h_pp, h_pm, h_mp, h_mm = _h_entries(params, t, kappa)
    p = steady_state(params)
    return np.abs((h_pp + h_mp) * p[0] + (h_pm + h_mm) * p[1])


def asymptotic_nc_rates(params: RtpParams, kappa: float) -> tuple[float, float]:
    """Small-kappa (motional-narrowing) decay rate and frequency shift."""
    gb = params.gamma_bar
    rate = kappa**2 * params.gamma_breve / (2.0 * gb**2)
    shift = kappa * (params.gamma_up - params.gamma_down) / (2.0 * gb)
    return rate, shift


def scaled_rate(rate: float, params: RtpParams, sens: SensitivityPair) -> float:
    """Dimensionless rate 2 K^2 Gamma / (gamma_breve kappa^2)."""
    return rate * 2.0 * sens.k_big**2 / (params.gamma_breve * sens.kappa**2)


# ---------------------------------------------------------------------------
# Policy plumbing shared by the enumeration and the Monte Carlo
# ---------------------------------------------------------------------------


def _branch_settings(
    spec: StrategySpec,
    a: np.ndarray,
    step: int,
    params: RtpParams,
    sens: SensitivityPair,
    greedy_cache: Optional[dict] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-branch (theta, tau) arrays for a batch of coherence vectors."""
    n = a.shape[0]
    k_big = sens.k_big
    s = np.where(np.abs(a[:, 0]) >= np.abs(a[:, 1]), 1.0, -1.0)
    if isinstance(spec, NonAdaptive):
        return np.full(n, spec.theta), np.full(n, spec.tau)
    if isinstance(spec, ThetaFamily):
        theta = np.full(n, np.pi / 2) if step == 0 else s * spec.Theta
        return theta, np.full(n, spec.waiting_time(k_big))
    if isinstance(spec, (Greedy4, Greedy2)):
        alpha = (k_big / sens.kappa) * np.angle(a[:, 0] * np.conj(a[:, 1]))
        gt = alpha > spec.alpha_threshold
        mag = np.where(gt, spec.theta_gt, spec.theta_lt)
        if isinstance(spec, Greedy4):
            delta = np.where(gt, spec.delta_gt, spec.delta_lt)
        else:
            delta = mag
        theta = np.full(n, np.pi / 2) if step == 0 else s * mag
        return theta, delta / k_big
    if isinstance(spec, GreedyFull):
        theta = np.empty(n)
        tau = np.empty(n)
        for i in range(n):
            setting = _greedy_setting_cached(a[i], params, sens, spec.dt_scan, greedy_cache)
            if step == 0:
                setting = MeasurementSetting(np.pi / 2, setting.tau)
            theta[i], tau[i] = setting.theta, setting.tau
        return theta, tau
    raise TypeError(f"unsupported strategy for record evolution: {spec!r}")


def _greedy_setting_cached(
    a: np.ndarray,
    params: RtpParams,
    sens: SensitivityPair,
    dt_scan: Optional[float],
    cache: Optional[dict],
) -> MeasurementSetting:
    """Greedy setting with memoization on the projective state.

    The one-step reward is invariant under positive rescaling and a global
    phase of the coherence vector, so the component ratio is a complete key.
    """
    key = None
    if cache is not None and a[1] != 0:
        z = a[0] / a[1]
        key = (round(float(z.real), 12), round(float(z.imag), 12))
        hit = cache.get(key)
        if hit is not None:
            return hit
    setting = greedy_full_next_setting(CoherenceVector.from_array(a), params, sens, dt_scan)
    if key is not None:
        cache[key] = setting
    return setting


def _unique_settings(theta: np.ndarray, tau: np.ndarray):
    """Group branches by their (theta, tau) setting."""
    pairs = np.column_stack([theta, tau])
    uniq, inverse = np.unique(pairs, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    for j, (th, tv) in enumerate(uniq):
        yield MeasurementSetting(float(th), float(tv)), inverse == j


def _fixed_times(spec: StrategySpec) -> bool:
    """Whether every record shares the same measurement times."""
    return isinstance(spec, (NonAdaptive, ThetaFamily))


# ---------------------------------------------------------------------------
# Exact enumeration of measurement records
# ---------------------------------------------------------------------------


def exact_expected_coherence(
    spec: StrategySpec,
    params: RtpParams,
    sens: SensitivityPair,
    n_steps: int,
    grid_points: Optional[int] = None,
    prune_tol: float = _PRUNE_TOL,
) -> CoherenceSeries:
    """Record-averaged coherence by summing over all 2^n measurement records.

    Branches with record probability below ``prune_tol`` of the running total
    are dropped; the discarded mass is reported on the returned series.  For
    policies whose waiting times vary along the record, per-branch coherence
    histories are interpolated onto a common grid of ``grid_points + 1``
    times (default: one point per step).
    """
    if isinstance(spec, NoControl):
        times = np.arange(n_steps + 1) / sens.k_big
        return CoherenceSeries(times=times, values=coherence_nc(params, sens.kappa, times))
    if n_steps > _MAX_ENUMERATION_STEPS:
        raise ValueError(
            f"enumeration is limited to {_MAX_ENUMERATION_STEPS} steps "
            f"(2^{n_steps} records requested)"
        )

    p0 = steady_state(params)
    a = p0.astype(complex)[None, :]  # record-weighted coherence vectors
    av = p0[None, :].copy()  # record probabilities, resolved by endpoint
    t = np.zeros(1)
    cache: dict = {}
    fixed = _fixed_times(spec)
    level_values = [1.0]
    level_times = [0.0]
    hist_t = np.zeros((1, 1))
    hist_c = np.ones((1, 1))
    pruned = 0.0

    for step in range(n_steps):
        theta, tau = _branch_settings(spec, a, step, params, sens, cache)
        b = a.shape[0]
        new_a = np.empty((2 * b, 2), dtype=complex)
        new_av = np.empty((2 * b, 2))
        for mu, mask in _unique_settings(theta, tau):
            f0 = f_map(params, sens, mu, 0)
            f1 = f_map(params, sens, mu, 1)
            g0 = f_check(params, sens.k_big, mu, 0)
            g1 = f_check(params, sens.k_big, mu, 1)
            new_a[:b][mask] = a[mask] @ f0.T
            new_a[b:][mask] = a[mask] @ f1.T
            new_av[:b][mask] = av[mask] @ g0.T
            new_av[b:][mask] = av[mask] @ g1.T
        a, av = new_a, new_av
        t = np.tile(t + tau, 2)
        if not fixed:
            hist_t = np.tile(np.column_stack([hist_t, t[:b, None] * 0]), (2, 1))
            hist_t[:, -1] = t
            w_b = av.sum(axis=1)
            c_b = np.abs(a.sum(axis=1)) / np.where(w_b > 0, w_b, 1.0)
            hist_c = np.column_stack([np.tile(hist_c, (2, 1)), c_b])

        w = av.sum(axis=1)
        total = w.sum()
        keep = w >= prune_tol * total
        if not np.all(keep):
            pruned += float(w[~keep].sum())
            a, av, t = a[keep], av[keep], t[keep]
            if not fixed:
                hist_t, hist_c = hist_t[keep], hist_c[keep]
        if fixed:
            level_values.append(float(np.abs(a.sum(axis=1)).sum()))
            level_times.append(float(t[0]))

    mass = float(av.sum()) + pruned
    if fixed:
        return CoherenceSeries(
            times=np.array(level_times),
            values=np.array(level_values),
            pruned_mass=pruned,
            record_mass=mass,
        )

    w = av.sum(axis=1)
    n_grid = grid_points if grid_points is not None else n_steps
    grid = np.linspace(0.0, float(t.min()), n_grid + 1)
    values = _weighted_broken_line_sum(grid, hist_t, hist_c, w)
    return CoherenceSeries(times=grid, values=values, pruned_mass=pruned, record_mass=mass)


def _weighted_broken_line_sum(
    grid: np.ndarray, hist_t: np.ndarray, hist_c: np.ndarray, w: np.ndarray
) -> np.ndarray:
    """Sum of w_b * interp(grid; hist_t_b, hist_c_b) over rows b."""
    n_cols = hist_t.shape[1]
    rows = np.arange(hist_t.shape[0])
    out = np.empty(grid.size)
    for i, tg in enumerate(grid):
        j = np.clip((hist_t <= tg).sum(axis=1) - 1, 0, n_cols - 2)
        t0, t1 = hist_t[rows, j], hist_t[rows, j + 1]
        c0, c1 = hist_c[rows, j], hist_c[rows, j + 1]
        frac = np.clip((tg - t0) / (t1 - t0), 0.0, 1.0)
        out[i] = float(np.sum(w * (c0 + frac * (c1 - c0))))
    return out


# ---------------------------------------------------------------------------
# Monte Carlo over measurement records
# ---------------------------------------------------------------------------


def monte_carlo_trajectory(
    spec: StrategySpec,
    params: RtpParams,
    sens: SensitivityPair,
    n_steps: int,
    rng: np.random.Generator,
) -> TrajectoryRecord:
    """Sample one measurement record, tracking the normalized filter state."""
    if isinstance(spec, NoControl):
        raise ValueError("the no-control policy has no records to sample")
    p0 = steady_state(params)
    a = p0.astype(complex)
    av = p0.copy()
    t = 0.0
    log_r = 0.0
    times = [0.0]
    coh = [1.0]
    outcomes = []
    decisions = []
    phase_rows = []
    cache: dict = {}
    for step in range(n_steps):
        vec = CoherenceVector.from_array(a)
        st = stats(vec, sens)
        if isinstance(spec, GreedyFull):
            mu = _greedy_setting_cached(a, params, sens, spec.dt_scan, cache)
            if step == 0:
                mu = MeasurementSetting(np.pi / 2, mu.tau)
        else:
            mu = next_setting(spec, PolicyState(st, step, vec), sens, params)
        decisions.append((st.alpha, mu.theta, mu.tau))
        g0 = f_check(params, sens.k_big, mu, 0)
        p_null = float((g0 @ av).sum())
        y = 0 if rng.random() < p_null else 1
        a = f_map(params, sens, mu, y) @ a
        av = f_check(params, sens.k_big, mu, y) @ av
        weight = float(av.sum())
        log_r += np.log(weight)
        a /= weight
        av /= weight
        t += mu.tau
        times.append(t)
        coh.append(float(np.abs(a.sum())))
        outcomes.append(y)
        phase_rows.append(
            phase_space_row(step + 1, stats(CoherenceVector.from_array(a), sens), log_r, y)
        )
    return TrajectoryRecord(
        times=np.array(times),
        coherence=np.array(coh),
        log_r=log_r,
        outcomes=np.array(outcomes, dtype=int),
        decisions=decisions,
        phase_rows=phase_rows,
    )


def monte_carlo_mean(
    spec: StrategySpec,
    params: RtpParams,
    sens: SensitivityPair,
    n_steps: int,
    n_traj: int,
    rng: np.random.Generator,
    grid_points: Optional[int] = None,
) -> CoherenceSeries:
    """Record-averaged coherence estimated from ``n_traj`` sampled records.

    Vectorized across records for every policy except the full Greedy, which
    falls back to the per-record sampler.
    """
    if isinstance(spec, GreedyFull):
        recs = [monte_carlo_trajectory(spec, params, sens, n_steps, rng) for _ in range(n_traj)]
        times = np.stack([r.times for r in recs])
        coh = np.stack([r.coherence for r in recs])
        return _mc_series(spec, times, coh, n_steps, grid_points)

    p0 = steady_state(params)
    a = np.tile(p0.astype(complex), (n_traj, 1))
    av = np.tile(p0, (n_traj, 1))
    t = np.zeros(n_traj)
    times = np.zeros((n_traj, n_steps + 1))
    coh = np.ones((n_traj, n_steps + 1))
    for step in range(n_steps):
        theta, tau = _branch_settings(spec, a, step, params, sens)
        a0 = np.empty_like(a)
        a1 = np.empty_like(a)
        av0 = np.empty_like(av)
        av1 = np.empty_like(av)
        for mu, mask in _unique_settings(theta, tau):
            a0[mask] = a[mask] @ f_map(params, sens, mu, 0).T
            a1[mask] = a[mask] @ f_map(params, sens, mu, 1).T
            av0[mask] = av[mask] @ f_check(params, sens.k_big, mu, 0).T
            av1[mask] = av[mask] @ f_check(params, sens.k_big, mu, 1).T
        p_null = av0.sum(axis=1)
        pick1 = rng.random(n_traj) >= p_null
        a = np.where(pick1[:, None], a1, a0)
        av = np.where(pick1[:, None], av1, av0)
        weight = av.sum(axis=1)
        a /= weight[:, None]
        av /= weight[:, None]
        t = t + tau
        times[:, step + 1] = t
        coh[:, step + 1] = np.abs(a.sum(axis=1))
    return _mc_series(spec, times, coh, n_steps, grid_points)


def _mc_series(spec, times, coh, n_steps, grid_points) -> CoherenceSeries:
    if _fixed_times(spec):
        mean = coh.mean(axis=0)
        se = coh.std(axis=0, ddof=1) / np.sqrt(coh.shape[0]) if coh.shape[0] > 1 else None
        return CoherenceSeries(times=times[0], values=mean, std_err=se)
    n_grid = grid_points if grid_points is not None else n_steps
    grid = np.linspace(0.0, float(times[:, -1].min()), n_grid + 1)
    n = times.shape[0]
    samples = np.empty((n, grid.size))
    for i in range(n):
        samples[i] = np.interp(grid, times[i], coh[i])
    mean = samples.mean(axis=0)
    se = samples.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else None
    return CoherenceSeries(times=grid, values=mean, std_err=se)


# ---------------------------------------------------------------------------
# Theta family: dominant eigenvector, exact rate, asymptotic cost
# ---------------------------------------------------------------------------


def stable_eigenstate(f0: np.ndarray) -> tuple[CoherenceVector, complex]:
    """Dominant eigenpair of a wait-and-measure map.

    The eigenvector is normalized so its component sum is 1 — the record
    attractor of repeated null outcomes.  Raises if the two eigenvalue
    moduli coincide, in which case no attractor exists.
    """
    evals, evecs = np.linalg.eig(f0)
    order = np.argsort(-np.abs(evals))
    if abs(abs(evals[order[0]]) - abs(evals[order[1]])) <= _EIG_DEGENERACY_TOL * abs(
        evals[order[0]]
    ):
        raise DegenerateEigenstateError("dominant eigenvalue is degenerate")
    vec = evecs[:, order[0]]
    total = vec.sum()
    if total == 0:
        raise DegenerateEigenstateError("dominant eigenvector has zero component sum")
    return CoherenceVector.from_array(vec / total), complex(evals[order[0]])


def theta_eigenstate(
    Theta: float,
    s: int,
    params: RtpParams,
    sens: SensitivityPair,
    tau: Optional[float] = None,
) -> CoherenceVector:
    """Null-outcome attractor of the Theta-family member at theta = s*Theta."""
    if s not in (+1, -1):
        raise ValueError("s must be +1 or -1")
    mu = MeasurementSetting(s * Theta, tau if tau is not None else Theta / sens.k_big)
    vec, _ = stable_eigenstate(f_map(params, sens, mu, 0))
    return vec


def gamma_bar_theta(
    Theta: float,
    params: RtpParams,
    sens: SensitivityPair,
    tau: Optional[float] = None,
) -> float:
    """Asymptotic decay rate of the Theta-family policy from its attractors.

    Each telegraph eigenstate s hosts an attracting filter state E_s; the
    per-step coherence loss there, occupancy-weighted by the telegraph
    steady state, gives the long-time rate.
    """
    tau_val = tau if tau is not None else Theta / sens.k_big
    p = steady_state(params)
    rate = 0.0
    for s, weight in ((+1, p[0]), (-1, p[1])):
        e = theta_eigenstate(Theta, s, params, sens, tau).as_array()
        mu = MeasurementSetting(s * Theta, tau_val)
        kept = sum(
            np.abs((f_map(params, sens, mu, y) @ e).sum()) for y in (0, 1)
        )
        rate += weight * (1.0 - kept) / tau_val
    return float(rate)


def h_theta(Theta) -> np.ndarray:
    """Scaled asymptotic rate of the Theta family at wide sensitivity separation.

    Dimensionless; its minimum over Theta identifies the optimal member of
    the family.
    """
    th = np.asarray(Theta, dtype=float)
    csc = 1.0 / np.sin(th)
    cot = np.cos(th) * csc
    return (
        3.0 * th**2 * csc**4
        - (2.0 * th * (th - cot) + 1.0) * csc**2
        + th**2 / 3.0
        - 1.0
    )


def minimize_h_theta(
    lo: float = 1.0, hi: float = 2.0, tol: float = 1e-7
) -> tuple[float, float]:
    """Golden-section minimum of h_theta on (lo, hi); returns (Theta*, h*)."""
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = h_theta(c), h_theta(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = h_theta(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = h_theta(d)
    x = 0.5 * (a + b)
    return float(x), float(h_theta(x))


def eigenstate_stats_asymptotic(
    Theta: float, s: int, params: RtpParams, sens: SensitivityPair
) -> tuple[float, float]:
    """Leading-order (alpha, zeta) of the attractor at wide separation.

    First order in the jump rates over k_big; useful as a k_big -> infinity
    check on ``stable_eigenstate``.
    """
    if s not in (+1, -1):
        raise ValueError("s must be +1 or -1")
    th = Theta
    k = sens.k_big
    gu, gd = params.gamma_up, params.gamma_down
    csc = 1.0 / np.sin(th)
    cot = np.cos(th) * csc
    n_th = 24.0 * (
        th
        - 2.0 * th**3
        + 3.0 * th * np.cos(2.0 * th)
        + 0.25 * np.sin(4.0 * th)
        - 0.5 * np.sin(2.0 * th)
        + th**2 * (8.0 * cot + 4.0 * th * csc**2 - np.sin(2.0 * th))
    )
    m_th = (
        -15.0
        + 8.0 * th**2 * (th**2 - 15.0)
        - 12.0 * (2.0 * th**2 - 1.0) * np.cos(2.0 * th)
        + 3.0 * np.cos(4.0 * th)
        + 192.0 * th**3 * cot**3
        - 96.0 * th**2 * (th**2 - 1.0) * csc**2
        + 96.0 * th**4 * csc**4
        + 16.0 * th**3 * np.sin(2.0 * th)
    )
    alpha = (n_th + s * ((gd - gu) / k) * m_th) / (12.0 * (2.0 * th + np.sin(2.0 * th)) ** 2)
    gamma_s = gd if s == +1 else gu
    zeta = s * (1.0 - (gamma_s / k) * csc * (np.cos(th) + th * csc))
    return float(alpha), float(zeta)


# ---------------------------------------------------------------------------
# Four-state closed form for the reduced Greedy policy
# ---------------------------------------------------------------------------


def _four_state_settings(spec: StrategySpec, k_big: float) -> tuple[float, float, float, float]:
    """(theta_gt, theta_lt, delta_gt, delta_lt) of a reducible policy."""
    if isinstance(spec, Greedy4):
        return spec.theta_gt, spec.theta_lt, spec.delta_gt, spec.delta_lt
    if isinstance(spec, Greedy2):
        return spec.theta_gt, spec.theta_lt, spec.theta_gt, spec.theta_lt
    if isinstance(spec, ThetaFamily):
        delta = spec.waiting_time(k_big) * k_big
        return spec.Theta, spec.Theta, delta, delta
    raise TypeError("four-state closed form needs ThetaFamily, Greedy4, or Greedy2")


def gamma_4state(spec: StrategySpec, params: RtpParams, sens: SensitivityPair) -> float:
    """Closed-form asymptotic rate of a two-angle/two-wait policy.

    Valid for symmetric jump rates, where the record dynamics settles into a
    four-state cycle: two mirror-image confident states probed with the ">"
    setting, each toppling into the other side's "<" state on a flip
    detection.  The "<" occupancy follows from the two-state record chain;
    the rate is the occupancy-weighted coherence loss per mean waiting time.
    Accepts ThetaFamily as the equal-angle special case.
    """
    if not params.symmetric:
        raise ValueError("the four-state closed form assumes symmetric jump rates")
    k = sens.k_big
    theta_gt, theta_lt, delta_gt, delta_lt = _four_state_settings(spec, k)
    mu_gt = MeasurementSetting(theta_gt, delta_gt / k)
    mu_lt = MeasurementSetting(-theta_lt, delta_lt / k)

    f0_gt = f_map(params, sens, mu_gt, 0)
    f1_gt = f_map(params, sens, mu_gt, 1)
    f0_lt = f_map(params, sens, mu_lt, 0)
    f1_lt = f_map(params, sens, mu_lt, 1)
    g0_gt = f_check(params, k, mu_gt, 0)
    g1_gt = f_check(params, k, mu_gt, 1)
    g0_lt = f_check(params, k, mu_lt, 0)

    r_state, _ = stable_eigenstate(f0_gt)
    r_vec = r_state.as_array()
    l_vec = f1_gt @ r_vec
    l_vec = l_vec / l_vec.sum()

    evals_c, evecs_c = np.linalg.eig(g0_gt)
    r_chk = np.real(evecs_c[:, np.argmax(np.abs(evals_c))])
    r_chk = r_chk / r_chk.sum()
    l_chk = g1_gt @ r_chk
    l_chk = l_chk / l_chk.sum()

    stay_gt = float(np.abs((g0_gt @ r_chk).sum()))
    back_gt = float(np.abs((g0_lt @ l_chk).sum()))
    p_gt = back_gt / (1.0 - stay_gt + back_gt)
    p_lt = 1.0 - p_gt

    kept = 0.0
    for y, f_gt_y in ((0, f0_gt), (1, f1_gt)):
        f_lt_y = f0_lt if y == 0 else f1_lt
        kept += p_gt * np.abs((f_gt_y @ r_vec).sum())
        kept += p_lt * np.abs((f_lt_y @ l_vec).sum())
    mean_tau = p_gt * delta_gt / k + p_lt * delta_lt / k
    return float((1.0 - kept) / mean_tau)


# ---------------------------------------------------------------------------
# Rate fitting and parameter sweeps
# ---------------------------------------------------------------------------


def fit_rate(
    series: CoherenceSeries,
    n_discard: int = 2,
    use_last: Optional[int] = None,
) -> RateFit:
    """Least-squares slope of 1 - C(t) on a trimmed window.

    The first ``n_discard`` points carry the transient before the record
    attractor is reached and are dropped; ``use_last`` keeps only that many
    trailing points.  A constant series is reported as a zero-slope
    degenerate fit rather than an error.
    """
    t = np.asarray(series.times, dtype=float)
    y = 1.0 - np.asarray(series.values, dtype=float)
    t, y = t[n_discard:], y[n_discard:]
    if use_last is not None:
        t, y = t[-use_last:], y[-use_last:]
    if t.size < 2:
        raise ValueError("not enough points left to fit")
    if np.ptp(y) == 0.0 or np.ptp(t) == 0.0:
        return RateFit(slope=0.0, intercept=float(y.mean()), r_squared=0.0,
                       n_discarded=n_discard, n_used=t.size, degenerate=True)
    slope, intercept = np.polyfit(t, y, 1)
    resid = y - (slope * t + intercept)
    ss_res = float(np.sum(resid**2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    return RateFit(
        slope=float(slope),
        intercept=float(intercept),
        r_squared=1.0 - ss_res / ss_tot,
        n_discarded=n_discard,
        n_used=t.size,
    )


@dataclass(frozen=True)
class SweepResult:
    """Scaled fitted rates over a (Theta, scaled wait) grid."""

    thetas: np.ndarray
    scaled_taus: np.ndarray
    rates: np.ndarray  # scaled; shape (len(thetas), len(scaled_taus))
    r_squared: np.ndarray
    flagged: np.ndarray  # fits with r_squared at or below the threshold

    @property
    def argmin(self) -> tuple[int, int]:
        i = int(np.argmin(self.rates))
        return np.unravel_index(i, self.rates.shape)  # type: ignore[return-value]


def sweep_theta_tau(
    params: RtpParams,
    sens: SensitivityPair,
    thetas: Sequence[float],
    scaled_taus: Sequence[float],
    n_steps: int = 15,
    n_discard: int = 2,
    use_last: int = 5,
    r2_threshold: float = 0.998,
) -> SweepResult:
    """Fitted scaled rate of theta = s*Theta policies over a (Theta, K*tau) grid."""
    thetas = np.asarray(thetas, dtype=float)
    scaled_taus = np.asarray(scaled_taus, dtype=float)
    rates = np.empty((thetas.size, scaled_taus.size))
    r2 = np.empty_like(rates)
    for i, th in enumerate(thetas):
        for j, ktau in enumerate(scaled_taus):
            spec = ThetaFamily(float(th), tau=float(ktau) / sens.k_big)
            series = exact_expected_coherence(spec, params, sens, n_steps)
            fit = fit_rate(series, n_discard, use_last)
            rates[i, j] = scaled_rate(fit.slope, params, sens)
            r2[i, j] = fit.r_squared
    return SweepResult(
        thetas=thetas,
        scaled_taus=scaled_taus,
        rates=rates,
        r_squared=r2,
        flagged=r2 <= r2_threshold,
    )
