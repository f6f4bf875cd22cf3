"""Measurement policies for the spectator qubit.

All policies expose ``next_setting``: given the current sufficient statistics
(and, for the full Greedy search, the coherence vector itself) they return the
angle and waiting time of the next probe.

* ``NonAdaptive`` - fixed (theta, tau).
* ``ThetaFamily`` - theta = s * Theta with s = sign(zeta), tau = Theta/k_big
  by default (the member at the optimal Theta is MOAAAR); tau may be
  overridden independently for sweeps.
* ``GreedyFull`` - locally optimal: maximizes the one-step-ahead expected
  coherence over candidate angles and the measure-now-vs-wait decision.
* ``Greedy4`` / ``Greedy2`` - table-driven reductions of the full Greedy,
  parameterized by two angles and two (or the same two) scaled waits chosen
  by which side of an alpha threshold the state sits on.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .maps import MeasurementSetting, SensitivityPair, _h_entries
from .rtp import RtpParams
from .state import CoherenceVector, SufficientStats

_GRID_FALLBACK_POINTS = 721


class DegenerateCandidateError(ValueError):
    """Closed-form candidate angles are singular for this state."""


class NoCrossingError(RuntimeError):
    """The Greedy wait scan found no measure-now advantage before its cap."""


class ClusteringError(ValueError):
    """Could not resolve two alpha clusters in the Greedy trajectories."""


def _check_angle(name: str, value: float) -> None:
    if not (0.0 < value < np.pi):
        raise ValueError(f"{name} must lie in (0, pi)")


@dataclass(frozen=True)
class NoControl:
    """No spectator measurements at all; free dephasing baseline."""


@dataclass(frozen=True)
class NonAdaptive:
    theta: float
    tau: float

    def __post_init__(self) -> None:
        _check_angle("theta", self.theta)
        if not self.tau > 0:
            raise ValueError("tau must be positive")


@dataclass(frozen=True)
class ThetaFamily:
    """theta = sign(zeta) * Theta; tau defaults to Theta / k_big."""

    Theta: float
    tau: Optional[float] = None

    def __post_init__(self) -> None:
        _check_angle("Theta", self.Theta)
        if self.tau is not None and not self.tau > 0:
            raise ValueError("tau must be positive when given")

    def waiting_time(self, k_big: float) -> float:
        return self.tau if self.tau is not None else self.Theta / k_big


@dataclass(frozen=True)
class GreedyFull:
    """Full local optimization; dt_scan defaults to 0.001 / k_big."""

    dt_scan: Optional[float] = None


@dataclass(frozen=True)
class Greedy4:
    theta_gt: float
    theta_lt: float
    delta_gt: float
    delta_lt: float
    alpha_threshold: float

    def __post_init__(self) -> None:
        _check_angle("theta_gt", self.theta_gt)
        _check_angle("theta_lt", self.theta_lt)
        if not (self.delta_gt > 0 and self.delta_lt > 0):
            raise ValueError("scaled waiting times must be positive")
        if not np.isfinite(self.alpha_threshold):
            raise ValueError("alpha_threshold must be finite")


@dataclass(frozen=True)
class Greedy2:
    theta_gt: float
    theta_lt: float
    alpha_threshold: float

    def __post_init__(self) -> None:
        _check_angle("theta_gt", self.theta_gt)
        _check_angle("theta_lt", self.theta_lt)
        if not np.isfinite(self.alpha_threshold):
            raise ValueError("alpha_threshold must be finite")


StrategySpec = Union[NoControl, NonAdaptive, ThetaFamily, GreedyFull, Greedy4, Greedy2]


@dataclass(frozen=True)
class PolicyState:
    """What a policy may look at: the stats, the step count, and (for the
    full Greedy) the coherence vector the stats summarize."""

    stats: SufficientStats
    step: int = 0
    coherence: Optional[CoherenceVector] = None


def next_setting(
    spec: StrategySpec,
    state: PolicyState,
    sens: SensitivityPair,
    params: RtpParams,
) -> MeasurementSetting:
    """Next probe setting under the given policy.

    The very first measurement (step 0) of every adaptive policy uses
    theta = pi/2: with a steady-state prior there is no reason to prefer
    either sign, and +-pi/2 is one and the same basis.
    """
    first = state.step == 0
    s = state.stats.s
    if isinstance(spec, NoControl):
        raise ValueError("the no-control policy takes no measurements")
    if isinstance(spec, NonAdaptive):
        return MeasurementSetting(spec.theta, spec.tau)
    if isinstance(spec, ThetaFamily):
        theta = np.pi / 2 if first else s * spec.Theta
        return MeasurementSetting(theta, spec.waiting_time(sens.k_big))
    if isinstance(spec, (Greedy4, Greedy2)):
        gt = state.stats.alpha > spec.alpha_threshold
        theta_mag = spec.theta_gt if gt else spec.theta_lt
        if isinstance(spec, Greedy4):
            delta = spec.delta_gt if gt else spec.delta_lt
        else:
            delta = theta_mag
        theta = np.pi / 2 if first else s * theta_mag
        return MeasurementSetting(theta, delta / sens.k_big)
    if isinstance(spec, GreedyFull):
        if state.coherence is None:
            raise ValueError("the full Greedy policy needs the coherence vector")
        setting = greedy_full_next_setting(state.coherence, params, sens, spec.dt_scan)
        if first:
            return MeasurementSetting(np.pi / 2, setting.tau)
        return setting
    raise TypeError(f"unknown strategy spec {spec!r}")


# ---------------------------------------------------------------------------
# Greedy internals
# ---------------------------------------------------------------------------


def _uvw(params: RtpParams, sens: SensitivityPair, a: np.ndarray, taus):
    """(u, v, w) = I^T H(tau, k) A at k = kappa, kappa+K, kappa-K.

    ``taus`` may be an array; results broadcast accordingly.
    """
    out = []
    for k in (sens.kappa, sens.kappa + sens.k_big, sens.kappa - sens.k_big):
        h_pp, h_pm, h_mp, h_mm = _h_entries(params, taus, k)
        out.append((h_pp + h_mp) * a[0] + (h_pm + h_mm) * a[1])
    return tuple(out)


def _measure_reward(theta, u, v, w):
    """Outcome-summed coherence after one measurement at angle theta.

    With u, v, w as above, I^T F(y) A = (2u + (-1)^y (e^{-i theta} v +
    e^{i theta} w)) / 4, so the reward is the sum of the two moduli.
    """
    cross = np.exp(-1j * theta) * v + np.exp(1j * theta) * w
    return 0.25 * (np.abs(2.0 * u + cross) + np.abs(2.0 * u - cross))


def _canonical_angle(theta, u, v, w):
    """Resolve the theta vs theta + pi reward degeneracy.

    The outcome-summed reward has period pi in theta (the two outcome terms
    swap), so each stationary angle comes as a pair.  The representative kept
    is the one whose null-outcome (y = 0) term dominates, matching the
    convention that the probe is aligned with the likely phase.
    """
    cross = np.exp(-1j * theta) * v + np.exp(1j * theta) * w
    flip = np.abs(2.0 * u + cross) < np.abs(2.0 * u - cross)
    shifted = np.mod(theta + 2.0 * np.pi, 2.0 * np.pi) - np.pi
    return np.where(flip, shifted, theta)


def _candidates_from_uvw(u, v, w):
    """Three closed-form candidate angles (theta0, theta+, theta-).

    Returns arrays matching the broadcast shape of u, v, w, plus a mask of
    entries where the closed form is degenerate (c1 = 0).  Each candidate is
    canonicalized so its null-outcome term dominates (the square root in the
    stationarity condition leaves a theta vs theta + pi ambiguity).
    """
    a = 2.0 * u
    b = v
    c = w
    theta0 = np.angle(b * np.conj(a) - np.conj(c) * a)
    c1 = (np.conj(a) * c) ** 2 - (a * np.conj(b)) ** 2 + 4.0 * (
        np.abs(b) ** 2 - np.abs(c) ** 2
    ) * np.conj(b) * c
    c2 = -2j * np.imag(a**2 * np.conj(b) * np.conj(c))
    scale = (np.abs(a) + np.abs(b) + np.abs(c)) ** 4 + np.finfo(float).tiny
    degenerate = np.abs(c1) < 1e-14 * scale
    c1_safe = np.where(degenerate, 1.0, c1)
    root = np.sqrt(c2**2 + np.abs(c1) ** 2 + 0j)
    theta_p = np.angle(np.sqrt((c2 + root) / c1_safe))
    theta_m = np.angle(np.sqrt((c2 - root) / c1_safe))
    theta0 = _canonical_angle(theta0, u, v, w)
    theta_p = _canonical_angle(theta_p, u, v, w)
    theta_m = _canonical_angle(theta_m, u, v, w)
    return theta0, theta_p, theta_m, degenerate


def berry_wiseman_candidates(
    a: CoherenceVector,
    tau: float,
    params: RtpParams,
    sens: SensitivityPair,
) -> tuple[float, float, float]:
    """Candidate angles whose best member maximizes the one-probe reward."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    u, v, w = _uvw(params, sens, a.as_array(), tau)
    theta0, theta_p, theta_m, degenerate = _candidates_from_uvw(u, v, w)
    if bool(degenerate):
        raise DegenerateCandidateError("candidate closed form is singular (c1 = 0)")
    return float(theta0), float(theta_p), float(theta_m)


def one_measurement_reward(
    a: CoherenceVector,
    theta: float,
    tau: float,
    params: RtpParams,
    sens: SensitivityPair,
) -> float:
    """Sum over outcomes of |I^T F({theta, tau}, y) A|."""
    u, v, w = _uvw(params, sens, a.as_array(), tau)
    return float(_measure_reward(theta, u, v, w))


def _grid_fallback_angles(n: int = _GRID_FALLBACK_POINTS) -> np.ndarray:
    return -np.pi + 2.0 * np.pi * (np.arange(1, n + 1)) / n


def _best_single_reward(u, v, w):
    """Max reward over the candidate set, with grid fallback when singular.

    Works elementwise over arrays; returns (reward, angle).
    """
    theta0, theta_p, theta_m, degenerate = _candidates_from_uvw(u, v, w)
    cands = np.stack([theta0, theta_p, theta_m])
    rewards = _measure_reward(cands, u, v, w)
    idx = np.argmax(rewards, axis=0)
    best = np.take_along_axis(rewards, idx[None], axis=0)[0]
    best_theta = np.take_along_axis(cands, idx[None], axis=0)[0]
    if np.any(degenerate):
        grid = _grid_fallback_angles()
        g_rewards = _measure_reward(
            grid.reshape((-1,) + (1,) * np.ndim(u)), u, v, w
        )
        g_idx = np.argmax(g_rewards, axis=0)
        g_best = np.take_along_axis(g_rewards, g_idx[None], axis=0)[0]
        g_theta = _canonical_angle(grid[g_idx], u, v, w)
        best = np.where(degenerate, g_best, best)
        best_theta = np.where(degenerate, g_theta, best_theta)
    return best, best_theta


def _scenario_rewards_grid(
    a_vec: np.ndarray,
    taus: np.ndarray,
    dt: float,
    params: RtpParams,
    sens: SensitivityPair,
):
    """Vectorized (C_i_opt, C_ii_opt, theta_ii_opt) over an array of waits."""
    k_big = sens.k_big
    # Scenario (i): single probe at tau + dt.
    u1, v1, w1 = _uvw(params, sens, a_vec, taus + dt)
    c_i, _ = _best_single_reward(u1, v1, w1)

    # Scenario (ii): probe at tau (candidate angles), then again after dt with
    # the short-interval shortcut angle sign(zeta') * k_big * dt.
    hs = [
        _h_entries(params, taus, k)
        for k in (sens.kappa, sens.kappa + k_big, sens.kappa - k_big)
    ]
    # P[j] = H(tau, k_j) A, shape (2,) + taus.shape
    P = [
        np.stack([
            h_pp * a_vec[0] + h_pm * a_vec[1],
            h_mp * a_vec[0] + h_mm * a_vec[1],
        ])
        for (h_pp, h_pm, h_mp, h_mm) in hs
    ]
    u, v, w = (P[0].sum(axis=0), P[1].sum(axis=0), P[2].sum(axis=0))
    theta0, theta_p, theta_m, degenerate = _candidates_from_uvw(u, v, w)
    cand = np.stack([theta0, theta_p, theta_m])  # (3,) + taus.shape

    h_dt = [
        _h_entries(params, dt, k)
        for k in (sens.kappa, sens.kappa + k_big, sens.kappa - k_big)
    ]

    c_ii = np.zeros(cand.shape)
    for y in (0, 1):
        sign = (-1) ** y
        cross = (
            np.exp(-1j * cand)[None] * P[1][:, None]
            + np.exp(1j * cand)[None] * P[2][:, None]
        )
        a_next = 0.25 * (2.0 * P[0][:, None] + sign * cross)  # (2, 3) + shape
        s_next = np.where(np.abs(a_next[0]) >= np.abs(a_next[1]), 1.0, -1.0)
        theta2 = s_next * k_big * dt
        uvw2 = []
        for (h_pp, h_pm, h_mp, h_mm) in h_dt:
            uvw2.append((h_pp + h_mp) * a_next[0] + (h_pm + h_mm) * a_next[1])
        c_ii += _measure_reward(theta2, *uvw2)
    idx = np.argmax(c_ii, axis=0)
    c_ii_opt = np.take_along_axis(c_ii, idx[None], axis=0)[0]
    theta_ii_opt = np.take_along_axis(cand, idx[None], axis=0)[0]
    return c_i, c_ii_opt, theta_ii_opt


def greedy_scenario_rewards(
    a: CoherenceVector,
    tau: float,
    dt: float,
    params: RtpParams,
    sens: SensitivityPair,
) -> tuple[float, float, float]:
    """Optimized rewards for measure-later vs measure-now-and-later.

    Returns (C_i_opt, C_ii_opt, theta_ii_opt).  Both rewards omit the common
    record-probability prefactor, which cannot change the comparison.
    """
    c_i, c_ii, theta_ii = _scenario_rewards_grid(
        a.as_array(), np.asarray(tau, dtype=float), dt, params, sens
    )
    return float(c_i), float(c_ii), float(theta_ii)


def greedy_full_next_setting(
    a: CoherenceVector,
    params: RtpParams,
    sens: SensitivityPair,
    dt_scan: Optional[float] = None,
) -> MeasurementSetting:
    """Forward-scan the wait until measuring now first beats waiting.

    Scans D(tau) = C_i_opt - C_ii_opt in steps of dt_scan from 0, takes the
    first crossing D <= 0, refines it by bisection, and returns that wait with
    the associated measure-now angle.
    """
    dt = dt_scan if dt_scan is not None else 0.001 / sens.k_big
    tau_max = 10.0 / params.gamma_bar
    a_vec = a.as_array()
    chunk = 4096
    start = 1
    root_lo = root_hi = None
    while (start - 1) * dt < tau_max:
        taus = dt * np.arange(start, start + chunk)
        taus = taus[taus <= tau_max + dt]
        if taus.size == 0:
            break
        c_i, c_ii, _ = _scenario_rewards_grid(a_vec, taus, dt, params, sens)
        d = c_i - c_ii
        hits = np.nonzero(d <= 0)[0]
        if hits.size:
            i = int(hits[0])
            root_hi = float(taus[i])
            root_lo = float(taus[i] - dt) if (i > 0 or start > 1) else 0.5 * dt
            break
        start += chunk
    if root_hi is None:
        raise NoCrossingError("no measure-now crossing found before the scan cap")

    def d_of(tau: float) -> float:
        c1v, c2v, _ = greedy_scenario_rewards(a, tau, dt, params, sens)
        return c1v - c2v

    lo, hi = root_lo, root_hi
    if d_of(lo) <= 0:
        hi = lo
    else:
        tol = 1e-12 / sens.k_big
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if d_of(mid) <= 0:
                hi = mid
            else:
                lo = mid
    _, _, theta = greedy_scenario_rewards(a, hi, dt, params, sens)
    return MeasurementSetting(theta, hi)


# ---------------------------------------------------------------------------
# Greedy4 reduction
# ---------------------------------------------------------------------------


def _two_means_1d(values: np.ndarray, max_iter: int = 200) -> tuple[float, float]:
    """Two-cluster 1-D k-means; returns (low mean, high mean)."""
    lo, hi = float(values.min()), float(values.max())
    if lo == hi:
        raise ClusteringError("alpha values are all identical")
    m1, m2 = lo, hi
    for _ in range(max_iter):
        split = 0.5 * (m1 + m2)
        low = values[values <= split]
        high = values[values > split]
        if low.size == 0 or high.size == 0:
            raise ClusteringError("could not resolve two alpha clusters")
        n1, n2 = float(low.mean()), float(high.mean())
        if n1 == m1 and n2 == m2:
            break
        m1, m2 = n1, n2
    return m1, m2


def extract_greedy4_params(
    trajectories: Sequence[Sequence[tuple[float, float, float]]],
    n_transient: int,
    k_big: float,
) -> Greedy4:
    """Condense full-Greedy trajectories into the four-parameter policy.

    Each trajectory is a sequence of (alpha, theta, tau) records, pairing the
    alpha that drove a decision with the setting chosen.  The first
    ``n_transient`` records per trajectory are discarded, alpha values are
    split into two clusters, and the group means of |theta| and k_big*tau
    give the two angle and the two scaled-wait parameters.
    """
    if n_transient < 2:
        raise ValueError("n_transient must be at least 2")
    recs = [
        rec for traj in trajectories for rec in list(traj)[n_transient:]
    ]
    if not recs:
        raise ClusteringError("no post-transient records")
    alphas = np.array([r[0] for r in recs])
    thetas = np.abs([r[1] for r in recs])
    deltas = k_big * np.array([r[2] for r in recs])
    m_lo, m_hi = _two_means_1d(alphas)
    thresh = 0.5 * (m_lo + m_hi)
    gt = alphas > thresh
    return Greedy4(
        theta_gt=float(thetas[gt].mean()),
        theta_lt=float(thetas[~gt].mean()),
        delta_gt=float(deltas[gt].mean()),
        delta_lt=float(deltas[~gt].mean()),
        alpha_threshold=float(thresh),
    )


def tau_effective(spec: Greedy4, k_big: float, gamma_breve: float) -> float:
    """Jump-weighted effective waiting time of the four-parameter policy."""
    denom = k_big - gamma_breve * (spec.delta_lt - spec.delta_gt)
    if not denom > 0:
        raise ValueError("nonpositive denominator in effective waiting time")
    return spec.delta_gt / denom
