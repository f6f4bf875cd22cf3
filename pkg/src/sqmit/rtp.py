"""Two-state random telegraph process (RTP).

Exact propagator, steady state, and seeded stochastic trajectory sampling.
The trajectory sampler doubles as the Monte-Carlo oracle that the map-based
machinery is cross-checked against.

Vector convention used throughout the package: index 0 is the noise value
z = +1, index 1 is z = -1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RtpParams:
    """Flip rates of the telegraph noise.

    ``gamma_up`` is the rate of -1 -> +1 jumps, ``gamma_down`` of +1 -> -1.
    """

    gamma_up: float
    gamma_down: float

    def __post_init__(self) -> None:
        if not (self.gamma_up > 0 and self.gamma_down > 0):
            raise ValueError("both jump rates must be strictly positive")

    @property
    def gamma_bar(self) -> float:
        """Arithmetic mean of the two rates."""
        return 0.5 * (self.gamma_up + self.gamma_down)

    @property
    def gamma_breve(self) -> float:
        """Harmonic mean of the two rates."""
        return 2.0 * self.gamma_up * self.gamma_down / (self.gamma_up + self.gamma_down)

    @property
    def symmetric(self) -> bool:
        return self.gamma_up == self.gamma_down


@dataclass(frozen=True)
class RtpTrajectory:
    """One realization of z(t): initial sign plus ordered jump times in (0, T]."""

    z0: int
    jump_times: np.ndarray
    horizon: float

    def __post_init__(self) -> None:
        if self.z0 not in (+1, -1):
            raise ValueError("z0 must be +1 or -1")
        jt = np.asarray(self.jump_times, dtype=float)
        object.__setattr__(self, "jump_times", jt)
        if jt.size and (np.any(np.diff(jt) <= 0) or jt[0] <= 0 or jt[-1] > self.horizon):
            raise ValueError("jump times must be strictly increasing within (0, horizon]")

    def value_at(self, t: float) -> int:
        """z(t); right-continuous at jump times (value after the flip)."""
        n = int(np.searchsorted(self.jump_times, t, side="right"))
        return self.z0 if n % 2 == 0 else -self.z0


def jump_matrix(params: RtpParams) -> np.ndarray:
    """Generator of the telegraph master equation; columns sum to zero."""
    gu, gd = params.gamma_up, params.gamma_down
    return np.array([[-gd, gu], [gd, -gu]])


def propagate(params: RtpParams, p: np.ndarray, tau: float) -> np.ndarray:
    """Evolve a probability vector for a duration tau.

    Uses the closed form exp(J*tau) = I + (1 - exp(-2*gb*tau))/(2*gb) * J,
    which is exact for the two-state generator.
    """
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    gb = params.gamma_bar
    factor = -np.expm1(-2.0 * gb * tau) / (2.0 * gb)
    return np.asarray(p, dtype=float) + factor * (jump_matrix(params) @ p)


def steady_state(params: RtpParams) -> np.ndarray:
    """Stationary distribution (p_+, p_-) = (gamma_up, gamma_down)/(2*gamma_bar)."""
    return np.array([params.gamma_up, params.gamma_down]) / (2.0 * params.gamma_bar)


def sample_trajectory(
    params: RtpParams, z0: int, horizon: float, rng: np.random.Generator
) -> RtpTrajectory:
    """Draw one trajectory by sampling exponential holding times.

    While z = +1 the flip rate is gamma_down; while z = -1 it is gamma_up.
    Deterministic for a given generator state.
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    jumps = []
    t = 0.0
    z = z0
    while True:
        rate = params.gamma_down if z == +1 else params.gamma_up
        t += rng.exponential(1.0 / rate)
        if t > horizon:
            break
        jumps.append(t)
        z = -z
    return RtpTrajectory(z0=z0, jump_times=np.array(jumps), horizon=horizon)


def integrate_noise(traj: RtpTrajectory, t1: float, t2: float) -> float:
    """Integral of z(s) over [t1, t2], exact from the jump times."""
    if not (0.0 <= t1 <= t2 <= traj.horizon):
        raise ValueError("integration interval must lie within [0, horizon]")
    jt = traj.jump_times
    lo = int(np.searchsorted(jt, t1, side="right"))
    hi = int(np.searchsorted(jt, t2, side="right"))
    # Segment boundaries: t1, interior jumps, t2; z alternates starting at z(t1).
    bounds = np.concatenate(([t1], jt[lo:hi], [t2]))
    z_start = traj.z0 if lo % 2 == 0 else -traj.z0
    signs = z_start * (-1.0) ** np.arange(bounds.size - 1)
    return float(np.sum(signs * np.diff(bounds)))
