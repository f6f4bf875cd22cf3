"""Closed-form complex 2x2 maps for the noise-conditioned coherence.

``h_matrix`` propagates the joint density of (accumulated noise phase,
telegraph endpoint) over an interval, Fourier-weighted by exp(i*k*x).
``f_map`` combines that propagation with one projective spectator-qubit
measurement; its kappa -> 0 limit ``f_check`` is a plain Bayesian filter for
the telegraph state.

Matrix convention: element [i, j] maps from z_start = (+1, -1)[j] to
z_end = (+1, -1)[i].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rtp import RtpParams

_LAMBDA_SERIES_CUTOFF = 1e-6


def _wrap_angle(theta: float) -> float:
    """Map an angle to the principal interval (-pi, pi]."""
    w = (-theta + np.pi) % (2.0 * np.pi)
    return float(np.pi - w)


@dataclass(frozen=True)
class MeasurementSetting:
    """One spectator-qubit probe: measurement angle and preceding wait."""

    theta: float
    tau: float

    def __post_init__(self) -> None:
        if not self.tau > 0:
            raise ValueError("waiting time must be positive")
        object.__setattr__(self, "theta", _wrap_angle(self.theta))


@dataclass(frozen=True)
class SensitivityPair:
    """Noise sensitivities: kappa for the data qubit, k_big for the spectator."""

    kappa: float
    k_big: float

    def __post_init__(self) -> None:
        if self.kappa < 0:
            raise ValueError("kappa must be nonnegative")
        if not self.k_big > 0:
            raise ValueError("k_big must be positive")


def lambda_eta(params: RtpParams, k) -> tuple[complex, complex]:
    """Spectral pair (lambda, eta) of the Fourier-weighted generator.

    lambda = sqrt((gd+gu)^2 - 4ik(gd-gu) - 4k^2) on the principal branch;
    eta = (gd - gu) - 2ik.  Everything downstream is even in lambda, so the
    branch choice is observationally irrelevant.
    """
    gu, gd = params.gamma_up, params.gamma_down
    k = np.asarray(k, dtype=complex)
    lam = np.sqrt((gd + gu) ** 2 - 4j * k * (gd - gu) - 4.0 * k**2)
    eta = (gd - gu) - 2j * k
    if lam.ndim == 0:
        return complex(lam), complex(eta)
    return lam, eta


def _h_entries(params: RtpParams, t, k):
    """Entries (h_pp, h_pm, h_mp, h_mm) of h_matrix; t may be an array."""
    gu, gd = params.gamma_up, params.gamma_down
    t = np.asarray(t, dtype=float)
    lam, eta = lambda_eta(params, k)
    arg = 0.5 * lam * t
    small = np.abs(arg) < _LAMBDA_SERIES_CUTOFF
    lam_safe = np.where(small, 1.0, lam)
    # sinh(lam*t/2)/lam is analytic at lam = 0; switch to its Taylor series
    # near the branch point to avoid 0/0 loss of precision.
    sh_over_lam = np.where(
        small,
        0.5 * t * (1.0 + arg**2 / 6.0),
        np.sinh(0.5 * lam_safe * t) / lam_safe,
    )
    ch = np.cosh(arg)
    damp = np.exp(-params.gamma_bar * t)
    h_pp = damp * (ch - eta * sh_over_lam)
    h_pm = damp * (2.0 * gu * sh_over_lam)
    h_mp = damp * (2.0 * gd * sh_over_lam)
    h_mm = damp * (ch + eta * sh_over_lam)
    return h_pp, h_pm, h_mp, h_mm


def h_matrix(params: RtpParams, t, k) -> np.ndarray:
    """Fourier-weighted propagator over duration t at spectral argument k.

    At k = 0 this is the exact telegraph propagator exp(J*t) and is
    column-stochastic.  Accepts array-valued t (stacked on leading axes).
    """
    if np.any(np.asarray(t) < 0):
        raise ValueError("duration must be nonnegative")
    h_pp, h_pm, h_mp, h_mm = _h_entries(params, t, k)
    out = np.empty(np.shape(h_pp) + (2, 2), dtype=complex)
    out[..., 0, 0] = h_pp
    out[..., 0, 1] = h_pm
    out[..., 1, 0] = h_mp
    out[..., 1, 1] = h_mm
    return out


def likelihood(y: int, theta: float, x: float, k_big: float) -> float:
    """Outcome probability of a projective equatorial measurement.

    y = 0 projects onto the angle-theta state ("null" result), y = 1 onto its
    antipode, given accumulated spectator phase k_big * x.
    """
    if y not in (0, 1):
        raise ValueError("y must be 0 or 1")
    c2 = np.cos(0.5 * (theta - k_big * x)) ** 2
    return float(y + (-1) ** y * c2)


def f_map(
    params: RtpParams, sens: SensitivityPair, mu: MeasurementSetting, y: int
) -> np.ndarray:
    """Combined wait-and-measure update for the coherence vector.

    Built from three h_matrix evaluations at spectral arguments kappa and
    kappa +- k_big; summing over the two outcomes y recovers
    h_matrix(tau, kappa) exactly.
    """
    if y not in (0, 1):
        raise ValueError("y must be 0 or 1")
    h0 = h_matrix(params, mu.tau, sens.kappa)
    hp = h_matrix(params, mu.tau, sens.kappa + sens.k_big)
    hm = h_matrix(params, mu.tau, sens.kappa - sens.k_big)
    sign = (-1) ** y
    return 0.25 * (
        2.0 * h0 + sign * (np.exp(-1j * mu.theta) * hp + np.exp(1j * mu.theta) * hm)
    )


def f_check(
    params: RtpParams, k_big: float, mu: MeasurementSetting, y: int
) -> np.ndarray:
    """Probability-map limit of f_map (kappa -> 0); real and sub-stochastic."""
    f = f_map(params, SensitivityPair(kappa=0.0, k_big=k_big), mu, y)
    return f.real
