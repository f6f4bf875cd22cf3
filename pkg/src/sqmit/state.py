"""Coherence-vector bookkeeping and the sufficient statistics derived from it.

The complex 2-vector A carries, per telegraph value, the joint weight
(record probability) x (conditional complex coherence).  Adaptive policies
only ever need two projective invariants of A: the scaled phase split alpha
and the moduli asymmetry zeta; varphi and r track the global phase and scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .maps import SensitivityPair


class DegenerateRecordError(ValueError):
    """A map update annihilated the coherence vector (impossible outcome)."""


class AlphaUndefinedError(ValueError):
    """alpha is undefined: a vanishing component or kappa = 0."""


@dataclass(frozen=True)
class CoherenceVector:
    """Components for z = +1 and z = -1; must not both vanish."""

    a_plus: complex
    a_minus: complex

    def __post_init__(self) -> None:
        if self.a_plus == 0 and self.a_minus == 0:
            raise DegenerateRecordError("coherence vector must be nonzero")

    def as_array(self) -> np.ndarray:
        return np.array([self.a_plus, self.a_minus], dtype=complex)

    @classmethod
    def from_array(cls, a: np.ndarray) -> "CoherenceVector":
        return cls(a_plus=complex(a[0]), a_minus=complex(a[1]))


@dataclass(frozen=True)
class SufficientStats:
    alpha: float
    zeta: float
    varphi: float
    r: float
    s: int


def update_coherence(a: CoherenceVector, f: np.ndarray) -> CoherenceVector:
    """Apply a 2x2 map; raises DegenerateRecordError on an annihilated vector."""
    out = f @ a.as_array()
    if out[0] == 0 and out[1] == 0:
        raise DegenerateRecordError("map update produced the zero vector")
    return CoherenceVector.from_array(out)


def complex_coherence(a: CoherenceVector) -> complex:
    """Record-weighted complex coherence: the component sum."""
    return a.a_plus + a.a_minus


def stats(a: CoherenceVector, sens: SensitivityPair) -> SufficientStats:
    """Sufficient statistics (alpha, zeta, varphi, r, s) of a coherence vector.

    alpha scales the between-hypotheses phase split by k_big/kappa so it is
    order unity in the regimes of interest; sign ties on zeta resolve to +1,
    matching the symmetric-start convention of the adaptive policies.
    """
    ap, am = complex(a.a_plus), complex(a.a_minus)
    mp, mm = abs(ap), abs(am)
    r = mp + mm
    zeta = (mp - mm) / r
    varphi = float(np.angle(ap + am))
    if ap == 0 or am == 0:
        raise AlphaUndefinedError("alpha needs both components nonzero")
    if sens.kappa == 0:
        raise AlphaUndefinedError("alpha is singular at kappa = 0")
    alpha = (sens.k_big / sens.kappa) * float(np.angle(ap / am))
    s = -1 if zeta < 0 else +1
    return SufficientStats(alpha=alpha, zeta=zeta, varphi=varphi, r=r, s=s)


def phase_space_row(step: int, st: SufficientStats, log_r: float, y: int) -> tuple:
    """One CSV row of the phase-space dump: (step, alpha, zeta, varphi mod 2pi, log r, s, y)."""
    return (step, st.alpha, st.zeta, st.varphi % (2.0 * np.pi), log_r, st.s, y)
