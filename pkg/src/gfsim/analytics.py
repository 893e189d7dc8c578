"""Closed-form results for the resonant array, used as independent oracles.

A photon launched from site 1 of a resonant square-root-coupled chain
spreads like a coherent state truncated at the chain boundary: amplitude
on site k is proportional to (-iJt)^(k-1)/sqrt((k-1)!), with an
incomplete-gamma normalization. The forms here are exact in their own
right (separately normalized), and agree with the exact dynamics only
while the boundary site is essentially unpopulated; the deviation is
measured, not assumed away.

Everything is computed in log-magnitude + phase form, so the expressions
stay finite for any (Jt)^2, far past the naive factorial overflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

__all__ = [
    "TruncatedCoherentProfile",
    "regularized_upper_tail",
    "truncated_coherent_amplitudes",
]

# Below this, e^{-x} is comfortably normal and the direct compensated sum
# is exact-in-intent; above, everything moves to log space.
_LOG_SPACE_THRESHOLD = 700.0


def _validate_nx(n: int, x: float) -> tuple[int, float]:
    if not isinstance(n, (int, np.integer)) or isinstance(n, bool) or n < 1:
        raise ConfigError(f"term count must be an integer >= 1, got {n!r}")
    x = float(x)
    if not math.isfinite(x) or x < 0.0:
        raise ConfigError(f"x must be finite and >= 0, got {x!r}")
    return int(n), x


def _term_logs(n: int, x: float) -> np.ndarray:
    """log(e^{-x} x^j / j!) for j = 0..n-1 (x > 0)."""
    j = np.arange(n, dtype=float)
    return -x + j * math.log(x) - np.array([math.lgamma(k + 1.0) for k in j])


def regularized_upper_tail(n: int, x: float) -> float:
    """Probability that a Poisson(x) variate is < n.

    Equals e^{-x} * sum_{j=0}^{n-1} x^j/j!, the regularized upper incomplete
    gamma Q(n, x). Computed by Kahan-compensated partial summation for
    moderate x and by a log-space sum once e^{-x} underflows; no
    general-purpose special-function routine is involved (those serve as
    the independent oracle in the tests).
    """
    n, x = _validate_nx(n, x)
    if x == 0.0:
        return 1.0
    if x < _LOG_SPACE_THRESHOLD:
        term = math.exp(-x)
        total = 0.0
        comp = 0.0
        for j in range(n):
            if j > 0:
                term *= x / j
            y = term - comp
            t = total + y
            comp = (t - total) - y
            total = t
        return min(total, 1.0)
    logs = _term_logs(n, x)
    peak = float(np.max(logs))
    return float(min(math.exp(peak + math.log(np.sum(np.exp(logs - peak)))), 1.0))


@dataclass(frozen=True, eq=False)
class TruncatedCoherentProfile:
    """Boundary-truncated coherent profile at excitation x = (Jt)^2.

    amplitudes[k-1] is the site-k amplitude (length N, no vacuum slot, the
    launch site is k = 1); normalization is the closed-form prefactor
    e^{-x/2}/sqrt(Q(N, x)).
    """

    excitation_scale: float
    amplitudes: np.ndarray
    normalization: float

    def __post_init__(self) -> None:
        amps = np.array(self.amplitudes, dtype=complex)
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)


def truncated_coherent_amplitudes(coupling: float, t: float, n_sites: int) -> TruncatedCoherentProfile:
    """Closed-form site amplitudes for a photon launched from site 1.

    Valid for a resonant array in the frame rotating at the common
    resonance; site k carries phase (-i)^(k-1) and weight given by a
    Poisson distribution in k-1 conditioned on k <= N, with x = (J t)^2.
    The profile is exactly normalized by construction.
    """
    coupling = float(coupling)
    if not math.isfinite(coupling) or coupling <= 0.0:
        raise ConfigError(f"coupling must be > 0, got {coupling!r}")
    t = float(t)
    if not math.isfinite(t) or t < 0.0:
        raise ConfigError(f"time must be finite and >= 0, got {t!r}")
    if not isinstance(n_sites, (int, np.integer)) or n_sites < 1:
        raise ConfigError(f"n_sites must be an integer >= 1, got {n_sites!r}")
    n = int(n_sites)

    x = (coupling * t) ** 2
    phase = (-1j) ** np.arange(n)
    if x == 0.0:
        amps = np.zeros(n, dtype=complex)
        amps[0] = 1.0
        return TruncatedCoherentProfile(0.0, amps, 1.0)

    logs = _term_logs(n, x)
    peak = float(np.max(logs))
    rel = np.exp(logs - peak)
    log_tail = peak + math.log(float(np.sum(rel)))  # log Q(N, x)
    weights = rel / float(np.sum(rel))  # conditioned Poisson, sums to 1 exactly
    amps = phase * np.sqrt(weights)
    normalization = math.exp(-0.5 * x - 0.5 * log_tail)
    return TruncatedCoherentProfile(x, amps, normalization)
