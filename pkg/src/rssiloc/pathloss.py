"""Log-distance shadowing path-loss model.

All received powers are in dBm and every logarithm of distance is base 10, so
``p(d) = p0 - 10 eta log10(d / d0)``.  Shadowing adds zero-mean Gaussian noise
in dBm, which makes the inverted distance log-normal around the true one.
"""

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError

__all__ = [
    "PathLossParams",
    "DistanceEstimate",
    "mean_rssi_dbm",
    "invert_rssi_to_distance",
    "sigma_d",
    "lognormal_distance_variance",
    "distance_estimate",
]

_LN10 = math.log(10.0)


@dataclass(frozen=True)
class PathLossParams:
    """Shadowing model parameters.

    Defaults are the outdoor values used throughout the shipped scenarios:
    ``d0 = 1 m``, ``p0 = -33.44 dBm``, ``eta = 3.567``.
    """

    d0: float = 1.0
    p0_dbm: float = -33.44
    eta: float = 3.567

    def __post_init__(self):
        if not (math.isfinite(self.d0) and self.d0 > 0):
            raise DomainError(f"d0 must be > 0, got {self.d0!r}")
        if not (math.isfinite(self.eta) and self.eta > 0):
            raise DomainError(f"eta must be > 0, got {self.eta!r}")
        if not math.isfinite(self.p0_dbm):
            raise DomainError(f"p0_dbm must be finite, got {self.p0_dbm!r}")


@dataclass(frozen=True)
class DistanceEstimate:
    """RSSI-induced distance together with its natural-log spread."""

    d_tilde: float
    sigma_d: float


def _out(value, scalar):
    return float(value) if scalar else value


def mean_rssi_dbm(d, params):
    """Mean received power (dBm) at distance ``d`` metres."""
    scalar = np.ndim(d) == 0
    d = np.asarray(d, dtype=float)
    if np.any(~(d > 0)):
        raise DomainError("distance must be > 0")
    return _out(params.p0_dbm - 10.0 * params.eta * np.log10(d / params.d0), scalar)


def invert_rssi_to_distance(p_dbm, params):
    """Distance at which the mean path-loss curve equals ``p_dbm``.

    A stronger signal maps to a shorter distance, and
    ``invert_rssi_to_distance(mean_rssi_dbm(d)) == d`` up to rounding.
    """
    scalar = np.ndim(p_dbm) == 0
    p = np.asarray(p_dbm, dtype=float)
    return _out(params.d0 * 10.0 ** ((params.p0_dbm - p) / (10.0 * params.eta)), scalar)


def sigma_d(sigma_p, eta):
    """Spread of ``ln(d_tilde / d)`` produced by ``sigma_p`` dB of shadowing."""
    scalar = np.ndim(sigma_p) == 0 and np.ndim(eta) == 0
    sp = np.asarray(sigma_p, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if np.any(sp < 0):
        raise DomainError("sigma_p must be >= 0")
    if np.any(~(eta > 0)):
        raise DomainError("eta must be > 0")
    return _out(_LN10 / (10.0 * eta) * sp, scalar)


def lognormal_distance_variance(d, sigma_d):
    """Variance ``d^2 [exp(2 s^2) - exp(s^2)]`` of a log-normal distance estimate.

    Written as ``d^2 exp(s^2) expm1(s^2)`` so small spreads keep full precision.
    """
    scalar = np.ndim(d) == 0 and np.ndim(sigma_d) == 0
    d = np.asarray(d, dtype=float)
    s2 = np.square(np.asarray(sigma_d, dtype=float))
    if np.any(d < 0) or np.any(s2 < 0):
        raise DomainError("d and sigma_d must be >= 0")
    return _out(d * d * np.exp(s2) * np.expm1(s2), scalar)


def distance_estimate(p_dbm, sigma_p, params):
    """Bundle the inverted distance and its log-scale spread for one reading."""
    return DistanceEstimate(
        d_tilde=invert_rssi_to_distance(float(p_dbm), params),
        sigma_d=sigma_d(float(sigma_p), params.eta),
    )
