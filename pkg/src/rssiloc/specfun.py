"""Modified Bessel functions, the half-order Laguerre function and the Rice variance.

Every function accepts scalars or numpy arrays and broadcasts like a ufunc.
Scalar input gives a Python ``float`` back.

The Rice weight needs ``L_{1/2}(z)`` for ``z`` down to roughly ``-(35 m)^2 /
(2 (1 m)^2)``, far outside the range where ``exp(z/2) * I0(-z/2)`` can be
formed directly, so ``laguerre_half`` works exclusively with the
exponentially-scaled Bessel functions ``bessel_i0e`` / ``bessel_i1e``.
"""

import math

import numpy as np

from .exceptions import DomainError, SaturationError

__all__ = [
    "bessel_i0",
    "bessel_i1",
    "bessel_i0e",
    "bessel_i1e",
    "laguerre_half",
    "rice_variance",
]

# Power series below the switch point, Hankel asymptotic expansion above it.
_SERIES_MAX = 20.0
_N_SERIES = 48
_N_ASYMPTOTIC = 30
_TERM_TOL = 1e-17
# |x| beyond which exp(|x|) overflows a double
_OVERFLOW_ARG = 700.0
# x = delta^2 / (2 sigma^2) above which rice_variance uses its asymptotic series
_RICE_ASYMPTOTIC_X = 200.0
# Var/sigma^2 = 1 - t/4 - t^2/8 - ..., t = 1/x
_RICE_ASYMPTOTIC_COEFFS = (
    1.0,
    -1.0 / 4.0,
    -1.0 / 8.0,
    -11.0 / 64.0,
    -51.0 / 128.0,
    -669.0 / 512.0,
    -5685.0 / 1024.0,
)


def _as_output(value, scalar):
    if scalar:
        return float(value)
    return value


def _check_finite(x):
    if not np.all(np.isfinite(x)):
        raise DomainError("argument must be finite")


def _series_pair(ax):
    """(exp(-ax) I0(ax), exp(-ax) I1(ax)) by the ascending series, ax <= _SERIES_MAX."""
    q = 0.25 * ax * ax
    t0 = np.ones_like(ax)
    t1 = 0.5 * ax
    s0 = t0.copy()
    s1 = t1.copy()
    for k in range(1, _N_SERIES):
        t0 = t0 * q / (k * k)
        t1 = t1 * q / (k * (k + 1))
        s0 += t0
        s1 += t1
        if k % 4 == 0 and np.all(t0 <= _TERM_TOL * s0):
            break
    scale = np.exp(-ax)
    return s0 * scale, s1 * scale


def _asymptotic_pair(ax):
    """Same pair from the large-argument expansion, ax >= _SERIES_MAX."""
    t0 = np.ones_like(ax)
    t1 = np.ones_like(ax)
    s0 = t0.copy()
    s1 = t1.copy()
    inv8x = 1.0 / (8.0 * ax)
    for k in range(1, _N_ASYMPTOTIC):
        odd2 = (2 * k - 1) ** 2
        t0 = t0 * (odd2 / k) * inv8x
        t1 = -t1 * ((4.0 - odd2) / k) * inv8x
        s0 += t0
        s1 += t1
        if k % 4 == 0 and np.all(np.maximum(t0, np.abs(t1)) <= _TERM_TOL * s1):
            break
    norm = 1.0 / np.sqrt(2.0 * np.pi * ax)
    return s0 * norm, s1 * norm


def _scaled_pair(ax):
    ax = np.asarray(ax, dtype=float)
    i0e = np.empty_like(ax)
    i1e = np.empty_like(ax)
    small = ax <= _SERIES_MAX
    if np.any(small):
        i0e[small], i1e[small] = _series_pair(ax[small])
    if not np.all(small):
        i0e[~small], i1e[~small] = _asymptotic_pair(ax[~small])
    return i0e, i1e


def _scaled_abs(ax, order):
    return _scaled_pair(ax)[order]


def bessel_i0e(x):
    """Exponentially scaled modified Bessel function ``exp(-|x|) I0(x)``.

    Never overflows; valid for every finite ``x``.
    """
    scalar = np.ndim(x) == 0
    x = np.asarray(x, dtype=float)
    _check_finite(x)
    return _as_output(_scaled_abs(np.abs(x), 0), scalar)


def bessel_i1e(x):
    """Exponentially scaled modified Bessel function ``exp(-|x|) I1(x)``."""
    scalar = np.ndim(x) == 0
    x = np.asarray(x, dtype=float)
    _check_finite(x)
    return _as_output(np.sign(x) * _scaled_abs(np.abs(x), 1), scalar)


def _unscaled(x, order):
    scalar = np.ndim(x) == 0
    x = np.asarray(x, dtype=float)
    _check_finite(x)
    ax = np.abs(x)
    if np.any(ax > _OVERFLOW_ARG):
        raise SaturationError(
            f"I{order}(x) overflows for |x| > {_OVERFLOW_ARG:g}; use bessel_i{order}e"
        )
    value = _scaled_abs(ax, order) * np.exp(ax)
    if order == 1:
        value = np.sign(x) * value
    return _as_output(value, scalar)


def bessel_i0(x):
    """Modified Bessel function of the first kind, order zero.

    Raises:
        SaturationError: if ``|x| > 700`` (the result would overflow).
    """
    return _unscaled(x, 0)


def bessel_i1(x):
    """Modified Bessel function of the first kind, order one (odd in ``x``).

    Raises:
        SaturationError: if ``|x| > 700``.
    """
    return _unscaled(x, 1)


def laguerre_half(z):
    """Laguerre function ``L_{1/2}(z)`` for ``z <= 0``.

    Uses ``L_{1/2}(z) = (1 - z) i0e(-z/2) - z i1e(-z/2)``, which is the
    textbook expression ``exp(z/2) [(1 - z) I0(-z/2) - z I1(-z/2)]`` with the
    exponential folded into the scaled Bessel functions.

    Raises:
        DomainError: if any ``z > 0``.
    """
    scalar = np.ndim(z) == 0
    z = np.asarray(z, dtype=float)
    _check_finite(z)
    if np.any(z > 0):
        raise DomainError("laguerre_half is only defined here for z <= 0")
    i0e, i1e = _scaled_pair(-0.5 * z)
    value = (1.0 - z) * i0e - z * i1e
    return _as_output(value, scalar)


def rice_variance(delta, sigma_a):
    """Variance of the distance from a fixed point to a Gaussian-perturbed point.

    If the perturbed point is ``p + n`` with ``n ~ N(0, sigma_a^2 I_2)`` and
    ``|p| = delta`` then ``|p + n|`` is Rice distributed with variance
    ``delta^2 + 2 sigma_a^2 - (pi sigma_a^2 / 2) L_{1/2}(-delta^2 / (2 sigma_a^2))^2``.

    For ``delta >> sigma_a`` the closed form cancels catastrophically, so an
    asymptotic series in ``2 sigma_a^2 / delta^2`` takes over.

    Args:
        delta: distance between the fixed point and the unperturbed point (m).
        sigma_a: per-axis standard deviation of the perturbation (m).

    Returns:
        Variance in m^2, never negative. ``sigma_a == 0`` gives exactly 0.
    """
    scalar = np.ndim(delta) == 0 and np.ndim(sigma_a) == 0
    delta, sigma_a = np.broadcast_arrays(
        np.asarray(delta, dtype=float), np.asarray(sigma_a, dtype=float)
    )
    _check_finite(delta)
    _check_finite(sigma_a)
    if np.any(delta < 0) or np.any(sigma_a < 0):
        raise DomainError("rice_variance needs delta >= 0 and sigma_a >= 0")

    s2 = sigma_a * sigma_a
    noisy = s2 > 0
    var = np.zeros_like(s2)
    if np.any(noisy):
        s2n = s2[noisy]
        x = delta[noisy] ** 2 / (2.0 * s2n)
        ratio = np.empty_like(x)
        far = x > _RICE_ASYMPTOTIC_X
        if np.any(far):
            t = 1.0 / x[far]
            series = np.zeros_like(t)
            for c in reversed(_RICE_ASYMPTOTIC_COEFFS):
                series = series * t + c
            ratio[far] = series
        if not np.all(far):
            xn = x[~far]
            lag = laguerre_half(-xn)
            ratio[~far] = 2.0 * xn + 2.0 - 0.5 * math.pi * lag * lag
        var[noisy] = np.maximum(ratio, 0.0) * s2n
    return _as_output(var, scalar)
