"""Variance-weighted gradient-descent localization.

Two estimators share one iteration map and differ only in the residual weight:

* ``proposed`` weights residual ``i`` by the Rice variance of the distance to
  the perturbed anchor plus the log-normal variance of the RSSI distance.
* ``baseline`` (weighted "circular" multilateration) keeps only the log-normal
  term, i.e. it treats reported anchor positions as exact.

Weights are re-evaluated at every iterate and held constant while the gradient
is formed, so the gradient is that of the cost with frozen weights.

The single-estimate functions run the batched kernel with a batch of one, so a
trial gives bit-identical results whether it is solved alone or inside a
Monte-Carlo batch.
"""

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .exceptions import DegenerateWeightError, DomainError, SingularityError
from .pathloss import PathLossParams, invert_rssi_to_distance, lognormal_distance_variance, sigma_d
from .specfun import rice_variance

__all__ = [
    "WEIGHT_FLOOR",
    "POSITION_EPS",
    "METHODS",
    "Point",
    "AnchorReading",
    "EstimatorConfig",
    "EstimateResult",
    "BatchResult",
    "error_weight",
    "cost",
    "gradient",
    "estimate_position",
    "estimate_position_proposed",
    "estimate_position_baseline",
    "estimate_batch",
]

WEIGHT_FLOOR = 1e-9  # m^2
POSITION_EPS = 1e-9  # m
METHODS = ("proposed", "baseline")

# halve the step after this many consecutive cost increases (when enabled)
_INCREASE_PATIENCE = 5


class Point(NamedTuple):
    x: float
    y: float


@dataclass(frozen=True)
class AnchorReading:
    """What the blind node receives from one anchor."""

    pos: Point
    sigma_a: float
    rssi_dbm: float
    sigma_p: float

    def __post_init__(self):
        object.__setattr__(self, "pos", Point(float(self.pos[0]), float(self.pos[1])))
        if not self.sigma_a >= 0:
            raise DomainError(f"sigma_a must be >= 0, got {self.sigma_a!r}")
        if not self.sigma_p >= 0:
            raise DomainError(f"sigma_p must be >= 0, got {self.sigma_p!r}")


@dataclass(frozen=True)
class EstimatorConfig:
    """Gradient-descent settings.

    ``step_size`` has units of m^2 because the cost is divided by variances.
    There is no universal default; the shipped scenarios carry tuned values.
    Setting ``stop_tol=0`` forces exactly ``max_iters`` iterations.

    With ``normalize_step`` the gradient is divided by ``2 sum_i 1/w_i``,
    the curvature of the cost along a direction shared by every anchor.
    ``step_size`` then becomes dimensionless and anything below 2 is stable
    far from the anchors, whatever the size of the weights.
    """

    step_size: float
    max_iters: int = 300
    stop_tol: float = 1e-4
    params: PathLossParams = field(default_factory=PathLossParams)
    halve_on_increase: bool = False
    normalize_step: bool = False

    def __post_init__(self):
        if not (math.isfinite(self.step_size) and self.step_size > 0):
            raise DomainError(f"step_size must be > 0, got {self.step_size!r}")
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise DomainError(f"max_iters must be a positive integer, got {self.max_iters!r}")
        if not self.stop_tol >= 0:
            raise DomainError(f"stop_tol must be >= 0, got {self.stop_tol!r}")


@dataclass(frozen=True)
class EstimateResult:
    position: Point
    iterations_used: int
    converged: bool
    trace: Optional[tuple] = None  # ((Point, cost), ...) at each evaluated iterate


@dataclass(frozen=True)
class BatchResult:
    """Per-trial outcome of :func:`estimate_batch` (arrays indexed by trial)."""

    positions: np.ndarray  # (T, 2)
    iterations_used: np.ndarray  # (T,)
    converged: np.ndarray  # (T,) bool
    failed: np.ndarray  # (T,) bool, non-finite weight or iterate


def _check_method(method):
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}, got {method!r}")


def error_weight(delta_bar, d_tilde, sigma_a, sigma_d):
    """Estimated variance of one residual, floored at ``WEIGHT_FLOOR``.

    ``rice_variance(delta_bar, sigma_a) + d_tilde^2 [exp(2 sd^2) - exp(sd^2)]``.
    A noiseless reading (both sigmas zero) gets the floor rather than zero.

    Raises:
        DegenerateWeightError: if the weight is not finite.
    """
    scalar = all(np.ndim(v) == 0 for v in (delta_bar, d_tilde, sigma_a, sigma_d))
    w = rice_variance(delta_bar, sigma_a) + lognormal_distance_variance(d_tilde, sigma_d)
    w = np.asarray(w, dtype=float)
    if not np.all(np.isfinite(w)):
        raise DegenerateWeightError("residual weight is not finite")
    w = np.maximum(w, WEIGHT_FLOOR)
    return float(w) if scalar else w


def _arrays(readings, params):
    if len(readings) == 0:
        raise DomainError("at least one anchor reading is required")
    pos = np.array([r.pos for r in readings], dtype=float)
    sa = np.array([r.sigma_a for r in readings], dtype=float)
    rssi = np.array([r.rssi_dbm for r in readings], dtype=float)
    sp = np.array([r.sigma_p for r in readings], dtype=float)
    return pos, sa, invert_rssi_to_distance(rssi, params), sigma_d(sp, params.eta)


def _weights(dbar, d_tilde, sa, sd):
    w = rice_variance(dbar, sa) + lognormal_distance_variance(d_tilde, sd)
    return np.maximum(w, WEIGHT_FLOOR)


def _effective_sigma_a(sa, method):
    return sa if method == "proposed" else np.zeros_like(sa)


def cost(estimate, readings, config, method="proposed", frozen_at=None):
    """Weighted sum of squared range residuals at ``estimate``.

    Weights are evaluated at ``frozen_at`` when given, otherwise at
    ``estimate`` itself.
    """
    _check_method(method)
    pos, sa, dt, sd = _arrays(readings, config.params)
    sa = _effective_sigma_a(sa, method)
    est = np.asarray(estimate, dtype=float)
    dbar = np.hypot(pos[:, 0] - est[0], pos[:, 1] - est[1])
    anchor = est if frozen_at is None else np.asarray(frozen_at, dtype=float)
    dw = np.hypot(pos[:, 0] - anchor[0], pos[:, 1] - anchor[1])
    w = error_weight(dw, dt, sa, sd)
    return float(np.sum((dbar - dt) ** 2 / w))


def gradient(estimate, readings, config, method="proposed"):
    """Gradient of the frozen-weight cost at ``estimate``.

    Raises:
        SingularityError: if ``estimate`` is within ``POSITION_EPS`` of a
            reported anchor position, where the gradient is undefined.
    """
    _check_method(method)
    pos, sa, dt, sd = _arrays(readings, config.params)
    sa = _effective_sigma_a(sa, method)
    est = np.asarray(estimate, dtype=float)
    diff = pos - est
    dbar = np.hypot(diff[:, 0], diff[:, 1])
    if np.any(dbar < POSITION_EPS):
        raise SingularityError("estimate coincides with a reported anchor position")
    w = error_weight(dbar, dt, sa, sd)
    coef = (dbar - dt) / (w * dbar)
    g = -2.0 * np.sum(coef[:, None] * diff, axis=0)
    return float(g[0]), float(g[1])


def estimate_batch(anchors, d_tilde, sigma_a, sigma_d, init, config, method="proposed", trace=None):
    """Run the descent for ``T`` independent problems at once.

    Args:
        anchors: reported anchor positions, shape ``(T, M, 2)``.
        d_tilde: RSSI-induced distances, shape ``(T, M)``.
        sigma_a: anchor position spreads, shape ``(T, M)``.
        sigma_d: log-distance spreads, shape ``(T, M)``.
        init: starting points, shape ``(T, 2)``.
        config: :class:`EstimatorConfig`.
        method: ``"proposed"`` or ``"baseline"``.
        trace: optional list; for ``T == 1`` it receives ``(Point, cost)``
            for every evaluated iterate.

    Anchors closer than ``POSITION_EPS`` to the iterate are left out of that
    iteration's gradient.  A trial whose weights or iterate become
    non-finite is frozen and flagged in ``failed``.
    """
    _check_method(method)
    anchors = np.asarray(anchors, dtype=float)
    dt = np.asarray(d_tilde, dtype=float)
    sa = _effective_sigma_a(np.asarray(sigma_a, dtype=float), method)
    sd = np.asarray(sigma_d, dtype=float)
    x = np.array(init, dtype=float, copy=True).reshape(-1, 2)
    n = x.shape[0]
    if anchors.ndim != 3 or anchors.shape[0] != n or anchors.shape[2] != 2:
        raise ValueError("anchors must have shape (T, M, 2) matching init")
    if trace is not None and n != 1:
        raise ValueError("trace is only supported for a single problem")

    iters = np.zeros(n, dtype=int)
    converged = np.zeros(n, dtype=bool)
    failed = np.zeros(n, dtype=bool)
    active = np.arange(n)
    alpha = np.full(n, float(config.step_size))
    track_cost = config.halve_on_increase or trace is not None
    prev_cost = np.full(n, np.inf)
    rises = np.zeros(n, dtype=int)

    # runaway iterates are caught below and flagged, so silence the overflow noise
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(config.max_iters):
            if active.size == 0:
                break
            a = anchors[active]
            diff = a - x[active, None, :]
            dbar = np.hypot(diff[..., 0], diff[..., 1])
            blown = ~np.all(np.isfinite(dbar), axis=1)
            dbar = np.where(blown[:, None], 1.0, dbar)
            w = _weights(dbar, dt[active], sa[active], sd[active])
            resid = dbar - dt[active]
            usable = dbar >= POSITION_EPS
            coef = np.where(usable, resid / (w * np.where(usable, dbar, 1.0)), 0.0)
            grad = -2.0 * np.sum(coef[..., None] * diff, axis=1)
            if config.normalize_step:
                grad = grad / (2.0 * np.sum(1.0 / w, axis=1))[:, None]

            if track_cost:
                c = np.sum(resid * resid / w, axis=1)
                if trace is not None:
                    trace.append((Point(float(x[0, 0]), float(x[0, 1])), float(c[0])))
                if config.halve_on_increase:
                    up = c > prev_cost[active]
                    rises[active] = np.where(up, rises[active] + 1, 0)
                    halve = rises[active] >= _INCREASE_PATIENCE
                    alpha[active] = np.where(halve, 0.5 * alpha[active], alpha[active])
                    rises[active] = np.where(halve, 0, rises[active])
                    prev_cost[active] = c

            step = alpha[active, None] * grad
            bad = blown | ~(np.all(np.isfinite(w), axis=1) & np.all(np.isfinite(step), axis=1))
            step = np.where(bad[:, None], 0.0, step)
            x[active] -= step
            iters[active] += 1
            failed[active] = bad

            done = np.hypot(step[:, 0], step[:, 1]) < config.stop_tol
            converged[active] = done & ~bad
            active = active[~(done | bad)]

    return BatchResult(positions=x, iterations_used=iters, converged=converged, failed=failed)


def estimate_position(readings, init, config, method="proposed", keep_trace=False):
    """Estimate the blind-node position from one set of anchor readings.

    Raises:
        DomainError: fewer than three readings.
        DegenerateWeightError: a weight or the iterate became non-finite.
    """
    _check_method(method)
    if len(readings) < 3:
        raise DomainError(f"at least 3 anchor readings are required, got {len(readings)}")
    init = np.asarray(init, dtype=float)
    if init.shape != (2,) or not np.all(np.isfinite(init)):
        raise DomainError("init must be a finite 2-D point")
    pos, sa, dt, sd = _arrays(readings, config.params)
    trace = [] if keep_trace else None
    out = estimate_batch(pos[None], dt[None], sa[None], sd[None], init[None], config, method, trace)
    if out.failed[0]:
        raise DegenerateWeightError("descent produced a non-finite weight or iterate")
    px, py = out.positions[0]
    return EstimateResult(
        position=Point(float(px), float(py)),
        iterations_used=int(out.iterations_used[0]),
        converged=bool(out.converged[0]),
        trace=tuple(trace) if keep_trace else None,
    )


def estimate_position_proposed(readings: Sequence[AnchorReading], init, config, keep_trace=False):
    """Descent with Rice + log-normal residual weights."""
    return estimate_position(readings, init, config, "proposed", keep_trace)


def estimate_position_baseline(readings: Sequence[AnchorReading], init, config, keep_trace=False):
    """Descent with log-normal (RSSI-only) residual weights."""
    return estimate_position(readings, init, config, "baseline", keep_trace)
