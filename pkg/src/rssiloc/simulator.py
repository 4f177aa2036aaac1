"""Scenario description, noise sampling and Monte-Carlo evaluation.

Randomness is organised so that results never depend on execution order:
every (cell, trial, purpose) triple gets its own generator, derived by
hashing ``(master_seed, cell, trial_index, tag)`` through
:class:`numpy.random.SeedSequence`.  Trials are solved in fixed-size chunks,
which keeps output bit-identical whether chunks run serially or in a process
pool.
"""

import hashlib
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .crlb import NoiseSpec, ParameterVector, crlb_rmse_bound, fim
from .estimator import AnchorReading, EstimatorConfig, Point, estimate_batch
from .exceptions import DomainError
from .pathloss import invert_rssi_to_distance, mean_rssi_dbm, sigma_d

__all__ = [
    "Rect",
    "FixedPlacement",
    "RegionPlacement",
    "NoiseField",
    "Scenario",
    "Instance",
    "TrialResult",
    "AlgorithmStats",
    "SummaryStats",
    "HIST_BIN_WIDTH",
    "HIST_MAX",
    "sample_anchor_reading",
    "instantiate",
    "run_trial",
    "run_monte_carlo",
    "sweep",
    "scenario_crlb",
    "readings_checksum",
]

HIST_BIN_WIDTH = 0.5
HIST_MAX = 20.0
ALGORITHMS = ("proposed", "baseline")
# trials solved per vectorised batch; fixed so chunking never changes results
CHUNK_SIZE = 250

_TAG_PLACEMENT, _TAG_BLIND, _TAG_INIT, _TAG_NOISE = range(4)


@dataclass(frozen=True)
class Rect:
    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def __post_init__(self):
        if not (self.xmax >= self.xmin and self.ymax >= self.ymin):
            raise DomainError(f"degenerate rectangle {self}")

    def contains(self, p, tol=1e-12):
        return (
            self.xmin - tol <= p[0] <= self.xmax + tol
            and self.ymin - tol <= p[1] <= self.ymax + tol
        )

    def contains_rect(self, other):
        return self.contains((other.xmin, other.ymin)) and self.contains((other.xmax, other.ymax))

    def sample(self, rng, n=None):
        size = None if n is None else (n,)
        x = rng.uniform(self.xmin, self.xmax, size)
        y = rng.uniform(self.ymin, self.ymax, size)
        return np.stack([x, y], axis=-1)

    def as_list(self):
        return [self.xmin, self.ymin, self.xmax, self.ymax]


@dataclass(frozen=True)
class FixedPlacement:
    points: Tuple[Point, ...]

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(Point(float(p[0]), float(p[1])) for p in self.points))

    @property
    def count(self):
        return len(self.points)


@dataclass(frozen=True)
class RegionPlacement:
    regions: Tuple[Rect, ...]
    counts: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "regions", tuple(self.regions))
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
        if len(self.regions) != len(self.counts):
            raise DomainError("one anchor count is needed per region")
        if any(c < 0 for c in self.counts):
            raise DomainError("anchor counts must be non-negative")

    @property
    def count(self):
        return sum(self.counts)


Placement = Union[FixedPlacement, RegionPlacement]


@dataclass(frozen=True)
class NoiseField:
    """Noise levels for a scenario.

    ``sigma_a`` applies to every anchor unless its true position falls inside
    one of ``regions`` (checked in order), which carries its own ``sigma_a``.
    ``sigma_p_sweep``, when present, lists the RSSI noise levels to evaluate;
    ``sigma_p`` is the single level used otherwise.
    """

    sigma_p: float = 0.0
    sigma_a: float = 0.0
    regions: Tuple[Tuple[Rect, float], ...] = ()
    sigma_p_sweep: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "regions", tuple((r, float(s)) for r, s in self.regions))
        if self.sigma_p_sweep is not None:
            object.__setattr__(self, "sigma_p_sweep", tuple(float(v) for v in self.sigma_p_sweep))
            if len(self.sigma_p_sweep) == 0:
                raise DomainError("sigma_p sweep must not be empty")
        values = [self.sigma_p, self.sigma_a, *(s for _, s in self.regions), *(self.sigma_p_sweep or ())]
        if any(not (v >= 0 and math.isfinite(v)) for v in values):
            raise DomainError("noise standard deviations must be finite and >= 0")

    def sigma_a_at(self, p):
        for rect, s in self.regions:
            if rect.contains(p):
                return s
        return self.sigma_a

    @property
    def sigma_p_values(self):
        return self.sigma_p_sweep if self.sigma_p_sweep is not None else (self.sigma_p,)


@dataclass(frozen=True)
class Scenario:
    anchors: Placement
    blind_truth: Union[Point, Rect]
    init: Union[Point, Rect]
    estimator: EstimatorConfig
    noise: NoiseField = field(default_factory=NoiseField)
    world: Rect = Rect(0.0, 0.0, 35.0, 35.0)
    id: str = "scenario"
    description: str = ""

    def __post_init__(self):
        for name in ("blind_truth", "init"):
            v = getattr(self, name)
            if not isinstance(v, Rect):
                object.__setattr__(self, name, Point(float(v[0]), float(v[1])))
        if self.anchors.count < 3:
            raise DomainError(f"at least 3 anchors are required, got {self.anchors.count}")
        if isinstance(self.anchors, RegionPlacement):
            for r in self.anchors.regions:
                if not self.world.contains_rect(r):
                    raise DomainError(f"anchor region {r} lies outside the world box")
        for name in ("blind_truth", "init"):
            v = getattr(self, name)
            inside = self.world.contains_rect(v) if isinstance(v, Rect) else self.world.contains(v)
            if not inside:
                raise DomainError(f"{name} lies outside the world box")

    @property
    def params(self):
        return self.estimator.params

    @property
    def n_anchors(self):
        return self.anchors.count

    @property
    def is_fixed(self):
        return isinstance(self.anchors, FixedPlacement) and not isinstance(self.blind_truth, Rect)

    def with_sigma_p(self, sigma_p):
        return replace(self, noise=replace(self.noise, sigma_p=float(sigma_p), sigma_p_sweep=None))


@dataclass(frozen=True)
class Instance:
    """One sampled trial: true layout, starting point and what the blind node sees."""

    anchors_true: np.ndarray  # (M, 2)
    blind_true: Point
    init: Point
    readings: Tuple[AnchorReading, ...]

    @property
    def sigma_a(self):
        return np.array([r.sigma_a for r in self.readings])


@dataclass(frozen=True)
class TrialResult:
    trial_index: int
    seed: int
    truth: Point
    anchors_true: np.ndarray  # (M, 2)
    init: Point
    readings: Tuple[AnchorReading, ...]
    estimates: dict  # algorithm -> Point
    errors: dict  # algorithm -> float (m)
    iterations: dict  # algorithm -> int
    converged: dict  # algorithm -> bool
    failed: dict  # algorithm -> bool


@dataclass(frozen=True)
class AlgorithmStats:
    rmse: float
    mean_error: float
    converged_frac: float
    n_failed: int
    hist_edges: np.ndarray
    hist_counts: np.ndarray


@dataclass(frozen=True)
class SummaryStats:
    sigma_p: float
    n_trials: int
    seed: int
    algorithms: dict  # algorithm -> AlgorithmStats
    crlb: Optional[float]


def _rng(master_seed, cell, trial_index, tag):
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(cell), int(trial_index), tag))
    return np.random.default_rng(ss)


def sample_anchor_reading(true_pos, sigma_a, blind_true, sigma_p, params, rng):
    """Perturb one anchor's position and RSSI.

    Draws ``n_x, n_y ~ N(0, sigma_a)`` for the reported position, then
    ``n_p ~ N(0, sigma_p)`` dB on top of the mean path-loss RSSI.
    """
    true_pos = np.asarray(true_pos, dtype=float)
    d = float(np.hypot(*(true_pos - np.asarray(blind_true, dtype=float))))
    if not d > 0:
        raise DomainError("anchor coincides with the blind node")
    nx, ny = rng.normal(0.0, 1.0, 2) * sigma_a
    n_p = rng.normal(0.0, 1.0) * sigma_p
    return AnchorReading(
        pos=Point(true_pos[0] + nx, true_pos[1] + ny),
        sigma_a=float(sigma_a),
        rssi_dbm=mean_rssi_dbm(d, params) + n_p,
        sigma_p=float(sigma_p),
    )


def _draw_point(spec, rng):
    if isinstance(spec, Rect):
        x, y = spec.sample(rng)
        return Point(float(x), float(y))
    return spec


def _anchor_layout(scenario, rng):
    placement = scenario.anchors
    if isinstance(placement, FixedPlacement):
        return np.array(placement.points, dtype=float)
    parts = [r.sample(rng, c) for r, c in zip(placement.regions, placement.counts) if c > 0]
    return np.concatenate(parts, axis=0)


def instantiate(scenario, trial_index, master_seed, cell=0):
    """Sample the true layout, starting point and readings for one trial.

    Deterministic in ``(scenario, trial_index, master_seed, cell)``.  Uses
    ``scenario.noise.sigma_p`` for the RSSI noise.
    """
    anchors = _anchor_layout(scenario, _rng(master_seed, cell, trial_index, _TAG_PLACEMENT))
    blind = _draw_point(scenario.blind_truth, _rng(master_seed, cell, trial_index, _TAG_BLIND))
    init = _draw_point(scenario.init, _rng(master_seed, cell, trial_index, _TAG_INIT))
    noise_rng = _rng(master_seed, cell, trial_index, _TAG_NOISE)
    sp = scenario.noise.sigma_p
    readings = tuple(
        sample_anchor_reading(a, scenario.noise.sigma_a_at(a), blind, sp, scenario.params, noise_rng)
        for a in anchors
    )
    return Instance(anchors_true=anchors, blind_true=blind, init=init, readings=readings)


def readings_checksum(readings):
    """SHA-256 over the exact bytes of a tuple of readings."""
    arr = np.array([[r.pos.x, r.pos.y, r.sigma_a, r.rssi_dbm, r.sigma_p] for r in readings], dtype="<f8")
    return hashlib.sha256(arr.tobytes()).hexdigest()


def _solve_chunk(scenario, trial_indices, master_seed, cell):
    instances = [instantiate(scenario, t, master_seed, cell) for t in trial_indices]
    params = scenario.params
    anchors = np.array([[r.pos for r in inst.readings] for inst in instances], dtype=float)
    rssi = np.array([[r.rssi_dbm for r in inst.readings] for inst in instances])
    sa = np.array([[r.sigma_a for r in inst.readings] for inst in instances])
    sp = np.array([[r.sigma_p for r in inst.readings] for inst in instances])
    dt = invert_rssi_to_distance(rssi, params)
    sd = sigma_d(sp, params.eta)
    init = np.array([inst.init for inst in instances], dtype=float)
    truth = np.array([inst.blind_true for inst in instances], dtype=float)

    out = {}
    for alg in ALGORITHMS:
        out[alg] = estimate_batch(anchors, dt, sa, sd, init, scenario.estimator, alg)

    results = []
    for k, (t, inst) in enumerate(zip(trial_indices, instances)):
        est, err, its, conv, fail = {}, {}, {}, {}, {}
        for alg in ALGORITHMS:
            r = out[alg]
            p = r.positions[k]
            est[alg] = Point(float(p[0]), float(p[1]))
            err[alg] = float(np.hypot(*(p - truth[k]))) if not r.failed[k] else math.inf
            its[alg] = int(r.iterations_used[k])
            conv[alg] = bool(r.converged[k])
            fail[alg] = bool(r.failed[k])
        results.append(
            TrialResult(
                trial_index=int(t),
                seed=int(master_seed),
                truth=inst.blind_true,
                anchors_true=inst.anchors_true,
                init=inst.init,
                readings=inst.readings,
                estimates=est,
                errors=err,
                iterations=its,
                converged=conv,
                failed=fail,
            )
        )
    return results


def run_trial(scenario, trial_index, master_seed, cell=0):
    """Run both estimators on one sampled trial from the same starting point."""
    return _solve_chunk(scenario, [trial_index], master_seed, cell)[0]


def _chunk_job(args):
    return _solve_chunk(*args)


def run_trials(scenario, n_trials, master_seed, cell=0, workers=1):
    """All trial results in trial order."""
    if n_trials < 1:
        raise DomainError("n_trials must be >= 1")
    jobs = [
        (scenario, list(range(start, min(start + CHUNK_SIZE, n_trials))), master_seed, cell)
        for start in range(0, n_trials, CHUNK_SIZE)
    ]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_chunk_job, jobs))
    else:
        chunks = [_chunk_job(j) for j in jobs]
    return [r for chunk in chunks for r in chunk]


def histogram(errors):
    """Counts in 0.5 m bins on [0, 20) m; larger (or failed) errors land in the last bin."""
    edges = np.arange(0.0, HIST_MAX + HIST_BIN_WIDTH / 2, HIST_BIN_WIDTH)
    nbins = len(edges) - 1
    idx = np.floor(np.asarray(errors, dtype=float) / HIST_BIN_WIDTH)
    idx = np.where(np.isfinite(idx), idx, nbins - 1)
    idx = np.clip(idx, 0, nbins - 1).astype(int)
    return edges, np.bincount(idx, minlength=nbins)


def _noise_spec(scenario, anchors_true, sigma_p):
    sa = np.array([scenario.noise.sigma_a_at(a) for a in anchors_true])
    return NoiseSpec(sigma_a=sa, sigma_p=np.full(len(sa), float(sigma_p)), params=scenario.params)


def layout_crlb(anchors_true, blind, sigma_a, sigma_p, params):
    """RMSE bound for one true layout, or ``None`` when some sigma is zero."""
    sa = np.broadcast_to(np.asarray(sigma_a, dtype=float), (len(anchors_true),))
    if sigma_p <= 0 or np.any(sa <= 0):
        return None
    theta = ParameterVector(blind=blind, anchors_true=anchors_true)
    return crlb_rmse_bound(fim(theta, NoiseSpec(sigma_a=sa, sigma_p=np.full(len(sa), sigma_p), params=params)))


def scenario_crlb(scenario, sigma_p=None, n_layouts=None, master_seed=1, cell=0):
    """RMSE bound for a scenario.

    Fixed layouts give the bound at the true geometry.  Random layouts give
    the mean of the per-trial bounds over ``n_layouts`` sampled geometries.
    Returns ``None`` when any noise level is zero.
    """
    sp = scenario.noise.sigma_p if sigma_p is None else float(sigma_p)
    if scenario.is_fixed:
        anchors = np.array(scenario.anchors.points, dtype=float)
        sa = [scenario.noise.sigma_a_at(a) for a in anchors]
        return layout_crlb(anchors, scenario.blind_truth, sa, sp, scenario.params)
    if n_layouts is None:
        raise DomainError("random layouts need n_layouts to average the bound")
    values = []
    for t in range(n_layouts):
        anchors = _anchor_layout(scenario, _rng(master_seed, cell, t, _TAG_PLACEMENT))
        blind = _draw_point(scenario.blind_truth, _rng(master_seed, cell, t, _TAG_BLIND))
        sa = [scenario.noise.sigma_a_at(a) for a in anchors]
        v = layout_crlb(anchors, blind, sa, sp, scenario.params)
        if v is None:
            return None
        values.append(v)
    return float(np.mean(values))


def summarize(trials, sigma_p, master_seed, crlb_value):
    stats = {}
    for alg in ALGORITHMS:
        errs = np.array([t.errors[alg] for t in trials])
        failed = np.array([t.failed[alg] for t in trials])
        ok = errs[~failed]
        rmse = float(np.sqrt(np.mean(ok * ok))) if ok.size else math.nan
        mean_err = float(np.mean(ok)) if ok.size else math.nan
        edges, counts = histogram(errs)
        stats[alg] = AlgorithmStats(
            rmse=rmse,
            mean_error=mean_err,
            converged_frac=float(np.mean([t.converged[alg] for t in trials])),
            n_failed=int(failed.sum()),
            hist_edges=edges,
            hist_counts=counts,
        )
    return SummaryStats(
        sigma_p=float(sigma_p), n_trials=len(trials), seed=int(master_seed), algorithms=stats, crlb=crlb_value
    )


def run_monte_carlo(scenario, n_trials, master_seed, cell=0, workers=1):
    """Paired Monte-Carlo comparison of both estimators at ``scenario.noise.sigma_p``.

    RMSE is taken over every trial that did not fail numerically; failures
    are counted in ``n_failed``.  The bound is computed at the true layout
    for fixed scenarios and averaged over the sampled layouts otherwise.
    """
    trials = run_trials(scenario, n_trials, master_seed, cell, workers)
    if scenario.is_fixed:
        bound = scenario_crlb(scenario)
    else:
        bounds = [
            layout_crlb(
                t.anchors_true, t.truth, [r.sigma_a for r in t.readings], scenario.noise.sigma_p, scenario.params
            )
            for t in trials
        ]
        bound = None if any(b is None for b in bounds) else float(np.mean(bounds))
    return summarize(trials, scenario.noise.sigma_p, master_seed, bound)


def sweep(scenario, sigma_p_values: Sequence[float], n_trials, master_seed, workers=1):
    """One :class:`SummaryStats` per RSSI noise level, keyed by ``sigma_p``.

    Cell ``k`` draws from its own random streams, so a single-value sweep is
    identical to :func:`run_monte_carlo`.
    """
    values = [float(v) for v in sigma_p_values]
    if not values:
        raise DomainError("sigma_p_values must not be empty")
    table = {}
    for cell, sp in enumerate(values):
        table[sp] = run_monte_carlo(scenario.with_sigma_p(sp), n_trials, master_seed, cell, workers)
    return table
