"""Scenario documents (YAML) and result files (CSV).

A scenario document looks like::

    id: fig3
    description: free text
    world: [0, 0, 35, 35]                 # xmin, ymin, xmax, ymax (m)
    pathloss: {d0: 1.0, p0_dbm: -33.44, eta: 3.567}
    anchors:
      fixed: [[20, 25], [26, 20], ...]    # or:
      # regions:
      #   - {rect: [0, 0, 8, 8], count: 3, sigma_a: 5.0}
    blind:
      truth: [18, 17]                     # or {rect: [x0, y0, x1, y1]}
      init: [33, 2]                       # or {rect: [...]}
    noise:
      sigma_p: [1, 2, 3, 4, 5]            # scalar, or a list to sweep
      sigma_a: 3.0                        # default anchor position noise
      sigma_a_regions:                    # optional per-area overrides
        - {rect: [19, 18, 35, 35], sigma_a: 6.0}
    estimator: {step_size: 0.5, max_iters: 300, stop_tol: 1.0e-4,
                halve_on_increase: false, normalize_step: true}

Only ``anchors`` and ``blind`` are mandatory.  Missing path-loss and
iteration settings take the outdoor defaults (d0 = 1 m, p0 = -33.44 dBm,
eta = 3.567, 300 iterations); a missing step size falls back to
``DEFAULT_STEP_SIZE`` and missing noise means a noiseless scenario.
"""

import csv
import io
import math
from importlib import resources
from pathlib import Path

import yaml

from .estimator import EstimatorConfig, Point
from .exceptions import RssilocError, ScenarioError
from .pathloss import PathLossParams
from .simulator import FixedPlacement, NoiseField, RegionPlacement, Rect, Scenario

__all__ = [
    "DEFAULT_STEP_SIZE",
    "RESULTS_HEADER",
    "HISTOGRAM_HEADER",
    "bundled_scenarios",
    "resolve_scenario_path",
    "load_scenario",
    "loads_scenario",
    "dump_scenario",
    "results_rows",
    "write_results_csv",
    "write_histogram",
    "histogram_filename",
]

DEFAULT_STEP_SIZE = 0.1  # m^2
RESULTS_HEADER = [
    "scenario_id",
    "algorithm",
    "sigma_p_dbm",
    "n_trials",
    "rmse_m",
    "mean_error_m",
    "converged_frac",
    "crlb_m",
    "seed",
]
HISTOGRAM_HEADER = ["bin_left_m", "count"]

_TOP_KEYS = {"id", "description", "world", "pathloss", "anchors", "blind", "noise", "estimator"}


# --------------------------------------------------------------------------
# locating fields in the source text


def _node_at(root, path):
    node = root
    for key in path:
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                if k.value == key:
                    node = v
                    break
            else:
                return node
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
        else:
            return node
    return node


class _Doc:
    def __init__(self, data, root, source):
        self.data = data
        self.root = root
        self.source = source

    def fail(self, path, message):
        line = None
        if self.root is not None:
            line = _node_at(self.root, path).start_mark.line + 1
        dotted = ".".join(str(p) if not isinstance(p, int) else f"[{p}]" for p in path)
        dotted = dotted.replace(".[", "[")
        raise ScenarioError(message, field=dotted or None, line=line, source=self.source)


def _get(doc, mapping, path, key, default=None, required=False):
    if not isinstance(mapping, dict):
        doc.fail(path, "expected a mapping")
    if key not in mapping or mapping[key] is None:
        if required:
            doc.fail(path, f"missing required field '{key}'")
        return default
    return mapping[key]


def _number(doc, path, value, *, positive=False, nonneg=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        doc.fail(path, f"expected a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        doc.fail(path, "must be finite")
    if positive and not value > 0:
        doc.fail(path, f"must be > 0, got {value:g}")
    if nonneg and not value >= 0:
        doc.fail(path, f"must be >= 0, got {value:g}")
    return value


def _point(doc, path, value):
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        doc.fail(path, "expected a point [x, y]")
    return Point(*(_number(doc, path + [i], v) for i, v in enumerate(value)))


def _rect(doc, path, value):
    if not isinstance(value, (list, tuple)) or len(value) != 4:
        doc.fail(path, "expected a rectangle [xmin, ymin, xmax, ymax]")
    x0, y0, x1, y1 = (_number(doc, path + [i], v) for i, v in enumerate(value))
    if x1 < x0 or y1 < y0:
        doc.fail(path, "rectangle must have xmax >= xmin and ymax >= ymin")
    return Rect(x0, y0, x1, y1)


def _point_or_rect(doc, path, value):
    if isinstance(value, dict):
        _check_keys(doc, path, value, {"rect"})
        return _rect(doc, path + ["rect"], _get(doc, value, path, "rect", required=True))
    return _point(doc, path, value)


def _check_keys(doc, path, mapping, allowed):
    if not isinstance(mapping, dict):
        doc.fail(path, "expected a mapping")
    for key in mapping:
        if key not in allowed:
            doc.fail(path + [key], f"unknown field '{key}'")


# --------------------------------------------------------------------------
# document -> Scenario


def _parse(doc):
    data = doc.data
    if not isinstance(data, dict):
        doc.fail([], "a scenario document must be a mapping")
    _check_keys(doc, [], data, _TOP_KEYS)

    sid = str(_get(doc, data, [], "id", "scenario"))
    description = str(_get(doc, data, [], "description", ""))
    world = _rect(doc, ["world"], _get(doc, data, [], "world", [0.0, 0.0, 35.0, 35.0]))

    pl = _get(doc, data, [], "pathloss", {})
    _check_keys(doc, ["pathloss"], pl, {"d0", "p0_dbm", "eta"})
    params = PathLossParams(
        d0=_number(doc, ["pathloss", "d0"], _get(doc, pl, ["pathloss"], "d0", 1.0), positive=True),
        p0_dbm=_number(doc, ["pathloss", "p0_dbm"], _get(doc, pl, ["pathloss"], "p0_dbm", -33.44)),
        eta=_number(doc, ["pathloss", "eta"], _get(doc, pl, ["pathloss"], "eta", 3.567), positive=True),
    )

    noise_doc = _get(doc, data, [], "noise", {})
    _check_keys(doc, ["noise"], noise_doc, {"sigma_p", "sigma_a", "sigma_a_regions"})
    sp_raw = _get(doc, noise_doc, ["noise"], "sigma_p", 0.0)
    if isinstance(sp_raw, list):
        if not sp_raw:
            doc.fail(["noise", "sigma_p"], "sweep list must not be empty")
        sweep = tuple(_number(doc, ["noise", "sigma_p", i], v, nonneg=True) for i, v in enumerate(sp_raw))
        sigma_p = sweep[0]
    else:
        sweep = None
        sigma_p = _number(doc, ["noise", "sigma_p"], sp_raw, nonneg=True)
    sigma_a = _number(doc, ["noise", "sigma_a"], _get(doc, noise_doc, ["noise"], "sigma_a", 0.0), nonneg=True)
    noise_regions = []
    for i, entry in enumerate(_get(doc, noise_doc, ["noise"], "sigma_a_regions", []) or []):
        path = ["noise", "sigma_a_regions", i]
        _check_keys(doc, path, entry, {"rect", "sigma_a"})
        rect = _rect(doc, path + ["rect"], _get(doc, entry, path, "rect", required=True))
        s = _number(doc, path + ["sigma_a"], _get(doc, entry, path, "sigma_a", required=True), nonneg=True)
        noise_regions.append((rect, s))

    anchors_doc = _get(doc, data, [], "anchors", required=True)
    _check_keys(doc, ["anchors"], anchors_doc, {"fixed", "regions"})
    if ("fixed" in anchors_doc) == ("regions" in anchors_doc):
        doc.fail(["anchors"], "give exactly one of 'fixed' or 'regions'")
    if "fixed" in anchors_doc:
        pts = anchors_doc["fixed"]
        if not isinstance(pts, list):
            doc.fail(["anchors", "fixed"], "expected a list of points")
        placement = FixedPlacement(tuple(_point(doc, ["anchors", "fixed", i], p) for i, p in enumerate(pts)))
    else:
        regs = anchors_doc["regions"]
        if not isinstance(regs, list) or not regs:
            doc.fail(["anchors", "regions"], "expected a non-empty list of regions")
        rects, counts = [], []
        for i, entry in enumerate(regs):
            path = ["anchors", "regions", i]
            _check_keys(doc, path, entry, {"rect", "count", "sigma_a"})
            rect = _rect(doc, path + ["rect"], _get(doc, entry, path, "rect", required=True))
            count = _get(doc, entry, path, "count", required=True)
            if isinstance(count, bool) or not isinstance(count, int) or count < 0:
                doc.fail(path + ["count"], f"must be a non-negative integer, got {count!r}")
            if not world.contains_rect(rect):
                doc.fail(path + ["rect"], "region lies outside the world box")
            if "sigma_a" in entry:
                s = _number(doc, path + ["sigma_a"], entry["sigma_a"], nonneg=True)
                noise_regions.append((rect, s))
            rects.append(rect)
            counts.append(count)
        placement = RegionPlacement(tuple(rects), tuple(counts))
    if placement.count < 3:
        doc.fail(["anchors"], f"at least 3 anchors are required, got {placement.count}")

    blind = _get(doc, data, [], "blind", required=True)
    _check_keys(doc, ["blind"], blind, {"truth", "init"})
    truth = _point_or_rect(doc, ["blind", "truth"], _get(doc, blind, ["blind"], "truth", required=True))
    init = _point_or_rect(doc, ["blind", "init"], _get(doc, blind, ["blind"], "init", required=True))
    for name, v in (("truth", truth), ("init", init)):
        inside = world.contains_rect(v) if isinstance(v, Rect) else world.contains(v)
        if not inside:
            doc.fail(["blind", name], "lies outside the world box")

    est = _get(doc, data, [], "estimator", {})
    _check_keys(doc, ["estimator"], est, {"step_size", "max_iters", "stop_tol", "halve_on_increase", "normalize_step"})
    max_iters = _get(doc, est, ["estimator"], "max_iters", 300)
    if isinstance(max_iters, bool) or not isinstance(max_iters, int) or max_iters < 1:
        doc.fail(["estimator", "max_iters"], f"must be a positive integer, got {max_iters!r}")
    halve = _get(doc, est, ["estimator"], "halve_on_increase", False)
    if not isinstance(halve, bool):
        doc.fail(["estimator", "halve_on_increase"], "must be true or false")
    normalize = _get(doc, est, ["estimator"], "normalize_step", False)
    if not isinstance(normalize, bool):
        doc.fail(["estimator", "normalize_step"], "must be true or false")
    config = EstimatorConfig(
        step_size=_number(
            doc, ["estimator", "step_size"], _get(doc, est, ["estimator"], "step_size", DEFAULT_STEP_SIZE), positive=True
        ),
        max_iters=max_iters,
        stop_tol=_number(doc, ["estimator", "stop_tol"], _get(doc, est, ["estimator"], "stop_tol", 1e-4), nonneg=True),
        params=params,
        halve_on_increase=halve,
        normalize_step=normalize,
    )

    try:
        return Scenario(
            anchors=placement,
            blind_truth=truth,
            init=init,
            estimator=config,
            noise=NoiseField(sigma_p=sigma_p, sigma_a=sigma_a, regions=tuple(noise_regions), sigma_p_sweep=sweep),
            world=world,
            id=sid,
            description=description,
        )
    except RssilocError as exc:
        doc.fail([], str(exc))


def loads_scenario(text, source=None):
    """Parse a scenario from YAML text."""
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        line = mark.line + 1 if mark is not None else None
        raise ScenarioError(f"YAML syntax error: {exc.problem}", line=line, source=source) from exc
    except yaml.YAMLError as exc:
        raise ScenarioError(f"YAML error: {exc}", source=source) from exc
    return _parse(_Doc(data, root, source))


def bundled_scenarios():
    """Names of the scenario documents shipped with the package."""
    root = resources.files("rssiloc") / "scenarios"
    return sorted(p.name[: -len(".yaml")] for p in root.iterdir() if p.name.endswith(".yaml"))


def resolve_scenario_path(name_or_path):
    """A filesystem path, or the bundled document for a bare name like ``fig3``."""
    p = Path(name_or_path)
    if p.exists():
        return p
    candidate = resources.files("rssiloc") / "scenarios" / f"{name_or_path}.yaml"
    if candidate.is_file():
        return Path(str(candidate))
    raise ScenarioError(f"no such scenario file or bundled scenario: {name_or_path}")


def load_scenario(path):
    """Load and validate a scenario document (path or bundled name)."""
    p = resolve_scenario_path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario: {exc}", source=str(p)) from exc
    return loads_scenario(text, source=str(p))


# --------------------------------------------------------------------------
# Scenario -> document


def _pt(p):
    return [float(p[0]), float(p[1])]


def _pt_or_rect(v):
    return {"rect": v.as_list()} if isinstance(v, Rect) else _pt(v)


def dump_scenario(scenario):
    """Serialise a scenario to YAML; ``loads_scenario`` restores an equal object."""
    if isinstance(scenario.anchors, FixedPlacement):
        anchors = {"fixed": [_pt(p) for p in scenario.anchors.points]}
    else:
        anchors = {
            "regions": [
                {"rect": r.as_list(), "count": int(c)} for r, c in zip(scenario.anchors.regions, scenario.anchors.counts)
            ]
        }
    noise = scenario.noise
    sp = list(noise.sigma_p_sweep) if noise.sigma_p_sweep is not None else float(noise.sigma_p)
    if noise.sigma_p_sweep is not None and noise.sigma_p != noise.sigma_p_sweep[0]:
        raise ValueError("a swept scenario must use the first sweep value as sigma_p")
    cfg = scenario.estimator
    data = {
        "id": scenario.id,
        "description": scenario.description,
        "world": scenario.world.as_list(),
        "pathloss": {"d0": cfg.params.d0, "p0_dbm": cfg.params.p0_dbm, "eta": cfg.params.eta},
        "anchors": anchors,
        "blind": {"truth": _pt_or_rect(scenario.blind_truth), "init": _pt_or_rect(scenario.init)},
        "noise": {
            "sigma_p": sp,
            "sigma_a": float(noise.sigma_a),
            "sigma_a_regions": [{"rect": r.as_list(), "sigma_a": float(s)} for r, s in noise.regions],
        },
        "estimator": {
            "step_size": float(cfg.step_size),
            "max_iters": int(cfg.max_iters),
            "stop_tol": float(cfg.stop_tol),
            "halve_on_increase": bool(cfg.halve_on_increase),
            "normalize_step": bool(cfg.normalize_step),
        },
    }
    return yaml.safe_dump(data, sort_keys=False, default_flow_style=None)


# --------------------------------------------------------------------------
# results


def _fmt(v):
    if v is None:
        return ""
    v = float(v)
    if math.isnan(v):
        return "nan"
    return f"{v:.6g}"


def results_rows(scenario_id, table, seed):
    """CSV rows (lists of strings) for a ``{sigma_p: SummaryStats}`` table."""
    rows = []
    for sp in table:
        stats = table[sp]
        for alg, a in stats.algorithms.items():
            rows.append(
                [
                    scenario_id,
                    alg,
                    _fmt(sp),
                    str(stats.n_trials),
                    _fmt(a.rmse),
                    _fmt(a.mean_error),
                    _fmt(a.converged_frac),
                    _fmt(stats.crlb),
                    str(int(seed)),
                ]
            )
    return rows


def _write_csv(path_or_file, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    if hasattr(path_or_file, "write"):
        path_or_file.write(buf.getvalue())
    else:
        Path(path_or_file).write_text(buf.getvalue(), encoding="utf-8", newline="")


def write_results_csv(path_or_file, scenario_id, table, seed):
    _write_csv(path_or_file, RESULTS_HEADER, results_rows(scenario_id, table, seed))


def histogram_filename(scenario_id, algorithm, sigma_p):
    return f"{scenario_id}_{algorithm}_sp{_fmt(sigma_p)}.csv"


def write_histogram(path, edges, counts):
    rows = [[_fmt(left), str(int(c))] for left, c in zip(edges[:-1], counts)]
    _write_csv(path, HISTOGRAM_HEADER, rows)
