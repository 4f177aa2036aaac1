import io
import textwrap
from pathlib import Path

import numpy as np
import pytest

from rssiloc.estimator import Point
from rssiloc.exceptions import ScenarioError
from rssiloc.files import (
    DEFAULT_STEP_SIZE,
    HISTOGRAM_HEADER,
    RESULTS_HEADER,
    bundled_scenarios,
    dump_scenario,
    histogram_filename,
    load_scenario,
    loads_scenario,
    write_histogram,
    write_results_csv,
)
from rssiloc.simulator import AlgorithmStats, FixedPlacement, RegionPlacement, Rect, SummaryStats

GOLDEN = Path(__file__).parent / "golden"

MINIMAL = """\
anchors:
  fixed: [[0, 0], [10, 0], [0, 10]]
blind:
  truth: [3, 4]
  init: [30, 30]
"""


def test_minimal_document_gets_defaults():
    sc = loads_scenario(MINIMAL)
    assert sc.params.d0 == 1.0 and sc.params.p0_dbm == -33.44 and sc.params.eta == 3.567
    assert sc.estimator.max_iters == 300
    assert sc.estimator.step_size == DEFAULT_STEP_SIZE
    assert sc.noise.sigma_p == 0.0 and sc.noise.sigma_a == 0.0
    assert sc.world == Rect(0, 0, 35, 35)
    assert sc.blind_truth == Point(3.0, 4.0)
    assert isinstance(sc.anchors, FixedPlacement)


def test_negative_eta_names_the_field_and_line():
    text = MINIMAL + "pathloss:\n  eta: -1\n"
    with pytest.raises(ScenarioError) as info:
        loads_scenario(text, source="bad.yaml")
    err = info.value
    assert err.field == "pathloss.eta"
    assert err.line == 7
    assert "eta" in str(err) and "bad.yaml" in str(err)


@pytest.mark.parametrize(
    "snippet,field",
    [
        ("anchors:\n  fixed: [[0, 0], [1, 1]]\nblind: {truth: [3, 4], init: [9, 9]}\n", "anchors"),
        (MINIMAL + "noise: {sigma_p: -2}\n", "noise.sigma_p"),
        (MINIMAL + "noise: {sigma_p: [1, two]}\n", "noise.sigma_p[1]"),
        (MINIMAL + "estimator: {max_iters: 0}\n", "estimator.max_iters"),
        (MINIMAL + "estimator: {stepsize: 1}\n", "estimator.stepsize"),
        (MINIMAL + "colour: blue\n", "colour"),
        (MINIMAL.replace("[30, 30]", "[40, 1]"), "blind.init"),
        ("blind: {truth: [1, 1], init: [2, 2]}\n", None),
    ],
)
def test_validation_errors(snippet, field):
    with pytest.raises(ScenarioError) as info:
        loads_scenario(snippet)
    if field is not None:
        assert info.value.field == field
    assert info.value.line is not None


def test_syntax_error_has_line():
    with pytest.raises(ScenarioError) as info:
        loads_scenario("anchors:\n  fixed: [[0, 0]\nblind: x\n")
    assert info.value.line is not None


def test_region_document():
    text = textwrap.dedent(
        """\
        anchors:
          regions:
            - {rect: [0, 0, 8, 8], count: 3, sigma_a: 5}
            - {rect: [27, 0, 35, 8], count: 3}
        blind:
          truth: {rect: [13, 13, 22, 22]}
          init: {rect: [12, 30, 23, 35]}
        noise: {sigma_p: [1, 2], sigma_a: 1}
        """
    )
    sc = loads_scenario(text)
    assert isinstance(sc.anchors, RegionPlacement)
    assert sc.anchors.counts == (3, 3)
    assert sc.noise.sigma_p_values == (1.0, 2.0)
    assert sc.noise.sigma_a_at((4, 4)) == 5.0
    assert sc.noise.sigma_a_at((30, 4)) == 1.0
    assert not sc.is_fixed


@pytest.mark.parametrize("name", bundled_scenarios())
def test_bundled_scenarios_roundtrip(name):
    sc = load_scenario(name)
    assert loads_scenario(dump_scenario(sc)) == sc
    assert sc.id == name
    assert sc.n_anchors == 6


def test_bundled_library_contents():
    names = bundled_scenarios()
    assert names == ["fig1", "fig2", "fig3", "fig4", "fig5", "fig6", "fig7", "fig8", "ring"]


def test_load_by_path(tmp_path):
    p = tmp_path / "s.yaml"
    p.write_text(MINIMAL)
    assert load_scenario(p) == loads_scenario(MINIMAL)
    with pytest.raises(ScenarioError):
        load_scenario(tmp_path / "missing.yaml")


def _stats():
    edges = np.arange(0.0, 20.5, 0.5)
    counts = np.zeros(40, dtype=int)
    counts[[2, 5, 39]] = [3, 1, 1]
    algs = {
        "proposed": AlgorithmStats(1.23456789, 1.0, 1.0, 0, edges, counts),
        "baseline": AlgorithmStats(2.0, 1.5000004, 0.8, 1, edges, counts),
    }
    return {
        1.0: SummaryStats(sigma_p=1.0, n_trials=5, seed=42, algorithms=algs, crlb=0.987654321),
        2.5: SummaryStats(sigma_p=2.5, n_trials=5, seed=42, algorithms=algs, crlb=None),
    }


def test_results_csv_matches_golden_file():
    buf = io.StringIO()
    write_results_csv(buf, "demo", _stats(), 42)
    assert buf.getvalue() == (GOLDEN / "results.csv").read_text()
    assert buf.getvalue().splitlines()[0] == ",".join(RESULTS_HEADER)


def test_histogram_matches_golden_file(tmp_path):
    s = _stats()[1.0].algorithms["proposed"]
    path = tmp_path / histogram_filename("demo", "proposed", 1.0)
    write_histogram(path, s.hist_edges, s.hist_counts)
    assert path.name == "demo_proposed_sp1.csv"
    assert path.read_text() == (GOLDEN / "histogram.csv").read_text()
    assert path.read_text().splitlines()[0] == ",".join(HISTOGRAM_HEADER)
