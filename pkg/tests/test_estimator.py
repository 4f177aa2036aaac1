import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from rssiloc.estimator import (
    WEIGHT_FLOOR,
    AnchorReading,
    EstimatorConfig,
    Point,
    cost,
    error_weight,
    estimate_batch,
    estimate_position,
    estimate_position_baseline,
    estimate_position_proposed,
    gradient,
)
from rssiloc.exceptions import DegenerateWeightError, DomainError, SingularityError
from rssiloc.pathloss import PathLossParams, lognormal_distance_variance, mean_rssi_dbm, sigma_d
from rssiloc.specfun import rice_variance

PARAMS = PathLossParams()
ANCHORS = [(0.0, 0.0), (10.0, 0.0), (0.0, 10.0)]
TRUTH = (3.0, 4.0)


def exact_readings(anchors=ANCHORS, truth=TRUTH, sigma_a=0.0, sigma_p=0.0):
    return [
        AnchorReading(pos=a, sigma_a=sigma_a, rssi_dbm=mean_rssi_dbm(math.dist(a, truth), PARAMS), sigma_p=sigma_p)
        for a in anchors
    ]


def random_readings(rng, m=6):
    out = []
    for _ in range(m):
        pos = rng.uniform(0, 35, 2)
        d = rng.uniform(2, 30)
        out.append(
            AnchorReading(
                pos=pos,
                sigma_a=float(rng.uniform(0.5, 6)),
                rssi_dbm=mean_rssi_dbm(d, PARAMS),
                sigma_p=float(rng.uniform(1, 5)),
            )
        )
    return out


# ----------------------------------------------------------------------- weights


def test_error_weight_is_sum_of_variances():
    w = error_weight(8.0, 9.0, 2.0, 0.1)
    assert w == pytest.approx(rice_variance(8.0, 2.0) + lognormal_distance_variance(9.0, 0.1), rel=1e-15)


def test_error_weight_floor_for_noiseless_reading():
    assert error_weight(5.0, 5.0, 0.0, 0.0) == WEIGHT_FLOOR


def test_error_weight_rejects_non_finite():
    with pytest.raises(DegenerateWeightError):
        error_weight(5.0, math.inf, 0.0, 0.1)


def test_baseline_ignores_anchor_noise():
    cfg = EstimatorConfig(step_size=0.1)
    noisy = exact_readings(sigma_a=5.0, sigma_p=2.0)
    clean = exact_readings(sigma_a=0.0, sigma_p=2.0)
    x = (6.0, 7.0)
    assert cost(x, noisy, cfg, "baseline") == cost(x, clean, cfg, "baseline")
    assert cost(x, noisy, cfg, "proposed") < cost(x, clean, cfg, "proposed")


# ---------------------------------------------------------------------- gradient


def test_gradient_matches_finite_differences_of_frozen_cost():
    rng = np.random.default_rng(11)
    cfg = EstimatorConfig(step_size=0.1)
    for _ in range(20):
        readings = random_readings(rng)
        x = rng.uniform(0, 35, 2)
        for method in ("proposed", "baseline"):
            g = np.array(gradient(x, readings, cfg, method))
            fd = oracles.fd_gradient(lambda p: cost(p, readings, cfg, method, frozen_at=x), x)
            np.testing.assert_allclose(g, fd, rtol=1e-6, atol=1e-9 * np.max(np.abs(fd)))


def test_gradient_vanishes_at_noiseless_truth():
    cfg = EstimatorConfig(step_size=0.1)
    g = gradient(TRUTH, exact_readings(sigma_p=1.0), cfg)
    assert np.hypot(*g) < 1e-12


def test_gradient_singular_at_anchor():
    with pytest.raises(SingularityError):
        gradient(ANCHORS[1], exact_readings(), EstimatorConfig(step_size=0.1))


def test_unknown_method():
    with pytest.raises(ValueError):
        cost(TRUTH, exact_readings(), EstimatorConfig(step_size=0.1), "lsq")


# ----------------------------------------------------------------------- descent


@pytest.mark.parametrize("method", ["proposed", "baseline"])
def test_noiseless_recovery_plain_steps(method):
    # floored weights make the cost ~1e9 times larger, so the raw step is tiny
    cfg = EstimatorConfig(step_size=1e-10, max_iters=5000, stop_tol=1e-9)
    res = estimate_position(exact_readings(), (20.0, 20.0), cfg, method)
    assert math.dist(res.position, TRUTH) < 1e-6
    assert res.converged


@pytest.mark.parametrize("method", ["proposed", "baseline"])
def test_noiseless_recovery_normalized_steps(method):
    cfg = EstimatorConfig(step_size=1.0, max_iters=300, stop_tol=1e-9, normalize_step=True)
    res = estimate_position(exact_readings(), (25.0, 30.0), cfg, method)
    assert math.dist(res.position, TRUTH) < 1e-6


def test_wrappers_agree_with_generic_entry():
    cfg = EstimatorConfig(step_size=0.5, normalize_step=True)
    readings = exact_readings(sigma_a=2.0, sigma_p=2.0)
    assert estimate_position_proposed(readings, (20, 20), cfg) == estimate_position(readings, (20, 20), cfg, "proposed")
    assert estimate_position_baseline(readings, (20, 20), cfg) == estimate_position(readings, (20, 20), cfg, "baseline")


def test_trace_records_every_iterate():
    cfg = EstimatorConfig(step_size=0.5, normalize_step=True, max_iters=40, stop_tol=0.0)
    res = estimate_position(exact_readings(sigma_p=2.0), (20, 20), cfg, keep_trace=True)
    assert len(res.trace) == res.iterations_used == 40
    assert res.trace[0][0] == Point(20.0, 20.0)
    costs = [c for _, c in res.trace]
    assert costs[-1] < costs[0]


def test_stop_tol_zero_runs_full_budget():
    cfg = EstimatorConfig(step_size=0.5, normalize_step=True, max_iters=17, stop_tol=0.0)
    res = estimate_position(exact_readings(sigma_p=2.0), (20, 20), cfg)
    assert res.iterations_used == 17
    assert not res.converged


def test_batch_matches_single_runs():
    rng = np.random.default_rng(5)
    cfg = EstimatorConfig(step_size=0.8, normalize_step=True)
    problems = [random_readings(rng) for _ in range(7)]
    inits = rng.uniform(0, 35, (7, 2))
    anchors = np.array([[r.pos for r in p] for p in problems])
    rssi = np.array([[r.rssi_dbm for r in p] for p in problems])
    sa = np.array([[r.sigma_a for r in p] for p in problems])
    sd = sigma_d(np.array([[r.sigma_p for r in p] for p in problems]), PARAMS.eta)
    from rssiloc.pathloss import invert_rssi_to_distance

    batch = estimate_batch(anchors, invert_rssi_to_distance(rssi, PARAMS), sa, sd, inits, cfg)
    for k in range(7):
        single = estimate_position(problems[k], inits[k], cfg)
        assert tuple(batch.positions[k]) == tuple(single.position)
        assert batch.iterations_used[k] == single.iterations_used


def test_halving_safeguard_tames_oversized_step():
    readings = exact_readings(sigma_a=1.0, sigma_p=1.0)
    wild = EstimatorConfig(step_size=1.0, max_iters=100)
    safe = replace(wild, halve_on_increase=True)
    err_wild = math.dist(estimate_position(readings, (20, 20), wild).position, TRUTH)
    err_safe = math.dist(estimate_position(readings, (20, 20), safe).position, TRUTH)
    assert err_safe < 1e-2
    assert err_wild > 1e3


def test_blown_iterate_flagged_as_failure():
    readings = exact_readings(sigma_p=1.0)
    cfg = EstimatorConfig(step_size=1e200, max_iters=50)
    with pytest.raises(DegenerateWeightError):
        estimate_position(readings, (20, 20), cfg)


def test_input_validation():
    cfg = EstimatorConfig(step_size=0.1)
    with pytest.raises(DomainError):
        estimate_position(exact_readings()[:2], (1, 1), cfg)
    with pytest.raises(DomainError):
        estimate_position(exact_readings(), (math.nan, 1), cfg)
    with pytest.raises(DomainError):
        EstimatorConfig(step_size=0.0)
    with pytest.raises(DomainError):
        EstimatorConfig(step_size=0.1, max_iters=0)
    with pytest.raises(DomainError):
        AnchorReading(pos=(0, 0), sigma_a=-1.0, rssi_dbm=-50.0, sigma_p=1.0)


@given(st.floats(min_value=2, max_value=33), st.floats(min_value=2, max_value=33))
@settings(max_examples=40, deadline=None)
def test_exact_readings_are_a_fixed_point(x, y):
    # noise levels only set the weights; with exact readings the truth is the minimiser
    readings = exact_readings(anchors=[(0, 0), (35, 0), (0, 35), (35, 35)], truth=(x, y), sigma_a=1.0, sigma_p=2.0)
    cfg = EstimatorConfig(step_size=1.0, normalize_step=True, stop_tol=1e-8)
    res = estimate_position(readings, (17.5, 17.5), cfg)
    assert math.dist(res.position, (x, y)) < 1e-5
