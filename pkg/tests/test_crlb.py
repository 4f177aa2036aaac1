import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

import oracles
from rssiloc.crlb import (
    FimBlocks,
    NoiseSpec,
    ObservationVector,
    ParameterVector,
    b_coefficient,
    crlb_rmse_bound,
    f22_blocks,
    fim,
    hessian_analytic,
    log_likelihood,
    schur_complement,
    score,
)
from rssiloc.exceptions import DomainError, SingularGeometryError
from rssiloc.pathloss import PathLossParams, mean_rssi_dbm

PARAMS = PathLossParams()


def random_instance(rng, m=6):
    anchors = rng.uniform(0, 35, (m, 2))
    blind = rng.uniform(5, 30, 2)
    theta = ParameterVector(blind=blind, anchors_true=anchors)
    noise = NoiseSpec(sigma_a=rng.uniform(0.5, 5, m), sigma_p=rng.uniform(1, 5, m), params=PARAMS)
    obs = sample_observation(theta, noise, rng)
    return theta, obs, noise


def sample_observation(theta, noise, rng):
    m = theta.n_anchors
    d = np.hypot(*(theta.anchors_true - np.asarray(theta.blind)).T)
    rssi = mean_rssi_dbm(d, noise.params) + noise.sigma_p * rng.standard_normal(m)
    reported = theta.anchors_true + noise.sigma_a[:, None] * rng.standard_normal((m, 2))
    return ObservationVector(rssi_dbm=rssi, reported=reported)


def test_parameter_vector_roundtrip():
    theta = ParameterVector(blind=(1, 2), anchors_true=[[3, 4], [5, 6]])
    arr = theta.as_array()
    np.testing.assert_array_equal(arr, [1, 2, 3, 4, 5, 6])
    back = ParameterVector.from_array(arr)
    assert back.blind == theta.blind
    np.testing.assert_array_equal(back.anchors_true, theta.anchors_true)


def test_b_coefficient_value():
    # (10 * 3.567 / (2 ln 10))^2
    assert b_coefficient(2.0, 3.567) == pytest.approx(59.99497, rel=1e-6)
    with pytest.raises(DomainError):
        b_coefficient(0.0, 3.567)


def test_log_likelihood_matches_gaussian_densities():
    rng = np.random.default_rng(1)
    for _ in range(5):
        theta, obs, noise = random_instance(rng)
        d = np.hypot(*(theta.anchors_true - np.asarray(theta.blind)).T)
        expected = np.sum(stats.norm.logpdf(obs.rssi_dbm, mean_rssi_dbm(d, PARAMS), noise.sigma_p))
        expected += np.sum(stats.norm.logpdf(obs.reported, theta.anchors_true, noise.sigma_a[:, None]))
        assert log_likelihood(theta, obs, noise) == pytest.approx(expected, rel=1e-12)


def test_score_matches_finite_differences():
    rng = np.random.default_rng(2)
    for _ in range(5):
        theta, obs, noise = random_instance(rng)
        f = lambda v: log_likelihood(ParameterVector.from_array(v), obs, noise)  # noqa: E731
        fd = oracles.fd_gradient(f, theta.as_array())
        np.testing.assert_allclose(score(theta, obs, noise), fd, rtol=1e-6, atol=1e-7)


def test_hessian_matches_differences_of_score():
    rng = np.random.default_rng(3)
    for _ in range(5):
        theta, obs, noise = random_instance(rng)
        g = lambda v: score(ParameterVector.from_array(v), obs, noise)  # noqa: E731
        fd = oracles.fd_hessian(g, theta.as_array())
        np.testing.assert_allclose(hessian_analytic(theta, obs, noise), fd, rtol=1e-7, atol=1e-9)


def test_hessian_symmetric_and_cross_anchor_zero():
    rng = np.random.default_rng(4)
    theta, obs, noise = random_instance(rng, m=5)
    h = hessian_analytic(theta, obs, noise)
    np.testing.assert_array_equal(h, h.T)
    for i in range(5):
        for j in range(5):
            if i != j:
                assert np.all(h[2 + 2 * i : 4 + 2 * i, 2 + 2 * j : 4 + 2 * j] == 0.0)


def test_fisher_information_is_expected_negative_hessian():
    rng = np.random.default_rng(5)
    theta, _, noise = random_instance(rng, m=4)
    n = 20_000
    acc = np.zeros((10, 10))
    for _ in range(n):
        acc += hessian_analytic(theta, sample_observation(theta, noise, rng), noise)
    f = fim(theta, noise).assemble()
    scale = np.max(np.abs(f))
    np.testing.assert_allclose(-acc / n, f, rtol=0.03, atol=0.01 * scale)


def test_fisher_information_is_score_covariance():
    rng = np.random.default_rng(6)
    theta, _, noise = random_instance(rng, m=3)
    scores = np.array([score(theta, sample_observation(theta, noise, rng), noise) for _ in range(15_000)])
    f = fim(theta, noise).assemble()
    np.testing.assert_allclose(scores.T @ scores / len(scores), f, rtol=0.05, atol=0.02 * np.max(np.abs(f)))


def test_blocks_structure():
    rng = np.random.default_rng(7)
    theta, _, noise = random_instance(rng, m=4)
    blocks = fim(theta, noise)
    full = blocks.assemble()
    np.testing.assert_array_equal(full, full.T)
    assert blocks.f12.shape == (2, 8)
    diag = f22_blocks(blocks)
    assert diag.shape == (4, 2, 2)
    off = blocks.f22.copy()
    for i in range(4):
        off[2 * i : 2 * i + 2, 2 * i : 2 * i + 2] = 0
    assert np.all(off == 0)


def test_schur_complement_matches_dense_inverse():
    rng = np.random.default_rng(8)
    theta, _, noise = random_instance(rng)
    blocks = fim(theta, noise)
    dense = blocks.f11 - blocks.f12 @ np.linalg.solve(blocks.f22, blocks.f12.T)
    np.testing.assert_allclose(schur_complement(blocks), dense, rtol=1e-9, atol=1e-12 * np.max(np.abs(blocks.f11)))
    expected = math.sqrt(np.trace(np.linalg.inv(blocks.assemble())[:2, :2]))
    assert crlb_rmse_bound(blocks) == pytest.approx(expected, rel=1e-10)


def test_ring_bound_closed_form():
    anchors = oracles.ring_points((17.5, 17.5), 10.0, 6)
    theta = ParameterVector(blind=(17.5, 17.5), anchors_true=anchors)
    noise = NoiseSpec(sigma_a=np.full(6, 1e-6), sigma_p=np.full(6, 2.0), params=PARAMS)
    bound = crlb_rmse_bound(fim(theta, noise))
    assert bound == pytest.approx(oracles.ring_crlb(10.0, 6, 2.0, 3.567), abs=1e-6)
    assert bound == pytest.approx(1.0541, abs=1e-4)


def test_nuisance_anchors_only_loosen_the_bound():
    rng = np.random.default_rng(9)
    theta, _, noise = random_instance(rng)
    blocks = fim(theta, noise)
    known = math.sqrt(np.trace(np.linalg.inv(blocks.f11)))
    assert crlb_rmse_bound(blocks) >= known
    diff = blocks.f11 - schur_complement(blocks)
    assert np.all(np.linalg.eigvalsh(diff) >= -1e-12)


@given(st.floats(min_value=0.2, max_value=8), st.floats(min_value=1.01, max_value=3))
@settings(max_examples=30)
def test_bound_increases_with_rssi_noise(sp, factor):
    anchors = oracles.ring_points((0, 0), 8.0, 5, phase=0.3)
    theta = ParameterVector(blind=(1.0, -0.5), anchors_true=anchors)
    lo = crlb_rmse_bound(fim(theta, NoiseSpec(sigma_a=np.full(5, 2.0), sigma_p=np.full(5, sp))))
    hi = crlb_rmse_bound(fim(theta, NoiseSpec(sigma_a=np.full(5, 2.0), sigma_p=np.full(5, sp * factor))))
    assert hi > lo


def test_collinear_geometry_is_singular():
    anchors = np.array([[0.0, 0.0], [5.0, 0.0], [20.0, 0.0]])
    theta = ParameterVector(blind=(10.0, 0.0), anchors_true=anchors)
    with pytest.raises(SingularGeometryError):
        crlb_rmse_bound(fim(theta, NoiseSpec(sigma_a=np.ones(3), sigma_p=np.ones(3))))


def test_zero_noise_rejected():
    theta = ParameterVector(blind=(0, 0), anchors_true=oracles.ring_points((0, 0), 5, 3))
    with pytest.raises(DomainError):
        fim(theta, NoiseSpec(sigma_a=np.zeros(3), sigma_p=np.ones(3)))
    with pytest.raises(DomainError):
        fim(theta, NoiseSpec(sigma_a=np.ones(3), sigma_p=np.zeros(3)))


def test_blind_on_anchor_rejected():
    theta = ParameterVector(blind=(5, 0), anchors_true=oracles.ring_points((0, 0), 5, 3))
    with pytest.raises(DomainError):
        fim(theta, NoiseSpec(sigma_a=np.ones(3), sigma_p=np.ones(3)))


def test_assemble_of_handbuilt_blocks():
    blocks = FimBlocks(f11=np.eye(2), f12=np.zeros((2, 2)), f22=2 * np.eye(2))
    np.testing.assert_array_equal(blocks.assemble(), np.diag([1.0, 1.0, 2.0, 2.0]))
    assert crlb_rmse_bound(blocks) == pytest.approx(math.sqrt(2.0))
