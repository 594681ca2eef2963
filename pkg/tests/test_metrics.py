import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from genpolicy.metrics import (GaussianFit, avg_nll, frechet_2d, frechet_gaussian, mode_coverage,
                               sqrt_spd_2x2, tv_distance)
from genpolicy.worlds import build_gmm_world, single_gaussian_world


def random_spd(rng):
    A = rng.standard_normal((2, 2))
    return A @ A.T + 1e-3 * np.eye(2)


def test_sqrt_identity_and_scaled():
    np.testing.assert_allclose(sqrt_spd_2x2(np.eye(2)), np.eye(2), atol=1e-15)
    np.testing.assert_allclose(sqrt_spd_2x2(4 * np.eye(2)), 2 * np.eye(2), atol=1e-15)


def test_sqrt_matches_scipy_and_multiplies_back():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(2000):
        M = random_spd(rng)
        S = sqrt_spd_2x2(M)
        worst = max(worst, np.abs(S @ S - M).max())
        np.testing.assert_allclose(S, scipy.linalg.sqrtm(M).real, rtol=1e-7, atol=1e-9)
    assert worst < 1e-10


def test_sqrt_rejects_indefinite():
    with pytest.raises(ValueError):
        sqrt_spd_2x2(np.diag([1.0, -1.0]))


def test_frechet_gaussian_closed_forms():
    assert frechet_gaussian([0, 0], np.eye(2), [1, 0], np.eye(2)) == pytest.approx(1.0, abs=1e-12)
    assert frechet_gaussian([0, 0], np.eye(2), [0, 0], 4 * np.eye(2)) == pytest.approx(2.0, abs=1e-12)


def test_frechet_gaussian_matches_scipy_formula():
    rng = np.random.default_rng(1)
    for _ in range(50):
        c1, c2 = random_spd(rng), random_spd(rng)
        m1, m2 = rng.standard_normal(2), rng.standard_normal(2)
        ref = np.sum((m1 - m2) ** 2) + np.trace(c1 + c2 - 2 * scipy.linalg.sqrtm(c1 @ c2).real)
        assert frechet_gaussian(m1, c1, m2, c2) == pytest.approx(ref, abs=1e-8)


def test_frechet_identical_sets_and_symmetry():
    rng = np.random.default_rng(2)
    a = rng.standard_normal((200, 2))
    b = 1.5 * rng.standard_normal((300, 2)) + 0.3
    assert abs(frechet_2d(a, a)) < 1e-10
    assert frechet_2d(a, b) == pytest.approx(frechet_2d(b, a), abs=1e-8)


def test_frechet_needs_enough_samples():
    with pytest.raises(ValueError):
        frechet_2d(np.zeros((31, 2)), np.zeros((40, 2)))


def test_gaussian_fit_requires_two():
    with pytest.raises(ValueError):
        GaussianFit.of(np.zeros((1, 2)))


def test_tv_examples():
    assert tv_distance([0.5, 0.5], [0.5, 0.5]) == 0.0
    assert tv_distance([1, 0], [0, 1]) == 1.0
    assert tv_distance([0.5, 0.5], [1, 0]) == 0.5
    with pytest.raises(ValueError):
        tv_distance([1.0], [0.5, 0.5])
    with pytest.raises(ValueError):
        tv_distance([0.6, 0.6], [0.5, 0.5])


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 8), st.integers(0, 2 ** 32 - 1))
def test_tv_metric_axioms(n, seed):
    rng = np.random.default_rng(seed)
    p, q, r = (rng.dirichlet(np.ones(n)) for _ in range(3))
    assert 0.0 <= tv_distance(p, q) <= 1.0
    assert tv_distance(p, q) == pytest.approx(tv_distance(q, p))
    assert tv_distance(p, r) <= tv_distance(p, q) + tv_distance(q, r) + 1e-12


def test_mode_coverage_cases():
    w = build_gmm_world(2, 3, seed=0)
    comps = w.components(0)
    assert mode_coverage(np.zeros((0, 2)), w, 0, 3.0) == 0.0
    one = np.repeat(w.means[comps[0]][None], 10, axis=0)
    assert mode_coverage(one, w, 0, 1.0) == pytest.approx(1 / len(comps))
    x = w.sample(10_000, 0, np.random.default_rng(0))
    assert mode_coverage(x, w, 0, 3.0) == 1.0
    with pytest.raises(ValueError):
        mode_coverage(x, w, 0, 0.0)


def test_nll_at_single_gaussian_mode():
    cov = np.array([[2.0, 0.3], [0.3, 0.5]])
    w = single_gaussian_world([1.0, -1.0], cov)
    nll = avg_nll(np.array([[1.0, -1.0]] * 5), w, 0)
    assert nll == pytest.approx(np.log(2 * np.pi * np.sqrt(np.linalg.det(cov))), abs=1e-12)


def test_nll_outlier_raises_mean():
    w = build_gmm_world(2, 3, seed=1)
    x = w.sample(100, 0, np.random.default_rng(0))
    assert avg_nll(np.vstack([x, [[30.0, 30.0]]]), w, 0) > avg_nll(x, w, 0)
    with pytest.raises(ValueError):
        avg_nll(np.zeros((0, 2)), w, 0)


def test_nll_matches_entropy_estimate():
    w = build_gmm_world(2, 3, seed=2)
    rng = np.random.default_rng(3)
    x = w.sample(10_000, 1, rng)
    # independent Monte-Carlo entropy estimate from a second draw
    y = w.sample(200_000, 1, np.random.default_rng(4))
    lp = -w.log_density(y, 1)
    se = np.sqrt(lp.var() / len(y) + (-w.log_density(x, 1)).var() / len(x))
    assert abs(avg_nll(x, w, 1) - lp.mean()) < 2 * se
