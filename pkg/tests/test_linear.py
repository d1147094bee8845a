import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from poolal.design import new_design, absorb, stage_length_bound
from poolal.linear import (confident_split, epsilon_linear, ridge_estimate, run_linear,
                           stopping_check_linear, train_consistent_separator)
from poolal.synth import GroundTruth, LabelOracle, NoiseSpec, Pool, LINEAR, gen_pool_linear


def test_epsilon_linear_frozen():
    assert epsilon_linear(1, 1000, 0.05) == pytest.approx(0.0869, abs=5e-5)
    assert epsilon_linear(1, 1000, 0.05) == pytest.approx(0.5 / (math.sqrt(2 * math.log(80000)) + 1),
                                                          rel=1e-15)
    assert epsilon_linear(1, 2, 1.0) == pytest.approx(0.5 / (math.sqrt(2 * math.log(8)) + 1), rel=1e-15)


@given(st.integers(1, 30), st.integers(1, 10**6), st.floats(1e-6, 1.0))
def test_epsilon_linear_monotone(ell, T, delta):
    e = epsilon_linear(ell, T, delta)
    assert e > 0
    assert epsilon_linear(ell + 1, T, delta) < e / 2
    assert epsilon_linear(ell, T + 1, delta) < e


@pytest.mark.parametrize("args", [(0, 10, 0.1), (1, 0, 0.1), (1, 10, 0.0), (1, 10, 1.5)])
def test_epsilon_linear_domain(args):
    with pytest.raises(ValueError):
        epsilon_linear(*args)


def test_ridge_examples():
    e1, e2 = np.eye(2)
    s = absorb(new_design(2), e1)
    assert np.allclose(ridge_estimate(s, [e1], [1]), [0.5, 0.0])
    s = absorb(absorb(new_design(2), e1), e1)
    assert np.allclose(ridge_estimate(s, [e1, e1], [1, -1]), 0.0)
    s = absorb(absorb(new_design(2), e1), e2)
    assert np.allclose(ridge_estimate(s, [e1, e2], [1, 1]), [0.5, 0.5])
    with pytest.raises(ValueError):
        ridge_estimate(s, [e1, e2], [1])


def test_confident_split_examples():
    idx, lab = confident_split(np.array([[0.5, 0.0], [0.1, 0.9]]), np.array([1.0, 0.0]), 0.25)
    assert idx.tolist() == [0] and lab.tolist() == [1]
    idx, _ = confident_split(np.array([[0.5, 0.0]]), np.zeros(2), 0.25)
    assert idx.tolist() == []
    idx, lab = confident_split(np.array([[-0.6, 0.0]]), np.array([1.0, 0.0]), 0.5)
    assert idx.tolist() == [0] and lab.tolist() == [-1]
    # the boundary value itself is not confident
    idx, _ = confident_split(np.array([[0.5, 0.0]]), np.array([1.0, 0.0]), 0.5)
    assert idx.tolist() == []


def test_stopping_examples():
    assert stopping_check_linear(1, 5, 4)
    assert not stopping_check_linear(1, 5, 5)
    assert stopping_check_linear(3, 2, 31)
    assert not stopping_check_linear(3, 2, 32)
    assert stopping_check_linear(7, 1, 0)


def _homogeneously_separable(X, y):
    # brute force over a fine grid of directions (2-D only)
    for t in np.linspace(0, 2 * np.pi, 20001):
        w = np.array([math.cos(t), math.sin(t)])
        if np.all(y * (X @ w) > 0):
            return True
    return False


def test_separator_examples():
    e1 = np.array([1.0, 0.0])
    w, fb = train_consistent_separator(np.array([e1, -e1]), np.array([1, -1]))
    assert w @ e1 > 0 and not fb
    w, fb = train_consistent_separator(np.zeros((0, 3)), np.zeros(0))
    assert np.array_equal(w, np.zeros(3)) and not fb
    X = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
    # x and -x with the same label: no separator through the origin exists
    y_bad = np.array([1, 1, -1, -1])
    assert not _homogeneously_separable(X, y_bad)
    w, fb = train_consistent_separator(X, y_bad)
    assert fb
    # alternating labels are separated by (1, 1)
    y_ok = np.array([1, -1, 1, -1])
    assert _homogeneously_separable(X, y_ok)
    w, fb = train_consistent_separator(X, y_ok)
    assert not fb and np.all(y_ok * (X @ w) > 0)


@given(st.integers(0, 2**31 - 1), st.integers(2, 6), st.integers(1, 80))
def test_separator_consistent_on_separable_labels(seed, d, n):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    w0 = rng.standard_normal(d)
    s = X @ w0
    keep = np.abs(s) > 1e-3 * np.linalg.norm(w0) * np.linalg.norm(X, axis=1)
    X, y = X[keep], np.where(s[keep] > 0, 1, -1)
    w, fb = train_consistent_separator(X, y)
    assert not fb
    assert np.all(y * (X @ w) > 0)


def test_separator_flags_every_inseparable_sign_pattern():
    X = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0], [0.6, 0.6]])
    for y in itertools.product([-1, 1], repeat=len(X)):
        y = np.array(y)
        _, fb = train_consistent_separator(X, y)
        assert fb == (not _homogeneously_separable(X, y))


def test_run_linear_empty_pool():
    r = run_linear(np.zeros((0, 3)), 0.1, lambda idx: np.zeros(0))
    assert r.stage_count == 1 and r.label_complexity == 0
    assert np.array_equal(r.final_hypothesis, np.zeros(3))


def test_run_linear_two_orthonormal_points():
    X = np.eye(2)
    gt = GroundTruth(LINEAR, np.array([1.0, 0.0]), NoiseSpec(1.0), noiseless=True)
    pool = Pool(X, X @ gt.w_star)
    r = run_linear(pool, 0.1, LabelOracle(pool, gt, 0))
    # both points clear the threshold in turn, then the pool is empty
    assert r.stages[0].queried.tolist() == [0, 1]
    assert r.stage_count == 1 and r.label_complexity == 2
    ci, cl = r.pseudo_labeled()
    assert np.all(cl == np.where(X[ci] @ gt.w_star >= 0, 1, -1))


def _check_run(X, r, oracle_calls=None):
    T, d = X.shape
    alive = np.arange(T)
    seen = set()
    for s in r.stages:
        q, c = s.queried.tolist(), s.confident.tolist()
        assert not seen.intersection(q)
        seen.update(q)
        left = set(alive.tolist()) - set(q) - set(c)
        assert set(q) | set(c) | left == set(alive.tolist())
        assert not set(q) & set(c)
        assert len(left) == s.pool_size_after
        if len(c):
            score = X[c] @ s.estimator
            assert np.all(np.abs(score) > s.margin_radius)
            assert np.array_equal(s.pseudo_labels, np.where(score > 0, 1, -1))
        assert s.max_remaining_diversity <= s.threshold
        if s.threshold < 0.25:
            assert s.n_queried <= stage_length_bound(d, s.threshold)
        alive = np.array(sorted(left), dtype=np.int64)
    assert r.stage_count == len(r.stages)
    assert r.label_complexity == sum(s.n_queried for s in r.stages)
    if not r.separator_fallback_used:
        ci, cl = r.pseudo_labeled()
        if len(ci):
            assert np.all(cl * (X[ci] @ r.final_hypothesis) > 0)


@given(st.integers(0, 10**6), st.integers(20, 400), st.integers(2, 4),
       st.sampled_from([0.0, 0.5, 1.0, 2.0]))
def test_run_linear_invariants(seed, T, d, alpha):
    pool, gt = gen_pool_linear(T, d, alpha, seed)
    r = run_linear(pool, 0.1, LabelOracle(pool, gt, seed))
    _check_run(pool.points, r)
    r2 = run_linear(pool, 0.1, LabelOracle(pool, gt, seed))
    assert np.array_equal(r.final_hypothesis, r2.final_hypothesis)
    assert [s.queried.tolist() for s in r.stages] == [s.queried.tolist() for s in r2.stages]


def test_noiseless_pseudo_labels_match_bayes():
    for seed in range(5):
        pool, gt = gen_pool_linear(3000, 3, 8.0, seed)
        gt.noiseless = True
        r = run_linear(pool, 0.1, LabelOracle(pool, gt, seed))
        ci, cl = r.pseudo_labeled()
        assert len(ci) > 0
        assert np.array_equal(cl, np.where(pool.margins[ci] >= 0, 1, -1))


def test_force_stop_guard_flags_idle_stages():
    # a pool that is fully covered after stage one keeps the stop rule false
    # only if it is large; emulate idle stages with a zero-label oracle
    pool, gt = gen_pool_linear(4000, 2, 1.0, 0)
    r = run_linear(pool, 0.1, lambda idx: np.zeros(len(idx), dtype=np.int64))
    assert r.forced_stop or r.stage_count <= math.ceil(math.log(4000 / 2, 4)) + 2
    assert r.stage_count <= math.ceil(math.log(4000 / 2, 4)) + 2
