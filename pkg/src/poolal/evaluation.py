"""Risk metrics, the passive comparison arm and log-log rate fits."""

from __future__ import annotations

import math

import numpy as np

from .design import new_design
from .synth import (LINEAR, LOGISTIC, THRESHOLD, GroundTruth, Pool, _rng, gen_pool_linear,
                    gen_pool_logistic, sigmoid)

_STREAM_MC = 3
_STREAM_PASSIVE = 4


def _sign(v):
    return np.where(np.asarray(v) >= 0, 1, -1)


def bayes_weight(ground_truth: GroundTruth, margins) -> np.ndarray:
    """``|2 f*(x) - 1|`` expressed through the margin."""
    m = np.asarray(margins, dtype=np.float64)
    if ground_truth.model_kind == LINEAR:
        return np.abs(m)
    if ground_truth.model_kind == LOGISTIC:
        return np.abs(2.0 * sigmoid(m) - 1.0)
    raise ValueError(f"no margin weight for model kind {ground_truth.model_kind!r}")


def weighted_regret(pool: Pool, hypothesis, ground_truth: GroundTruth) -> float:
    """Bayes-margin-weighted count of pool points where the hypothesis disagrees with Bayes.

    ``hypothesis`` is a weight vector for the point models; for the finite
    class model it is a function index or a +-1 prediction per pool point.
    Weights: ``|<w*, x>|`` (linear), ``|2 sigma(<w*, x>) - 1|`` (logistic),
    ``|f*(x) - 1/2|`` (finite class).
    """
    if pool.model_kind != ground_truth.model_kind:
        raise ValueError(f"pool is {pool.model_kind!r} but ground truth is {ground_truth.model_kind!r}")
    if ground_truth.model_kind == THRESHOLD:
        fstar = ground_truth.fclass.values[ground_truth.fstar_index]
        if np.ndim(hypothesis) == 0:
            pred = _sign(ground_truth.fclass.values[int(hypothesis)] - 0.5)
        else:
            pred = np.asarray(hypothesis)
        mismatch = pred != _sign(fstar - 0.5)
        return float(np.abs(fstar - 0.5)[mismatch].sum())
    m = ground_truth.margin(pool.points)
    mismatch = _sign(pool.points @ np.asarray(hypothesis, dtype=np.float64)) != _sign(m)
    return float(bayes_weight(ground_truth, m)[mismatch].sum())


def sample_like(ground_truth: GroundTruth, n: int, seed: int):
    """Fresh points from the generator law behind ``ground_truth``."""
    d = len(ground_truth.w_star)
    noise = ground_truth.noise
    if ground_truth.model_kind == LINEAR:
        pool, _ = gen_pool_linear(n, d, noise.alpha, seed, w_star=ground_truth.w_star,
                                  truncation=noise.truncation)
    elif ground_truth.model_kind == LOGISTIC:
        pool, _ = gen_pool_logistic(n, d, noise.alpha, seed, w_star=ground_truth.w_star,
                                    R=ground_truth.radius_bound, truncation=noise.truncation)
    else:
        raise ValueError("Monte-Carlo risk needs a point model")
    return pool


def excess_risk_mc(hypothesis, ground_truth: GroundTruth, noise_spec=None, n_mc: int = 100_000,
                   seed: int = 0, chunk: int = 250_000):
    """Monte-Carlo estimate of ``L(h) - L(h*) = E[1{h(x) != h*(x)} |2 f*(x) - 1|]``.

    Returns ``(estimate, standard_error)``. ``noise_spec`` overrides the
    noise law stored in ``ground_truth``.
    """
    if n_mc < 1000:
        raise ValueError("n_mc must be at least 1000")
    gt = ground_truth
    if noise_spec is not None and noise_spec != gt.noise:
        gt = GroundTruth(gt.model_kind, gt.w_star, noise_spec, radius_bound=gt.radius_bound,
                         epsilon0=gt.epsilon0)
    w = np.asarray(hypothesis, dtype=np.float64)
    total = 0.0
    total_sq = 0.0
    done = 0
    part = 0
    while done < n_mc:
        n = min(chunk, n_mc - done)
        sub_seed = int(np.random.SeedSequence([int(seed), _STREAM_MC, part]).generate_state(1)[0])
        pool = sample_like(gt, n, sub_seed)
        m = pool.margins
        loss = bayes_weight(gt, m) * (_sign(pool.points @ w) != _sign(m))
        total += float(loss.sum())
        total_sq += float((loss * loss).sum())
        done += n
        part += 1
    mean = total / n_mc
    var = max(total_sq / n_mc - mean * mean, 0.0) * n_mc / (n_mc - 1)
    return mean, math.sqrt(var / n_mc)


def passive_subset(T: int, n_labels: int, seed: int) -> np.ndarray:
    if not 0 <= n_labels <= T:
        raise ValueError("n_labels must lie in [0, T]")
    return _rng(seed, _STREAM_PASSIVE).permutation(T)[:n_labels]


def passive_baseline(pool: Pool, n_labels: int, oracle, seed: int) -> np.ndarray:
    """Ridge fit on a uniformly random subset of ``n_labels`` pool points."""
    X = pool.points
    idx = passive_subset(len(X), n_labels, seed)
    if len(idx) == 0:
        return np.zeros(X.shape[1])
    y = np.asarray(oracle(idx), dtype=np.float64)
    state = new_design(X.shape[1])
    Xs = X[idx]
    state.matrix = np.eye(X.shape[1]) + Xs.T @ Xs
    state.refresh_inverse()
    return state.inverse @ (Xs.T @ y)


def rate_fit(points):
    """OLS fit of ``log risk`` on ``log N``. Returns ``(slope, intercept, r2)``."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 3:
        raise ValueError("rate_fit needs at least three (N, risk) pairs")
    if np.any(pts <= 0) or not np.all(np.isfinite(pts)):
        raise ValueError("rate_fit needs positive, finite values")
    lx, ly = np.log(pts[:, 0]), np.log(pts[:, 1])
    xm, ym = lx.mean(), ly.mean()
    sxx = float(((lx - xm) ** 2).sum())
    if sxx == 0:
        raise ValueError("rate_fit needs at least two distinct N values")
    slope = float(((lx - xm) * (ly - ym)).sum() / sxx)
    intercept = float(ym - slope * xm)
    resid = ly - (intercept + slope * lx)
    syy = float(((ly - ym) ** 2).sum())
    r2 = 1.0 if syy == 0 else 1.0 - float((resid**2).sum()) / syy
    return slope, intercept, r2
