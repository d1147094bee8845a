"""Staged batch active learning for the linear model ``f*(x) = (1 + <w*, x>) / 2``.

Each stage greedily builds an approximate G-optimal design over the points
the previous estimator was unsure about, fits ridge regression on the
queried labels, pseudo-labels the points it is now confident on and drops
them from the pool. The final classifier is a linear separator trained on
the pseudo-labels only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .design import DesignState, remaining_diversity, run_stage_selection, stage_length_bound


@dataclass
class StageRecord:
    stage_index: int
    threshold: float
    margin_radius: float
    queried: np.ndarray
    estimator: object
    confident: np.ndarray
    pseudo_labels: np.ndarray
    pool_size_after: int
    max_remaining_diversity: float = 0.0
    stage_length_bound: int | None = None
    log_det: float = 0.0

    @property
    def n_queried(self) -> int:
        return len(self.queried)


@dataclass
class RunResult:
    final_hypothesis: np.ndarray | None
    stages: list
    stage_count: int
    label_complexity: int
    separator_fallback_used: bool
    forced_stop: bool = False
    leftover: np.ndarray | None = None

    @property
    def stage_lengths(self) -> list[int]:
        return [s.n_queried for s in self.stages]

    def query_order(self) -> np.ndarray:
        if not self.stages:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate([np.asarray(s.queried, dtype=np.int64) for s in self.stages])

    def pseudo_labeled(self):
        """All confident indices with their pseudo-labels, in stage order."""
        if not self.stages:
            return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
        idx = np.concatenate([np.asarray(s.confident, dtype=np.int64) for s in self.stages])
        lab = np.concatenate([np.asarray(s.pseudo_labels, dtype=np.int64) for s in self.stages])
        return idx, lab

    def predict(self, X) -> np.ndarray:
        w = self.final_hypothesis
        return np.where(np.asarray(X) @ w >= 0, 1, -1)


LinearRunResult = RunResult


def epsilon_linear(stage: int, T: int, delta: float) -> float:
    """Stage threshold ``2^-l / (sqrt(2 log(2 l (l+1) T / delta)) + 1)``."""
    if stage < 1 or T < 1 or not 0 < delta <= 1:
        raise ValueError("epsilon_linear: need stage >= 1, T >= 1, 0 < delta <= 1")
    l = stage
    return 2.0**-l / (math.sqrt(2.0 * math.log(2 * l * (l + 1) * T / delta)) + 1.0)


def ridge_estimate(state: DesignState, points, labels) -> np.ndarray:
    X = np.asarray(points, dtype=np.float64).reshape(-1, state.dimension)
    y = np.asarray(labels, dtype=np.float64)
    if len(X) != len(y):
        raise ValueError("points and labels differ in length")
    return state.inverse @ (X.T @ y)


def confident_split(points, w, radius):
    """Indices with ``|<w, x>| > radius`` and their signs."""
    X = np.asarray(points, dtype=np.float64)
    if len(X) == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    score = X @ np.asarray(w, dtype=np.float64)
    idx = np.flatnonzero(np.abs(score) > radius)
    return idx, np.where(score[idx] > 0, 1, -1)


def stopping_check_linear(stage: int, d: int, pool_size: int) -> bool:
    """``d / 2^{-l+1} > 2^{-l+1} |P_l|``, i.e. ``d 4^{l-1} > |P_l|``."""
    return pool_size == 0 or d * 4 ** (stage - 1) > pool_size


def _separates(X, y, w) -> bool:
    return bool(np.all(y * (X @ w) > 0))


def train_consistent_separator(points, labels):
    """Linear classifier through the origin with zero error on ``labels``.

    Tries ordinary least squares first; if that is not consistent, solves the
    max-margin linear program ``max t s.t. y <w, x> >= t, |w|_inf <= 1``,
    which certifies separability exactly. When the optimum is not positive
    the labels are inseparable and the least-squares fit is returned with
    ``fallback_used=True``.
    """
    X = np.asarray(points, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if X.ndim != 2 or len(X) == 0:
        d = X.shape[1] if X.ndim == 2 else 0
        return np.zeros(d), False
    if len(X) != len(y):
        raise ValueError("points and labels differ in length")
    d = X.shape[1]
    w_ls = np.linalg.lstsq(X, y, rcond=None)[0]
    if _separates(X, y, w_ls):
        return w_ls, False
    c = np.zeros(d + 1)
    c[-1] = -1.0
    A = np.hstack([-y[:, None] * X, np.ones((len(X), 1))])
    bounds = [(-1.0, 1.0)] * d + [(None, 1.0)]
    res = linprog(c, A_ub=A, b_ub=np.zeros(len(X)), bounds=bounds, method="highs")
    if res.status == 0 and res.x[-1] > 1e-12:
        w = res.x[:d]
        if _separates(X, y, w):
            return w, False
    return w_ls, True


@dataclass
class _StageOutcome:
    estimator: np.ndarray
    confident: np.ndarray
    pseudo_labels: np.ndarray


def staged_run(X, label_oracle, threshold_fn, radius_fn, estimate_fn, stop_fn):
    """Shared stage loop of the linear and logistic algorithms.

    ``threshold_fn(l)`` and ``radius_fn(l)`` give the design threshold and
    margin radius of stage ``l``; ``estimate_fn(l, state, Xq, y)`` fits the
    stage estimator; ``stop_fn(l, |P_l|)`` is the exit test.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    T, d = X.shape
    remaining = np.arange(T, dtype=np.int64)
    stages = []
    queried_all = np.zeros(T, dtype=bool)
    forced = False
    idle = 0
    ell = 0
    while True:
        ell += 1
        eps = threshold_fn(ell)
        radius = radius_fn(ell)
        local, state = run_stage_selection(X[remaining], eps, d=d)
        picks = remaining[local]
        rest_mask = np.ones(len(remaining), dtype=bool)
        rest_mask[local] = False
        rest = remaining[rest_mask]
        max_rest = float(remaining_diversity(state.inverse, X[rest]).max()) if len(rest) else 0.0
        if len(picks):
            if queried_all[picks].any():
                raise RuntimeError("pool point queried twice")
            queried_all[picks] = True
            y = np.asarray(label_oracle(picks), dtype=np.float64)
            w = estimate_fn(ell, state, X[picks], y)
            ci, pseudo = confident_split(X[rest], w, radius)
            confident = rest[ci]
        else:
            w = np.zeros(d)
            confident = np.zeros(0, dtype=np.int64)
            pseudo = np.zeros(0, dtype=np.int64)
        keep = np.ones(len(rest), dtype=bool)
        if len(confident):
            keep[np.searchsorted(rest, confident)] = False
        new_remaining = rest[keep]
        stages.append(StageRecord(
            stage_index=ell, threshold=eps, margin_radius=radius, queried=picks,
            estimator=w, confident=confident, pseudo_labels=pseudo,
            pool_size_after=len(new_remaining), max_remaining_diversity=max_rest,
            stage_length_bound=stage_length_bound(d, eps) if eps < 0.25 else None,
            log_det=state.log_det))
        removed = len(remaining) - len(new_remaining)
        remaining = new_remaining
        if stop_fn(ell, len(remaining)):
            break
        idle = idle + 1 if removed == 0 else 0
        if idle >= 2:
            forced = True
            break
    ci, cl = _collect(stages)
    w_hat, fallback = train_consistent_separator(X[ci].reshape(-1, d), cl)
    if len(ci) == 0:
        w_hat = np.zeros(d)
    return RunResult(
        final_hypothesis=w_hat, stages=stages, stage_count=len(stages),
        label_complexity=int(sum(s.n_queried for s in stages)),
        separator_fallback_used=fallback, forced_stop=forced, leftover=remaining)


def _collect(stages):
    idx = [np.asarray(s.confident, dtype=np.int64) for s in stages]
    lab = [np.asarray(s.pseudo_labels, dtype=np.int64) for s in stages]
    if not idx:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    return np.concatenate(idx), np.concatenate(lab)


def run_linear(pool, delta: float, label_oracle) -> RunResult:
    """Run the linear-model algorithm on ``pool`` (a ``Pool`` or an ``(T, d)`` array).

    ``label_oracle(indices)`` must return the persistent +-1 labels of the
    given pool indices.
    """
    if not 0 < delta <= 1:
        raise ValueError("delta must lie in (0, 1]")
    X = getattr(pool, "points", pool)
    X = np.asarray(X, dtype=np.float64)
    T, d = X.shape
    T_eps = max(T, 1)

    def estimate(ell, state, Xq, y):
        return ridge_estimate(state, Xq, y)

    return staged_run(
        X, label_oracle,
        threshold_fn=lambda l: epsilon_linear(l, T_eps, delta),
        radius_fn=lambda l: 2.0**-l,
        estimate_fn=estimate,
        stop_fn=lambda l, n: stopping_check_linear(l, d, n),
    )
