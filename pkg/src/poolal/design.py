"""Incremental design matrix and Mahalanobis diversity.

The design matrix starts at the identity and absorbs one point at a time,
``A <- A + x x^T``. The inverse is maintained with the rank-one inverse
identity and the log-determinant with the matrix determinant lemma, so a
greedy stage costs O(n d) per pick instead of a refactorisation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels

INVERSE_TOL = 1e-8


@dataclass
class DesignState:
    """``A = I + sum x x^T`` together with ``A^{-1}`` and ``log|A|``."""

    dimension: int
    matrix: np.ndarray
    inverse: np.ndarray
    log_det: float = 0.0
    count: int = 0
    reinversions: int = field(default=0, repr=False)

    def drift(self) -> float:
        """Max-entry deviation of ``inverse @ matrix`` from the identity."""
        return float(np.max(np.abs(self.inverse @ self.matrix - np.eye(self.dimension))))

    def refresh_inverse(self) -> None:
        """Dense re-inversion, used when the rank-one updates have drifted."""
        inv = np.linalg.inv(self.matrix)
        self.inverse = 0.5 * (inv + inv.T)
        self.reinversions += 1


def new_design(d: int) -> DesignState:
    if int(d) != d or d < 1:
        raise ValueError(f"dimension must be a positive integer, got {d!r}")
    d = int(d)
    return DesignState(dimension=d, matrix=np.eye(d), inverse=np.eye(d))


def _as_point(state: DesignState, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (state.dimension,):
        raise ValueError(f"expected a vector of length {state.dimension}, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("point has non-finite entries")
    return x


def diversity(state: DesignState, x) -> float:
    """Mahalanobis norm ``sqrt(x^T A^{-1} x)`` of ``x`` under the current design."""
    x = _as_point(state, x)
    return math.sqrt(max(float(x @ state.inverse @ x), 0.0))


def absorb(state: DesignState, x) -> DesignState:
    """Add ``x x^T`` to the design, updating inverse and log-determinant in place."""
    x = _as_point(state, x)
    u = state.inverse @ x
    q = float(x @ u)
    state.matrix += np.outer(x, x)
    state.inverse -= np.outer(u, u) / (1.0 + q)
    state.inverse = 0.5 * (state.inverse + state.inverse.T)
    state.log_det += math.log1p(q)
    state.count += 1
    return state


def greedy_select(state: DesignState, candidates, threshold: float) -> int | None:
    """Index of the most diverse candidate, if its diversity exceeds ``threshold``.

    Ties go to the lowest index. Returns ``None`` for an empty candidate set
    or when no candidate is strictly above the threshold.
    """
    cand = np.asarray(candidates, dtype=np.float64)
    if cand.size == 0:
        return None
    cand = cand.reshape(-1, state.dimension)
    if not np.all(np.isfinite(cand)):
        raise ValueError("candidates have non-finite entries")
    sq = np.einsum("ij,jk,ik->i", cand, state.inverse, cand)
    div = np.sqrt(np.maximum(sq, 0.0))
    j = int(np.argmax(div))
    if div[j] > threshold:
        return j
    return None


def stage_length_bound(d: int, eps: float) -> int:
    """Deterministic cap ``ceil((8 d / eps^2) log(1/eps))`` on a stage's query count.

    Valid for ``eps < 1/4``.
    """
    return math.ceil(8.0 * d / eps**2 * math.log(1.0 / eps))


def remaining_diversity(inverse: np.ndarray, points: np.ndarray) -> np.ndarray:
    if len(points) == 0:
        return np.zeros(0)
    sq = np.einsum("ij,jk,ik->i", points, inverse, points)
    return np.sqrt(np.maximum(sq, 0.0))


def run_stage_selection(points, threshold: float, d: int | None = None):
    """Greedily absorb points until every remaining one has diversity <= threshold.

    Parameters
    ----------
    points : (n, d) array
        The candidate pool for the stage, indexed 0..n-1.
    threshold : float
        Stage threshold; must be positive.
    d : int, optional
        Dimension, required only when ``points`` is empty.

    Returns
    -------
    queried : ndarray of int
        Selection order as row indices of ``points``.
    state : DesignState
        Design built from the queried points.

    Notes
    -----
    The compiled kernel tracks squared diversities incrementally. On exit the
    remaining diversities are recomputed from the (verified) inverse and the
    loop resumes if any still exceeds the threshold, so the exit guarantee
    holds for the exact values.
    """
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    X = np.ascontiguousarray(points, dtype=np.float64)
    if X.ndim != 2:
        if X.size == 0 and d is not None:
            X = X.reshape(0, d)
        else:
            raise ValueError("points must be a 2-D array")
    dim = X.shape[1] if d is None else d
    state = new_design(dim)
    n = X.shape[0]
    active = np.ones(n, dtype=np.uint8)
    sqdiv = np.einsum("ij,ij->i", X, X)
    inv = np.eye(dim)
    picks = []
    while True:
        new, gains = kernels.linear_greedy(X, inv, sqdiv, active, float(threshold))
        picks.extend(new.tolist())
        for q in gains:
            state.log_det += math.log1p(q)
        Xq = X[np.asarray(picks, dtype=np.int64)]
        state.matrix = np.eye(dim) + Xq.T @ Xq
        state.inverse = 0.5 * (inv + inv.T)
        state.count = len(picks)
        if state.drift() > INVERSE_TOL:
            state.refresh_inverse()
        inv = np.ascontiguousarray(state.inverse)
        rest = np.flatnonzero(active)
        exact = remaining_diversity(inv, X[rest])
        if len(rest) == 0 or exact.max() <= threshold:
            break
        # incremental values drifted across the threshold; resync and continue
        sqdiv[rest] = exact**2
        if len(new) == 0:
            j = int(rest[np.argmax(exact)])
            u = inv @ X[j]
            q = float(X[j] @ u)
            inv -= np.outer(u, u) / (1.0 + q)
            proj = X @ u
            sqdiv -= proj * proj / (1.0 + q)
            active[j] = 0
            picks.append(j)
            state.log_det += math.log1p(q)
    return np.asarray(picks, dtype=np.int64), state
