"""Staged active learning over a finite function class.

A class is stored as its value table over the pool: ``values[f, i]`` is
``f(x_i)`` in ``[0, 1]``. All quantities here only depend on the value
columns, so pool points that share a column are interchangeable, and the
greedy loops work on distinct columns.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .linear import RunResult, StageRecord

FCLASS_MAGIC = "poolal-fclass"


class FiniteFunctionClass:
    """Finite class ``F`` given by its ``|F| x T`` value table over the pool."""

    def __init__(self, values):
        values = np.ascontiguousarray(values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] < 1:
            raise ValueError("values must be a non-empty |F| x T table")
        if not np.all(np.isfinite(values)) or values.min(initial=0.0) < 0 or values.max(initial=0.0) > 1:
            raise ValueError("function values must lie in [0, 1]")
        self.values = values

    @property
    def size(self) -> int:
        return self.values.shape[0]

    def __len__(self):
        return self.size

    @property
    def n_points(self) -> int:
        return self.values.shape[1]

    def column(self, i) -> np.ndarray:
        return self.values[:, i]

    def save(self, path) -> None:
        m, T = self.values.shape
        with open(path, "w", newline="\n") as fh:
            fh.write(f"{FCLASS_MAGIC} v1 {m} {T}\n")
            for row in self.values:
                fh.write(" ".join(repr(float(v)) for v in row) + "\n")

    @classmethod
    def load(cls, path) -> "FiniteFunctionClass":
        with open(path) as fh:
            header = fh.readline().split()
            if len(header) != 4 or header[0] != FCLASS_MAGIC or header[1] != "v1":
                raise ValueError(f"{path}: not a {FCLASS_MAGIC} v1 file")
            m, T = int(header[2]), int(header[3])
            data = np.loadtxt(fh, ndmin=2)
        if data.shape != (m, T):
            raise ValueError(f"{path}: expected a {m} x {T} table, got {data.shape}")
        return cls(data)


@dataclass
class DiversityHistory:
    """Selected points and the running pairwise sums ``sum_i (f(x_i) - g(x_i))^2``."""

    n_functions: int
    points: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    pair_sums: np.ndarray = None

    def __post_init__(self):
        if self.pair_sums is None:
            self.pair_sums = np.zeros((self.n_functions, self.n_functions))

    def add(self, fclass: FiniteFunctionClass, index: int) -> None:
        col = fclass.column(index).copy()
        diff = col[:, None] - col[None, :]
        self.pair_sums += diff * diff
        self.points.append(int(index))
        self.rows.append(col)

    def __len__(self):
        return len(self.points)


def diversity_nl(fclass: FiniteFunctionClass, index: int, history: DiversityHistory) -> float:
    """``D(x, history)``: the largest normalised disagreement over pairs ``f, g``.

    ``D^2 = max_{f,g} (f(x) - g(x))^2 / (sum_hist (f(x_i) - g(x_i))^2 + 1)``.
    """
    col = fclass.column(index)
    return math.sqrt(float(kernels.group_sqdiv(np.ascontiguousarray(col[None, :]),
                                               history.pair_sums)[0]))


def diversity_nl_naive(fclass: FiniteFunctionClass, index: int, history_points) -> float:
    """Uncached double loop over ordered pairs; reference for ``diversity_nl``."""
    v = fclass.values
    best = 0.0
    for f in range(fclass.size):
        for g in range(fclass.size):
            if f == g:
                continue
            den = 0.0
            for i in history_points:
                diff = v[f, i] - v[g, i]
                den += diff * diff
            num = (v[f, index] - v[g, index]) ** 2
            best = max(best, num / (den + 1.0))
    return math.sqrt(best)


def _unique_rows(a):
    """``np.unique(a, axis=0, return_inverse=True)`` up to row order, via a byte view."""
    a = np.ascontiguousarray(a)
    # -0.0 and 0.0 differ bytewise; normalise so equal values share a key
    a = a + 0.0
    keys = a.view(np.dtype((np.void, a.dtype.itemsize * a.shape[1]))).ravel()
    _, first, inverse = np.unique(keys, return_index=True, return_inverse=True)
    return a[first], inverse.ravel()


def _group_columns(fclass: FiniteFunctionClass, indices):
    """Group pool ``indices`` by identical value column.

    Returns ``(cols, members, group_ptr)`` in the CSR layout the kernels use;
    members of every group are ascending.
    """
    indices = np.sort(np.asarray(indices, dtype=np.int64))
    if len(indices) == 0:
        m = fclass.size
        return np.zeros((0, m)), np.zeros(0, dtype=np.int64), np.zeros(1, dtype=np.int64)
    sub = fclass.values[:, indices].T
    cols, inverse = _unique_rows(sub)
    order = np.argsort(inverse, kind="stable")
    members = indices[order]
    counts = np.bincount(inverse, minlength=len(cols))
    group_ptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    return np.ascontiguousarray(cols), np.ascontiguousarray(members), group_ptr


def greedy_order(fclass: FiniteFunctionClass, indices, threshold: float = -1.0):
    """Greedy max-diversity order over ``indices`` with an empty starting history.

    Stops when the best remaining diversity is ``<= threshold`` (never, for a
    negative threshold). Returns ``(picks, diversities, history)``.
    """
    cols, members, group_ptr = _group_columns(fclass, indices)
    next_ptr = np.zeros(len(cols), dtype=np.int64)
    denom = np.zeros((fclass.size, fclass.size))
    picks, sq = kernels.nl_greedy(cols, members, group_ptr, next_ptr, denom, float(threshold))
    history = DiversityHistory(fclass.size, points=picks.tolist(),
                               rows=[fclass.column(i).copy() for i in picks], pair_sums=denom)
    return picks, np.sqrt(sq), history


def dim_estimate_greedy(fclass: FiniteFunctionClass, indices=None) -> float:
    """Greedy lower bound on ``Dim(F, S)``: the diversity sum along a greedy order."""
    if indices is None:
        indices = np.arange(fclass.n_points)
    if len(indices) == 0:
        return 0.0
    _, divs, _ = greedy_order(fclass, indices)
    return float(divs.sum())


def dim_brute_force(fclass: FiniteFunctionClass, indices) -> float:
    """Exact ``Dim(F, S)`` by enumerating permutations; tiny ``S`` only."""
    best = 0.0
    for perm in itertools.permutations(indices):
        total = 0.0
        for t, i in enumerate(perm):
            total += diversity_nl_naive(fclass, i, perm[:t])
        best = max(best, total)
    return best


def cover_centers(fclass: FiniteFunctionClass, indices, gamma: float) -> np.ndarray:
    """Greedy L-inf ``gamma``-cover of ``F`` over ``indices``; returns center per function.

    Each round takes the function whose ``gamma``-ball holds the most
    still-uncovered functions (lowest index on ties), the classic greedy
    set-cover rule.
    """
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    m = fclass.size
    idx = np.asarray(indices, dtype=np.int64)
    if len(idx) == 0 or gamma >= 1:
        return np.zeros(m, dtype=np.int64)
    sub = _unique_rows(fclass.values[:, idx].T)[0].T
    dist = np.abs(sub[:, None, :] - sub[None, :, :]).max(axis=2)
    within = dist <= gamma
    center = np.full(m, -1, dtype=np.int64)
    uncovered = np.ones(m, dtype=bool)
    while uncovered.any():
        gain = (within & uncovered[None, :]).sum(axis=1)
        c = int(np.argmax(gain))
        newly = within[c] & uncovered
        center[newly] = c
        uncovered &= ~newly
    return center


def covering_number_linf(fclass: FiniteFunctionClass, indices, gamma: float) -> int:
    return int(len(np.unique(cover_centers(fclass, indices, gamma))))


def min_cover_size(fclass: FiniteFunctionClass, indices, gamma: float) -> int:
    """Smallest ``gamma``-cover with centers in ``F``, by exhaustive subset search."""
    idx = np.asarray(indices, dtype=np.int64)
    m = fclass.size
    if len(idx) == 0:
        return 1
    sub = fclass.values[:, idx]
    within = np.abs(sub[:, None, :] - sub[None, :, :]).max(axis=2) <= gamma
    for k in range(1, m + 1):
        for combo in itertools.combinations(range(m), k):
            if within[list(combo)].any(axis=0).all():
                return k
    return m


def k_threshold(delta: float, stage: int, gamma: float, T: int, cover_size: int) -> float:
    """Confidence radius ``K_T(delta, stage, gamma)`` from the covering number."""
    if not (0 < delta <= 1 and stage >= 1 and gamma > 0 and T >= 1 and cover_size >= 1):
        raise ValueError("k_threshold: arguments out of range")
    l = stage
    k2 = (8.0 * math.log(2 * l * (l + 1) * cover_size / delta) + 1.0
          + 2.0 * gamma * T * (8.0 + math.sqrt(8.0 * math.log(8 * l * (l + 1) * T**2 / delta))))
    return math.sqrt(k2)


def epsilon_nonlinear(stage: int, T: int, delta: float, cover_size: int) -> float:
    return 2.0**-stage / k_threshold(delta, stage, 1.0 / T, T, cover_size)


def erm_least_squares(fclass: FiniteFunctionClass, indices, labels) -> int:
    """Index of the class member with the least squared loss on ``(1 + y) / 2``."""
    idx = np.asarray(indices, dtype=np.int64)
    y = np.asarray(labels, dtype=np.float64)
    if len(idx) != len(y):
        raise ValueError("indices and labels differ in length")
    target = 0.5 * (1.0 + y)
    loss = ((fclass.values[:, idx] - target[None, :]) ** 2).sum(axis=1)
    return int(np.argmin(loss))


def erm_zero_one(fclass: FiniteFunctionClass, indices, labels) -> int:
    """Index minimising 0-1 loss of ``sgn(f - 1/2)`` (ties at 1/2 count as +1)."""
    idx = np.asarray(indices, dtype=np.int64)
    y = np.asarray(labels)
    pred = np.where(fclass.values[:, idx] >= 0.5, 1, -1)
    loss = (pred != y[None, :]).sum(axis=1)
    return int(np.argmin(loss))


@dataclass
class NonlinearRunResult(RunResult):
    final_index: int | None = None
    dim_constant: float = 0.0

    def predict_pool(self, fclass: FiniteFunctionClass) -> np.ndarray:
        if self.final_index is None:
            return np.ones(fclass.n_points, dtype=np.int64)
        return np.where(fclass.values[self.final_index] >= 0.5, 1, -1)


def run_nonlinear(n_points: int, delta: float, fclass: FiniteFunctionClass,
                  dim_constant: float | None, label_oracle) -> NonlinearRunResult:
    """Staged greedy querying with the function-class diversity.

    ``label_oracle(indices)`` returns +-1 labels for pool indices. With
    ``dim_constant=None`` the greedy estimate over the whole pool is used in
    the stopping rule.
    """
    if not 0 < delta <= 1:
        raise ValueError("delta must lie in (0, 1]")
    T = int(n_points)
    if fclass.n_points != T:
        raise ValueError("function class table does not match the pool size")
    if dim_constant is None:
        dim_constant = dim_estimate_greedy(fclass)
    if not dim_constant > 0 and T > 0:
        raise ValueError("dim_constant must be positive")
    remaining = np.arange(T, dtype=np.int64)
    stages = []
    conf_idx, conf_lab = [], []
    queried_all = set()
    ell = 0
    while True:
        ell += 1
        cover = covering_number_linf(fclass, remaining, 1.0 / max(T, 1)) if len(remaining) else 1
        eps = epsilon_nonlinear(ell, max(T, 1), delta, cover)
        picks, _, hist = greedy_order(fclass, remaining, eps)
        rest = np.setdiff1d(remaining, picks, assume_unique=True)
        if len(rest):
            cols, _, _ = _group_columns(fclass, rest)
            max_rest = math.sqrt(float(kernels.group_sqdiv(cols, hist.pair_sums).max()))
        else:
            max_rest = 0.0
        if len(picks):
            if queried_all.intersection(picks.tolist()):
                raise RuntimeError("pool point queried twice")
            queried_all.update(picks.tolist())
            y = np.asarray(label_oracle(picks))
            f_hat = erm_least_squares(fclass, picks, y)
            gap = fclass.values[f_hat, rest] - 0.5
            mask = np.abs(gap) > 2.0**-ell
            confident = rest[mask]
            pseudo = np.where(gap[mask] > 0, 1, -1)
        else:
            f_hat = None
            confident = np.zeros(0, dtype=np.int64)
            pseudo = np.zeros(0, dtype=np.int64)
        remaining = rest[~np.isin(rest, confident)] if len(confident) else rest
        stages.append(StageRecord(
            stage_index=ell, threshold=eps, margin_radius=2.0**-ell, queried=picks,
            estimator=f_hat, confident=confident, pseudo_labels=pseudo,
            pool_size_after=len(remaining), max_remaining_diversity=max_rest,
            stage_length_bound=None))
        conf_idx.append(confident)
        conf_lab.append(pseudo)
        if len(remaining) == 0 or dim_constant * 4.0 ** (ell - 1) > len(remaining):
            break
    ci = np.concatenate(conf_idx)
    cl = np.concatenate(conf_lab)
    # no pseudo-labels: fall back to the constant 1/2 guess
    final = erm_zero_one(fclass, ci, cl) if len(ci) else None
    return NonlinearRunResult(
        final_hypothesis=None, stages=stages, stage_count=len(stages),
        label_complexity=int(sum(len(s.queried) for s in stages)),
        separator_fallback_used=False, final_index=final, dim_constant=float(dim_constant),
        leftover=remaining)
