"""Synthetic pools with a controllable Tsybakov exponent, plus a persistent label oracle.

Every generator draws the margin magnitude ``u`` from the law ``P(u <= e) = e**alpha``
(rescaled to the attainable range), so the low-noise condition holds with
equality and ``alpha`` can be read back from the data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

LINEAR = "linear_halfstep"
LOGISTIC = "logistic"
THRESHOLD = "threshold"

_STREAM_POOL = 0
_STREAM_LABELS = 1
_STREAM_FSTAR = 2


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), stream])))


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=np.float64)))


@dataclass(frozen=True)
class NoiseSpec:
    alpha: float
    epsilon0: float = 1.0
    truncation: float = 1.0
    c: float = 1.0

    def __post_init__(self):
        if not self.alpha >= 0:
            raise ValueError("alpha must be >= 0")
        if not 0 < self.truncation <= 1:
            raise ValueError("truncation must lie in (0, 1]")


@dataclass
class GroundTruth:
    """Generator-side truth: the model kind, ``w*`` and derived quantities."""

    model_kind: str
    w_star: np.ndarray
    noise: NoiseSpec
    radius_bound: float | None = None
    epsilon0: float = 1.0
    # threshold model only: class values over the pool and the true row
    fclass: object = None
    fstar_index: int | None = None
    noiseless: bool = False

    def margin(self, X) -> np.ndarray:
        return np.asarray(X, dtype=np.float64) @ self.w_star

    def mean_from_margin(self, m) -> np.ndarray:
        m = np.asarray(m, dtype=np.float64)
        if self.model_kind == LINEAR:
            return 0.5 * (1.0 + m)
        if self.model_kind == LOGISTIC:
            return sigmoid(m)
        raise ValueError(f"no margin link for model kind {self.model_kind!r}")

    def conditional_mean(self, X) -> np.ndarray:
        """``f*(x) = P(y = +1 | x)``."""
        return self.mean_from_margin(self.margin(X))

    def label_probability(self, pool, index) -> np.ndarray:
        """P(y = +1) for the given pool indices, honouring ``noiseless``."""
        if self.model_kind == THRESHOLD:
            f = self.fclass.values[self.fstar_index, index]
        else:
            # stored per-index margins keep the value independent of batching
            f = self.mean_from_margin(np.asarray(pool.margins)[index])
        if self.noiseless:
            return np.where(f >= 0.5, 1.0, 0.0)
        return f


@dataclass
class Pool:
    points: np.ndarray
    margins: np.ndarray
    seed: int = 0
    alpha: float = 0.0
    model_kind: str = LINEAR

    def __len__(self):
        return len(self.points)

    @property
    def dimension(self) -> int:
        return self.points.shape[1]


def margin_magnitudes(n, alpha, scale, rng, truncation=1.0) -> np.ndarray:
    """Draw ``n`` magnitudes on ``[0, scale]`` with ``P(u <= e * scale) = e**alpha``.

    With ``truncation < 1`` the law holds only on ``[0, truncation * scale]``;
    the remaining mass ``1 - truncation**alpha`` is uniform above it.
    """
    U = rng.random(n)
    if alpha == 0:
        u = U
    else:
        u = U ** (1.0 / alpha)
    if truncation < 1:
        head = truncation**alpha if alpha > 0 else truncation
        tail = U >= head
        u = np.where(tail, truncation + (1 - truncation) * (U - head) / (1 - head), u)
    return scale * u


def _orthonormal_complement(w: np.ndarray) -> np.ndarray:
    d = len(w)
    q, _ = np.linalg.qr(np.column_stack([w, np.eye(d)]))
    return q[:, 1:d]


def _assemble(w_star, margins, rng):
    """Points ``x = m w/|w|^2 + v`` with ``v`` uniform in the complementary ball."""
    d = len(w_star)
    n = len(margins)
    wn2 = float(w_star @ w_star)
    along = np.outer(margins / wn2, w_star)
    along_norm = np.abs(margins) / math.sqrt(wn2)
    basis = _orthonormal_complement(w_star)
    g = rng.standard_normal((n, d - 1))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = rng.random(n) ** (1.0 / (d - 1))
    radius = np.sqrt(np.maximum(1.0 - along_norm**2, 0.0)) * 0.999
    v = (g * (r * radius)[:, None]) @ basis.T
    return along + v


def default_w_star(d: int, seed: int, norm: float = 1.0) -> np.ndarray:
    w = _rng(seed, _STREAM_FSTAR).standard_normal(d)
    return norm * w / np.linalg.norm(w)


def gen_pool_linear(T, d, alpha, seed, w_star=None, truncation=1.0):
    """Pool for ``f*(x) = (1 + <w*, x>) / 2`` with margin-magnitude CDF ``e**alpha``.

    Margins are ``s * u`` with ``u`` on ``[0, |w*|]``, so ``epsilon0 = |w*|``
    (1 for the default unit ``w*``).
    """
    if d < 2:
        raise ValueError("d must be >= 2")
    if w_star is None:
        w_star = default_w_star(d, seed)
    w_star = np.asarray(w_star, dtype=np.float64)
    wn = float(np.linalg.norm(w_star))
    if wn == 0:
        raise ValueError("w_star must be nonzero")
    if wn > 1 + 1e-12:
        raise ValueError("linear model needs |w*| <= 1")
    noise = NoiseSpec(alpha=alpha, truncation=truncation)
    rng = _rng(seed, _STREAM_POOL)
    u = margin_magnitudes(T, alpha, wn, rng, truncation)
    s = np.where(rng.random(T) < 0.5, -1.0, 1.0)
    m = s * u
    X = _assemble(w_star, m, rng)
    gt = GroundTruth(LINEAR, w_star, noise, epsilon0=wn)
    return Pool(X, X @ w_star, seed=seed, alpha=alpha, model_kind=LINEAR), gt


def gen_pool_logistic(T, d, alpha, seed, w_star=None, R=None, truncation=1.0):
    """Pool for ``f*(x) = sigma(<w*, x>)``.

    The score ``u = |2 f*(x) - 1|`` follows ``(e / u_max)**alpha`` on ``[0, u_max]``
    with ``u_max = tanh(|w*| / 2)``; margins are ``2 artanh(u)`` so the largest
    one equals ``|w*|`` and every point stays in the unit ball.
    """
    if d < 2:
        raise ValueError("d must be >= 2")
    if w_star is None:
        w_star = default_w_star(d, seed, norm=1.0 if R is None else float(R))
    w_star = np.asarray(w_star, dtype=np.float64)
    wn = float(np.linalg.norm(w_star))
    R = wn if R is None else float(R)
    if not 1 <= wn <= R + 1e-12:
        raise ValueError("logistic model needs 1 <= |w*| <= R")
    noise = NoiseSpec(alpha=alpha, truncation=truncation)
    u_max = math.tanh(wn / 2)
    rng = _rng(seed, _STREAM_POOL)
    u = margin_magnitudes(T, alpha, u_max, rng, truncation)
    u = np.minimum(u, u_max)
    m = 2.0 * np.arctanh(u)
    m = np.minimum(m, wn)
    s = np.where(rng.random(T) < 0.5, -1.0, 1.0)
    X = _assemble(w_star, s * m, rng)
    gt = GroundTruth(LOGISTIC, w_star, noise, radius_bound=R, epsilon0=u_max)
    return Pool(X, X @ w_star, seed=seed, alpha=alpha, model_kind=LOGISTIC), gt


class LabelOracle:
    """Persistent labels: each pool index has one fixed draw, revealed on first query.

    The uniform used for index ``i`` is the ``i``-th output of a Philox stream
    keyed on the seed, so labels do not depend on query order.
    """

    def __init__(self, pool: Pool, ground_truth: GroundTruth, seed: int):
        self.pool = pool
        self.ground_truth = ground_truth
        self.seed = int(seed)
        self._uniforms = None
        self._labels: dict[int, int] = {}

    @property
    def query_count(self) -> int:
        return len(self._labels)

    def _uniform(self, index):
        if self._uniforms is None:
            self._uniforms = _rng(self.seed, _STREAM_LABELS).random(len(self.pool))
        return self._uniforms[index]

    def label(self, index: int) -> int:
        if not 0 <= index < len(self.pool):
            raise IndexError(f"pool index {index} out of range")
        index = int(index)
        y = self._labels.get(index)
        if y is None:
            p = float(self.ground_truth.label_probability(self.pool, np.array([index]))[0])
            y = 1 if self._uniform(index) < p else -1
            self._labels[index] = y
        return y

    def labels(self, indices) -> np.ndarray:
        idx = np.asarray(indices, dtype=np.int64).ravel()
        if len(idx) and (idx.min() < 0 or idx.max() >= len(self.pool)):
            raise IndexError("pool index out of range")
        fresh = np.unique(np.fromiter((i for i in idx.tolist() if i not in self._labels),
                                      dtype=np.int64))
        if len(fresh):
            p = np.asarray(self.ground_truth.label_probability(self.pool, fresh), dtype=np.float64)
            y = np.where(self._uniform(fresh) < p, 1, -1)
            self._labels.update(zip(fresh.tolist(), y.tolist()))
        return np.array([self._labels[i] for i in idx.tolist()], dtype=np.int64)

    __call__ = labels


def draw_label(oracle: LabelOracle, ground_truth: GroundTruth, pool: Pool, index: int) -> int:
    if oracle.ground_truth is not ground_truth or oracle.pool is not pool:
        raise ValueError("oracle is bound to a different pool or ground truth")
    return oracle.label(index)


def bayes_predict(ground_truth: GroundTruth, x) -> np.ndarray:
    """``sgn(f*(x) - 1/2)`` with ties at exactly 1/2 sent to +1."""
    m = ground_truth.margin(np.atleast_2d(x))
    return np.where(m >= 0, 1, -1)


# ---------------------------------------------------------------------------
# one-dimensional threshold pools for the finite-class experiments


def gen_pool_threshold(T, n_functions=20, alpha=None, seed=0, grid=200, noiseless=True,
                       low=0.1, high=0.9, slope=2.0):
    """1-D pool on a uniform grid with a class of threshold functions.

    With ``noiseless=True`` the class holds step functions taking ``low`` or
    ``high`` and labels are the Bayes labels. Otherwise the class holds ramps
    ``clip(1/2 + slope (x - theta), low, high)``; under uniform inputs the
    mass near the boundary is linear, i.e. the exponent-1 low-noise law
    with constant ``1/slope``, and labels are drawn from ``f*``.
    """
    from .nonlinear import FiniteFunctionClass

    rng = _rng(seed, _STREAM_POOL)
    levels = (np.arange(grid) + 0.5) / grid
    z = levels[rng.integers(0, grid, T)]
    thetas = np.arange(n_functions) / n_functions
    if noiseless:
        values = np.where(z[None, :] >= thetas[:, None], high, low)
    else:
        values = np.clip(0.5 + slope * (z[None, :] - thetas[:, None]), low, high)
    fclass = FiniteFunctionClass(values)
    fstar = int(_rng(seed, _STREAM_FSTAR).integers(1, n_functions))
    m = values[fstar] - 0.5
    pool = Pool(z[:, None], m, seed=seed, alpha=1.0 if alpha is None else alpha, model_kind=THRESHOLD)
    gt = GroundTruth(THRESHOLD, np.zeros(1), NoiseSpec(alpha=pool.alpha), fclass=fclass,
                     fstar_index=fstar, noiseless=noiseless)
    return pool, gt


# ---------------------------------------------------------------------------
# pool files

POOL_MAGIC = "poolal-pool"


def save_pool(path, pool: Pool) -> None:
    T, d = pool.points.shape
    with open(path, "w", newline="\n") as fh:
        fh.write(f"{POOL_MAGIC} v1 {T} {d} {pool.model_kind} {pool.alpha!r} {pool.seed}\n")
        for row, m in zip(pool.points, pool.margins):
            fh.write(" ".join(repr(float(v)) for v in row) + " " + repr(float(m)) + "\n")


def load_pool(path):
    """Read a pool file. Returns ``(pool, w_star)``.

    ``w_star`` is recovered from the hidden margin column by least squares.
    """
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 7 or header[0] != POOL_MAGIC or header[1] != "v1":
            raise ValueError(f"{path}: not a {POOL_MAGIC} v1 file")
        T, d = int(header[2]), int(header[3])
        kind, alpha, seed = header[4], float(header[5]), int(header[6])
        data = np.loadtxt(fh, ndmin=2) if T else np.zeros((0, d + 1))
    if data.shape != (T, d + 1):
        raise ValueError(f"{path}: expected {T} rows of {d + 1} values, got {data.shape}")
    X, m = data[:, :d].copy(), data[:, d].copy()
    w_star = np.linalg.lstsq(X, m, rcond=None)[0] if T else np.zeros(d)
    return Pool(X, m, seed=seed, alpha=alpha, model_kind=kind), w_star
