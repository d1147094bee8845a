"""Staged active learning for the logistic model ``f*(x) = sigma(<w*, x>)``.

Same stage structure as the linear algorithm, with margin radius
``R_l = R 2^-l`` and a constrained, regularised logistic fit per stage::

    min_w  sum_t log(1 + exp(-y_t <w, x_t>)) + (1/8) exp(-4 R_l) |w|^2
    s.t.   max_t |<w, x_t>| <= 2 R_{l-1}
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .linear import RunResult, staged_run


class SolverError(RuntimeError):
    """The constrained logistic solver did not reach its tolerance."""

    def __init__(self, message, residual=None, stage=None):
        super().__init__(message)
        self.residual = residual
        self.stage = stage


@dataclass
class SolverOptions:
    max_iterations: int = 2000
    gradient_tolerance: float = 1e-9
    constraint_tolerance: float = 1e-9


@dataclass
class LogisticConfig:
    radius_bound: float
    confidence: float
    solver: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        if not self.radius_bound >= 1:
            raise ValueError("radius bound R must be >= 1")
        if not 0 < self.confidence <= 1:
            raise ValueError("confidence must lie in (0, 1]")
        s = self.solver
        if min(s.gradient_tolerance, s.constraint_tolerance) <= 0 or s.max_iterations < 1:
            raise ValueError("solver tolerances must be positive")


def epsilon_logistic(stage: int, R: float, d: int, delta: float) -> float:
    if stage < 1 or R < 1 or d < 1 or not 0 < delta <= 1:
        raise ValueError("epsilon_logistic: arguments out of range")
    l = stage
    Rl = R * 2.0**-l
    root = math.sqrt(d * math.log(2 * d * l * (l + 1) / delta))
    return Rl / (16.0 * math.exp(8 * Rl) * root + 4.0 * R * math.exp(4 * Rl))


def _softplus_neg(a):
    """``log(1 + exp(-a))`` without overflow."""
    return np.logaddexp(0.0, -a)


def regulariser_weight(R_l: float) -> float:
    return 0.125 * math.exp(-4.0 * R_l)


def logistic_objective(w, X, y, R_l) -> float:
    X = np.asarray(X, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    a = np.asarray(y, dtype=np.float64) * (X @ w) if len(X) else np.zeros(0)
    return float(_softplus_neg(a).sum() + regulariser_weight(R_l) * (w @ w))


def logistic_gradient(w, X, y, R_l) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    a = y * (X @ w)
    # d/da log(1+e^-a) = -sigma(-a)
    s = 0.5 * (1.0 - np.tanh(0.5 * a))
    return -(X.T @ (y * s)) + 2.0 * regulariser_weight(R_l) * w


def _hessian(z, Z, y, lam):
    a = y * (Z @ z)
    p = 0.5 * (1.0 - np.tanh(0.5 * a))
    return (Z.T * (p * (1 - p))) @ Z + 2.0 * lam * np.eye(Z.shape[1])


def solve_constrained_logistic(X, y, R_l: float, box_radius: float,
                               options: SolverOptions | None = None) -> np.ndarray:
    """Minimise the regularised logistic loss subject to ``|<w, x_t>| <= box_radius``.

    The problem is solved in an orthonormal basis of ``span(X)``, so the
    returned ``w`` has no component outside it. If the unconstrained optimum
    (found by Newton's method) is feasible it is returned directly; otherwise a
    log-barrier interior-point method runs from the origin and stops once the
    duality gap ``2n / t`` is below ``gradient_tolerance (1 + |f|)``.

    Raises
    ------
    SolverError
        When the duality gap is still above tolerance after ``max_iterations``
        Newton steps of the barrier method.
    """
    opts = options or SolverOptions()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(X) == 0:
        raise ValueError("solve_constrained_logistic needs at least one point")
    if not box_radius > 0:
        raise ValueError("box_radius must be positive")
    d = X.shape[1]
    U, sv, _ = np.linalg.svd(X.T, full_matrices=False)
    rank = int((sv > sv.max() * 1e-12).sum()) if sv.size and sv.max() > 0 else 0
    if rank == 0:
        return np.zeros(d)
    U = U[:, :rank]
    Z = X @ U
    lam = regulariser_weight(R_l)

    def f(z):
        return float(_softplus_neg(y * (Z @ z)).sum() + lam * (z @ z))

    def grad(z):
        s = 0.5 * (1.0 - np.tanh(0.5 * y * (Z @ z)))
        return -(Z.T @ (y * s)) + 2.0 * lam * z

    def feasible(z, slack=0.0):
        return bool(np.max(np.abs(Z @ z)) <= box_radius + slack)

    # Newton on the strongly convex unconstrained problem
    z = np.zeros(rank)
    for _ in range(200):
        g = grad(z)
        if np.linalg.norm(g) <= opts.gradient_tolerance * (1.0 + abs(f(z))):
            break
        step = np.linalg.solve(_hessian(z, Z, y, lam), g)
        t, fz = 1.0, f(z)
        while f(z - t * step) > fz - 0.25 * t * (g @ step) and t > 1e-12:
            t *= 0.5
        z = z - t * step
    if feasible(z, opts.constraint_tolerance) and \
            np.linalg.norm(grad(z)) <= opts.gradient_tolerance * (1.0 + abs(f(z))):
        return U @ z

    # log-barrier interior point from the (strictly feasible) origin
    m = 2 * len(Z)
    bound = float(box_radius)
    z = np.zeros(rank)
    t = max(1.0, m / (1.0 + f(z)))
    gap = m / t
    steps = 0

    def barrier_parts(z):
        s = Z @ z
        return bound + s, bound - s

    while True:
        for _ in range(100):
            lo, hi = barrier_parts(z)
            g = t * grad(z) + Z.T @ (1.0 / hi - 1.0 / lo)
            H = t * _hessian(z, Z, y, lam) + (Z.T * (1.0 / hi**2 + 1.0 / lo**2)) @ Z
            step = np.linalg.solve(H, g)
            decrement = float(g @ step)
            if decrement <= 1e-12:
                break
            steps += 1
            if steps > opts.max_iterations:
                raise SolverError(f"interior point did not converge (gap {gap:.3e})", residual=gap)
            ds = Z @ step
            # largest step keeping every slab strictly satisfied
            with np.errstate(divide="ignore"):
                room = np.where(ds > 0, lo / np.where(ds > 0, ds, 1.0),
                                np.where(ds < 0, hi / np.where(ds < 0, -ds, 1.0), np.inf))
            r = 1.0 if room.size == 0 else min(1.0, 0.99 * float(room.min()))
            phi0 = t * f(z) - np.log(hi).sum() - np.log(lo).sum()
            while r > 1e-14:
                z_new = z - r * step
                lo_n, hi_n = barrier_parts(z_new)
                if lo_n.min() > 0 and hi_n.min() > 0:
                    phi = t * f(z_new) - np.log(hi_n).sum() - np.log(lo_n).sum()
                    if phi <= phi0 - 0.25 * r * decrement:
                        break
                r *= 0.5
            else:
                break
            z = z_new
        gap = m / t
        if gap <= opts.gradient_tolerance * (1.0 + abs(f(z))):
            break
        t *= 20.0
    if not feasible(z, opts.constraint_tolerance):
        raise SolverError("solution violates the box constraint", residual=gap)
    return U @ z


def run_logistic(pool, config: LogisticConfig, label_oracle) -> RunResult:
    X = np.asarray(getattr(pool, "points", pool), dtype=np.float64)
    T, d = X.shape
    R, delta = float(config.radius_bound), float(config.confidence)

    def estimate(ell, state, Xq, y):
        try:
            return solve_constrained_logistic(Xq, y, R * 2.0**-ell, 2.0 * R * 2.0 ** -(ell - 1),
                                              config.solver)
        except SolverError as err:
            err.stage = ell
            raise

    return staged_run(
        X, label_oracle,
        threshold_fn=lambda l: epsilon_logistic(l, R, d, delta),
        radius_fn=lambda l: R * 2.0**-l,
        estimate_fn=estimate,
        stop_fn=lambda l, n: n == 0 or d / (2 * R * 2.0**-l) > 2 * R * 2.0**-l * n,
    )
