"""Experiment configs, the per-cell driver and CSV output.

A config is a flat ``key = value`` text file; ``#`` starts a comment.
List-valued keys (``T``, ``seeds``) take comma-separated values, and
``seeds`` also accepts a half-open range ``start:stop``. Unknown keys are
rejected.
"""

from __future__ import annotations

import csv
import io
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .batching import run_linear_batched
from .evaluation import excess_risk_mc, passive_baseline, rate_fit, weighted_regret
from .linear import run_linear
from .logistic import LogisticConfig, run_logistic
from .nonlinear import FiniteFunctionClass, run_nonlinear
from .synth import (LINEAR, LOGISTIC, THRESHOLD, GroundTruth, LabelOracle, NoiseSpec, Pool,
                    gen_pool_linear, gen_pool_logistic, gen_pool_threshold, load_pool)

COLUMNS = ("seed", "algorithm", "T", "d", "alpha", "delta", "B", "R", "N_T", "N_TB", "L",
           "weighted_regret", "excess_risk", "excess_risk_se", "fallback_used", "wall_ms")

ALGORITHMS = ("linear", "linear_batched", "logistic", "nonlinear", "passive_baseline")


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


def _bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int_list(text):
    out = []
    for part in text.split(","):
        part = part.strip()
        if ":" in part:
            lo, hi = part.split(":")
            out.extend(range(int(lo), int(hi)))
        elif part:
            out.append(int(part))
    return tuple(out)


def _T_list(text):
    out = []
    for part in text.split(","):
        part = part.strip()
        if part.startswith("2^") or part.startswith("2**"):
            out.append(2 ** int(part.split("^")[-1].split("**")[-1]))
        elif part:
            out.append(int(part))
    return tuple(out)


_PARSERS = {
    "algorithm": str.strip,
    "T": _T_list,
    "d": int,
    "seeds": _int_list,
    "alpha": float,
    "truncation": float,
    "delta": float,
    "B": int,
    "R": float,
    "pool": lambda s: s.strip(),
    "fclass": lambda s: s.strip(),
    "noiseless": _bool,
    "n_functions": int,
    "mc_samples": int,
    "passive_labels": int,
    "output": lambda s: s.strip(),
    "timing": _bool,
    "workers": int,
}


@dataclass(frozen=True)
class ExperimentConfig:
    algorithm: str
    T: tuple = ()
    d: int = 5
    seeds: tuple = (0,)
    alpha: float | None = None
    truncation: float = 1.0
    delta: float = 0.1
    B: int | None = None
    R: float | None = None
    pool: str | None = None
    fclass: str | None = None
    noiseless: bool = True
    n_functions: int = 20
    mc_samples: int = 100_000
    passive_labels: int | None = None
    output: str = "-"
    timing: bool = False
    workers: int = 1
    base_dir: str = field(default=".", compare=False)

    def __post_init__(self):
        self.validate()

    def validate(self):
        a = self.algorithm
        if a not in ALGORITHMS:
            raise ConfigError(f"algorithm must be one of {', '.join(ALGORITHMS)}; got {a!r}")
        if not self.seeds:
            raise ConfigError("seeds must not be empty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct")
        if self.pool is None and not self.T:
            raise ConfigError("either T or pool is required")
        if self.pool is not None and self.T:
            raise ConfigError("T and pool are mutually exclusive")
        if any(t < 1 for t in self.T):
            raise ConfigError("T values must be positive")
        if not 0 < self.delta <= 1:
            raise ConfigError("delta must lie in (0, 1]")
        if self.mc_samples < 1000:
            raise ConfigError("mc_samples must be at least 1000")
        if self.workers < 1:
            raise ConfigError("workers must be positive")
        if not 0 < self.truncation <= 1:
            raise ConfigError("truncation must lie in (0, 1]")
        if a == "nonlinear":
            if self.fclass is not None and self.pool is None:
                raise ConfigError("fclass needs the matching pool file")
            if self.n_functions < 2:
                raise ConfigError("n_functions must be at least 2")
        else:
            if self.fclass is not None:
                raise ConfigError("fclass applies to the nonlinear algorithm only")
            if self.pool is None and self.alpha is None:
                raise ConfigError("alpha is required")
            if self.alpha is not None and self.alpha < 0:
                raise ConfigError("alpha must be >= 0")
            if self.pool is None and self.d < 2:
                raise ConfigError("d must be at least 2")
        if a == "linear_batched":
            if self.B is None:
                raise ConfigError("B is required for linear_batched")
            if self.B < 1:
                raise ConfigError("B must be positive")
        elif self.B is not None:
            raise ConfigError("B applies to linear_batched only")
        if a == "logistic":
            if self.R is None:
                raise ConfigError("R is required for logistic")
            if self.R < 1:
                raise ConfigError("R must be >= 1")
        elif self.R is not None:
            raise ConfigError("R applies to logistic only")
        if a == "passive_baseline":
            if self.passive_labels is None or self.passive_labels < 0:
                raise ConfigError("passive_labels (>= 0) is required for passive_baseline")
        elif self.passive_labels is not None:
            raise ConfigError("passive_labels applies to passive_baseline only")

    def resolve(self, path):
        return str(Path(self.base_dir) / path)

    def cells(self):
        """``(seed, T)`` pairs in output order; ``T`` is None for pool files."""
        Ts = self.T if self.T else (None,)
        return [(s, t) for t in Ts for s in self.seeds]


def parse_config(text: str, base_dir=".") -> ExperimentConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (p.strip() for p in line.split("=", 1))
        if key not in _PARSERS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        try:
            values[key] = _PARSERS[key](value)
        except ValueError as err:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {err}") from None
    if "algorithm" not in values:
        raise ConfigError("algorithm is required")
    return ExperimentConfig(base_dir=str(base_dir), **values)


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from None
    return parse_config(text, base_dir=p.parent)


@dataclass
class CellResult:
    """One ``(seed, T)`` cell: the CSV row plus the stage trace."""

    row: dict
    stage_lengths: list
    result: object = field(default=None, repr=False)


def _point_instance(cfg: ExperimentConfig, seed, T):
    if cfg.pool is not None:
        try:
            pool, w_star = load_pool(cfg.resolve(cfg.pool))
        except (OSError, ValueError) as err:
            raise ConfigError(str(err)) from None
        kind = pool.model_kind
        want = LOGISTIC if cfg.algorithm == "logistic" else LINEAR
        if kind != want:
            raise ConfigError(f"pool file holds a {kind} pool; {cfg.algorithm} needs {want}")
        alpha = pool.alpha if cfg.alpha is None else cfg.alpha
        wn = float(np.linalg.norm(w_star))
        eps0 = math.tanh(wn / 2) if kind == LOGISTIC else wn
        gt = GroundTruth(kind, w_star, NoiseSpec(alpha=alpha, truncation=cfg.truncation),
                         radius_bound=cfg.R, epsilon0=eps0)
        return pool, gt
    if cfg.algorithm == "logistic":
        return gen_pool_logistic(T, cfg.d, cfg.alpha, seed, R=cfg.R, truncation=cfg.truncation)
    return gen_pool_linear(T, cfg.d, cfg.alpha, seed, truncation=cfg.truncation)


def _threshold_instance(cfg: ExperimentConfig, seed, T):
    if cfg.pool is None:
        return gen_pool_threshold(T, n_functions=cfg.n_functions, seed=seed, noiseless=cfg.noiseless)
    try:
        pool, _ = load_pool(cfg.resolve(cfg.pool))
        fclass = FiniteFunctionClass.load(cfg.resolve(cfg.fclass)) if cfg.fclass else None
    except (OSError, ValueError) as err:
        raise ConfigError(str(err)) from None
    if fclass is None:
        raise ConfigError("nonlinear runs on a pool file need its fclass file")
    if fclass.n_points != len(pool):
        raise ConfigError("fclass and pool sizes differ")
    # the hidden margin column is f*(x) - 1/2, which identifies f* in the class
    hits = np.flatnonzero(np.all(np.abs(fclass.values - 0.5 - pool.margins[None, :]) <= 1e-12, axis=1))
    if len(hits) == 0:
        raise ConfigError("no function in the class matches the pool's margins")
    pool = Pool(pool.points, pool.margins, seed=pool.seed, alpha=pool.alpha, model_kind=THRESHOLD)
    gt = GroundTruth(THRESHOLD, np.zeros(1), NoiseSpec(alpha=pool.alpha), fclass=fclass,
                     fstar_index=int(hits[0]), noiseless=cfg.noiseless)
    return pool, gt


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def run_cell(cfg: ExperimentConfig, seed: int, T: int | None) -> CellResult:
    """Run one ``(seed, T)`` cell. Raises ``SolverError`` from the logistic solver."""
    start = time.perf_counter()
    a = cfg.algorithm
    N_TB = None
    fallback = False
    if a == "nonlinear":
        pool, gt = _threshold_instance(cfg, seed, T)
        oracle = LabelOracle(pool, gt, seed)
        res = run_nonlinear(len(pool), cfg.delta, gt.fclass, None, oracle)
        pred = res.predict_pool(gt.fclass)
        regret = weighted_regret(pool, pred, gt)
        fstar = gt.fclass.values[gt.fstar_index]
        loss = (pred != np.where(fstar >= 0.5, 1, -1)) * np.abs(2 * fstar - 1)
        risk = float(loss.mean())
        se = float(loss.std(ddof=1) / math.sqrt(len(loss))) if len(loss) > 1 else 0.0
        N_T, L, stage_lengths = res.label_complexity, res.stage_count, res.stage_lengths
        alpha = pool.alpha
        d = 1
    else:
        pool, gt = _point_instance(cfg, seed, T)
        oracle = LabelOracle(pool, gt, seed)
        if a == "passive_baseline":
            if cfg.passive_labels > len(pool):
                raise ConfigError("passive_labels exceeds the pool size")
            w = passive_baseline(pool, cfg.passive_labels, oracle, seed)
            res = None
            N_T, L, stage_lengths = cfg.passive_labels, 1, [cfg.passive_labels]
        else:
            if a == "linear":
                res = run_linear(pool, cfg.delta, oracle)
            elif a == "linear_batched":
                res, plan = run_linear_batched(pool, cfg.delta, cfg.B, oracle)
                N_TB = plan.billed_labels
            else:
                res = run_logistic(pool, LogisticConfig(cfg.R, cfg.delta), oracle)
            w = res.final_hypothesis
            fallback = res.separator_fallback_used
            N_T, L, stage_lengths = res.label_complexity, res.stage_count, res.stage_lengths
        regret = weighted_regret(pool, w, gt)
        risk, se = excess_risk_mc(w, gt, n_mc=cfg.mc_samples, seed=seed)
        alpha = gt.noise.alpha
        d = pool.dimension
    wall = (time.perf_counter() - start) * 1000.0 if cfg.timing else 0.0
    row = {
        "seed": seed, "algorithm": a, "T": len(pool), "d": d, "alpha": alpha, "delta": cfg.delta,
        "B": cfg.B, "R": cfg.R, "N_T": N_T, "N_TB": N_TB, "L": L, "weighted_regret": regret,
        "excess_risk": risk, "excess_risk_se": se, "fallback_used": fallback,
        "wall_ms": round(wall, 3),
    }
    return CellResult(row, list(stage_lengths), res)


def _cell_row(args):
    cfg, seed, T = args
    return run_cell(cfg, seed, T).row


def run_experiment(cfg: ExperimentConfig, cells=None) -> list[dict]:
    """Rows for every cell, in cell order regardless of how they were scheduled."""
    cells = cfg.cells() if cells is None else cells
    jobs = [(cfg, s, t) for s, t in cells]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
            return list(ex.map(_cell_row, jobs))
    return [_cell_row(j) for j in jobs]


def format_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in COLUMNS])
    return buf.getvalue()


def write_csv(rows, output) -> None:
    text = format_csv(rows)
    if output in (None, "-"):
        sys.stdout.write(text)
        return
    with open(output, "w", newline="\n") as fh:
        fh.write(text)


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != COLUMNS:
            raise ValueError(f"{path}: header does not match the result columns")
        return list(reader)


@dataclass
class RateReport:
    alpha: float
    n_points: int
    slope: float
    intercept: float
    r2: float
    medians: list  # (T, median N_T, median excess risk)


def ratecheck(rows, alpha: float, algorithm: str | None = None) -> RateReport:
    """``rate_fit`` on per-``T`` medians of ``(N_T, excess_risk)`` for one ``alpha``."""
    by_T = {}
    for r in rows:
        if not math.isclose(float(r["alpha"]), alpha, rel_tol=0, abs_tol=1e-12):
            continue
        if algorithm is not None and r["algorithm"] != algorithm:
            continue
        by_T.setdefault(int(r["T"]), []).append((float(r["N_T"]), float(r["excess_risk"])))
    med = [(T, float(np.median([p[0] for p in v])), float(np.median([p[1] for p in v])))
           for T, v in sorted(by_T.items())]
    if len(med) < 3:
        raise ValueError(f"need at least three T values at alpha={alpha}, found {len(med)}")
    slope, icpt, r2 = rate_fit([(n, e) for _, n, e in med])
    return RateReport(alpha, len(med), slope, icpt, r2, med)


def single_cell(cfg: ExperimentConfig) -> ExperimentConfig:
    """Check that ``cfg`` names exactly one cell (for the ``run`` subcommand)."""
    if len(cfg.cells()) != 1:
        raise ConfigError("run takes a single cell: give one seed and at most one T")
    return cfg


__all__ = ["ALGORITHMS", "COLUMNS", "CellResult", "ConfigError", "ExperimentConfig", "RateReport",
           "format_csv", "load_config", "parse_config", "ratecheck", "read_csv", "run_cell",
           "run_experiment", "single_cell", "write_csv"]
