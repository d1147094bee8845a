"""Acceptance checks, each run at its pinned tolerance.

Every test records one PASS/FAIL line (see the terminal summary) before
asserting. The heavy sweeps are session fixtures so the stage-level
invariants can be checked on every run made here.
"""

import math

import numpy as np
import pytest
from scipy import stats

from poolal.batching import run_linear_batched, schedule_batches
from poolal.design import absorb, new_design, stage_length_bound
from poolal.evaluation import excess_risk_mc, passive_baseline, rate_fit
from poolal.linear import run_linear
from poolal.logistic import LogisticConfig, run_logistic
from poolal.nonlinear import (DiversityHistory, FiniteFunctionClass, cover_centers,
                              covering_number_linf, diversity_nl, diversity_nl_naive,
                              min_cover_size, run_nonlinear)
from poolal.synth import LabelOracle, gen_pool_linear, gen_pool_logistic, gen_pool_threshold

SWEEP_T = [2**k for k in range(10, 17)]
SWEEP_SEEDS = range(20)
TARGET_RISK = 0.05


def _bad_pseudo_labels(result, pool):
    idx, lab = result.pseudo_labeled()
    if len(idx) == 0:
        return False
    return bool(np.any(lab != np.where(pool.margins[idx] >= 0, 1, -1)))


# ---------------------------------------------------------------- shared runs

@pytest.fixture(scope="session")
def fidelity_runs():
    """Linear and logistic runs at T = 2000, d = 5, delta = 0.1, alpha = 1, 200 seeds each."""
    out = {"linear": [], "logistic": []}
    for seed in range(200):
        pool, gt = gen_pool_linear(2000, 5, 1.0, seed)
        out["linear"].append((pool, run_linear(pool, 0.1, LabelOracle(pool, gt, seed))))
        pool, gt = gen_pool_logistic(2000, 5, 1.0, seed, R=2.0)
        res = run_logistic(pool, LogisticConfig(2.0, 0.1), LabelOracle(pool, gt, seed))
        out["logistic"].append((pool, res))
    return out


@pytest.fixture(scope="session")
def sweep_runs():
    """``{alpha: {T: [(N_T, excess_risk, L, pool, result), ...]}}`` for the rate sweep."""
    out = {}
    for alpha in (0.0, 1.0):
        by_T = {}
        for T in SWEEP_T:
            cells = []
            for seed in SWEEP_SEEDS:
                pool, gt = gen_pool_linear(T, 5, alpha, seed)
                res = run_linear(pool, 0.1, LabelOracle(pool, gt, seed))
                risk, _ = excess_risk_mc(res.final_hypothesis, gt, n_mc=100_000, seed=seed)
                cells.append((res.label_complexity, risk, res.stage_count, pool, res))
            by_T[T] = cells
        out[alpha] = by_T
    return out


@pytest.fixture(scope="session")
def batched_runs():
    out = []
    for seed in range(50):
        pool, gt = gen_pool_linear(2000, 5, 1.0, seed)
        plain = run_linear(pool, 0.1, LabelOracle(pool, gt, seed))
        for B in (1, 16, 128):
            res, plan = run_linear_batched(pool, 0.1, B, LabelOracle(pool, gt, seed))
            out.append((seed, B, pool, plain, res, plan))
    return out


def _all_point_runs(fidelity_runs, sweep_runs, batched_runs):
    runs = [r for kind in fidelity_runs.values() for r in kind]
    runs += [(c[3], c[4]) for by_T in sweep_runs.values() for cells in by_T.values() for c in cells]
    runs += [(pool, res) for _, _, pool, _, res, _ in batched_runs]
    return runs


# ---------------------------------------------------------------- 1, 2

def test_stage_length_bound(fidelity_runs, sweep_runs, batched_runs, acceptance_report):
    runs = _all_point_runs(fidelity_runs, sweep_runs, batched_runs)
    checked = violations = 0
    for pool, res in runs:
        d = pool.dimension
        for s in res.stages:
            checked += 1
            if s.n_queried > stage_length_bound(d, s.threshold):
                violations += 1
    ok = len(runs) >= 500 and violations == 0
    acceptance_report("01 stage-length bound", ok,
                      f"{len(runs)} runs, {checked} stages, {violations} over the cap")
    assert ok


def _stage_start_pools(T, stages):
    remaining = np.arange(T)
    for s in stages:
        yield s, remaining
        gone = np.concatenate([s.queried, s.confident]).astype(np.int64)
        remaining = np.setdiff1d(remaining, gone, assume_unique=True)


def test_design_exit_invariant(fidelity_runs, sweep_runs, batched_runs, acceptance_report):
    runs = _all_point_runs(fidelity_runs, sweep_runs, batched_runs)
    recorded_bad = dense_bad = stages = 0
    for pool, res in runs:
        X = pool.points
        d = X.shape[1]
        for s, start in _stage_start_pools(len(X), res.stages):
            stages += 1
            if s.max_remaining_diversity > s.threshold:
                recorded_bad += 1
            rest = np.setdiff1d(start, s.queried, assume_unique=True)
            if len(rest) == 0:
                continue
            Q = X[s.queried]
            A = np.eye(d) + Q.T @ Q
            div = np.sqrt(np.einsum("ij,ji->i", X[rest], np.linalg.solve(A, X[rest].T)))
            if div.max() > s.threshold:
                dense_bad += 1
    ok = recorded_bad == 0 and dense_bad == 0
    acceptance_report("02 design exit invariant", ok,
                      f"{stages} stages; recorded max above threshold in {recorded_bad}, "
                      f"dense recomputation above threshold in {dense_bad}")
    assert ok


# ---------------------------------------------------------------- 3

def test_inverse_maintenance(acceptance_report):
    rng = np.random.default_rng(2024)
    d = 20
    state = new_design(d)
    V = rng.standard_normal((10_000, d))
    V /= np.linalg.norm(V, axis=1, keepdims=True)
    for v in V:
        state = absorb(state, v)
    A = np.eye(d) + V.T @ V
    resid = float(np.abs(A @ state.inverse - np.eye(d)).max())
    drift = abs(state.log_det - np.linalg.slogdet(A)[1])
    ok = resid <= 1e-8 and drift <= 1e-6
    acceptance_report("03 inverse maintenance", ok,
                      f"|A A^-1 - I|_max = {resid:.2e} (<= 1e-8), log-det drift = {drift:.2e} (<= 1e-6)")
    assert ok


# ---------------------------------------------------------------- 4

def test_pseudo_label_fidelity(fidelity_runs, acceptance_report):
    frac = {k: np.mean([_bad_pseudo_labels(res, pool) for pool, res in runs])
            for k, runs in fidelity_runs.items()}
    n_pseudo = {k: int(np.median([len(res.pseudo_labeled()[0]) for _, res in runs]))
                for k, runs in fidelity_runs.items()}
    ok = frac["linear"] <= 0.15 and frac["logistic"] <= 0.15
    acceptance_report("04 pseudo-label fidelity", ok,
                      f"runs with a wrong pseudo-label: linear {frac['linear']:.3f}, "
                      f"logistic {frac['logistic']:.3f} (<= 0.15); median pseudo-labels "
                      f"linear {n_pseudo['linear']}, logistic {n_pseudo['logistic']}")
    assert ok


# ---------------------------------------------------------------- 5, 6

def _medians(by_T):
    return [(float(np.median([c[0] for c in by_T[T]])), float(np.median([c[1] for c in by_T[T]])))
            for T in SWEEP_T]


def test_minimax_rate(sweep_runs, acceptance_report):
    fits = {a: rate_fit(_medians(sweep_runs[a])) for a in (0.0, 1.0)}
    s0, s1 = fits[0.0][0], fits[1.0][0]
    ok0 = abs(s0 - (-0.5)) <= 0.15
    ok1 = abs(s1 - (-1.0)) <= 0.2
    acceptance_report("05 minimax rate", ok0 and ok1,
                      f"alpha=0 slope {s0:.3f} (target -0.5 +- 0.15, {'ok' if ok0 else 'miss'}, "
                      f"r2 {fits[0.0][2]:.3f}); alpha=1 slope {s1:.3f} (target -1.0 +- 0.2, "
                      f"{'ok' if ok1 else 'miss'}, r2 {fits[1.0][2]:.3f})")
    assert ok0 and ok1


def test_stage_count_growth(sweep_runs, acceptance_report):
    worst = 0.0
    cell_ok = True
    for by_T in sweep_runs.values():
        for T, cells in by_T.items():
            for c in cells:
                cell_ok &= c[2] <= 2 * math.log2(T)
                worst = max(worst, c[2] / math.log2(T))
    growth = {a: float(np.median([c[2] for c in by_T[2**16]]) - np.median([c[2] for c in by_T[2**10]]))
              for a, by_T in sweep_runs.items()}
    ok = cell_ok and all(g <= 6 for g in growth.values())
    acceptance_report("06 stage-count growth", ok,
                      f"max L / log2 T = {worst:.3f} (<= 2); median L growth 2^10 -> 2^16: "
                      + ", ".join(f"alpha={a:g} {g:+.1f}" for a, g in growth.items()) + " (<= 6)")
    assert ok


# ---------------------------------------------------------------- 7

def _identical(a, b):
    if not (np.array_equal(a.final_hypothesis, b.final_hypothesis)
            and a.label_complexity == b.label_complexity and a.stage_count == b.stage_count):
        return False
    for s, t in zip(a.stages, b.stages):
        if not (s.threshold == t.threshold and np.array_equal(s.queried, t.queried)
                and np.array_equal(s.estimator, t.estimator)
                and np.array_equal(s.confident, t.confident)
                and np.array_equal(s.pseudo_labels, t.pseudo_labels)):
            return False
    return True


def test_batch_wrapper_exactness(batched_runs, acceptance_report):
    same = sum(_identical(plain, res) for _, _, _, plain, res, _ in batched_runs)
    billing = sum(0 <= plan.billed_labels - res.label_complexity <= B * res.stage_count
                  for _, B, _, _, res, plan in batched_runs)
    order = sum(np.array_equal(plan.flatten(), plain.query_order())
                for _, _, _, plain, _, plan in batched_runs)
    split = [len(b) for _, b in schedule_batches([240], 100).batches]
    n = len(batched_runs)
    ok = same == n and billing == n and order == n and split == [100, 100, 40]
    acceptance_report("07 batch wrapper exactness", ok,
                      f"{same}/{n} bit-identical, {billing}/{n} within the billing bound, "
                      f"{order}/{n} plans replay the query order; T=240, B=100 -> {split}")
    assert ok


# ---------------------------------------------------------------- 8

def test_nonlinear_oracle_equivalence(acceptance_report):
    rng = np.random.default_rng(8)
    exact = 0
    for _ in range(200):
        m = int(rng.integers(2, 51))
        T = int(rng.integers(1, 60))
        if rng.random() < 0.5:
            vals = rng.integers(0, 5, (m, T)) / 4.0
        else:
            vals = rng.random((m, T))
        fc = FiniteFunctionClass(vals)
        hist_pts = rng.integers(0, T, int(rng.integers(0, 101))).tolist()
        h = DiversityHistory(m)
        for i in hist_pts:
            h.add(fc, i)
        x = int(rng.integers(0, T))
        exact += diversity_nl(fc, x, h) == diversity_nl_naive(fc, x, hist_pts)
    sound = near_min = covers = 0
    for _ in range(200):
        m = int(rng.integers(1, 13))
        n = int(rng.integers(1, 7))
        gamma = float(rng.uniform(0.02, 0.6))
        fc = FiniteFunctionClass(rng.integers(0, 6, (m, n)) / 5.0)
        centers = cover_centers(fc, range(n), gamma)
        sound += bool(np.all(np.abs(fc.values - fc.values[centers]).max(axis=1) <= gamma))
        size = covering_number_linf(fc, range(n), gamma)
        opt = min_cover_size(fc, range(n), gamma)
        harmonic = sum(1.0 / k for k in range(1, m + 1))
        near_min += opt <= size <= harmonic * opt
        covers += 1
    ok = exact == 200 and sound == covers and near_min == covers
    acceptance_report("08 nonlinear oracle equivalence", ok,
                      f"diversity exact on {exact}/200; covers sound {sound}/{covers}, "
                      f"within greedy factor of the exhaustive minimum {near_min}/{covers}")
    assert ok


# ---------------------------------------------------------------- 9

def test_nonlinear_end_to_end(acceptance_report):
    zero_error = 0
    for seed in range(100):
        pool, gt = gen_pool_threshold(2**16, n_functions=20, seed=seed)
        res = run_nonlinear(len(pool), 0.1, gt.fclass, None, LabelOracle(pool, gt, seed))
        bayes = np.where(gt.fclass.values[gt.fstar_index] >= 0.5, 1, -1)
        zero_error += np.array_equal(res.predict_pool(gt.fclass), bayes)
    bad = 0
    pseudo = []
    for seed in range(100):
        pool, gt = gen_pool_threshold(2**14, n_functions=20, seed=seed, noiseless=False)
        res = run_nonlinear(len(pool), 0.1, gt.fclass, None, LabelOracle(pool, gt, seed))
        idx, lab = res.pseudo_labeled()
        pseudo.append(len(idx))
        bayes = np.where(gt.fclass.values[gt.fstar_index] >= 0.5, 1, -1)
        bad += bool(np.any(lab != bayes[idx]))
    frac = bad / 100
    ok = zero_error == 100 and frac <= 0.15
    acceptance_report("09 nonlinear end to end", ok,
                      f"noiseless zero pool error {zero_error}/100; noisy runs with a wrong "
                      f"pseudo-label {frac:.2f} (<= 0.15), median pseudo-labels {int(np.median(pseudo))}")
    assert ok


# ---------------------------------------------------------------- 10

def _passive_labels_to_target(pool, gt, seed):
    oracle = LabelOracle(pool, gt, seed)
    T = len(pool)
    grid = sorted(set(range(1, 65)) | {int(n) for n in np.unique(np.geomspace(64, T, 40).astype(int))})
    for n in grid:
        w = passive_baseline(pool, n, oracle, seed)
        if excess_risk_mc(w, gt, n_mc=100_000, seed=seed)[0] <= TARGET_RISK:
            return n
    return math.inf


def _active_labels_to_target(pool, res, gt, seed):
    used = 0
    for s in res.stages:
        used += s.n_queried
        if np.any(s.estimator) and excess_risk_mc(s.estimator, gt, n_mc=100_000, seed=seed)[0] <= TARGET_RISK:
            return used
    if excess_risk_mc(res.final_hypothesis, gt, n_mc=100_000, seed=seed)[0] <= TARGET_RISK:
        return res.label_complexity
    return math.inf


def test_active_beats_passive(acceptance_report):
    active, passive = [], []
    for seed in range(20):
        pool, gt = gen_pool_linear(2**14, 5, 1.0, seed)
        res = run_linear(pool, 0.1, LabelOracle(pool, gt, seed))
        active.append(_active_labels_to_target(pool, res, gt, seed))
        passive.append(_passive_labels_to_target(pool, gt, seed))
    med_a, med_p = float(np.median(active)), float(np.median(passive))
    ok = med_a < med_p
    acceptance_report("10 active vs passive", ok,
                      f"median labels to excess risk <= {TARGET_RISK}: active {med_a:g}, passive {med_p:g}")
    assert ok


# ---------------------------------------------------------------- 11

def test_generator_contract(acceptance_report):
    ks = {}
    for alpha in (0.0, 0.5, 1.0, 2.0):
        pool, _ = gen_pool_linear(10_000, 5, alpha, 11)
        cdf = (lambda e: np.clip(e, 0, 1)) if alpha == 0 else (lambda e, a=alpha: np.clip(e, 0, 1) ** a)
        ks[alpha] = stats.kstest(np.abs(pool.margins), cdf).statistic
    pool, gt = gen_pool_linear(5000, 5, 1.0, 3)
    first = LabelOracle(pool, gt, 3)
    ref = first(np.arange(len(pool)))
    persistent = np.array_equal(first(np.arange(len(pool))), ref) and first.query_count == len(pool)
    order_free = True
    for k in range(5):
        perm = np.random.default_rng(k).permutation(len(pool))
        other = LabelOracle(pool, gt, 3)
        got = np.empty(len(pool), dtype=np.int64)
        for chunk in np.array_split(perm, 13):
            got[chunk] = other(chunk)
        order_free &= np.array_equal(got, ref)
    ok = all(v < 0.02 for v in ks.values()) and persistent and order_free
    acceptance_report("11 generator contract", ok,
                      "KS " + ", ".join(f"alpha={a:g} {v:.4f}" for a, v in ks.items())
                      + f" (< 0.02); persistent {persistent}; order independent {order_free}")
    assert ok
