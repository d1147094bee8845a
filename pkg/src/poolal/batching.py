"""Constant-batch-size wrapper around the staged algorithms.

A stage of length ``T_l >= B`` is split into ``ceil(T_l / B)`` interactions
of ``B`` labels (the last may be short); a stage with ``T_l < B`` is a
single interaction that does not fill the budget. The model is only
updated at the end of each original stage, so the hypothesis is the one
the unbatched run produces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .linear import RunResult, run_linear
from .logistic import LogisticConfig, run_logistic


@dataclass
class BatchPlan:
    batch_size: int
    batches: list  # (stage_index, ndarray of pool indices)
    billed_labels: int
    update_after: list  # position in ``batches`` after which the model is refit

    def flatten(self) -> np.ndarray:
        if not self.batches:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate([np.asarray(b, dtype=np.int64) for _, b in self.batches])

    @property
    def n_interactions(self) -> int:
        return len(self.batches)


def _check_batch_size(B):
    if int(B) != B or B < 1:
        raise ValueError(f"batch size must be a positive integer, got {B!r}")
    return int(B)


def billed_label_complexity(stage_lengths, B) -> int:
    B = _check_batch_size(B)
    total = 0
    for t in stage_lengths:
        total += B * math.ceil(t / B) if t >= B else t
    return total


def schedule_batches(stage_lengths, B, queried=None) -> BatchPlan:
    """Split each stage into batches of ``B``.

    ``queried`` optionally gives each stage's query order; without it the
    slices are positions ``0..T_l-1`` within the stage.
    """
    B = _check_batch_size(B)
    batches = []
    updates = []
    for s, t in enumerate(stage_lengths):
        order = np.arange(t) if queried is None else np.asarray(queried[s], dtype=np.int64)
        if len(order) != t:
            raise ValueError("stage length does not match its query list")
        for start in range(0, t, B):
            batches.append((s + 1, order[start:start + B]))
        if t:
            updates.append(len(batches) - 1)
    return BatchPlan(B, batches, billed_label_complexity(stage_lengths, B), updates)


def plan_for(result: RunResult, B) -> BatchPlan:
    return schedule_batches(result.stage_lengths, B, [s.queried for s in result.stages])


class BatchedOracle:
    """Forwards label requests to ``oracle`` in chunks of at most ``B`` indices.

    Every forwarded chunk is one interaction with the labeler and is logged.
    """

    def __init__(self, oracle, B):
        self.oracle = oracle
        self.B = _check_batch_size(B)
        self.interactions = []

    def __call__(self, indices):
        indices = np.asarray(indices, dtype=np.int64)
        out = []
        for start in range(0, len(indices), self.B):
            chunk = indices[start:start + self.B]
            self.interactions.append(chunk)
            out.append(np.asarray(self.oracle(chunk)))
        return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


def _batched(run, B, label_oracle):
    wrapped = BatchedOracle(label_oracle, B)
    result = run(wrapped)
    plan = plan_for(result, B)
    issued = wrapped.interactions
    if len(issued) != len(plan.batches) or any(
            not np.array_equal(a, b) for a, (_, b) in zip(issued, plan.batches)):
        raise RuntimeError("issued label batches disagree with the batch plan")
    return result, plan


def run_linear_batched(pool, delta, B, label_oracle):
    """Linear run under a constant batch size. Returns ``(result, plan)``."""
    return _batched(lambda oracle: run_linear(pool, delta, oracle), B, label_oracle)


def run_logistic_batched(pool, config: LogisticConfig, B, label_oracle):
    return _batched(lambda oracle: run_logistic(pool, config, oracle), B, label_oracle)
