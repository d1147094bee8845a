"""Pool-based batch active learning built on greedy G-optimal design."""

from .batching import (BatchPlan, billed_label_complexity, run_linear_batched,
                       run_logistic_batched, schedule_batches)
from .design import DesignState, absorb, diversity, greedy_select, new_design, run_stage_selection
from .evaluation import excess_risk_mc, passive_baseline, rate_fit, weighted_regret
from .kernels import BACKEND
from .linear import RunResult, StageRecord, epsilon_linear, run_linear, train_consistent_separator
from .logistic import LogisticConfig, SolverError, SolverOptions, run_logistic
from .nonlinear import FiniteFunctionClass, covering_number_linf, diversity_nl, run_nonlinear
from .synth import (GroundTruth, LabelOracle, NoiseSpec, Pool, bayes_predict, gen_pool_linear,
                    gen_pool_logistic, gen_pool_threshold, load_pool, save_pool)

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "BatchPlan", "DesignState", "FiniteFunctionClass", "GroundTruth", "LabelOracle",
    "LogisticConfig", "NoiseSpec", "Pool", "RunResult", "SolverError", "SolverOptions",
    "StageRecord", "absorb", "bayes_predict", "billed_label_complexity", "covering_number_linf",
    "diversity", "diversity_nl", "epsilon_linear", "excess_risk_mc", "gen_pool_linear",
    "gen_pool_logistic", "gen_pool_threshold", "greedy_select", "load_pool", "new_design",
    "passive_baseline", "rate_fit", "run_linear", "run_linear_batched", "run_logistic",
    "run_logistic_batched", "run_nonlinear", "run_stage_selection", "save_pool",
    "schedule_batches", "train_consistent_separator", "weighted_regret",
]
