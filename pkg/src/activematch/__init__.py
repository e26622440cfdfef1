"""Match-constrained recommendation with active preference elicitation."""

from .core import (
    ActiveMatchError,
    InfeasibleError,
    Matching,
    MatchConstraints,
    ModelFitError,
    ProbabilisticMatching,
    Query,
    ScorePosterior,
    SuitabilityMatrix,
    objective_value,
)
from .matcher import MatchInstance, brute_force_matching, check_feasible, solve_matching
from .numerics import RngStream
from .probmatch import estimate_prob_matching, map_matching
from .scoremodel import ModelConfig, fit, predictive_moments, sample_score_matrix
from .simulator import SimConfig, compare_strategies, evaluate, run_trial
from .strategies import SelectionContext, StrategyKind, criterion_score, select_batch

__version__ = "0.1.0"
