"""Simulated elicitation loop: initial scores, query rounds, refits, evaluation."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .core import Matching, MatchConstraints, ScorePosterior, SuitabilityMatrix, objective_value
from .matcher import MatchInstance, solve_matching
from .numerics import RngStream
from .probmatch import DEFAULT_NUM_SAMPLES, estimate_prob_matching
from .scoremodel import ModelConfig, fit, predictive_moments
from .strategies import MATCH_PROB_THRESHOLD, SelectionContext, StrategyKind, criterion_grid, select_batch

logger = logging.getLogger(__name__)

PARALLEL = "parallel"
SEQUENTIAL = "sequential"


@dataclass(frozen=True)
class SimConfig:
    constraints: MatchConstraints
    model: ModelConfig = field(default_factory=ModelConfig)
    strategies: tuple[StrategyKind, ...] = tuple(StrategyKind)
    batch_size: int = 10
    num_rounds: int | None = None
    mode: str = PARALLEL
    init_observed: int = 20
    init_train: int = 15
    init_validation: int = 5
    num_trials: int = 1
    base_seed: int = 0
    num_prob_samples: int = DEFAULT_NUM_SAMPLES
    match_threshold: float = MATCH_PROB_THRESHOLD
    model_grid: tuple[ModelConfig, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "strategies", tuple(
            s if isinstance(s, StrategyKind) else StrategyKind.parse(s) for s in self.strategies
        ))
        object.__setattr__(self, "model_grid", tuple(self.model_grid))
        if self.init_train + self.init_validation != self.init_observed:
            raise ValueError("init_train + init_validation must equal init_observed")
        if self.batch_size < 1 or self.num_trials < 1 or self.num_prob_samples < 1:
            raise ValueError("batch_size, num_trials and num_prob_samples must be >= 1")
        if self.num_rounds is not None and self.num_rounds < 0:
            raise ValueError("num_rounds must be >= 0")
        if self.mode not in (PARALLEL, SEQUENTIAL):
            raise ValueError(f"mode must be {PARALLEL!r} or {SEQUENTIAL!r}")


@dataclass(frozen=True)
class RoundRecord:
    trial: int
    round: int
    strategy: StrategyKind
    cum_queries_per_user: float
    objective: float
    fallback_count: int
    num_observed: int


def init_observed(
    dataset: SuitabilityMatrix, config: SimConfig, rng: RngStream
) -> tuple[NDArray[np.bool_], NDArray[np.bool_]]:
    """Per-user random initial scores, split into (train, validation) masks.

    Users with fewer available entries than ``init_observed`` get all of them,
    split by the configured train share rounded half-up toward train.
    """
    gen = rng.generator
    train = np.zeros(dataset.shape, dtype=bool)
    valid = np.zeros(dataset.shape, dtype=bool)
    share = config.init_train / config.init_observed if config.init_observed else 0.0
    for r in range(dataset.num_users):
        avail = np.flatnonzero(dataset.ground_truth[r])
        take = min(config.init_observed, avail.size)
        chosen = gen.choice(avail, size=take, replace=False) if take else avail[:0]
        n_train = config.init_train if take == config.init_observed else math.floor(take * share + 0.5)
        train[r, chosen[:n_train]] = True
        valid[r, chosen[n_train:]] = True
    return train, valid


def _evaluate(
    posterior: ScorePosterior, dataset: SuitabilityMatrix, constraints: MatchConstraints
) -> tuple[float, Matching]:
    y = solve_matching(MatchInstance(posterior.mean, constraints))
    return objective_value(y, dataset, restrict_to_ground_truth=True), y


def evaluate(posterior: ScorePosterior, dataset: SuitabilityMatrix, constraints: MatchConstraints) -> float:
    """True objective of the matching chosen on estimated scores.

    The matching is solved on the posterior means (observed entries hold their
    true values) and scored against the dataset, counting only pairs that have
    ground truth.
    """
    return _evaluate(posterior, dataset, constraints)[0]


def select_model_config(
    dataset: SuitabilityMatrix, train: NDArray, valid: NDArray, grid: tuple[ModelConfig, ...], rng: RngStream,
) -> ModelConfig:
    """Pick the grid entry with the lowest validation RMSE of predictive means."""
    if not valid.any():
        return grid[0]
    scores = dataset.with_observed(train)
    best, best_rmse = grid[0], math.inf
    for i, cfg in enumerate(grid):
        post = predictive_moments(fit(scores, cfg, rng.child(i)), scores)
        rmse = float(np.sqrt(np.mean((post.mean[valid] - dataset.values[valid]) ** 2)))
        logger.info("model grid %d: validation RMSE %.4f", i, rmse)
        if rmse < best_rmse:
            best, best_rmse = cfg, rmse
    return best


class _TrialState:
    """Mutable per-trial state: the current observations and their fitted model."""

    def __init__(self, dataset: SuitabilityMatrix, observed: NDArray, config: SimConfig, model_cfg: ModelConfig):
        self.dataset = dataset
        self.observed = observed.copy()
        self.config = config
        self.model_cfg = model_cfg
        self.scores = dataset.with_observed(self.observed)
        self.model = None
        self.posterior = None

    def refit(self, rng: RngStream) -> None:
        self.scores = self.dataset.with_observed(self.observed)
        self.model = fit(self.scores, self.model_cfg, rng)
        self.posterior = predictive_moments(self.model, self.scores)

    def candidates(self) -> NDArray:
        return self.dataset.ground_truth & ~self.observed

    def context(self, strategy: StrategyKind, map_match: Matching | None, rng: RngStream) -> SelectionContext:
        prob = None
        if strategy.needs_prob_match:
            prob = estimate_prob_matching(
                self.model, self.scores, self.config.constraints, self.config.num_prob_samples, rng
            )
        if strategy.needs_map_match and map_match is None:
            map_match = solve_matching(MatchInstance(self.posterior.mean, self.config.constraints))
        return SelectionContext(
            self.posterior, self.candidates(), prob,
            map_match if strategy.needs_map_match else None, self.config.match_threshold,
        )

    def reveal(self, queries) -> int:
        cand = self.candidates()
        for q in queries:
            if not cand[q.user, q.item]:
                raise AssertionError(f"illegal query ({q.user}, {q.item}): observed or unavailable")
            cand[q.user, q.item] = False
            self.observed[q.user, q.item] = True
        return sum(q.fallback for q in queries)


def run_trial(
    dataset: SuitabilityMatrix, strategy: StrategyKind, config: SimConfig, trial_seed: int, trial: int = 0,
) -> list[RoundRecord]:
    """Run one elicitation trial and return one record per round (round 0 = initial state).

    Every strategy given the same ``trial_seed`` starts from the same initial
    observations and the same round-0 model. ``config.num_rounds=None`` runs
    until every available score has been elicited.
    """
    root = RngStream(trial_seed)
    train, valid = init_observed(dataset, config, root.child(0))
    model_cfg = config.model
    if config.model_grid:
        model_cfg = select_model_config(dataset, train, valid, config.model_grid, root.child(1))
    state = _TrialState(dataset, train | valid, config, model_cfg)
    n_users = dataset.num_users

    def record(rnd: int, objective: float, fallbacks: int) -> RoundRecord:
        n_obs = int(state.observed.sum())
        return RoundRecord(trial, rnd, strategy, n_obs / n_users, objective, fallbacks, n_obs)

    state.refit(root.child(2).child(0))
    objective, map_y = _evaluate(state.posterior, dataset, config.constraints)
    records = [record(0, objective, 0)]
    rnd = 0
    while (config.num_rounds is None or rnd < config.num_rounds) and state.candidates().any():
        rnd += 1
        rs = root.child(2 + rnd)
        fallbacks = 0
        if config.mode == PARALLEL:
            ctx = state.context(strategy, map_y, rs.child(1))
            grids = None if strategy is StrategyKind.RANDOM else criterion_grid(strategy, ctx)
            sel = rs.child(2)
            batch = []
            for r in range(n_users):
                batch.extend(select_batch(strategy, ctx, r, config.batch_size, sel, grids))
            fallbacks = state.reveal(batch)
        else:
            for r in range(n_users):
                if not state.candidates()[r].any():
                    continue
                if r > 0:
                    state.refit(rs.child(3 + 3 * r))
                    map_y = None
                step = rs.child(4 + 3 * r)
                ctx = state.context(strategy, map_y, step.child(0))
                fallbacks += state.reveal(select_batch(strategy, ctx, r, config.batch_size, step.child(1)))
        state.refit(rs.child(0))
        objective, map_y = _evaluate(state.posterior, dataset, config.constraints)
        records.append(record(rnd, objective, fallbacks))
        logger.debug("trial %d %s round %d objective %.4f", trial, strategy.value, rnd, objective)
    return records


def trial_seed(base_seed: int, trial: int) -> int:
    return RngStream(base_seed).child(trial).seed


@dataclass(frozen=True)
class ComparisonResult:
    """Per-trial round records, paired against the random baseline."""

    records: tuple[RoundRecord, ...]
    vs_random: tuple[float, ...]

    def rows(self) -> list[dict]:
        return [
            {
                "trial": rec.trial,
                "round": rec.round,
                "strategy": rec.strategy.value,
                "cum_queries_per_user": rec.cum_queries_per_user,
                "objective": rec.objective,
                "objective_vs_random": diff,
                "fallback_count": rec.fallback_count,
                "num_observed": rec.num_observed,
            }
            for rec, diff in zip(self.records, self.vs_random)
        ]

    def summary(self) -> list[dict]:
        """Mean over trials per (strategy, round), with standard errors."""
        groups: dict[tuple[StrategyKind, int], list[int]] = {}
        for i, rec in enumerate(self.records):
            groups.setdefault((rec.strategy, rec.round), []).append(i)
        out = []
        for (strategy, rnd), idx in groups.items():
            obj = np.array([self.records[i].objective for i in idx])
            diff = np.array([self.vs_random[i] for i in idx])
            fb = np.array([self.records[i].fallback_count for i in idx], dtype=float)
            cq = np.array([self.records[i].cum_queries_per_user for i in idx])
            out.append({
                "strategy": strategy.value,
                "round": rnd,
                "num_trials": len(idx),
                "cum_queries_per_user": float(cq.mean()),
                "objective": float(obj.mean()),
                "objective_se": _stderr(obj),
                "objective_vs_random": float(diff.mean()),
                "objective_vs_random_se": _stderr(diff),
                "fallback_count": float(fb.mean()),
            })
        return out


def _stderr(x: NDArray) -> float:
    if x.size < 2:
        return 0.0
    return float(x.std(ddof=1) / math.sqrt(x.size))


def _run_one(args):
    dataset, strategy, config, trial = args
    return run_trial(dataset, strategy, config, trial_seed(config.base_seed, trial), trial)


def compare_strategies(dataset: SuitabilityMatrix, config: SimConfig, workers: int = 1) -> ComparisonResult:
    """Run ``num_trials`` paired trials of every strategy against the random baseline."""
    if StrategyKind.RANDOM not in config.strategies:
        raise ValueError("the random baseline must be among the strategies")
    jobs = [(dataset, s, config, t) for t in range(config.num_trials) for s in config.strategies]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = []
        for job in jobs:
            logger.info("trial %d strategy %s", job[3], job[1].value)
            results.append(_run_one(job))

    records = [rec for recs in results for rec in recs]
    baseline = {
        (rec.trial, rec.round): rec.objective for rec in records if rec.strategy is StrategyKind.RANDOM
    }
    diffs = []
    for rec in records:
        base = baseline.get((rec.trial, rec.round))
        diffs.append(rec.objective - base if base is not None else math.nan)
    return ComparisonResult(tuple(records), tuple(diffs))
