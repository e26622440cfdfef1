"""Query-selection strategies and greedy per-user batch selection."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .core import Matching, ProbabilisticMatching, Query, ScorePosterior
from .numerics import RngStream, bernoulli_entropy, gaussian_entropy

MATCH_PROB_THRESHOLD = 0.01


class StrategyKind(enum.Enum):
    RANDOM = "random"
    SCORE_ENTROPY = "se"
    SCORE_MAX = "sm"
    Y_MAX = "ym"
    YBAR_MAX = "ybar_m"
    YBAR_ENTROPY = "ybar_e"

    @classmethod
    def parse(cls, name: str) -> "StrategyKind":
        key = name.strip().lower().replace("-", "_")
        aliases = {
            "random": cls.RANDOM, "se": cls.SCORE_ENTROPY, "score_entropy": cls.SCORE_ENTROPY,
            "sm": cls.SCORE_MAX, "score_max": cls.SCORE_MAX, "ym": cls.Y_MAX, "y_max": cls.Y_MAX,
            "ybar_m": cls.YBAR_MAX, "ybarm": cls.YBAR_MAX, "ybar_max": cls.YBAR_MAX,
            "ybar_e": cls.YBAR_ENTROPY, "ybare": cls.YBAR_ENTROPY, "ybar_entropy": cls.YBAR_ENTROPY,
        }
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown strategy {name!r}") from None

    @property
    def needs_prob_match(self) -> bool:
        return self in (StrategyKind.YBAR_MAX, StrategyKind.YBAR_ENTROPY)

    @property
    def needs_map_match(self) -> bool:
        return self is StrategyKind.Y_MAX

    @property
    def uses_fallback(self) -> bool:
        return self in (StrategyKind.Y_MAX, StrategyKind.YBAR_MAX, StrategyKind.YBAR_ENTROPY)


ALL_STRATEGIES = tuple(StrategyKind)


@dataclass(frozen=True)
class SelectionContext:
    posterior: ScorePosterior
    candidate: NDArray[np.bool_]
    prob_match: ProbabilisticMatching | None = None
    map_match: Matching | None = None
    threshold: float = MATCH_PROB_THRESHOLD

    def __post_init__(self) -> None:
        cand = np.asarray(self.candidate, dtype=bool)
        if cand.shape != self.posterior.shape:
            raise ValueError("candidate mask shape differs from posterior")
        for grid in (self.prob_match and self.prob_match.prob, self.map_match and self.map_match.assign):
            if grid is not None and grid.shape != cand.shape:
                raise ValueError("context grids must share dimensions")
        object.__setattr__(self, "candidate", cand)


def criterion_grid(strategy: StrategyKind, context: SelectionContext) -> tuple[NDArray, NDArray]:
    """Ranking score and eligibility for every pair (higher ranks first)."""
    post = context.posterior
    shape = post.shape
    if strategy is StrategyKind.RANDOM:
        return np.zeros(shape), np.ones(shape, dtype=bool)
    if strategy is StrategyKind.SCORE_ENTROPY:
        return gaussian_entropy(post.variance), np.ones(shape, dtype=bool)
    if strategy is StrategyKind.SCORE_MAX:
        return post.mean.copy(), np.ones(shape, dtype=bool)
    if strategy is StrategyKind.Y_MAX:
        if context.map_match is None:
            raise ValueError("Y-max needs the MAP matching in its context")
        y = context.map_match.assign
        return np.where(y, post.mean, 0.0), y.copy()
    if context.prob_match is None:
        raise ValueError(f"{strategy.name} needs the probabilistic matching in its context")
    ybar = context.prob_match.prob
    eligible = ybar >= context.threshold
    if strategy is StrategyKind.YBAR_MAX:
        return ybar * post.mean, eligible
    return bernoulli_entropy(ybar), eligible


def criterion_score(strategy: StrategyKind, context: SelectionContext, user: int, item: int) -> float | None:
    """Criterion value of one candidate pair, or ``None`` if ineligible."""
    if not context.candidate[user, item]:
        raise ValueError(f"pair ({user}, {item}) is not a query candidate")
    score, eligible = criterion_grid(strategy, context)
    return float(score[user, item]) if eligible[user, item] else None


def select_batch(
    strategy: StrategyKind,
    context: SelectionContext,
    user: int,
    batch_size: int,
    rng: RngStream,
    grids: tuple[NDArray, NDArray] | None = None,
) -> list[Query]:
    """Top ``batch_size`` queries for ``user``; random fall-back fills the rest.

    Eligible candidates come first in descending criterion order (ties by
    ascending item index). Remaining slots are filled with distinct random
    candidates flagged ``fallback=True``. The random baseline draws uniformly
    and never flags fall-back. ``grids`` may carry a precomputed
    ``criterion_grid`` result.
    """
    n_users = context.candidate.shape[0]
    if not 0 <= user < n_users:
        raise IndexError(f"user {user} out of range [0, {n_users})")
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    items = np.flatnonzero(context.candidate[user])
    if items.size == 0:
        return []
    gen = rng.generator
    if strategy is StrategyKind.RANDOM:
        picked = gen.permutation(items)[:batch_size]
        return [Query(user, int(p), False) for p in picked]

    score, eligible = grids if grids is not None else criterion_grid(strategy, context)
    ok = items[eligible[user, items]]
    # lexsort: last key is primary
    ranked = ok[np.lexsort((ok, -score[user, ok]))][:batch_size]
    queries = [Query(user, int(p), False) for p in ranked]
    short = batch_size - len(queries)
    if short > 0:
        rest = np.setdiff1d(items, ranked)
        if rest.size:
            fill = gen.permutation(rest)[:short]
            queries.extend(Query(user, int(p), True) for p in fill)
    return queries
