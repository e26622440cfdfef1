"""Probabilistic matching: average of optimal matchings over posterior samples."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .core import Matching, MatchConstraints, ProbabilisticMatching, ScorePosterior, SuitabilityMatrix
from .matcher import MatchInstance, solve_matching
from .numerics import RngStream
from .scoremodel import FittedModel, sample_from_posterior, sample_score_matrix

DEFAULT_NUM_SAMPLES = 50


def estimate_prob_matching(
    model: FittedModel | ScorePosterior,
    scores: SuitabilityMatrix | None,
    constraints: MatchConstraints,
    num_samples: int = DEFAULT_NUM_SAMPLES,
    rng: RngStream | None = None,
    workers: int = 1,
) -> ProbabilisticMatching:
    """Estimate match probabilities by solving ``num_samples`` sampled problems.

    ``model`` is either a fitted score model (complete matrices drawn with
    ``sample_score_matrix``, observed entries from ``scores``) or a
    ``ScorePosterior`` whose entries are drawn independently from their
    Gaussian marginals (``scores`` is then unused).

    Sample ``t`` uses the child stream ``t`` of one seed drawn from ``rng``,
    and matchings are summed in sample order, so the result does not depend
    on ``workers``.
    """
    if num_samples < 1:
        raise ValueError("num_samples must be >= 1")
    rng = rng if rng is not None else RngStream(0)
    base = RngStream(rng.spawn_seed())

    if isinstance(model, ScorePosterior):
        def draw(stream: RngStream) -> np.ndarray:
            return sample_from_posterior(model, stream)
    else:
        if scores is None:
            raise ValueError("scores are required when sampling from a fitted model")

        def draw(stream: RngStream) -> np.ndarray:
            return sample_score_matrix(model, scores, stream)

    def one(t: int) -> np.ndarray:
        grid = draw(base.child(t))
        return solve_matching(MatchInstance(grid, constraints)).assign

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            assigns = list(pool.map(one, range(num_samples)))
    else:
        assigns = [one(t) for t in range(num_samples)]

    total = np.zeros(assigns[0].shape, dtype=np.int64)
    for a in assigns:
        total += a
    result = ProbabilisticMatching(total / num_samples, num_samples)
    result.check(constraints)
    return result


def map_matching(posterior: ScorePosterior, constraints: MatchConstraints) -> Matching:
    """Matching solved on the posterior-mean grid."""
    return solve_matching(MatchInstance(posterior.mean, constraints))
