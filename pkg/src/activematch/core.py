"""Domain types shared across the package and the matching objective."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

OBSERVED_VARIANCE = 1e-3
SUM_TOL = 1e-9


class ActiveMatchError(Exception):
    """Base class for package errors."""


class InfeasibleError(ActiveMatchError):
    """No matching satisfies the degree bounds."""


class ModelFitError(ActiveMatchError):
    """The score model could not be fitted."""


def _frozen(a: ArrayLike, dtype) -> NDArray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class SuitabilityMatrix:
    """Dense user x item scores plus ground-truth and observed masks.

    ``values`` holds NaN wherever ``ground_truth`` is False.
    """

    values: NDArray[np.float64]
    ground_truth: NDArray[np.bool_]
    observed: NDArray[np.bool_]

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or min(values.shape) < 1:
            raise ValueError(f"values must be a non-empty 2-D grid, got shape {values.shape}")
        gt = np.asarray(self.ground_truth, dtype=bool)
        obs = np.asarray(self.observed, dtype=bool)
        if gt.shape != values.shape or obs.shape != values.shape:
            raise ValueError("mask shapes must match values")
        if np.any(obs & ~gt):
            raise ValueError("observed entries must have ground truth")
        if not np.all(np.isfinite(values[gt])):
            raise ValueError("values must be finite wherever ground truth exists")
        values = np.where(gt, values, np.nan)
        object.__setattr__(self, "values", _frozen(values, np.float64))
        object.__setattr__(self, "ground_truth", _frozen(gt, bool))
        object.__setattr__(self, "observed", _frozen(obs, bool))

    @classmethod
    def from_dense(cls, values: ArrayLike, observed: ArrayLike | None = None) -> "SuitabilityMatrix":
        """Fully available grid; nothing observed unless ``observed`` is given."""
        values = np.asarray(values, dtype=np.float64)
        gt = np.isfinite(values)
        if observed is None:
            observed = np.zeros_like(gt)
        return cls(values, gt, observed)

    @property
    def num_users(self) -> int:
        return self.values.shape[0]

    @property
    def num_items(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def unobserved(self) -> NDArray[np.bool_]:
        """Queryable pairs when simulating: available but not yet elicited."""
        return self.ground_truth & ~self.observed

    def with_observed(self, observed: ArrayLike) -> "SuitabilityMatrix":
        return SuitabilityMatrix(self.values, self.ground_truth, observed)

    def fully_observed(self) -> "SuitabilityMatrix":
        return self.with_observed(self.ground_truth)


@dataclass(frozen=True)
class MatchConstraints:
    """Degree bounds: ``r_*`` users per item, ``p_*`` items per user."""

    r_min: int
    r_max: int
    p_min: int
    p_max: int

    def __post_init__(self) -> None:
        for name in ("r_min", "r_max", "p_min", "p_max"):
            object.__setattr__(self, name, int(getattr(self, name)))
        if not (0 <= self.r_min <= self.r_max and 0 <= self.p_min <= self.p_max):
            raise ValueError(f"invalid bounds {self}")

    def counting_feasible(self, n_users: int, n_items: int) -> bool:
        """Necessary edge-count condition only; see ``matcher.check_feasible``."""
        return (
            n_users * self.p_min <= n_items * self.r_max
            and n_items * self.r_min <= n_users * self.p_max
        )


def _check_sums(grid: NDArray, constraints: MatchConstraints, tol: float) -> None:
    rows = grid.sum(axis=1)
    cols = grid.sum(axis=0)
    if np.any(rows < constraints.p_min - tol) or np.any(rows > constraints.p_max + tol):
        raise AssertionError(f"row sums {rows} outside [{constraints.p_min}, {constraints.p_max}]")
    if np.any(cols < constraints.r_min - tol) or np.any(cols > constraints.r_max + tol):
        raise AssertionError(f"column sums {cols} outside [{constraints.r_min}, {constraints.r_max}]")


@dataclass(frozen=True)
class Matching:
    assign: NDArray[np.bool_]

    def __post_init__(self) -> None:
        object.__setattr__(self, "assign", _frozen(self.assign, bool))

    @property
    def shape(self) -> tuple[int, int]:
        return self.assign.shape

    def pairs(self) -> list[tuple[int, int]]:
        return [(int(r), int(p)) for r, p in zip(*np.nonzero(self.assign))]

    def check(self, constraints: MatchConstraints) -> None:
        _check_sums(self.assign.astype(np.int64), constraints, 0)


@dataclass(frozen=True)
class ProbabilisticMatching:
    """Monte-Carlo average of optimal matchings (entry = match probability)."""

    prob: NDArray[np.float64]
    num_samples: int

    def __post_init__(self) -> None:
        prob = np.asarray(self.prob, dtype=np.float64)
        if np.any(prob < 0) or np.any(prob > 1):
            raise ValueError("probabilities must lie in [0, 1]")
        object.__setattr__(self, "prob", _frozen(prob, np.float64))

    def check(self, constraints: MatchConstraints) -> None:
        _check_sums(self.prob, constraints, SUM_TOL)


@dataclass(frozen=True)
class ScorePosterior:
    """Per-entry predictive mean and variance."""

    mean: NDArray[np.float64]
    variance: NDArray[np.float64]

    def __post_init__(self) -> None:
        mean = np.asarray(self.mean, dtype=np.float64)
        var = np.asarray(self.variance, dtype=np.float64)
        if mean.shape != var.shape:
            raise ValueError("mean and variance shapes differ")
        if not np.all(var > 0):
            raise ValueError("variances must be > 0")
        object.__setattr__(self, "mean", _frozen(mean, np.float64))
        object.__setattr__(self, "variance", _frozen(var, np.float64))

    @property
    def shape(self) -> tuple[int, int]:
        return self.mean.shape


@dataclass(frozen=True)
class Query:
    user: int
    item: int
    fallback: bool = field(default=False)


def objective_value(
    matching: Matching | ArrayLike,
    scores: SuitabilityMatrix | ArrayLike,
    restrict_to_ground_truth: bool = False,
) -> float:
    """Total suitability ``sum_rp s_rp * y_rp`` of a matching.

    With ``restrict_to_ground_truth`` set, matched pairs lacking a ground-truth
    score contribute 0. Otherwise such a pair is an error.
    """
    y = matching.assign if isinstance(matching, Matching) else np.asarray(matching, dtype=bool)
    if isinstance(scores, SuitabilityMatrix):
        values, gt = scores.values, scores.ground_truth
    else:
        values = np.asarray(scores, dtype=np.float64)
        gt = np.isfinite(values)
    if y.shape != values.shape:
        raise ValueError(f"matching shape {y.shape} != scores shape {values.shape}")
    picked = y if not restrict_to_ground_truth else (y & gt)
    if np.any(picked & ~gt):
        raise ValueError("matched pair has no ground-truth score; set restrict_to_ground_truth")
    return float(np.sum(values[picked]))
