"""Ratings files, synthetic datasets and the 3x6 toy problem.

Ratings files are UTF-8 CSV with the header ``user_id,item_id,score``; one
row per known (user, item) score. External ids are mapped to dense zero-based
indices in order of first appearance.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import ActiveMatchError, MatchConstraints, SuitabilityMatrix
from .numerics import RngStream

RATINGS_HEADER = ("user_id", "item_id", "score")


class RatingsFormatError(ActiveMatchError, ValueError):
    pass


@dataclass(frozen=True)
class RatingsData:
    matrix: SuitabilityMatrix
    user_ids: tuple[str, ...]
    item_ids: tuple[str, ...]


def load_ratings_csv(path: str | Path) -> RatingsData:
    """Read a ratings file into a dense grid with its id mappings."""
    users: dict[str, int] = {}
    items: dict[str, int] = {}
    triples: dict[tuple[int, int], float] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise RatingsFormatError(f"{path}: empty file (no users)")
        if tuple(h.strip() for h in header) != RATINGS_HEADER:
            raise RatingsFormatError(f"{path}: expected header {','.join(RATINGS_HEADER)}, got {header}")
        for row in reader:
            line = reader.line_num
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 3:
                raise RatingsFormatError(f"{path}:{line}: expected 3 fields, got {len(row)}")
            uid, iid, raw = (cell.strip() for cell in row)
            try:
                score = float(raw)
            except ValueError:
                raise RatingsFormatError(f"{path}:{line}: non-numeric score {raw!r}") from None
            if not math.isfinite(score):
                raise RatingsFormatError(f"{path}:{line}: non-finite score {raw!r}")
            r = users.setdefault(uid, len(users))
            p = items.setdefault(iid, len(items))
            if (r, p) in triples:
                raise RatingsFormatError(f"{path}:{line}: duplicate pair ({uid}, {iid})")
            triples[r, p] = score
    if not triples:
        raise RatingsFormatError(f"{path}: no ratings (no users)")

    values = np.full((len(users), len(items)), np.nan)
    for (r, p), s in triples.items():
        values[r, p] = s
    gt = np.isfinite(values)
    return RatingsData(SuitabilityMatrix(values, gt, np.zeros_like(gt)), tuple(users), tuple(items))


def save_ratings_csv(path: str | Path, matrix: SuitabilityMatrix,
                     user_ids=None, item_ids=None) -> None:
    """Write every ground-truth entry as a ``user_id,item_id,score`` row."""
    user_ids = user_ids if user_ids is not None else [str(r) for r in range(matrix.num_users)]
    item_ids = item_ids if item_ids is not None else [str(p) for p in range(matrix.num_items)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RATINGS_HEADER)
        for r, p in zip(*np.nonzero(matrix.ground_truth)):
            writer.writerow((user_ids[r], item_ids[p], repr(float(matrix.values[r, p]))))


def filter_ratings(data: RatingsData, min_ratings_per_user: int = 0, top_items: int | None = None,
                   max_users: int | None = None, seed: int = 0) -> RatingsData:
    """Subset a ratings grid: most-rated items, then users with enough ratings.

    ``max_users`` keeps a uniformly random subset of the surviving users.
    """
    gt = data.matrix.ground_truth
    item_idx = np.arange(gt.shape[1])
    if top_items is not None and top_items < item_idx.size:
        counts = gt.sum(axis=0)
        item_idx = np.sort(np.argsort(-counts, kind="stable")[:top_items])
    sub = gt[:, item_idx]
    user_idx = np.flatnonzero(sub.sum(axis=1) >= max(min_ratings_per_user, 1))
    if max_users is not None and max_users < user_idx.size:
        user_idx = np.sort(RngStream(seed).generator.choice(user_idx, size=max_users, replace=False))
    if user_idx.size == 0 or item_idx.size == 0:
        raise RatingsFormatError("filter removed every user or item")
    values = data.matrix.values[np.ix_(user_idx, item_idx)]
    return RatingsData(
        SuitabilityMatrix.from_dense(values),
        tuple(data.user_ids[i] for i in user_idx),
        tuple(data.item_ids[i] for i in item_idx),
    )


def generate_synthetic(num_users: int, num_items: int, rank: int, noise_sd: float = 0.0,
                       score_range: tuple[float, float] = (-10.0, 10.0), density: float = 1.0,
                       seed: int = 0) -> SuitabilityMatrix:
    """Low-rank score grid with Gaussian noise and a random availability mask.

    The factor product is scaled so its largest magnitude reaches the half
    width of ``score_range`` and shifted to the range centre (the shift adds
    one to the rank unless the range is symmetric about zero).
    """
    if not 1 <= rank <= min(num_users, num_items):
        raise ValueError(f"rank must lie in [1, {min(num_users, num_items)}]")
    if not 0 < density <= 1:
        raise ValueError("density must lie in (0, 1]")
    lo, hi = map(float, score_range)
    if not lo < hi:
        raise ValueError("score_range must be increasing")
    if noise_sd < 0:
        raise ValueError("noise_sd must be >= 0")
    gen = RngStream(seed).generator
    u = gen.standard_normal((num_users, rank))
    v = gen.standard_normal((num_items, rank))
    prod = u @ v.T
    centre, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    values = centre + prod * (half / np.abs(prod).max())
    if noise_sd > 0:
        values = np.clip(values + noise_sd * gen.standard_normal(values.shape), lo, hi)
    n_cells = num_users * num_items
    keep = max(1, int(round(density * n_cells)))
    gt = np.zeros(n_cells, dtype=bool)
    gt[gen.choice(n_cells, size=keep, replace=False)] = True
    gt = gt.reshape(num_users, num_items)
    return SuitabilityMatrix(np.where(gt, values, np.nan), gt, np.zeros_like(gt))


TOY_RANGE = (0.0, 5.0)


def toy_fig2(seed: int = 0) -> tuple[SuitabilityMatrix, MatchConstraints]:
    """3 users x 6 items, one user per item and two items per user."""
    gen = RngStream(seed).generator
    values = np.round(gen.uniform(*TOY_RANGE, size=(3, 6)), 1)
    return SuitabilityMatrix.from_dense(values), MatchConstraints(r_min=1, r_max=1, p_min=2, p_max=2)
