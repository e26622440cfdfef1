"""Exact solver for degree-constrained bipartite b-matching.

The integer program

    maximize  sum_rp s_rp y_rp
    s.t.      y_rp in {0, 1}
              r_min <= sum_r y_rp <= r_max   for every item p
              p_min <= sum_p y_rp <= p_max   for every user r

has a totally unimodular constraint matrix, so it is solved exactly as a
min-cost flow: source -> user (degree bounds), user -> item (capacity 1,
cost -s_rp), item -> sink (degree bounds).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_flow

from .core import InfeasibleError, Matching, MatchConstraints

EPS = 1e-9
BRUTE_FORCE_MAX_CELLS = 25


@dataclass(frozen=True)
class MatchInstance:
    scores: NDArray[np.float64]
    constraints: MatchConstraints

    def __post_init__(self) -> None:
        scores = np.array(self.scores, dtype=np.float64)
        if scores.ndim != 2 or min(scores.shape) < 1:
            raise ValueError(f"scores must be a non-empty 2-D grid, got shape {scores.shape}")
        if not np.all(np.isfinite(scores)):
            raise ValueError("scores must be finite")
        scores.flags.writeable = False
        object.__setattr__(self, "scores", scores)

    @property
    def shape(self) -> tuple[int, int]:
        return self.scores.shape


def check_feasible(n_users: int, n_items: int, constraints: MatchConstraints) -> bool:
    """Exact feasibility of the degree bounds via circulation with lower bounds.

    Lower bounds are moved into node supplies/demands served by a super source
    and super sink; the bounds are satisfiable iff the max flow saturates all
    of them.
    """
    if n_users < 1 or n_items < 1:
        raise ValueError("dimensions must be positive")
    c = constraints
    if not c.counting_feasible(n_users, n_items):
        return False
    if c.p_min > n_items or c.r_min > n_users:
        return False
    required = n_users * c.p_min + n_items * c.r_min
    if required == 0:
        return True

    s, t = 0, n_users + n_items + 1
    ss, tt = t + 1, t + 2
    users = np.arange(1, n_users + 1)
    items = np.arange(n_users + 1, n_users + n_items + 1)
    big = n_users * n_items + required + 1
    tails, heads, caps = [], [], []

    def arcs(u, v, cap):
        u, v = np.broadcast_arrays(np.asarray(u), np.asarray(v))
        tails.append(u.ravel())
        heads.append(v.ravel())
        caps.append(np.broadcast_to(cap, u.shape).ravel())

    arcs(s, users, c.p_max - c.p_min)
    arcs(ss, users, c.p_min)
    arcs(s, tt, n_users * c.p_min)
    arcs(users[:, None], items[None, :], 1)
    arcs(items, t, c.r_max - c.r_min)
    arcs(items, tt, c.r_min)
    arcs(ss, t, n_items * c.r_min)
    arcs(t, s, big)

    tail = np.concatenate(tails)
    head = np.concatenate(heads)
    cap = np.concatenate(caps).astype(np.int32)
    keep = cap > 0
    graph = csr_matrix((cap[keep], (tail[keep], head[keep])), shape=(tt + 1, tt + 1))
    flow = maximum_flow(graph, ss, tt).flow_value
    return int(flow) == required


def _infeasible_message(n_users: int, n_items: int, c: MatchConstraints) -> str:
    if n_users * c.p_min > n_items * c.r_max:
        return (
            f"users need at least {n_users * c.p_min} assignments but items accept "
            f"at most {n_items * c.r_max}"
        )
    if n_items * c.r_min > n_users * c.p_max:
        return (
            f"items need at least {n_items * c.r_min} assignments but users accept "
            f"at most {n_users * c.p_max}"
        )
    if c.p_min > n_items:
        return f"p_min={c.p_min} exceeds the number of items ({n_items})"
    if c.r_min > n_users:
        return f"r_min={c.r_min} exceeds the number of users ({n_users})"
    return f"degree bounds {c} admit no {n_users}x{n_items} matching"


def solve_matching(instance: MatchInstance) -> Matching:
    """Optimal matching by successive shortest augmenting paths.

    Mandatory arc segments (the first ``p_min`` units into a user, the first
    ``r_min`` units out of an item) carry a bonus larger than any possible
    score total, so every optimal flow saturates them whenever the bounds are
    feasible. Augmentation stops once the cheapest s-t path no longer lowers
    the cost. Shortest paths are found by vectorised label-correcting passes
    over the dense bipartite residual graph; ties resolve to the lowest user
    and item index.
    """
    scores = instance.scores
    c = instance.constraints
    n, m = scores.shape
    if not check_feasible(n, m, c):
        raise InfeasibleError(_infeasible_message(n, m, c))

    bonus = 2.0 * float(np.abs(scores).sum()) + 1.0
    y = np.zeros((n, m), dtype=bool)
    row_deg = np.zeros(n, dtype=np.int64)
    col_deg = np.zeros(m, dtype=np.int64)
    user_idx = np.arange(n)
    item_idx = np.arange(m)
    neg_scores = -scores

    while True:
        # Residual arc costs. Paths never re-enter the source or leave the sink,
        # so reverse source/sink arcs are omitted.
        d_user = np.where(row_deg < c.p_min, -bonus, np.where(row_deg < c.p_max, 0.0, np.inf))
        sink_cost = np.where(col_deg < c.r_min, -bonus, np.where(col_deg < c.r_max, 0.0, np.inf))
        forward = np.where(y, np.inf, neg_scores)
        backward = np.where(y, scores, np.inf)

        pred_user = np.full(n, -1)
        pred_item = np.full(m, -1)
        d_item = np.full(m, np.inf)
        for _ in range(n + m + 2):
            cand = d_user[:, None] + forward
            best_r = np.argmin(cand, axis=0)
            val = cand[best_r, item_idx]
            upd_i = val < d_item - EPS
            d_item[upd_i] = val[upd_i]
            pred_item[upd_i] = best_r[upd_i]

            cand = d_item[None, :] + backward
            best_p = np.argmin(cand, axis=1)
            val = cand[user_idx, best_p]
            upd_u = val < d_user - EPS
            d_user[upd_u] = val[upd_u]
            pred_user[upd_u] = best_p[upd_u]
            if not upd_u.any():
                break
        else:  # pragma: no cover - impossible without a negative cycle
            raise RuntimeError("shortest path search did not converge")

        d_sink = d_item + sink_cost
        p = int(np.argmin(d_sink))
        if not d_sink[p] < -EPS:
            break

        col_deg[p] += 1
        for _ in range(n + m + 1):
            r = int(pred_item[p])
            y[r, p] = True
            q = int(pred_user[r])
            if q < 0:
                row_deg[r] += 1
                break
            y[r, q] = False
            p = q
        else:  # pragma: no cover
            raise RuntimeError("augmenting path did not terminate")

    result = Matching(y)
    result.check(c)
    return result


def brute_force_matching(instance: MatchInstance) -> Matching:
    """Exhaustive optimum over all feasible binary grids (test oracle).

    Enumerates every admissible row pattern per user and merges partial
    assignments that reach the same column-degree vector, keeping the best.
    Limited to ``N * M <= 25``.
    """
    scores = instance.scores
    c = instance.constraints
    n, m = scores.shape
    if n * m > BRUTE_FORCE_MAX_CELLS:
        raise ValueError(f"instance too large for brute force ({n}x{m} > {BRUTE_FORCE_MAX_CELLS} cells)")

    patterns = [
        np.isin(np.arange(m), combo)
        for size in range(c.p_min, min(c.p_max, m) + 1)
        for combo in itertools.combinations(range(m), size)
    ]
    pattern_counts = [pat.astype(np.int64) for pat in patterns]

    # state: column degrees -> (value, rows chosen so far)
    states: dict[tuple[int, ...], tuple[float, tuple[int, ...]]] = {(0,) * m: (0.0, ())}
    for r in range(n):
        remaining = n - r - 1
        row_values = [float(scores[r][pat].sum()) for pat in patterns]
        nxt: dict[tuple[int, ...], tuple[float, tuple[int, ...]]] = {}
        for degs, (value, chosen) in states.items():
            base = np.array(degs)
            for k, cnt in enumerate(pattern_counts):
                new = base + cnt
                if np.any(new > c.r_max) or np.any(new + remaining < c.r_min):
                    continue
                key = tuple(int(v) for v in new)
                cand = value + row_values[k]
                if key not in nxt or cand > nxt[key][0]:
                    nxt[key] = (cand, chosen + (k,))
        states = nxt

    if not states:
        raise InfeasibleError(_infeasible_message(n, m, c))
    _, chosen = max(states.values(), key=lambda item: item[0])
    y = np.array([patterns[k] for k in chosen], dtype=bool).reshape(n, m)
    return Matching(y)
