"""Key rank by best-first enumeration over product-of-marginals ordering."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

__all__ = ["KeyRank", "key_rank", "exhaustive_rank", "DEFAULT_BUDGET"]

DEFAULT_BUDGET = 1 << 20
PROB_FLOOR = 1e-300


@dataclass(frozen=True)
class KeyRank:
    rank: int | None  # None when the budget is exhausted first
    budget: int
    enumerated: int

    @property
    def exceeded(self) -> bool:
        return self.rank is None

    @property
    def log2_rank(self) -> float:
        return math.log2(self.rank) if self.rank is not None else math.inf

    def to_dict(self) -> dict:
        return {"rank": self.rank, "exceeded": self.exceeded, "budget": self.budget}


def _costs(beliefs: np.ndarray) -> np.ndarray:
    return -np.log(np.maximum(np.asarray(beliefs, dtype=np.float64), PROB_FLOOR))


def key_rank(level0_beliefs, truth, budget: int = DEFAULT_BUDGET) -> KeyRank:
    """Rank of ``truth`` among keys sorted by descending product of marginals.

    Rank is 1 + the number of keys with strictly higher probability.  Keys
    are generated in order from a heap whose nodes carry only
    ``(cost, position, choice)``; every rank vector has a unique parent
    so no key is visited twice.  Ties with the truth are not counted.
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    c = _costs(level0_beliefs)
    truth = np.asarray(truth, dtype=np.int64)
    if c.ndim != 2 or truth.shape != (c.shape[0],):
        raise ValueError("beliefs must be (n, q) with one truth value per row")
    n, q = c.shape
    if np.any((truth < 0) | (truth >= q)):
        raise ValueError("truth values out of range")
    order = np.argsort(c, axis=1, kind="stable")
    cs = np.take_along_axis(c, order, axis=1)
    cs = cs - cs[:, :1]  # relative to the best key
    target = float((c[np.arange(n), truth] - c.min(axis=1)).sum())
    eps = 1e-9 * (1.0 + abs(target))
    if q == 1 or n == 0:
        return KeyRank(1, budget, 0)
    # coefficients sorted by the cost of their runner-up
    perm = np.argsort(cs[:, 1], kind="stable")
    cs = cs[perm]
    d1 = cs[:, 1]

    # count keys strictly better than the truth, starting with the all-best key
    if not 0.0 < target - eps:
        return KeyRank(1, budget, 1)
    better = 1
    heap = [(float(d1[0]), 0, 1)]
    while heap:
        if better >= budget:
            return KeyRank(None, budget, better)
        cost, p, r = heapq.heappop(heap)
        if cost >= target - eps:
            break
        better += 1
        if r + 1 < q:
            heapq.heappush(heap, (cost + float(cs[p, r + 1] - cs[p, r]), p, r + 1))
        if p + 1 < n:
            if r == 1:
                heapq.heappush(heap, (cost - float(d1[p]) + float(d1[p + 1]), p + 1, 1))
            heapq.heappush(heap, (cost + float(d1[p + 1]), p + 1, 1))
    return KeyRank(better + 1, budget, better)


def exhaustive_rank(level0_beliefs, truth) -> int:
    """Reference rank by scoring all q**n keys (tiny instances only)."""
    c = _costs(level0_beliefs)
    c = c - c.min(axis=1, keepdims=True)
    n, q = c.shape
    if q**n > 10**7:
        raise ValueError("too many keys for exhaustive ranking")
    total = np.zeros(1)
    for i in range(n):
        total = (total[:, None] + c[i][None, :]).ravel()
    idx = 0
    for i, t in enumerate(np.asarray(truth, dtype=np.int64)):
        idx = idx * q + int(t)
    target = total[idx]
    return int(np.sum(total < target - 1e-9 * (1.0 + abs(target)))) + 1
