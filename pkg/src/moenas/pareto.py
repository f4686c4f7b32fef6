"""Pareto dominance, non-dominated sorting, crowding distance and selection.

All objectives are maximized.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np


def _as_matrix(points) -> np.ndarray:
    arr = np.asarray(points, dtype=float)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D array of objective vectors, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("objective vectors must be finite")
    return arr


def dominates(v: Sequence[float], u: Sequence[float]) -> bool:
    """True iff ``v`` is >= ``u`` everywhere and > somewhere."""
    if len(v) != len(u):
        raise ValueError(f"length mismatch: {len(v)} vs {len(u)}")
    strictly = False
    for a, b in zip(v, u):
        if a < b:
            return False
        if a > b:
            strictly = True
    return strictly


def dominance_matrix(points) -> np.ndarray:
    """``D[i, j]`` is True when point ``i`` dominates point ``j``."""
    p = _as_matrix(points)
    ge = (p[:, None, :] >= p[None, :, :]).all(axis=-1)
    gt = (p[:, None, :] > p[None, :, :]).any(axis=-1)
    return ge & gt


@dataclass
class FrontLevels:
    fronts: list[list[int]]
    crowding: np.ndarray
    rank: np.ndarray


def non_dominated_sort(points) -> FrontLevels:
    """Fast non-dominated sort with per-front crowding distances.

    Front members are listed in ascending input index.
    """
    p = _as_matrix(points)
    n = len(p)
    if n == 0:
        raise ValueError("cannot sort an empty population")
    dom = dominance_matrix(p)
    counts = dom.sum(axis=0)
    dominated_by = [np.flatnonzero(row) for row in dom]

    rank = np.zeros(n, dtype=int)
    fronts: list[list[int]] = []
    current = [int(i) for i in np.flatnonzero(counts == 0)]
    while current:
        fronts.append(current)
        nxt = []
        for i in current:
            for j in dominated_by[i]:
                counts[j] -= 1
                if counts[j] == 0:
                    nxt.append(int(j))
        current = sorted(nxt)
        for j in current:
            rank[j] = len(fronts)

    crowding = np.zeros(n)
    for front in fronts:
        crowding[front] = crowding_distance(p[front])
    return FrontLevels(fronts, crowding, rank)


def crowding_distance(front) -> np.ndarray:
    """NSGA-II crowding distance of each member of a front.

    Boundary members of every objective get ``inf``. An objective whose values
    are all equal adds nothing to interior members.
    """
    p = np.asarray(front, dtype=float)
    n = len(p)
    if n <= 2:
        return np.full(n, np.inf)
    dist = np.zeros(n)
    for m in range(p.shape[1]):
        order = np.argsort(p[:, m], kind="stable")
        vals = p[order, m]
        dist[order[0]] = dist[order[-1]] = np.inf
        span = vals[-1] - vals[0]
        if span > 0:
            dist[order[1:-1]] += (vals[2:] - vals[:-2]) / span
    return dist


def crowded_key(rank: int, distance: float, uid: int) -> tuple:
    """Sort key of the crowded order: lower rank, then larger distance, then lower id."""
    return (rank, -distance, uid)


def crowded_compare(a: tuple, b: tuple) -> int:
    """Compare ``(rank, distance, id)`` triples: -1 if ``a`` comes first, 1 if ``b`` does.

    The id may be omitted from both, in which case equal pairs compare 0.
    """
    ka, kb = crowded_key(*_pad(a)), crowded_key(*_pad(b))
    return -1 if ka < kb else (1 if ka > kb else 0)


def _pad(t: tuple) -> tuple:
    return tuple(t) if len(t) == 3 else (t[0], t[1], 0)


def select(parents: list, offspring: list, n: int) -> list:
    """Survival selection over ``parents + offspring``.

    Whole fronts are taken in rank order while they fit; the first front that
    does not fit is cut after its ``remaining`` members of highest crowding
    distance (ties broken by ascending ``id``). Individuals need ``objectives``
    and ``id`` attributes.
    """
    union = list(parents) + list(offspring)
    if n < 1:
        raise ValueError("n must be positive")
    if len(union) < n:
        raise ValueError(f"cannot select {n} from {len(union)} individuals")
    for ind in union:
        if getattr(ind, "objectives", None) is None:
            raise ValueError(f"individual {getattr(ind, 'id', '?')} has not been evaluated")

    levels = non_dominated_sort([ind.objectives for ind in union])
    chosen: list[Any] = []
    remaining = n
    for front in levels.fronts:
        ordered = sorted(
            front,
            key=lambda i: crowded_key(0, levels.crowding[i], union[i].id),
        )
        if len(ordered) < remaining:
            chosen += [union[i] for i in ordered]
            remaining -= len(ordered)
        else:
            chosen += [union[i] for i in ordered[:remaining]]
            break
    return chosen


def non_dominated(points) -> list[int]:
    """Indices of the non-dominated members of ``points``."""
    if len(points) == 0:
        return []
    dom = dominance_matrix(points)
    return [int(i) for i in np.flatnonzero(~dom.any(axis=0))]


def hypervolume_2d(points, reference=(0.0, 0.0)) -> float:
    """Area dominated by ``points`` and bounded below by ``reference``.

    Points that do not strictly exceed the reference in both objectives are
    dropped, since their rectangle is empty.
    """
    ref = np.asarray(reference, dtype=float)
    p = np.asarray(points, dtype=float)
    if ref.shape != (2,) or (p.size and (p.ndim != 2 or p.shape[1] != 2)):
        raise ValueError("hypervolume_2d only supports two objectives")
    if p.size == 0:
        return 0.0
    p = p[(p[:, 0] > ref[0]) & (p[:, 1] > ref[1])]
    # descending in the first objective, sweep upwards in the second
    p = p[np.lexsort((-p[:, 1], -p[:, 0]))]
    area = 0.0
    top = ref[1]
    for x, y in p:
        if y > top:
            area += (x - ref[0]) * (y - top)
            top = y
    return float(area)
