"""
Pareto ranking, crowding and hypervolume
========================================

Every objective is maximized. Ranks come from non-dominated sorting, ties
inside a front are broken by crowding distance.
"""

# %%
import numpy as np

from moenas import pareto

rng = np.random.default_rng(0)
points = rng.random((12, 2))
levels = pareto.non_dominated_sort(points)
for r, front in enumerate(levels.fronts):
    print(f"rank {r}: {front}")

# %% [markdown]
# Boundary members of a front get an infinite crowding distance, interior
# members the sum of normalized neighbour gaps.

# %%
front = points[levels.fronts[0]]
print(np.column_stack([front, pareto.crowding_distance(front)]))
print(pareto.crowding_distance([(1, 3), (2, 2), (3, 1)]))

# %% [markdown]
# Survival selection keeps whole fronts while they fit and fills the rest
# from the next front by crowding distance.

# %%
class Point:
    def __init__(self, objectives, id):
        self.objectives, self.id = tuple(objectives), id


pool = [Point(p, i) for i, p in enumerate(points)]
survivors = pareto.select(pool[:6], pool[6:], 6)
print(sorted(s.id for s in survivors))

# %% [markdown]
# Hypervolume against the reference point (0, 0). Adding a point never
# shrinks it, and dominated points contribute nothing.

# %%
print(pareto.hypervolume_2d([(1, 2), (2, 1)]))
print(pareto.hypervolume_2d([(1, 2), (2, 1), (0.5, 0.5)]))
print(pareto.hypervolume_2d(points), pareto.hypervolume_2d(front))
