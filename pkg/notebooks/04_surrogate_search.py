"""
Architecture search with the surrogate evaluator
================================================

Accuracy is replaced by a deterministic function of network size so a full
search runs in seconds. The second objective is speed, 2e9 / FLOPS.
"""

# %%
import tempfile
from pathlib import Path

import numpy as np

from moenas import SearchConfig, network_cost, run, speed
from moenas.evolution import latest_checkpoint

run_dir = Path(tempfile.mkdtemp()) / "search"
config = SearchConfig(population_size=32, max_generations=30, plateau_window=10, seed=0)
result = run(config, run_dir=run_dir)
print("stopped after", result.state.generation, "generations")

# %% [markdown]
# The archive is the trade-off curve: more Mult-Adds buy accuracy and cost
# speed.

# %%
front = sorted(result.archive, key=lambda ind: -ind.objectives[0])
for ind in front[:: max(1, len(front) // 8)]:
    acc, spd = ind.objectives
    print(f"acc {acc:.4f}  speed {spd:6.2f}  mult-adds {network_cost(ind.genome, config.macro).mult_adds:>12,}")
speeds = np.array([ind.objectives[1] for ind in front])
print(f"speed range {speeds.max() / speeds.min():.1f}x over {len(front)} points")

# %% [markdown]
# A checkpoint is written after every generation; resuming with a larger
# budget continues exactly where the run stopped.

# %%
print(latest_checkpoint(run_dir).name)
longer = SearchConfig(population_size=32, max_generations=40, plateau_window=10**6, seed=0)
resumed = run(longer, run_dir=run_dir, resume=True)
print("now at generation", resumed.state.generation, "with", len(resumed.archive), "archived")
print("speed of the fastest:", max(speed(network_cost(i.genome, config.macro)) for i in resumed.archive))
