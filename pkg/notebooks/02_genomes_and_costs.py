"""
Cell genomes and analytic network cost
======================================

A genome holds a normal and a reduction cell. Each cell is B blocks of
(input, operation, input, operation) plus optional extra connections to the
final concatenation.
"""

# %%
import numpy as np

from moenas import genome as gen
from moenas.network import MacroConfig, build_network, network_cost, speed

rng = np.random.default_rng(42)
g = gen.random_genome(rng)
print(gen.serialize(g))

# %% [markdown]
# The cell as a graph: nodes are the two cell inputs, the blocks and the
# concatenation.

# %%
for src, dsts in gen.decode_dag(g.normal).adjacency().items():
    print(f"{src:8s} -> {dsts}")
print("unused blocks feeding concat:", gen.concat_sources(g.normal))

# %% [markdown]
# Variation works on the flat component list. Mutation redraws each
# component with probability mu, crossover swaps it.

# %%
other = gen.random_genome(rng)
child, _ = gen.crossover(g, other, 0.5, rng)
child = gen.mutate(child, 0.1, rng)
a, b, c = map(gen.to_components, (g, other, child))
print("from first parent:", sum(x == z for x, z in zip(a, c)), "of", len(c))
print("validation problems:", gen.validate(child))

# %% [markdown]
# Stacking cells into a network. The CIFAR template places N normal cells
# per stack with reductions in between, ImageNet adds a stem and two extra
# reduction cells.

# %%
for macro in (MacroConfig("cifar10", 2, 32), MacroConfig("imagenet", 4, 44)):
    plan = build_network(g, macro)
    cost = network_cost(g, macro)
    print(macro.template, [c.kind[0] for c in plan.cells], plan.final_shape)
    print(f"  mult-adds {cost.mult_adds:,}  params {cost.params:,}  speed {speed(cost):.2f}")

# %% [markdown]
# How big the space is for B = 5 and six operations.

# %%
ordered, symmetric = gen.search_space_size(5, len(gen.OPERATIONS))
print(f"{ordered:.3e} ordered genomes, {symmetric:.3e} up to block-arm symmetry")
