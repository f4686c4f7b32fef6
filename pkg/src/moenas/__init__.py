"""Multi-objective evolutionary search over cell-based network architectures."""

from .evolution import (
    Individual,
    SearchConfig,
    SearchResult,
    SearchState,
    converged,
    initialize,
    mating_select,
    run,
    step,
    update_archive,
)
from .genome import Block, CellGenome, Genome, random_genome
from .network import CostReport, MacroConfig, network_cost, speed
from .pareto import crowding_distance, dominates, hypervolume_2d, non_dominated_sort, select
from .problems import NASProblem, ZDT1Problem

__version__ = "0.1.0"

__all__ = [
    "Block",
    "CellGenome",
    "CostReport",
    "Genome",
    "Individual",
    "MacroConfig",
    "NASProblem",
    "SearchConfig",
    "SearchResult",
    "SearchState",
    "ZDT1Problem",
    "converged",
    "crowding_distance",
    "dominates",
    "hypervolume_2d",
    "initialize",
    "mating_select",
    "network_cost",
    "non_dominated_sort",
    "random_genome",
    "run",
    "select",
    "speed",
    "step",
    "update_archive",
]
