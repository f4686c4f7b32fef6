"""Generational multi-objective search loop with a hall-of-fame archive.

One generation: binary-tournament mating selection under the crowded order,
pairwise uniform crossover and uniform mutation producing ``N`` offspring,
cached evaluation, survival selection over parents and offspring, archive
update, and a hypervolume measurement of the archive.
"""

from __future__ import annotations

import hashlib
import json
import logging
import shlex
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import pareto
from .evaluation import ExternalEvaluator, dispatch, objective_kind
from .network import MacroConfig
from .problems import NASProblem, Problem, ZDT1Problem

log = logging.getLogger(__name__)

# assigned to every objective of an individual whose evaluation failed
FAILED_OBJECTIVE = -1e12

CHECKPOINT_DIR = "checkpoints"
CHECKPOINT_PATTERN = "gen-%05d"


class ConfigError(ValueError):
    pass


class CheckpointError(RuntimeError):
    pass


@dataclass(frozen=True)
class EvaluatorSettings:
    command: tuple[str, ...] | None = None
    address: str | None = None
    timeout: float = 600.0
    retries: int = 1


@dataclass(frozen=True)
class SearchConfig:
    population_size: int = 32
    mu_cross: float = 0.1
    mu_mut: float = 0.1
    max_generations: int = 50
    plateau_window: int = 10
    plateau_epsilon: float = 1e-3
    seed: int = 0
    problem: str = "nas"
    n_vars: int = 8
    objectives: tuple[str, ...] = ("surrogate", "speed")
    blocks: int = 5
    macro: MacroConfig = field(default_factory=MacroConfig)
    reference: tuple[float, ...] = (0.0, 0.0)
    evaluator: EvaluatorSettings = field(default_factory=EvaluatorSettings)
    parallelism: int = 1

    def __post_init__(self):
        object.__setattr__(self, "objectives", tuple(self.objectives))
        object.__setattr__(self, "reference", tuple(float(r) for r in self.reference))
        self.validate()

    def validate(self) -> None:
        n = self.population_size
        if not isinstance(n, int) or n < 2 or n % 2:
            raise ConfigError(f"population_size must be an even integer >= 2, got {n!r}")
        for name in ("mu_cross", "mu_mut"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {p}")
        if self.max_generations < 0 or self.plateau_window < 1 or self.plateau_epsilon < 0:
            raise ConfigError("max_generations >= 0, plateau_window >= 1, plateau_epsilon >= 0 required")
        if self.parallelism < 1:
            raise ConfigError("parallelism must be at least 1")
        if self.problem == "nas":
            if len(self.objectives) < 2:
                raise ConfigError("declare at least two objectives")
            try:
                kinds = [objective_kind(o) for o in self.objectives]
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
            if "external" in kinds and not (self.evaluator.command or self.evaluator.address):
                raise ConfigError("external objectives need evaluator.command or evaluator.address")
            if self.blocks < 1:
                raise ConfigError("blocks must be positive")
        elif self.problem == "zdt1":
            if self.n_vars < 1:
                raise ConfigError("n_vars must be positive")
        else:
            raise ConfigError(f"unknown problem {self.problem!r}")
        if len(self.reference) != self.n_objectives:
            raise ConfigError("reference point needs one coordinate per objective")

    @property
    def n_objectives(self) -> int:
        return 2 if self.problem == "zdt1" else len(self.objectives)

    @classmethod
    def from_dict(cls, data: dict) -> "SearchConfig":
        data = dict(data)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            if "macro" in data:
                data["macro"] = MacroConfig(**data["macro"])
            if "evaluator" in data:
                ev = dict(data["evaluator"])
                if isinstance(ev.get("command"), str):
                    ev["command"] = shlex.split(ev["command"])
                if ev.get("command") is not None:
                    ev["command"] = tuple(ev["command"])
                data["evaluator"] = EvaluatorSettings(**ev)
            if data.get("problem") == "zdt1" and "reference" not in data:
                data["reference"] = (0.0, 0.0)
            return cls(**data)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self) -> dict:
        ev = self.evaluator
        return {
            "population_size": self.population_size,
            "mu_cross": self.mu_cross,
            "mu_mut": self.mu_mut,
            "max_generations": self.max_generations,
            "plateau_window": self.plateau_window,
            "plateau_epsilon": self.plateau_epsilon,
            "seed": self.seed,
            "problem": self.problem,
            "n_vars": self.n_vars,
            "objectives": list(self.objectives),
            "blocks": self.blocks,
            "macro": {**self.macro.to_dict(), "batchnorm": self.macro.batchnorm},
            "reference": list(self.reference),
            "evaluator": {
                "command": None if ev.command is None else list(ev.command),
                "address": ev.address,
                "timeout": ev.timeout,
                "retries": ev.retries,
            },
            "parallelism": self.parallelism,
        }

    def search_hash(self) -> str:
        """Hash of every setting that shapes the search trajectory.

        Stopping rules, parallelism and evaluator transport settings are left
        out, so a run can be resumed with a larger budget or more workers.
        """
        d = self.to_dict()
        for k in ("max_generations", "plateau_window", "plateau_epsilon", "parallelism", "evaluator"):
            d.pop(k)
        if self.problem == "zdt1":
            for k in ("objectives", "blocks", "macro"):
                d.pop(k)
        else:
            d.pop("n_vars")
        text = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


def make_problem(config: SearchConfig) -> Problem:
    if config.problem == "zdt1":
        return ZDT1Problem(config.n_vars)
    evaluator = None
    if any(objective_kind(o) == "external" for o in config.objectives):
        ev = config.evaluator
        evaluator = ExternalEvaluator.connect(ev.command, ev.address, ev.timeout, ev.retries)
    return NASProblem(config.objectives, config.macro, config.blocks, evaluator)


@dataclass
class Individual:
    genome: Any
    objectives: tuple[float, ...] | None
    id: int
    birth_generation: int = 0
    error: str | None = None


@dataclass
class SearchState:
    generation: int
    population: list[Individual]
    archive: list[Individual]
    rng_state: dict
    hypervolume_history: list[float]
    eval_cache: dict = field(default_factory=dict)
    next_id: int = 0
    best_history: list[list[float]] = field(default_factory=list)


@dataclass
class SearchResult:
    archive: list[Individual]
    state: SearchState
    history: list[float]


def _rng(state_dict: dict) -> np.random.Generator:
    rng = np.random.default_rng()
    rng.bit_generator.state = state_dict
    return rng


def _evaluate(
    genomes: Sequence,
    first_id: int,
    generation: int,
    problem: Problem,
    cache: dict,
    parallelism: int,
) -> tuple[list[Individual], int]:
    items = [(first_id + i, g) for i, g in enumerate(genomes)]
    outcomes, n_sent = dispatch(items, problem.key, problem.evaluate, cache, parallelism)
    out = []
    for (uid, g), res in zip(items, outcomes):
        if res.error is not None:
            log.error("evaluation of individual %d failed: %s", uid, res.error)
            objs = (FAILED_OBJECTIVE,) * problem.n_objectives
            out.append(Individual(g, objs, uid, generation, res.error))
        else:
            out.append(Individual(g, tuple(res.objectives), uid, generation))
    log.debug("generation %d: %d evaluations dispatched, %d cached", generation, n_sent, len(items) - n_sent)
    return out, n_sent


def update_archive(
    archive: Sequence[Individual],
    newcomers: Sequence[Individual],
    key: Callable[[Individual], Any] = lambda ind: ind.genome,
) -> list[Individual]:
    """Non-dominated subset of ``archive + newcomers``, one entry per genome."""
    pool, seen = [], set()
    for ind in list(archive) + list(newcomers):
        if ind.error is not None or ind.objectives is None:
            continue
        k = key(ind)
        if k in seen:
            continue
        seen.add(k)
        pool.append(ind)
    if not pool:
        return []
    keep = pareto.non_dominated([ind.objectives for ind in pool])
    return [pool[i] for i in keep]


def archive_hypervolume(archive: Sequence[Individual], reference: Sequence[float]) -> float | None:
    if len(reference) != 2:
        return None
    if not archive:
        return 0.0
    return pareto.hypervolume_2d([ind.objectives for ind in archive], reference)


def _record(state: SearchState, reference) -> None:
    hv = archive_hypervolume(state.archive, reference)
    if hv is not None:
        state.hypervolume_history.append(hv)
    if state.archive:
        objs = np.array([ind.objectives for ind in state.archive])
        state.best_history.append([float(v) for v in objs.max(axis=0)])
    else:
        state.best_history.append([])


def initialize(config: SearchConfig, problem: Problem) -> SearchState:
    rng = np.random.default_rng(config.seed)
    genomes = [problem.random(rng) for _ in range(config.population_size)]
    cache: dict = {}
    population, _ = _evaluate(genomes, 0, 0, problem, cache, config.parallelism)
    state = SearchState(
        generation=0,
        population=population,
        archive=update_archive([], population, lambda ind: problem.key(ind.genome)),
        rng_state=rng.bit_generator.state,
        hypervolume_history=[],
        eval_cache=cache,
        next_id=len(population),
    )
    _record(state, config.reference)
    return state


def mating_select(population: Sequence[Individual], rng: np.random.Generator) -> list[int]:
    """Indices of ``len(population)`` parents, each the winner of a binary tournament.

    Both contestants are drawn uniformly with replacement; the one first in
    the crowded order (rank, then crowding distance, then id) wins.
    """
    levels = pareto.non_dominated_sort([ind.objectives for ind in population])
    keys = [
        pareto.crowded_key(int(levels.rank[i]), float(levels.crowding[i]), ind.id)
        for i, ind in enumerate(population)
    ]
    n = len(population)
    winners = []
    for _ in range(n):
        i, j = int(rng.integers(n)), int(rng.integers(n))
        winners.append(i if keys[i] <= keys[j] else j)
    return winners


def step(state: SearchState, config: SearchConfig, problem: Problem) -> SearchState:
    """Advance one generation. ``state`` itself is never modified."""
    rng = _rng(state.rng_state)
    n = config.population_size
    parents = mating_select(state.population, rng)
    children = []
    for k in range(n // 2):
        a = state.population[parents[2 * k]].genome
        b = state.population[parents[2 * k + 1]].genome
        c1, c2 = problem.crossover(a, b, config.mu_cross, rng)
        children += [problem.mutate(c1, config.mu_mut, rng), problem.mutate(c2, config.mu_mut, rng)]

    cache = dict(state.eval_cache)
    generation = state.generation + 1
    offspring, _ = _evaluate(children, state.next_id, generation, problem, cache, config.parallelism)
    survivors = pareto.select(state.population, offspring, n)

    new = SearchState(
        generation=generation,
        population=survivors,
        archive=update_archive(state.archive, offspring, lambda ind: problem.key(ind.genome)),
        rng_state=rng.bit_generator.state,
        hypervolume_history=list(state.hypervolume_history),
        eval_cache=cache,
        next_id=state.next_id + len(offspring),
        best_history=[list(b) for b in state.best_history],
    )
    _record(new, config.reference)
    return new


def converged(state: SearchState, config: SearchConfig) -> bool:
    """Budget exhausted, or the archive hypervolume gained less than
    ``plateau_epsilon`` (relative) over the last ``plateau_window`` generations."""
    if state.generation >= config.max_generations:
        return True
    w = config.plateau_window
    hist = state.hypervolume_history
    if state.generation < w or len(hist) <= w:
        return False
    return relative_gain(hist[-1 - w], hist[-1]) < config.plateau_epsilon


def relative_gain(before: float, after: float) -> float:
    if before == 0:
        return 0.0 if after == 0 else float("inf")
    return (after - before) / abs(before)


# ---------------------------------------------------------------------------
# checkpoints


def _individual_to_dict(ind: Individual, problem: Problem) -> dict:
    return {
        "id": ind.id,
        "generation": ind.birth_generation,
        "genome": problem.encode(ind.genome),
        "objectives": None if ind.objectives is None else list(ind.objectives),
        "error": ind.error,
    }


def _individual_from_dict(d: dict, problem: Problem) -> Individual:
    objs = d.get("objectives")
    return Individual(
        problem.decode(d["genome"]),
        None if objs is None else tuple(float(v) for v in objs),
        int(d["id"]),
        int(d.get("generation", 0)),
        d.get("error"),
    )


def state_to_dict(state: SearchState, problem: Problem, config_hash: str) -> dict:
    return {
        "config_hash": config_hash,
        "generation": state.generation,
        "next_id": state.next_id,
        "rng_state": state.rng_state,
        "population": [_individual_to_dict(i, problem) for i in state.population],
        "archive": [_individual_to_dict(i, problem) for i in state.archive],
        "hypervolume_history": list(state.hypervolume_history),
        "best_history": state.best_history,
        "eval_cache": {k: list(v) for k, v in state.eval_cache.items()},
    }


def state_from_dict(data: dict, problem: Problem) -> SearchState:
    return SearchState(
        generation=int(data["generation"]),
        population=[_individual_from_dict(d, problem) for d in data["population"]],
        archive=[_individual_from_dict(d, problem) for d in data["archive"]],
        rng_state=data["rng_state"],
        hypervolume_history=[float(v) for v in data["hypervolume_history"]],
        eval_cache={k: tuple(v) for k, v in data["eval_cache"].items()},
        next_id=int(data["next_id"]),
        best_history=data.get("best_history", []),
    )


def checkpoint_path(run_dir: Path | str, generation: int) -> Path:
    return Path(run_dir) / CHECKPOINT_DIR / (CHECKPOINT_PATTERN % generation)


def save_checkpoint(run_dir: Path | str, state: SearchState, problem: Problem, config_hash: str) -> Path:
    path = checkpoint_path(run_dir, state.generation)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(state_to_dict(state, problem, config_hash), sort_keys=True, indent=1)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text + "\n")
    tmp.replace(path)
    return path


def latest_checkpoint(run_dir: Path | str) -> Path | None:
    found = sorted((Path(run_dir) / CHECKPOINT_DIR).glob("gen-[0-9][0-9][0-9][0-9][0-9]"))
    return found[-1] if found else None


def load_checkpoint(path: Path | str, problem: Problem, config_hash: str | None = None) -> SearchState:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if config_hash is not None and data.get("config_hash") != config_hash:
        raise CheckpointError(f"checkpoint {path} was written by a different search configuration")
    try:
        return state_from_dict(data, problem)
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"corrupt checkpoint {path}: {exc}") from exc


# ---------------------------------------------------------------------------


def run(
    config: SearchConfig,
    problem: Problem | None = None,
    run_dir: Path | str | None = None,
    resume: bool = False,
    on_generation: Callable[[SearchState], None] | None = None,
) -> SearchResult:
    """Initialize (or resume from the latest checkpoint) and step until converged.

    With ``run_dir`` set, a checkpoint is written after every generation.
    """
    own_problem = problem is None
    problem = problem or make_problem(config)
    chash = config.search_hash()
    try:
        if resume:
            if run_dir is None:
                raise CheckpointError("resuming needs a run directory")
            path = latest_checkpoint(run_dir)
            if path is None:
                raise CheckpointError(f"no checkpoint found in {run_dir}")
            state = load_checkpoint(path, problem, chash)
            log.info("resumed from %s", path)
        else:
            state = initialize(config, problem)
            if run_dir is not None:
                save_checkpoint(run_dir, state, problem, chash)
            if on_generation:
                on_generation(state)
        while not converged(state, config):
            state = step(state, config, problem)
            if run_dir is not None:
                save_checkpoint(run_dir, state, problem, chash)
            hv = state.hypervolume_history[-1] if state.hypervolume_history else float("nan")
            log.info("generation %d: archive %d, hypervolume %.6g", state.generation, len(state.archive), hv)
            if on_generation:
                on_generation(state)
    finally:
        if own_problem:
            problem.close()
    return SearchResult(state.archive, state, state.hypervolume_history)


def with_overrides(config: SearchConfig, **changes) -> SearchConfig:
    return replace(config, **changes)
