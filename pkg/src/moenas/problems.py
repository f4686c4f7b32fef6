"""Representations the search engine can evolve.

A problem bundles random initialization, the two uniform variation operators,
a canonical key (used for caching and archive de-duplication), JSON encoding
for checkpoints and batch evaluation.
"""

from __future__ import annotations

import json
import math
from typing import Sequence

import numpy as np

from . import genome as gen
from .evaluation import (
    EvaluationRequest,
    ExternalEvaluator,
    Outcome,
    compose_objectives,
    objective_kind,
    thread_map,
)
from .network import MacroConfig


class Problem:
    """Base class; subclasses fill in the representation."""

    objectives: tuple[str, ...] = ()
    reference: tuple[float, ...] = (0.0, 0.0)

    @property
    def n_objectives(self) -> int:
        return len(self.objectives)

    def random(self, rng: np.random.Generator):
        raise NotImplementedError

    def mutate(self, x, mu: float, rng: np.random.Generator):
        raise NotImplementedError

    def crossover(self, a, b, mu: float, rng: np.random.Generator):
        raise NotImplementedError

    def key(self, x) -> str:
        return json.dumps(self.encode(x), separators=(",", ":"))

    def encode(self, x):
        raise NotImplementedError

    def decode(self, data):
        raise NotImplementedError

    def evaluate(self, items: Sequence[tuple[int, object]], parallelism: int = 1) -> list[Outcome]:
        raise NotImplementedError

    def close(self) -> None:
        pass


class NASProblem(Problem):
    """Cell genomes scored by analytic costs plus surrogate or external accuracy."""

    def __init__(
        self,
        objectives: Sequence[str] = ("surrogate", "speed"),
        macro: MacroConfig | None = None,
        n_blocks: int = gen.DEFAULT_BLOCKS,
        evaluator: ExternalEvaluator | None = None,
    ):
        self.objectives = tuple(objectives)
        self.macro = macro or MacroConfig()
        self.n_blocks = n_blocks
        self.evaluator = evaluator
        self.n_external = sum(objective_kind(o) == "external" for o in self.objectives)
        if self.n_external and evaluator is None:
            raise ValueError("external objectives need an external evaluator")

    def random(self, rng):
        return gen.random_genome(rng, self.n_blocks)

    def mutate(self, x, mu, rng):
        return gen.mutate(x, mu, rng)

    def crossover(self, a, b, mu, rng):
        return gen.crossover(a, b, mu, rng)

    def key(self, x) -> str:
        return gen.serialize(x)

    def encode(self, x):
        return gen.to_dict(x)

    def decode(self, data):
        return gen.from_dict(data, self.n_blocks)

    def _compose(self, g, external=()) -> Outcome:
        return Outcome(compose_objectives(g, self.objectives, self.macro, external))

    def evaluate(self, items, parallelism=1):
        if not self.n_external:
            return thread_map(lambda item: self._compose(item[1]), list(items), parallelism)
        requests = [EvaluationRequest(uid, g, self.macro) for uid, g in items]
        responses = self.evaluator.evaluate(requests, max_in_flight=parallelism)
        out = []
        for (_, g), resp in zip(items, responses):
            if not resp.ok:
                out.append(Outcome(None, resp.error))
            elif len(resp.objectives) != self.n_external:
                out.append(
                    Outcome(None, f"expected {self.n_external} objectives, got {len(resp.objectives)}")
                )
            else:
                out.append(self._compose(g, resp.objectives))
        return out

    def close(self) -> None:
        if self.evaluator is not None:
            self.evaluator.close()


def zdt1(x: Sequence[float]) -> tuple[float, float]:
    """ZDT1 in maximization form: ``(1 - f1, 1 - f2)`` of the usual minimization pair.

    The Pareto-optimal set is ``x[1:] == 0``, where the front is
    ``f2 = sqrt(1 - f1)`` on ``f1`` in [0, 1].
    """
    n = len(x)
    x1 = float(x[0])
    g = 1.0 + 9.0 * sum(float(v) for v in x[1:]) / (n - 1) if n > 1 else 1.0
    return 1.0 - x1, 1.0 - g * (1.0 - math.sqrt(x1 / g))


benchmark_objectives = zdt1

ZDT1_FRONT_HYPERVOLUME = 2.0 / 3.0  # integral of sqrt(1 - t) over [0, 1]


def distance_to_zdt1_front(points, resolution: int = 20001) -> np.ndarray:
    """Euclidean distance of each objective vector to the analytic ZDT1 front."""
    t = np.linspace(0.0, 1.0, resolution)
    curve = np.stack([1.0 - t, np.sqrt(t)], axis=1)
    p = np.atleast_2d(np.asarray(points, dtype=float))
    d2 = ((p[:, None, :] - curve[None, :, :]) ** 2).sum(axis=-1)
    return np.sqrt(d2.min(axis=1))


class ZDT1Problem(Problem):
    """Real vectors in [0, 1]^n with the same uniform operators as cell genomes."""

    objectives = ("f1", "f2")

    def __init__(self, n_vars: int = 8):
        if n_vars < 1:
            raise ValueError("n_vars must be positive")
        self.n_vars = n_vars

    def random(self, rng):
        return tuple(float(v) for v in rng.random(self.n_vars))

    def mutate(self, x, mu, rng):
        out = list(x)
        for i in range(len(out)):
            if rng.random() < mu:
                out[i] = float(rng.random())
        return tuple(min(1.0, max(0.0, v)) for v in out)

    def crossover(self, a, b, mu, rng):
        ca, cb = list(a), list(b)
        for i in range(len(ca)):
            if rng.random() < mu:
                ca[i], cb[i] = cb[i], ca[i]
        return tuple(ca), tuple(cb)

    def encode(self, x):
        return list(x)

    def decode(self, data):
        if len(data) != self.n_vars:
            raise ValueError(f"expected {self.n_vars} variables, got {len(data)}")
        return tuple(float(v) for v in data)

    def evaluate(self, items, parallelism=1):
        return thread_map(lambda item: Outcome(zdt1(item[1])), list(items), parallelism)
