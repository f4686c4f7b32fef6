"""Cell-based architecture encoding and its uniform variation operators.

A cell is ``B`` blocks. Block ``i`` is a 4-tuple ``(input1, op1, input2, op2)``
whose inputs index into ``0`` (the cell input c_{k-2}), ``1`` (c_{k-1}) or
``2 + j`` (output of block ``j < i``). Besides the blocks that no later block
consumes, any source in ``0 .. B+1`` may be routed to the cell's final depth
concatenation through ``extra``.

Every genome is flattened into a fixed sequence of integer *components* with a
per-position legal range, so the uniform operators are simple loops::

    normal cell:    b0.input1, b0.op1, b0.input2, b0.op2, b1.input1, ...,
                    extra flag for source 0, ..., extra flag for source B+1
    reduction cell: same layout

Mutation, crossover and random initialization all walk this sequence in order,
which fixes how they consume the random generator.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

OPERATIONS: tuple[str, ...] = (
    "identity",
    "avg_pool_3x3",
    "max_pool_3x3",
    "sep_conv_3x3",
    "sep_conv_5x5",
    "sep_conv_7x7",
)
_OP_INDEX = {name: i for i, name in enumerate(OPERATIONS)}

DEFAULT_BLOCKS = 5


class GenomeError(ValueError):
    """Raised for malformed genome text or structurally invalid genomes."""


@dataclass(frozen=True)
class Block:
    input1: int
    op1: str
    input2: int
    op2: str

    def as_list(self) -> list:
        return [self.input1, self.op1, self.input2, self.op2]


@dataclass(frozen=True)
class CellGenome:
    blocks: tuple[Block, ...]
    extra: frozenset[int] = frozenset()

    def __init__(self, blocks: Iterable[Block], extra: Iterable[int] = ()):
        object.__setattr__(self, "blocks", tuple(blocks))
        object.__setattr__(self, "extra", frozenset(int(e) for e in extra))

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)


@dataclass(frozen=True)
class Genome:
    normal: CellGenome
    reduction: CellGenome

    @property
    def n_blocks(self) -> int:
        return self.normal.n_blocks

    def cells(self) -> tuple[tuple[str, CellGenome], tuple[str, CellGenome]]:
        return (("normal", self.normal), ("reduction", self.reduction))


# ---------------------------------------------------------------------------
# component view


def component_ranges(n_blocks: int) -> list[int]:
    """Number of legal values for every component of a genome with ``n_blocks``."""
    per_cell: list[int] = []
    for i in range(n_blocks):
        per_cell += [i + 2, len(OPERATIONS), i + 2, len(OPERATIONS)]
    per_cell += [2] * (n_blocks + 2)
    return per_cell * 2


def to_components(g: Genome) -> list[int]:
    comps: list[int] = []
    for _, cell in g.cells():
        for b in cell.blocks:
            comps += [b.input1, _OP_INDEX[b.op1], b.input2, _OP_INDEX[b.op2]]
        comps += [int(s in cell.extra) for s in range(cell.n_blocks + 2)]
    return comps


def from_components(comps: Sequence[int], n_blocks: int) -> Genome:
    per_cell = 5 * n_blocks + 2
    if len(comps) != 2 * per_cell:
        raise GenomeError(f"expected {2 * per_cell} components, got {len(comps)}")
    cells = []
    for c in range(2):
        chunk = comps[c * per_cell : (c + 1) * per_cell]
        blocks = [
            Block(
                int(chunk[4 * i]),
                OPERATIONS[chunk[4 * i + 1]],
                int(chunk[4 * i + 2]),
                OPERATIONS[chunk[4 * i + 3]],
            )
            for i in range(n_blocks)
        ]
        flags = chunk[4 * n_blocks :]
        cells.append(CellGenome(blocks, [s for s, f in enumerate(flags) if f]))
    return Genome(cells[0], cells[1])


# ---------------------------------------------------------------------------
# operators


def random_genome(rng: np.random.Generator, n_blocks: int = DEFAULT_BLOCKS) -> Genome:
    """Draw every component uniformly over its legal range, in component order.

    Extra-connection flags are binary, so each candidate source is included
    with probability 1/2.
    """
    if n_blocks < 1:
        raise GenomeError("a cell needs at least one block")
    comps = [int(rng.integers(n)) for n in component_ranges(n_blocks)]
    return from_components(comps, n_blocks)


def mutate(g: Genome, mu_mut: float, rng: np.random.Generator) -> Genome:
    """Uniform mutation.

    Each component is, with probability ``mu_mut``, replaced by a uniform draw
    over its legal range (which may reproduce the old value). For every
    component one uniform number is consumed, plus one integer draw when it is
    resampled.
    """
    _check_probability(mu_mut, "mu_mut")
    comps = to_components(g)
    for k, n in enumerate(component_ranges(g.n_blocks)):
        if rng.random() < mu_mut:
            comps[k] = int(rng.integers(n))
    return from_components(comps, g.n_blocks)


def crossover(
    a: Genome, b: Genome, mu_cross: float, rng: np.random.Generator
) -> tuple[Genome, Genome]:
    """Uniform crossover: swap each aligned component with probability ``mu_cross``."""
    _check_probability(mu_cross, "mu_cross")
    if a.n_blocks != b.n_blocks or a.reduction.n_blocks != b.reduction.n_blocks:
        raise GenomeError("crossover parents must have the same number of blocks")
    ca, cb = to_components(a), to_components(b)
    for k in range(len(ca)):
        if rng.random() < mu_cross:
            ca[k], cb[k] = cb[k], ca[k]
    return from_components(ca, a.n_blocks), from_components(cb, b.n_blocks)


def _check_probability(p: float, name: str) -> None:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {p}")


# ---------------------------------------------------------------------------
# structure


def validate(g: Genome, n_blocks: int | None = None) -> list[str]:
    """Return a list of violations; an empty list means the genome is valid."""
    problems: list[str] = []
    expected = g.normal.n_blocks if n_blocks is None else n_blocks
    if expected < 1:
        problems.append("genome: cells need at least one block")
    for name, cell in g.cells():
        if cell.n_blocks != expected:
            problems.append(
                f"{name}: wrong block count {cell.n_blocks}, expected {expected}"
            )
        for i, b in enumerate(cell.blocks):
            for field in ("input1", "input2"):
                src = getattr(b, field)
                if not isinstance(src, (int, np.integer)) or isinstance(src, bool):
                    problems.append(f"{name}.block{i}.{field}: input is not an integer")
                elif src < 0 or src >= i + 2:
                    problems.append(
                        f"{name}.block{i}.{field}: input exceeds bound ({src} not in 0..{i + 1})"
                    )
            for field in ("op1", "op2"):
                if getattr(b, field) not in _OP_INDEX:
                    problems.append(
                        f"{name}.block{i}.{field}: unknown operation {getattr(b, field)!r}"
                    )
        for src in sorted(cell.extra):
            if src < 0 or src >= cell.n_blocks + 2:
                problems.append(
                    f"{name}.extra: extra connection out of range ({src} not in 0..{cell.n_blocks + 1})"
                )
    return problems


def used_blocks(cell: CellGenome) -> set[int]:
    """Indices of blocks whose output feeds some later block."""
    used = set()
    for b in cell.blocks:
        for src in (b.input1, b.input2):
            if src >= 2:
                used.add(src - 2)
    return used


def concat_sources(cell: CellGenome) -> list[int]:
    """Sources concatenated into the cell output, unused blocks first.

    Extra connections that duplicate an unused block are kept once.
    """
    used = used_blocks(cell)
    sources = [j + 2 for j in range(cell.n_blocks) if j not in used]
    sources += [s for s in sorted(cell.extra) if s not in sources]
    if not sources:
        # unreachable for valid cells (the last block has no consumer)
        sources = [cell.n_blocks + 1]
    return sources


def node_name(source: int) -> str:
    if source == 0:
        return "c_{k-2}"
    if source == 1:
        return "c_{k-1}"
    return f"block{source - 2}"


@dataclass(frozen=True)
class CellGraph:
    """Explicit DAG of a cell. ``edges`` are ``(src, dst, label)`` triples."""

    nodes: tuple[str, ...]
    edges: tuple[tuple[str, str, str], ...]

    def predecessors(self, node: str) -> list[str]:
        return [s for s, d, _ in self.edges if d == node]

    def adjacency(self) -> dict[str, list[str]]:
        adj: dict[str, list[str]] = {n: [] for n in self.nodes}
        for s, d, _ in self.edges:
            adj[s].append(d)
        return adj

    def is_acyclic(self) -> bool:
        # nodes are stored in topological order; every edge must point forward
        pos = {n: i for i, n in enumerate(self.nodes)}
        return all(pos[s] < pos[d] for s, d, _ in self.edges)


def decode_dag(cell: CellGenome) -> CellGraph:
    nodes = ["c_{k-2}", "c_{k-1}"] + [f"block{i}" for i in range(cell.n_blocks)] + ["concat"]
    edges = []
    for i, b in enumerate(cell.blocks):
        edges.append((node_name(b.input1), f"block{i}", b.op1))
        edges.append((node_name(b.input2), f"block{i}", b.op2))
    for src in concat_sources(cell):
        edges.append((node_name(src), "concat", "concat"))
    return CellGraph(tuple(nodes), tuple(edges))


def search_space_size(n_blocks: int, op_count: int = len(OPERATIONS)) -> tuple[int, int]:
    """Count genomes as ``(ordered, pair_symmetric)``.

    ``ordered`` counts every distinct component assignment of both cells
    including extra-connection subsets. ``pair_symmetric`` treats the two arms
    of each block as an unordered pair, dividing by 2 per block.
    """
    if n_blocks < 1 or op_count < 1:
        raise ValueError("n_blocks and op_count must be positive")
    per_cell = 1
    for i in range(n_blocks):
        per_cell *= ((i + 2) * op_count) ** 2
    ordered = per_cell**2 * 2 ** (2 * (n_blocks + 2))
    return ordered, ordered // 2 ** (2 * n_blocks)


# ---------------------------------------------------------------------------
# canonical text


def to_dict(g: Genome) -> dict:
    return {
        name: {
            "blocks": [b.as_list() for b in cell.blocks],
            "extra": sorted(int(e) for e in cell.extra),
        }
        for name, cell in g.cells()
    }


def serialize(g: Genome) -> str:
    """Canonical compact JSON; equal genomes always give identical text."""
    return json.dumps(to_dict(g), separators=(",", ":"))


def from_dict(data: dict, n_blocks: int | None = None) -> Genome:
    if not isinstance(data, dict) or set(data) != {"normal", "reduction"}:
        raise GenomeError("genome must be an object with exactly 'normal' and 'reduction'")
    cells = []
    for name in ("normal", "reduction"):
        cell = data[name]
        if not isinstance(cell, dict) or "blocks" not in cell:
            raise GenomeError(f"{name}: expected an object with 'blocks' and 'extra'")
        blocks = []
        for i, raw in enumerate(cell["blocks"]):
            if not isinstance(raw, list) or len(raw) != 4:
                raise GenomeError(f"{name}.block{i}: expected [input1, op1, input2, op2]")
            i1, o1, i2, o2 = raw
            for op in (o1, o2):
                if op not in _OP_INDEX:
                    raise GenomeError(f"{name}.block{i}: unknown operation {op!r}")
            for src in (i1, i2):
                if not isinstance(src, int) or isinstance(src, bool):
                    raise GenomeError(f"{name}.block{i}: input {src!r} is not an integer")
            blocks.append(Block(i1, o1, i2, o2))
        extra = cell.get("extra", [])
        if not isinstance(extra, list) or not all(
            isinstance(e, int) and not isinstance(e, bool) for e in extra
        ):
            raise GenomeError(f"{name}.extra: expected a list of integers")
        if len(set(extra)) != len(extra):
            raise GenomeError(f"{name}.extra: duplicate extra connection")
        cells.append(CellGenome(blocks, extra))
    g = Genome(cells[0], cells[1])
    problems = validate(g, n_blocks)
    if problems:
        raise GenomeError("; ".join(problems))
    return g


def deserialize(text: str, n_blocks: int | None = None) -> Genome:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GenomeError(f"malformed genome text: {exc}") from exc
    return from_dict(data, n_blocks)
