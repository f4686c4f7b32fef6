import sys
from pathlib import Path

import numpy as np
import pytest

from moenas import genome as gen

TESTS = Path(__file__).parent
MOCK = str(TESTS / "mock_evaluator.py")

# random_genome(default_rng(42), 5), frozen when the encoding was fixed
GOLDEN_SEED42 = (
    '{"normal":{"blocks":[[0,"sep_conv_5x5",1,"max_pool_3x3"],[1,"sep_conv_7x7",0,"sep_conv_5x5"],'
    '[0,"identity",2,"sep_conv_7x7"],[3,"sep_conv_5x5",3,"sep_conv_5x5"],[3,"identity",5,"max_pool_3x3"]],'
    '"extra":[0,3,4,5]},"reduction":{"blocks":[[1,"sep_conv_3x3",0,"max_pool_3x3"],'
    '[0,"identity",1,"sep_conv_7x7"],[0,"sep_conv_7x7",3,"avg_pool_3x3"],[3,"identity",3,"sep_conv_5x5"],'
    '[2,"identity",5,"max_pool_3x3"]],"extra":[0,1,2,3]}}'
)


def mock_command(*flags):
    return [sys.executable, MOCK, *flags]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def golden():
    return gen.deserialize(GOLDEN_SEED42)


def all_identity_cell(n_blocks=5, extra=()):
    return gen.CellGenome([gen.Block(0, "identity", 1, "identity")] * n_blocks, extra)


# acceptance verdicts, printed together at the end of the session
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
