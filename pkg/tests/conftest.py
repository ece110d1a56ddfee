import numpy as np
import pytest
from hypothesis import settings
from hypothesis import strategies as st

from coarsekit.graphs import FiniteGraph

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_connected(rng: np.random.Generator, n: int, extra: float = 0.3) -> FiniteGraph:
    """Random spanning tree plus independent extra edges (parallel edges allowed)."""
    order = rng.permutation(n)
    edges = [(int(order[i]), int(order[rng.integers(0, i)])) for i in range(1, n)]
    for u in range(n):
        for v in range(u + 1, n):
            if rng.random() < extra:
                edges.append((u, v))
    return FiniteGraph(n, edges)


@st.composite
def connected_graphs(draw, min_n=2, max_n=9):
    n = draw(st.integers(min_n, max_n))
    seed = draw(st.integers(0, 2**32 - 1))
    extra = draw(st.floats(0.0, 0.8))
    return random_connected(np.random.default_rng(seed), n, extra)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
