import numpy as np
import pytest
from hypothesis import strategies as st

from hiersel import parse_hierarchy
from hiersel.hierarchy import from_edges

FIVE_NODE_TSV = "r\ta\nr\tb\na\ta1\na\ta2\n"

# (criterion number, passed, detail) gathered by tests/test_acceptance.py
ACCEPTANCE_RESULTS = []


@pytest.fixture
def five():
    return parse_hierarchy(FIVE_NODE_TSV)


@pytest.fixture
def five_probs(five):
    """Leaf probabilities a1=0.4, a2=0.35, b=0.25 in canonical column order."""
    p = {"a1": 0.4, "a2": 0.35, "b": 0.25}
    return np.array([p[name] for name in five.leaf_names])


def tree_from_parents(parents):
    """Node i > 0 hangs under parents[i - 1] (< i); ids equal list positions."""
    return from_edges((f"v{p}", f"v{i}") for i, p in enumerate(parents, start=1))


def random_tree(rng, max_nodes=15):
    while True:
        n = int(rng.integers(3, max_nodes + 1))
        parents = [int(rng.integers(0, i)) for i in range(1, n)]
        if parents != list(range(n - 1)):
            return tree_from_parents(parents)


@st.composite
def trees(draw, max_nodes=12):
    n = draw(st.integers(3, max_nodes))
    parents = [draw(st.integers(0, i - 1)) for i in range(1, n)]
    # only a bare path has a single leaf; branch its last node off the root
    if parents == list(range(n - 1)):
        parents[-1] = 0
    return tree_from_parents(parents)


@st.composite
def tree_and_row(draw, max_nodes=12):
    """A tree, one leaf-probability row (with occasional exact ties) and a label column."""
    h = draw(trees(max_nodes))
    weights = draw(st.lists(st.integers(0, 20), min_size=h.n_leaves, max_size=h.n_leaves))
    if sum(weights) == 0:
        weights[0] = 1
    probs = np.array(weights, dtype=float) / sum(weights)
    label = draw(st.integers(0, h.n_leaves - 1))
    return h, probs, label


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, ok, detail in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
