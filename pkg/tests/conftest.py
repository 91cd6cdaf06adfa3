import io

import pytest

from dplp.graph_core import Graph, load_edge_list


def edge_list(text: str) -> Graph:
    return load_edge_list(io.StringIO(text))


@pytest.fixture
def path4():
    # 0-1-2-3
    return Graph.from_edges(4, [(0, 1), (1, 2), (2, 3)])


@pytest.fixture
def two_hubs():
    """Node 0 and node 5 share neighbors 1, 2, 3; node 4 shares only 1."""
    return Graph.from_edges(6, [(0, 1), (0, 2), (0, 3), (5, 1), (5, 2), (5, 3), (4, 1)])


@pytest.fixture
def separable():
    """Query 0 in a 21-clique with nodes 1..20, plus a separate 40-clique on 21..60."""
    edges = [(u, v) for u in range(21) for v in range(u + 1, 21)]
    edges += [(u, v) for u in range(21, 61) for v in range(u + 1, 61)]
    return Graph.from_edges(61, edges)
