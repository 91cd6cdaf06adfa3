"""Immutable undirected graph in compressed-row layout.

Node ids are dense integers 0..n-1. The labels that appeared in the source
file are kept alongside (``Graph.labels``) so results can be reported in the
original id space.
"""
import hashlib
import logging
import math
from enum import Enum
from typing import IO, Iterable, Iterator, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from dplp.errors import EdgeListParseError, NodeIndexError, PerturbationError, ValidationError

logger = logging.getLogger(__name__)


class Graph:
    """Undirected simple graph with sorted neighbor rows.

    ``indptr[u]:indptr[u+1]`` slices ``indices`` to give N(u). The arrays are
    flagged read-only; every "modification" builds a new Graph.
    """

    __slots__ = ("_indptr", "_indices", "_labels", "_degrees")

    def __init__(self, indptr: np.ndarray, indices: np.ndarray, labels: Optional[np.ndarray] = None):
        indptr = np.ascontiguousarray(indptr, dtype=np.int64)
        indices = np.ascontiguousarray(indices, dtype=np.int64)
        n = indptr.size - 1
        if labels is None:
            labels = np.arange(n, dtype=np.int64)
        labels = np.ascontiguousarray(labels, dtype=np.int64)
        if labels.size != n:
            raise ValidationError(f"label map has {labels.size} entries for {n} nodes")
        degrees = np.diff(indptr)
        for array in (indptr, indices, labels, degrees):
            array.setflags(write=False)
        self._indptr = indptr
        self._indices = indices
        self._labels = labels
        self._degrees = degrees

    @classmethod
    def from_edges(cls, node_count: int, edges: Iterable[Tuple[int, int]], labels: Optional[Sequence[int]] = None) -> "Graph":
        """Build from (u, v) pairs in dense id space. Symmetrizes, drops self-loops and duplicates."""
        pairs = np.asarray(list(edges), dtype=np.int64).reshape(-1, 2)
        if pairs.size and (pairs.min() < 0 or pairs.max() >= node_count):
            raise ValidationError(f"edge endpoint outside 0..{node_count - 1}")
        pairs = pairs[pairs[:, 0] != pairs[:, 1]]
        both = np.concatenate([pairs, pairs[:, ::-1]])
        both = np.unique(both, axis=0) if both.size else both
        indptr = np.zeros(node_count + 1, dtype=np.int64)
        if both.size:
            np.cumsum(np.bincount(both[:, 0], minlength=node_count), out=indptr[1:])
            indices = both[:, 1]
        else:
            indices = np.empty(0, dtype=np.int64)
        return cls(indptr, indices, None if labels is None else np.asarray(labels, dtype=np.int64))

    @property
    def node_count(self) -> int:
        return self._indptr.size - 1

    @property
    def edge_count(self) -> int:
        return self._indices.size // 2

    @property
    def labels(self) -> np.ndarray:
        return self._labels

    @property
    def degrees(self) -> np.ndarray:
        return self._degrees

    def check_node(self, u: int) -> int:
        if not 0 <= u < self.node_count:
            raise NodeIndexError(u, self.node_count)
        return int(u)

    def degree(self, u: int) -> int:
        u = self.check_node(u)
        return int(self._degrees[u])

    def neighbors(self, u: int) -> np.ndarray:
        u = self.check_node(u)
        return self._indices[self._indptr[u]:self._indptr[u + 1]]

    def has_edge(self, u: int, v: int) -> bool:
        row = self.neighbors(u)
        self.check_node(v)
        i = np.searchsorted(row, v)
        return bool(i < row.size and row[i] == v)

    def index_of(self, label: int) -> int:
        """Dense id for an original label."""
        hits = np.flatnonzero(self._labels == label)
        if hits.size == 0:
            raise ValidationError(f"no node labelled {label}")
        return int(hits[0])

    def edges(self) -> Iterator[Tuple[int, int]]:
        for u in range(self.node_count):
            for v in self.neighbors(u):
                if u < v:
                    yield u, int(v)

    def replace_rows(self, rows: dict) -> "Graph":
        """New graph whose neighbor rows for the given nodes are replaced.

        Callers must keep the result symmetric.
        """
        pieces = []
        start = 0
        for node in sorted(rows):
            pieces.append(self._indices[self._indptr[start]:self._indptr[node]])
            pieces.append(np.asarray(rows[node], dtype=np.int64))
            start = node + 1
        pieces.append(self._indices[self._indptr[start]:])
        degrees = self._degrees.copy()
        for node, row in rows.items():
            degrees[node] = len(row)
        indptr = np.zeros(self.node_count + 1, dtype=np.int64)
        np.cumsum(degrees, out=indptr[1:])
        return Graph(indptr, np.concatenate(pieces), self._labels)

    def fingerprint(self) -> str:
        digest = hashlib.sha256()
        digest.update(self._indptr.tobytes())
        digest.update(self._indices.tobytes())
        return digest.hexdigest()

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Graph):
            return NotImplemented
        return np.array_equal(self._indptr, other._indptr) and np.array_equal(self._indices, other._indices)

    def __hash__(self) -> int:
        return hash(self.fingerprint())

    def __repr__(self) -> str:
        return f"Graph(nodes={self.node_count}, edges={self.edge_count})"


class PerturbationKind(str, Enum):
    ADD = "add"
    REMOVE = "remove"


class EdgePerturbation(BaseModel):
    """A single-edge change turning G into a neighboring graph G'."""

    model_config = ConfigDict(frozen=True)

    u: int
    v: int
    kind: PerturbationKind

    @model_validator(mode="after")
    def _distinct_endpoints(self):
        if self.u == self.v:
            raise ValueError("perturbation endpoints must differ")
        return self

    def touches(self, node: int) -> bool:
        return node in (self.u, self.v)


class GraphStats(BaseModel):
    nodes: int
    edges: int
    avg_degree: float
    clustering: float
    diameter: float


ISOLATED_DIRECTIVE = "#% isolated"


def load_edge_list(source: IO[str]) -> Graph:
    """Read "u v" lines. '#' comments and blank lines are ignored.

    A ``#% isolated a b ...`` line declares nodes without edges; it is how
    ``write_edge_list`` keeps degree-0 nodes. Labels are compacted to 0..n-1
    in ascending label order.
    """
    raw = []
    isolated = []
    for line_number, line in enumerate(source, start=1):
        text = line.strip()
        if text.split()[:2] == ISOLATED_DIRECTIVE.split():
            isolated.extend(_parse_labels(line_number, text, text.split()[2:]))
            continue
        if not text or text.startswith("#"):
            continue
        fields = text.split()
        if len(fields) < 2:
            raise EdgeListParseError(line_number, text)
        raw.append(tuple(_parse_labels(line_number, text, fields[:2])))
    if not raw and not isolated:
        return Graph.from_edges(0, [])
    pairs = np.asarray(raw, dtype=np.int64).reshape(-1, 2)
    labels = np.unique(np.concatenate([pairs.ravel(), np.asarray(isolated, dtype=np.int64)]))
    dense = np.searchsorted(labels, pairs)
    self_loops = int(np.count_nonzero(dense[:, 0] == dense[:, 1]))
    g = Graph.from_edges(labels.size, dense, labels)
    duplicates = len(raw) - self_loops - g.edge_count
    if self_loops or duplicates:
        logger.warning("edge list: dropped %d self-loops and %d duplicate edges", self_loops, duplicates)
    return g


def _parse_labels(line_number: int, text: str, fields: Sequence[str]) -> list:
    try:
        values = [int(x) for x in fields]
    except ValueError:
        raise EdgeListParseError(line_number, text) from None
    if any(x < 0 for x in values):
        raise EdgeListParseError(line_number, text)
    return values


def write_edge_list(g: Graph, sink: IO[str]) -> None:
    """Inverse of ``load_edge_list`` for graphs with ascending labels."""
    labels = g.labels
    isolated = labels[g.degrees == 0]
    if isolated.size:
        sink.write(ISOLATED_DIRECTIVE + " " + " ".join(str(x) for x in isolated) + "\n")
    for u, v in g.edges():
        sink.write(f"{labels[u]} {labels[v]}\n")


def neighbors(g: Graph, u: int) -> np.ndarray:
    return g.neighbors(u)


def non_neighbors(g: Graph, u: int) -> np.ndarray:
    """V minus u and N(u), ascending."""
    mask = np.ones(g.node_count, dtype=bool)
    mask[g.neighbors(u)] = False
    mask[u] = False
    return np.flatnonzero(mask)


def apply_perturbation(g: Graph, p: EdgePerturbation) -> Graph:
    g.check_node(p.u)
    g.check_node(p.v)
    present = g.has_edge(p.u, p.v)
    if p.kind is PerturbationKind.ADD:
        if present:
            raise PerturbationError(f"edge ({p.u}, {p.v}) already present")
        rows = {p.u: np.union1d(g.neighbors(p.u), [p.v]), p.v: np.union1d(g.neighbors(p.v), [p.u])}
    else:
        if not present:
            raise PerturbationError(f"edge ({p.u}, {p.v}) not present")
        rows = {p.u: np.setdiff1d(g.neighbors(p.u), [p.v]), p.v: np.setdiff1d(g.neighbors(p.v), [p.u])}
    return g.replace_rows(rows)


def enumerate_perturbations(g: Graph) -> Iterator[EdgePerturbation]:
    """Every single-edge neighbor of g: one item per unordered node pair."""
    for u in range(g.node_count):
        row = g.neighbors(u)
        for v in range(u + 1, g.node_count):
            i = np.searchsorted(row, v)
            kind = PerturbationKind.REMOVE if i < row.size and row[i] == v else PerturbationKind.ADD
            yield EdgePerturbation(u=u, v=v, kind=kind)


def has_triangle(g: Graph, u: int) -> bool:
    row = g.neighbors(u)
    for v in row:
        if np.intersect1d(row, g.neighbors(v), assume_unique=True).size:
            return True
    return False


def to_networkx(g: Graph) -> nx.Graph:
    graph = nx.Graph()
    graph.add_nodes_from(range(g.node_count))
    graph.add_edges_from(g.edges())
    return graph


def graph_statistics(g: Graph) -> GraphStats:
    """Dataset summary: size, mean degree, average clustering, diameter (inf if disconnected)."""
    n = g.node_count
    graph = to_networkx(g)
    if n == 0:
        diameter = 0.0
    elif nx.is_connected(graph):
        diameter = float(nx.diameter(graph))
    else:
        diameter = math.inf
    return GraphStats(
        nodes=n,
        edges=g.edge_count,
        avg_degree=2.0 * g.edge_count / n if n else 0.0,
        clustering=nx.average_clustering(graph) if n else 0.0,
        diameter=diameter,
    )
