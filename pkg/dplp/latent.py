"""Latent geometric graph model.

Nodes are points drawn uniformly from the unit-volume D-ball; u and v are
linked when their Euclidean distance is below r, so an edge appears with
probability Omega(r) = C_D r^D (ignoring boundary effects).
"""
import csv
import logging
import math
from typing import IO, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy.spatial import cKDTree
from scipy.special import gammaln

from dplp.errors import ValidationError
from dplp.graph_core import Graph

logger = logging.getLogger(__name__)


def _log_ball_coefficient(dimension: int) -> float:
    """log C_D, where C_D r^D is the volume of a D-ball of radius r."""
    return 0.5 * dimension * math.log(math.pi) - gammaln(0.5 * dimension + 1.0)


def unit_ball_radius(dimension: int) -> float:
    """Radius R_D of the D-ball with volume 1."""
    if dimension < 1:
        raise ValidationError(f"dimension must be >= 1, got {dimension}")
    return math.exp(-_log_ball_coefficient(dimension) / dimension)


def omega(dimension: int, r: float) -> float:
    if dimension < 1:
        raise ValidationError(f"dimension must be >= 1, got {dimension}")
    if not r > 0:
        raise ValidationError(f"radius must be positive, got {r}")
    if r > unit_ball_radius(dimension):
        logger.warning("radius %.6g exceeds the unit ball radius; Omega clamped to 1", r)
        return 1.0
    return min(1.0, math.exp(_log_ball_coefficient(dimension) + dimension * math.log(r)))


def radius_for_omega(dimension: int, target: float) -> float:
    """Inverse of omega on (0, 1]."""
    if not 0 < target <= 1:
        raise ValidationError(f"Omega must lie in (0, 1], got {target}")
    if dimension < 1:
        raise ValidationError(f"dimension must be >= 1, got {dimension}")
    return math.exp((math.log(target) - _log_ball_coefficient(dimension)) / dimension)


class LatentModel(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    dimension: int = Field(ge=2)
    radius: float = Field(gt=0)
    positions: np.ndarray

    @field_validator("positions", mode="before")
    @classmethod
    def _read_only(cls, value: np.ndarray) -> np.ndarray:
        value = np.array(value, dtype=np.float64)
        if value.ndim != 2:
            raise ValueError("positions must be an (n, D) array")
        value.setflags(write=False)
        return value

    @property
    def ball_radius(self) -> float:
        return unit_ball_radius(self.dimension)

    @property
    def omega(self) -> float:
        return omega(self.dimension, self.radius)

    @property
    def node_count(self) -> int:
        return self.positions.shape[0]

    def check_node(self, u: int) -> int:
        if not 0 <= u < self.node_count:
            raise ValidationError(f"node id {u} out of range for {self.node_count} latent positions")
        return int(u)


def sample_ball(n: int, dimension: int, rng: np.random.Generator) -> np.ndarray:
    """n points uniform in the unit-volume D-ball: Gaussian direction, radius R_D U^(1/D)."""
    directions = rng.standard_normal((n, dimension))
    norms = np.linalg.norm(directions, axis=1, keepdims=True)
    directions /= np.where(norms > 0, norms, 1.0)
    radii = unit_ball_radius(dimension) * rng.random(n) ** (1.0 / dimension)
    return directions * radii[:, None]


def generate(n: int, dimension: int, r: float, rng: np.random.Generator) -> Tuple[LatentModel, Graph]:
    if n < 0:
        raise ValidationError("n must be non-negative")
    positions = sample_ball(n, dimension, rng)
    model = LatentModel(dimension=dimension, radius=r, positions=positions)
    if n < 2:
        return model, Graph.from_edges(n, [])
    pairs = cKDTree(positions).query_pairs(r, output_type="ndarray")
    if pairs.size:
        gaps = np.linalg.norm(positions[pairs[:, 0]] - positions[pairs[:, 1]], axis=1)
        pairs = pairs[gaps < r]
    graph = Graph.from_edges(n, pairs)
    logger.info("latent graph: n=%d D=%d r=%.6g (ball radius %.6g) edges=%d", n, dimension, r, model.ball_radius, graph.edge_count)
    return model, graph


def latent_distances(m: LatentModel, u: int, items: Sequence[int]) -> np.ndarray:
    u = m.check_node(u)
    items = np.asarray(items, dtype=np.int64).reshape(-1)
    for v in items:
        m.check_node(int(v))
    return np.linalg.norm(m.positions[items] - m.positions[u], axis=1)


def ideal_ranking(m: LatentModel, u: int, pool: Sequence[int]) -> np.ndarray:
    """Pool sorted by increasing latent distance to u, ties by node id."""
    pool = np.asarray(pool, dtype=np.int64).reshape(-1)
    if np.any(pool == u):
        raise ValidationError(f"pool must not contain the query node {u}")
    distances = latent_distances(m, u, pool)
    return pool[np.lexsort((pool, distances))]


def write_positions(m: LatentModel, sink: IO[str]) -> None:
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(["node"] + [f"x_{i + 1}" for i in range(m.dimension)])
    for node, row in enumerate(m.positions):
        writer.writerow([node] + [repr(float(x)) for x in row])


def read_positions(source: IO[str], radius: float) -> LatentModel:
    reader = csv.reader(source)
    header = next(reader, None)
    if not header or header[0] != "node":
        raise ValidationError("positions CSV must start with a 'node,x_1,...' header")
    rows = sorted(((int(r[0]), [float(x) for x in r[1:]]) for r in reader if r), key=lambda item: item[0])
    if [node for node, _ in rows] != list(range(len(rows))):
        raise ValidationError("positions CSV must list nodes 0..n-1")
    positions = np.array([coords for _, coords in rows], dtype=np.float64).reshape(len(rows), len(header) - 1)
    return LatentModel(dimension=len(header) - 1, radius=radius, positions=positions)
