"""Triad-based link-prediction scores and externally computed score tables.

Each ScoreFunction carries its sensitivity Δ_A: the largest change a single
edge addition or removal can cause in any score s_A(u, v).
"""
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import IO, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, PositiveFloat, model_validator

from dplp.errors import EdgeListParseError, ValidationError
from dplp.graph_core import Graph

logger = logging.getLogger(__name__)


class HeuristicKind(str, Enum):
    CN = "cn"
    JC = "jc"
    AA = "aa"
    EXTERNAL = "external"


SENSITIVITY = {
    HeuristicKind.CN: 1.0,
    HeuristicKind.JC: 1.0,
    HeuristicKind.AA: 1.0 / math.log(2.0),
}


class ScoreFunction(BaseModel):
    """A heuristic bundled with its sensitivity.

    External tables are keyed by unordered pairs of original node labels.
    """

    model_config = ConfigDict(frozen=True)

    kind: HeuristicKind
    sensitivity: PositiveFloat
    table: Optional[Dict[Tuple[int, int], float]] = None

    @model_validator(mode="before")
    @classmethod
    def _default_sensitivity(cls, data):
        if isinstance(data, dict) and data.get("sensitivity") is None:
            kind = HeuristicKind(data.get("kind"))
            if kind is HeuristicKind.EXTERNAL:
                raise ValueError("external score functions need an explicit sensitivity")
            data = {**data, "sensitivity": SENSITIVITY[kind]}
        return data

    @model_validator(mode="after")
    def _check_table(self):
        if self.kind is HeuristicKind.EXTERNAL:
            if self.table is None:
                raise ValueError("external score function without a score table")
            if any(score < 0 for score in self.table.values()):
                raise ValueError("external scores must be non-negative")
        elif self.table is not None:
            raise ValueError(f"{self.kind.value} does not take a score table")
        return self

    @classmethod
    def of(cls, kind) -> "ScoreFunction":
        return cls(kind=HeuristicKind(kind))

    def lookup(self, a: int, b: int) -> float:
        return self.table.get((a, b) if a <= b else (b, a), 0.0)


@dataclass(frozen=True)
class ScoredCandidates:
    """Scores s_A(query, v) for every v in a candidate pool."""

    query: int
    candidates: np.ndarray
    scores: np.ndarray

    def __post_init__(self):
        candidates = np.asarray(self.candidates, dtype=np.int64)
        scores = np.asarray(self.scores, dtype=np.float64)
        if candidates.shape != scores.shape:
            raise ValidationError("one score per candidate required")
        if np.unique(candidates).size != candidates.size:
            raise ValidationError("candidate ids must be distinct")
        if np.any(candidates == self.query):
            raise ValidationError("query node cannot be its own candidate")
        if np.any(scores < 0):
            raise ValidationError("scores must be non-negative")
        candidates.setflags(write=False)
        scores.setflags(write=False)
        object.__setattr__(self, "candidates", candidates)
        object.__setattr__(self, "scores", scores)

    def __len__(self) -> int:
        return self.candidates.size

    def entries(self) -> List[Tuple[int, float]]:
        return [(int(v), float(s)) for v, s in zip(self.candidates, self.scores)]

    def score_of(self, node: int) -> float:
        hits = np.flatnonzero(self.candidates == node)
        if hits.size == 0:
            raise ValidationError(f"node {node} not in candidate pool")
        return float(self.scores[hits[0]])


def _distinct_pair(g: Graph, u: int, v: int) -> None:
    g.check_node(u)
    g.check_node(v)
    if u == v:
        raise ValidationError(f"score of node {u} with itself is undefined")


def score_cn(g: Graph, u: int, v: int) -> float:
    _distinct_pair(g, u, v)
    return float(np.intersect1d(g.neighbors(u), g.neighbors(v), assume_unique=True).size)


def score_jc(g: Graph, u: int, v: int) -> float:
    _distinct_pair(g, u, v)
    common = np.intersect1d(g.neighbors(u), g.neighbors(v), assume_unique=True).size
    union = g.degree(u) + g.degree(v) - common
    return common / union if union else 0.0


def score_aa(g: Graph, u: int, v: int) -> float:
    _distinct_pair(g, u, v)
    common = np.intersect1d(g.neighbors(u), g.neighbors(v), assume_unique=True)
    # every common neighbor is adjacent to both u and v, so its degree is >= 2
    return float(np.sum(1.0 / np.log(g.degrees[common])))


def _check_pool(g: Graph, u: int, pool: np.ndarray) -> None:
    if pool.size and (pool.min() < 0 or pool.max() >= g.node_count):
        bad = pool[(pool < 0) | (pool >= g.node_count)][0]
        g.check_node(int(bad))
    if np.any(pool == u):
        raise ValidationError(f"pool contains the query node {u}")
    if np.intersect1d(pool, g.neighbors(u)).size:
        raise ValidationError(f"pool contains current neighbors of {u}")


def score_all(g: Graph, f: ScoreFunction, u: int, pool: Sequence[int], check_pool: bool = True) -> ScoredCandidates:
    """Score every pool member against query u.

    With ``check_pool=False`` the pool may contain current neighbors (never u).
    """
    u = g.check_node(u)
    pool = np.asarray(pool, dtype=np.int64).reshape(-1)
    if check_pool:
        _check_pool(g, u, pool)
    else:
        for v in pool:
            _distinct_pair(g, u, int(v))
    if f.kind is HeuristicKind.EXTERNAL:
        labels = g.labels
        qu = int(labels[u])
        scores = np.array([f.lookup(qu, int(labels[v])) for v in pool], dtype=np.float64)
        return ScoredCandidates(u, pool, scores)

    n_u = g.neighbors(u)
    if f.kind is HeuristicKind.AA:
        weight = np.zeros(g.node_count)
        deg = g.degrees[n_u]
        weight[n_u] = np.divide(1.0, np.log(deg), out=np.zeros(deg.size), where=deg > 1)
    else:
        weight = np.zeros(g.node_count)
        weight[n_u] = 1.0
    common = np.array([weight[g.neighbors(v)].sum() for v in pool], dtype=np.float64)
    if f.kind is HeuristicKind.JC:
        counts = np.array([np.count_nonzero(weight[g.neighbors(v)]) for v in pool], dtype=np.float64)
        union = n_u.size + g.degrees[pool] - counts
        scores = np.divide(counts, union, out=np.zeros(pool.size), where=union > 0)
    elif f.kind is HeuristicKind.CN:
        scores = np.rint(common)
    else:
        scores = common
    return ScoredCandidates(u, pool, scores)


def load_external_scores(source: IO[str], sensitivity: float) -> ScoreFunction:
    """Read "u v score" lines (original labels) into an External score function."""
    if not sensitivity > 0:
        raise ValidationError(f"sensitivity must be positive, got {sensitivity}")
    table: Dict[Tuple[int, int], float] = {}
    for line_number, line in enumerate(source, start=1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        fields = text.split()
        if len(fields) < 3:
            raise EdgeListParseError(line_number, text, "expected 'u v score'")
        try:
            u, v, score = int(fields[0]), int(fields[1]), float(fields[2])
        except ValueError:
            raise EdgeListParseError(line_number, text, "expected 'u v score'") from None
        if not math.isfinite(score) or score < 0:
            raise EdgeListParseError(line_number, text, "score must be a finite non-negative number")
        key = (u, v) if u <= v else (v, u)
        if key in table and table[key] != score:
            raise EdgeListParseError(line_number, text, f"conflicting score for pair {key}")
        table[key] = score
    logger.info("loaded %d external scores", len(table))
    return ScoreFunction(kind=HeuristicKind.EXTERNAL, sensitivity=sensitivity, table=table)
