"""Held-out evaluation of link-prediction mechanisms.

Query nodes are the nodes that sit in at least one triangle. For each query
and trial a fraction of its neighbors (and of its non-neighbors) is hidden;
the mechanism ranks the hidden pool on the training graph and the list is
scored by AP@K against the hidden neighbors.
"""
import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import IO, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from dplp.errors import NoEligibleQueriesError, QuerySkipped, UndefinedMetricError, ValidationError
from dplp.graph_core import Graph, has_triangle, non_neighbors
from dplp.heuristics import ScoredCandidates, ScoreFunction, score_all
from dplp.mechanisms import DpConfig, MechanismKind, recommend
from dplp.metrics import score_gap, tradeoff_check_lemma3
from dplp.settings import get_settings
from dplp.streams import MAX_SEED, MECHANISM_STREAM, SPLIT_STREAM, task_rng

logger = logging.getLogger(__name__)


class SplitSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    keep_fraction: float = Field(default=0.85, gt=0, le=1)
    k: int = Field(default=10, ge=1)
    trials: int = Field(default=10, ge=1)
    seed: int = Field(default=0, ge=0, le=MAX_SEED)


@dataclass(frozen=True)
class QuerySplit:
    query: int
    train: Graph
    held_pool: np.ndarray
    held_positives: FrozenSet[int]


class EvalRow(BaseModel):
    mechanism: MechanismKind
    heuristic: str
    epsilon_p: float
    expected_map: float = Field(ge=0, le=1)
    stderr: float = Field(ge=0)
    n_queries: int
    trials: int
    skipped_queries: int = 0
    gamma_bar: Optional[float] = None
    lemma3_holds: Optional[bool] = None
    status: str = "ok"


EVAL_CSV_HEADER = [
    "mechanism", "heuristic", "epsilon_p", "expected_map", "stderr", "n_queries", "trials",
    "skipped_queries", "gamma_bar", "lemma3_holds", "status",
]


class EvalReport(BaseModel):
    rows: List[EvalRow] = []

    def write_csv(self, sink: IO[str]) -> None:
        writer = csv.writer(sink, lineterminator="\n")
        writer.writerow(EVAL_CSV_HEADER)
        for row in self.rows:
            writer.writerow([
                row.mechanism.value, row.heuristic, repr(row.epsilon_p),
                f"{row.expected_map:.12g}", f"{row.stderr:.12g}", row.n_queries, row.trials,
                row.skipped_queries,
                "" if row.gamma_bar is None else f"{row.gamma_bar:.12g}",
                "" if row.lemma3_holds is None else str(row.lemma3_holds).lower(),
                row.status,
            ])


def select_queries(g: Graph) -> np.ndarray:
    return np.array([u for u in range(g.node_count) if has_triangle(g, u)], dtype=np.int64)


def hidden_count(size: int, keep_fraction: float) -> int:
    # rounding guards against 0.15 * 20 landing just below 3
    return math.floor(round((1.0 - keep_fraction) * size, 9))


def split_for_query(g: Graph, q: int, spec: SplitSpec, trial: int) -> QuerySplit:
    """Hide a random share of q's neighbors and non-neighbors.

    Only edges incident to q are removed from the training graph.
    """
    q = g.check_node(q)
    row = g.neighbors(q)
    if row.size == 0:
        raise QuerySkipped(q, "no neighbors")
    rng = task_rng(spec.seed, q, trial, SPLIT_STREAM)
    hidden = np.sort(rng.permutation(row)[:hidden_count(row.size, spec.keep_fraction)])
    others = non_neighbors(g, q)
    negatives = rng.permutation(others)[:hidden_count(others.size, spec.keep_fraction)]

    rows = {q: np.setdiff1d(row, hidden, assume_unique=True)}
    for h in hidden:
        rows[int(h)] = np.setdiff1d(g.neighbors(h), [q], assume_unique=True)
    train = g.replace_rows(rows) if hidden.size else g
    return QuerySplit(
        query=q,
        train=train,
        held_pool=np.sort(np.concatenate([hidden, negatives])),
        held_positives=frozenset(int(h) for h in hidden),
    )


def average_precision(ranked: Sequence[int], positives: Iterable[int], k: int) -> float:
    """AP@K normalized by min(K, |positives|)."""
    positives = set(int(p) for p in positives)
    if not positives:
        raise UndefinedMetricError("average precision needs at least one positive")
    ranked = [int(v) for v in ranked]
    if len(set(ranked)) != len(ranked):
        raise ValidationError("ranked items must be distinct")
    hits = 0
    total = 0.0
    for i, item in enumerate(ranked[:k], start=1):
        if item in positives:
            hits += 1
            total += hits / i
    return total / min(k, len(positives))


def random_ranking_ap(pool_size: int, n_positives: int, k: int) -> float:
    """Expected AP@K when the pool is ordered uniformly at random.

    The item at rank i is a positive with probability p/m, and a pair of
    ranks holds two positives with probability p(p-1)/(m(m-1)). At K=1 this
    is the prevalence p/m.
    """
    if not 1 <= n_positives <= pool_size:
        raise ValidationError(f"need 1 <= positives <= pool size, got {n_positives} of {pool_size}")
    if k < 1:
        raise ValidationError("k must be positive")
    m, p = pool_size, n_positives
    both = p * (p - 1) / (m * (m - 1)) if m > 1 else 0.0
    ranks = np.arange(1, min(k, m) + 1)
    return math.fsum((p / m + (ranks - 1) * both) / ranks) / min(k, p)


def random_ranking_map(tasks: Sequence["ScoredTask"], k: int) -> float:
    """Expected MAP of a uniform ranker on the given splits, aggregated like ``run_cell``."""
    if not tasks:
        raise NoEligibleQueriesError("no query node has hidden neighbors to predict")
    per_trial = {}
    for task in tasks:
        ap = random_ranking_ap(len(task.candidates.candidates), len(task.positives), k)
        per_trial.setdefault(task.trial, []).append(ap)
    return math.fsum(math.fsum(aps) / len(aps) for aps in per_trial.values()) / len(per_trial)


@dataclass(frozen=True)
class ScoredTask:
    query: int
    trial: int
    candidates: ScoredCandidates
    positives: FrozenSet[int]


def _score_task(g: Graph, f: ScoreFunction, spec: SplitSpec, q: int, trial: int) -> Optional[ScoredTask]:
    try:
        split = split_for_query(g, q, spec, trial)
    except QuerySkipped as exc:
        logger.debug("%s", exc)
        return None
    if not split.held_positives:
        return None
    sc = score_all(split.train, f, q, split.held_pool)
    return ScoredTask(q, trial, sc, split.held_positives)


def score_tasks(g: Graph, f: ScoreFunction, spec: SplitSpec, threads: Optional[int] = None) -> Tuple[List[ScoredTask], int]:
    """Split and score every (query, trial) cell. Returns the tasks and the skipped-query count."""
    queries = select_queries(g)
    cells = [(int(q), t) for t in range(spec.trials) for q in queries]
    with ThreadPoolExecutor(max_workers=get_settings().worker_count(threads)) as pool:
        scored = list(pool.map(lambda cell: _score_task(g, f, spec, *cell), cells))
    tasks = [task for task in scored if task is not None]
    evaluated = {task.query for task in tasks}
    skipped = len(queries) - len(evaluated)
    if skipped:
        logger.warning("%d of %d query nodes skipped (no hidden neighbors)", skipped, len(queries))
    return tasks, skipped


def _run_task(task: ScoredTask, f: ScoreFunction, cfg: DpConfig) -> Tuple[float, float]:
    rng = task_rng(cfg.seed, task.query, task.trial, MECHANISM_STREAM)
    rec = recommend(task.candidates, cfg, f.sensitivity, rng)
    ap = average_precision(rec.items, task.positives, cfg.k)
    return ap, score_gap(task.candidates, rec.items, cfg.k)


def run_cell(tasks: List[ScoredTask], skipped: int, f: ScoreFunction, cfg: DpConfig, spec: SplitSpec, threads: Optional[int] = None) -> EvalRow:
    if not tasks:
        raise NoEligibleQueriesError("no query node has hidden neighbors to predict")
    if cfg.k != spec.k:
        logger.warning("list length K=%d overridden by evaluation K=%d", cfg.k, spec.k)
        cfg = cfg.model_copy(update={"k": spec.k})
    with ThreadPoolExecutor(max_workers=get_settings().worker_count(threads)) as pool:
        outcomes = list(pool.map(lambda task: _run_task(task, f, cfg), tasks))

    per_trial = [[] for _ in range(spec.trials)]
    for task, (ap, _) in zip(tasks, outcomes):
        per_trial[task.trial].append(ap)
    maps = np.array([math.fsum(aps) / len(aps) for aps in per_trial if aps])
    stderr = float(np.std(maps, ddof=1) / math.sqrt(maps.size)) if maps.size > 1 else 0.0

    gamma_bar = math.fsum(gap for _, gap in outcomes) / len(outcomes)
    s_max = max(float(task.candidates.scores.max()) for task in tasks)
    lemma3 = None
    if cfg.mechanism is not MechanismKind.NON_PRIVATE and gamma_bar > 0 and s_max > 0:
        lemma3 = tradeoff_check_lemma3(gamma_bar, s_max, cfg.k, f.sensitivity, cfg.epsilon_p).holds

    return EvalRow(
        mechanism=cfg.mechanism,
        heuristic=f.kind.value,
        epsilon_p=cfg.epsilon_p,
        expected_map=min(1.0, max(0.0, math.fsum(maps) / maps.size)),
        stderr=stderr,
        n_queries=len({task.query for task in tasks}),
        trials=spec.trials,
        skipped_queries=skipped,
        gamma_bar=max(0.0, gamma_bar),
        lemma3_holds=lemma3,
    )


def evaluate(g: Graph, f: ScoreFunction, cfg: DpConfig, spec: SplitSpec, threads: Optional[int] = None) -> EvalRow:
    tasks, skipped = score_tasks(g, f, spec, threads)
    return run_cell(tasks, skipped, f, cfg, spec, threads)


def sweep(
    g: Graph,
    functions: Sequence[ScoreFunction],
    cfg_template: DpConfig,
    epsilons: Sequence[float],
    spec: SplitSpec,
    mechanisms: Optional[Sequence[MechanismKind]] = None,
    threads: Optional[int] = None,
) -> EvalReport:
    """Mechanisms x heuristics x epsilons on shared splits and shared random streams."""
    if not epsilons:
        raise ValidationError("sweep needs at least one epsilon")
    mechanisms = list(mechanisms) if mechanisms else [cfg_template.mechanism]
    scored = [score_tasks(g, f, spec, threads) for f in functions]
    rows = []
    for mechanism in mechanisms:
        for f, (tasks, skipped) in zip(functions, scored):
            for eps in epsilons:
                cfg = cfg_template.model_copy(update={"mechanism": mechanism, "epsilon_p": float(eps), "sigma": None})
                cfg = DpConfig.model_validate(cfg.model_dump())
                rows.append(run_cell(tasks, skipped, f, cfg, spec, threads))
                logger.info("sweep cell %s/%s eps=%g: MAP %.4f", mechanism.value, f.kind.value, eps, rows[-1].expected_map)
    return EvalReport(rows=rows)
