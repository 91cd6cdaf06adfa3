"""Ranking loss, utility loss and the closed-form bounds on both."""
import csv
import logging
import math
from typing import IO, Iterable, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from dplp.errors import UndefinedBoundError, ValidationError
from dplp.graph_core import Graph, non_neighbors
from dplp.heuristics import HeuristicKind, ScoredCandidates, ScoreFunction, score_all
from dplp.latent import omega
from dplp.mechanisms import DpConfig, output_distribution, recommend

logger = logging.getLogger(__name__)


class RankLossInput(BaseModel):
    """Latent distances of a method's list and the ideal rank of each listed node."""

    model_config = ConfigDict(frozen=True)

    d_method: Tuple[float, ...]
    ideal_order_positions: Tuple[int, ...]

    @model_validator(mode="after")
    def _aligned(self):
        if len(self.d_method) != len(self.ideal_order_positions):
            raise ValueError("d_method and ideal_order_positions must have equal lengths")
        if len(set(self.ideal_order_positions)) != len(self.ideal_order_positions):
            raise ValueError("ideal ranks must be distinct")
        return self


def ranking_loss(inp: RankLossInput, k: int) -> float:
    """(1/2K) sum over i<j<=K of (d_i - d_j)^2 where the ideal order is inverted."""
    if k < 1 or len(inp.d_method) < k:
        raise ValidationError(f"need at least K={k} listed nodes, got {len(inp.d_method)}")
    d = np.asarray(inp.d_method[:k])
    ranks = np.asarray(inp.ideal_order_positions[:k])
    i, j = np.triu_indices(k, 1)
    inverted = ranks[i] > ranks[j]
    return float(np.sum((d[i] - d[j])[inverted] ** 2) / (2.0 * k))


def surrogate_loss(d_method: Sequence[float], d_ideal: Sequence[float], k: int) -> float:
    if k < 1 or len(d_method) < k or len(d_ideal) < k:
        raise ValidationError(f"both distance sequences need at least K={k} entries")
    gap = np.asarray(d_method[:k], dtype=np.float64) - np.asarray(d_ideal[:k], dtype=np.float64)
    return float(np.sum(gap ** 2))


def _best_score_sum(sc: ScoredCandidates, k: int) -> float:
    return float(np.sort(sc.scores)[::-1][:k].sum())


def score_gap(sc: ScoredCandidates, items: Iterable[int], k: int) -> float:
    """Top-K score sum of the deterministic ranking minus that of ``items``."""
    chosen = sum(sc.score_of(v) for v in items)
    return _best_score_sum(sc, k) - chosen


def gamma_bar_empirical(g: Graph, f: ScoreFunction, cfg: DpConfig, u: int, trials: int, rng: np.random.Generator) -> float:
    """Monte Carlo estimate of the expected top-K score loss of the mechanism."""
    if trials < 1:
        raise ValidationError("trials must be >= 1")
    sc = score_all(g, f, u, non_neighbors(g, u))
    gaps = [score_gap(sc, recommend(sc, cfg, f.sensitivity, rng).items, cfg.k) for _ in range(trials)]
    return max(0.0, math.fsum(gaps) / trials)


def gamma_bar_exact(sc: ScoredCandidates, cfg: DpConfig, delta_a: float) -> float:
    """Expected score loss by enumerating every ordered output list."""
    best = _best_score_sum(sc, cfg.k)
    lookup = dict(sc.entries())
    total = math.fsum(p * (best - sum(lookup[v] for v in items)) for items, p in output_distribution(sc, cfg, delta_a).items())
    return max(0.0, total)


def gamma_bar_bound_lemma2(scores_desc: Sequence[float], delta_a: float, sigma: float, n_nodes: int, k: int) -> float:
    """Upper bound on the expected score loss from the K largest scores.

    Term i: s_i (n-i+1) (s_i+ + delta+1)^sigma / [(s_i + delta+1)^sigma + (n-i)(delta+1)^sigma],
    with s_i+ the largest score among ranks i+1..K strictly below s_i (0 if none).
    """
    s = np.asarray(scores_desc, dtype=np.float64)
    if s.size < k:
        raise ValidationError(f"need at least K={k} scores")
    if np.any(np.diff(s) > 0):
        raise ValidationError("scores must be sorted in descending order")
    if not (sigma > 0 and delta_a > 0):
        raise ValidationError("sigma and delta_a must be positive")
    top = s[:k]
    total = 0.0
    for i in range(1, k + 1):
        s_i = top[i - 1]
        below = top[i:][top[i:] < s_i]
        s_next = float(below.max()) if below.size else 0.0
        log_num = sigma * math.log(s_next + delta_a + 1.0)
        log_first = sigma * math.log(s_i + delta_a + 1.0)
        rest = n_nodes - i
        log_rest = math.log(rest) + sigma * math.log(delta_a + 1.0) if rest > 0 else -math.inf
        total += s_i * (n_nodes - i + 1) * math.exp(log_num - np.logaddexp(log_first, log_rest))
    return total


def epsilon_bernstein(n_nodes: int, delta: float) -> float:
    """sqrt(2 ln(2/delta)/|V|) + 7 ln(2/delta) / (3(|V|-1))."""
    if n_nodes < 2:
        raise ValidationError("n_nodes must be >= 2")
    if not 0 < delta < 1:
        raise ValidationError(f"delta must lie in (0, 1), got {delta}")
    log_term = math.log(2.0 / delta)
    return math.sqrt(2.0 * log_term / n_nodes) + 7.0 * log_term / (3.0 * (n_nodes - 1))


class BoundParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    n_nodes: int = Field(ge=2)
    dimension: int = Field(ge=1)
    k: int = Field(ge=1)
    r: float = Field(gt=0)
    delta: float = Field(gt=0, lt=1)
    gamma_bar: float = Field(ge=0)
    heuristic: HeuristicKind

    @model_validator(mode="after")
    def _check(self):
        if self.k > self.n_nodes:
            raise ValueError("K cannot exceed the node count")
        if self.heuristic is HeuristicKind.EXTERNAL:
            raise ValueError("no ranking-loss bound exists for external scores")
        return self


class BoundReport(BaseModel):
    params: BoundParams
    epsilon: float
    bound: Optional[float]
    trivial_max: float
    status: str = "ok"

    @property
    def informative(self) -> bool:
        return self.bound is not None and self.bound < self.trivial_max


def rank_loss_bound_thm2(p: BoundParams) -> float:
    """High-probability ranking-loss bound, prefactor 4 K^3 r^2 and exponent 2/(K D)."""
    eps = epsilon_bernstein(p.n_nodes, p.delta)
    k, n = p.k, p.n_nodes
    area = omega(p.dimension, p.r)
    if p.heuristic is HeuristicKind.CN:
        base = (2 * k * eps + p.gamma_bar / n) / area
    elif p.heuristic is HeuristicKind.AA:
        if n * area <= 1:
            raise UndefinedBoundError(f"Adamic-Adar bound needs |V| Omega(r) > 1, got {n * area:.6g}")
        base = math.log(n * area) * (2 * k * eps + p.gamma_bar / n) / area
    else:
        base = 4 * k * eps + 2 * p.gamma_bar / n
    return 4 * k ** 3 * p.r ** 2 * base ** (2.0 / (k * p.dimension))


def trivial_max_loss(k: int, r: float) -> float:
    return k * (2 * r) ** 2 * (k - 1) / 2 / (2 * k)


def bound_report(p: BoundParams) -> BoundReport:
    """Bound plus informativeness. An undefined bound yields a skipped report."""
    try:
        bound, status = rank_loss_bound_thm2(p), "ok"
    except UndefinedBoundError as exc:
        logger.warning("bound skipped: %s", exc)
        bound, status = None, "skipped"
    return BoundReport(
        params=p,
        epsilon=epsilon_bernstein(p.n_nodes, p.delta),
        bound=bound,
        trivial_max=trivial_max_loss(p.k, p.r),
        status=status,
    )


class TradeoffCheck(NamedTuple):
    lhs: float
    rhs: float
    holds: bool


def tradeoff_check_lemma3(gamma_bar: float, s_max: float, k: int, delta_a: float, epsilon_p: float) -> TradeoffCheck:
    """(1/eps) ln(gamma_bar / (2K s_max)) <= (1/2K)(ln(s_max+delta+1)/ln(delta+1) - 1)."""
    if not (gamma_bar > 0 and s_max > 0):
        raise ValidationError("gamma_bar and s_max must be positive")
    if not (epsilon_p > 0 and delta_a > 0 and k >= 1):
        raise ValidationError("epsilon_p, delta_a and K must be positive")
    lhs = math.log(gamma_bar / (2 * k * s_max)) / epsilon_p
    rhs = (math.log(s_max + delta_a + 1) / math.log(delta_a + 1) - 1) / (2 * k)
    return TradeoffCheck(lhs, rhs, lhs <= rhs + 1e-12)


BOUND_CSV_HEADER = ["heuristic", "n_nodes", "D", "K", "r", "delta", "gamma_bar", "epsilon", "bound", "informative", "status"]


def write_bound_csv(reports: Iterable[BoundReport], sink: IO[str]) -> None:
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(BOUND_CSV_HEADER)
    for rep in reports:
        p = rep.params
        writer.writerow([
            p.heuristic.value, p.n_nodes, p.dimension, p.k, f"{p.r:.12g}", repr(p.delta),
            f"{p.gamma_bar:.12g}", f"{rep.epsilon:.12g}", "" if rep.bound is None else f"{rep.bound:.12g}", str(rep.informative).lower(), rep.status,
        ])
