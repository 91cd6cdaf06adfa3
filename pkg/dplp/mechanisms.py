"""Top-K recommendation mechanisms.

DPLP and the exponential baseline draw K candidates sequentially without
replacement from a categorical distribution over the remaining pool. Both
are sampled by adding standard Gumbel noise to the log-weights and keeping
the K largest keys, which has exactly the distribution of the sequential
renormalized draws and never exponentiates a weight. Laplace and Gaussian
perturb every score once and rank the noisy scores.
"""
import itertools
import logging
import math
from enum import Enum
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.special import logsumexp

from dplp.errors import EmptyPoolError, ValidationError
from dplp.heuristics import ScoredCandidates
from dplp.streams import MAX_SEED

logger = logging.getLogger(__name__)


class MechanismKind(str, Enum):
    DPLP = "dplp"
    LAPLACE = "laplace"
    GAUSSIAN = "gaussian"
    EXPONENTIAL = "exponential"
    NON_PRIVATE = "nonprivate"


SEQUENTIAL = (MechanismKind.DPLP, MechanismKind.EXPONENTIAL)


class DpConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    epsilon_p: float = 0.1
    k: int = Field(default=10, ge=1)
    mechanism: MechanismKind = MechanismKind.DPLP
    delta_p: float = 1e-5
    seed: int = Field(default=0, ge=0, le=MAX_SEED)
    # forces DPLP's sigma; None means sigma is derived from epsilon_p
    sigma: Optional[float] = Field(default=None, ge=0)

    @model_validator(mode="after")
    def _check_budget(self):
        if self.mechanism is not MechanismKind.NON_PRIVATE and not self.epsilon_p > 0:
            raise ValueError(f"epsilon_p must be positive for {self.mechanism.value}")
        if not 0 < self.delta_p < 1:
            raise ValueError("delta_p must lie in (0, 1)")
        if self.sigma is not None and self.mechanism is not MechanismKind.DPLP:
            raise ValueError("a sigma override only applies to DPLP")
        return self


class Recommendation(BaseModel):
    model_config = ConfigDict(frozen=True)

    query: int
    items: Tuple[int, ...]
    step_log_probs: Optional[Tuple[float, ...]] = None

    @model_validator(mode="after")
    def _distinct(self):
        if len(set(self.items)) != len(self.items):
            raise ValueError("recommended items must be distinct")
        if self.step_log_probs is not None and len(self.step_log_probs) != len(self.items):
            raise ValueError("one step probability per item")
        return self


def dplp_sigma(epsilon_p: float, k: int, delta_a: float) -> float:
    """sigma = epsilon_p / (2 K ln(delta_a + 1))."""
    if not (epsilon_p > 0 and k >= 1 and delta_a > 0):
        raise ValidationError("epsilon_p, k and delta_a must be positive")
    return epsilon_p / (2.0 * k * math.log(delta_a + 1.0))


def _effective_k(sc: ScoredCandidates, cfg: DpConfig) -> int:
    if len(sc) == 0:
        raise EmptyPoolError(f"empty candidate pool for query {sc.query}")
    if len(sc) < cfg.k:
        logger.debug("pool of %d smaller than K=%d for query %d", len(sc), cfg.k, sc.query)
    return min(cfg.k, len(sc))


def _require(cfg: DpConfig, *kinds: MechanismKind) -> None:
    if cfg.mechanism not in kinds:
        raise ValidationError(f"mechanism {cfg.mechanism.value} not valid here (expected {', '.join(k.value for k in kinds)})")


def log_weights(sc: ScoredCandidates, cfg: DpConfig, delta_a: float) -> np.ndarray:
    """Unnormalized per-candidate log-weights of the sequential samplers."""
    _require(cfg, *SEQUENTIAL)
    if cfg.mechanism is MechanismKind.DPLP:
        sigma = cfg.sigma if cfg.sigma is not None else dplp_sigma(cfg.epsilon_p, cfg.k, delta_a)
        return sigma * np.log(sc.scores + delta_a + 1.0)
    return cfg.epsilon_p * sc.scores / (2.0 * cfg.k * delta_a)


def sample_orderings(log_w: np.ndarray, k: int, rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray:
    """Gumbel-top-k: indices of k draws without replacement, in draw order.

    Returns shape (k,) or (size, k).
    """
    shape = log_w.shape if size is None else (size,) + log_w.shape
    keys = log_w + rng.gumbel(size=shape)
    return np.argsort(-keys, axis=-1, kind="stable")[..., :k]


def _step_log_probs(log_w: np.ndarray, order: np.ndarray) -> Tuple[float, ...]:
    remaining = np.ones(log_w.size, dtype=bool)
    steps = []
    for idx in order:
        steps.append(float(log_w[idx] - logsumexp(log_w[remaining])))
        remaining[idx] = False
    return tuple(steps)


def _sequential_sample(sc: ScoredCandidates, cfg: DpConfig, delta_a: float, rng: np.random.Generator) -> Recommendation:
    k = _effective_k(sc, cfg)
    log_w = log_weights(sc, cfg, delta_a)
    order = sample_orderings(log_w, k, rng)
    return Recommendation(
        query=sc.query,
        items=tuple(int(v) for v in sc.candidates[order]),
        step_log_probs=_step_log_probs(log_w, order),
    )


def dplp_sample(sc: ScoredCandidates, cfg: DpConfig, delta_a: float, rng: np.random.Generator) -> Recommendation:
    """K draws with weights (s + delta_a + 1)^sigma, renormalized after each draw."""
    _require(cfg, MechanismKind.DPLP)
    return _sequential_sample(sc, cfg, delta_a, rng)


def exponential_topk(sc: ScoredCandidates, cfg: DpConfig, delta_a: float, rng: np.random.Generator) -> Recommendation:
    """Peeling exponential mechanism, epsilon_p / K per round."""
    _require(cfg, MechanismKind.EXPONENTIAL)
    return _sequential_sample(sc, cfg, delta_a, rng)


def _ranked(sc: ScoredCandidates, values: np.ndarray, k: int) -> Tuple[int, ...]:
    # descending value, ties by ascending node id
    order = np.lexsort((sc.candidates, -values))[:k]
    return tuple(int(v) for v in sc.candidates[order])


def noise_scale(cfg: DpConfig, delta_a: float) -> float:
    """Laplace scale b, or the Gaussian standard deviation, for one query."""
    b = 2.0 * cfg.k * delta_a / cfg.epsilon_p
    if cfg.mechanism is MechanismKind.GAUSSIAN:
        return b * math.sqrt(2.0 * math.log(1.25 / cfg.delta_p))
    return b


def laplace_topk(sc: ScoredCandidates, cfg: DpConfig, delta_a: float, rng: np.random.Generator) -> Recommendation:
    _require(cfg, MechanismKind.LAPLACE)
    k = _effective_k(sc, cfg)
    noisy = sc.scores + rng.laplace(0.0, noise_scale(cfg, delta_a), size=len(sc))
    return Recommendation(query=sc.query, items=_ranked(sc, noisy, k))


def gaussian_topk(sc: ScoredCandidates, cfg: DpConfig, delta_a: float, rng: np.random.Generator) -> Recommendation:
    _require(cfg, MechanismKind.GAUSSIAN)
    k = _effective_k(sc, cfg)
    noisy = sc.scores + rng.normal(0.0, noise_scale(cfg, delta_a), size=len(sc))
    return Recommendation(query=sc.query, items=_ranked(sc, noisy, k))


def deterministic_topk(sc: ScoredCandidates, k: int) -> Recommendation:
    if len(sc) == 0:
        raise EmptyPoolError(f"empty candidate pool for query {sc.query}")
    return Recommendation(query=sc.query, items=_ranked(sc, sc.scores, min(k, len(sc))))


def recommend(sc: ScoredCandidates, cfg: DpConfig, delta_a: float, rng: np.random.Generator) -> Recommendation:
    if cfg.mechanism is MechanismKind.DPLP:
        return dplp_sample(sc, cfg, delta_a, rng)
    if cfg.mechanism is MechanismKind.EXPONENTIAL:
        return exponential_topk(sc, cfg, delta_a, rng)
    if cfg.mechanism is MechanismKind.LAPLACE:
        return laplace_topk(sc, cfg, delta_a, rng)
    if cfg.mechanism is MechanismKind.GAUSSIAN:
        return gaussian_topk(sc, cfg, delta_a, rng)
    return deterministic_topk(sc, cfg.k)


def _positions(sc: ScoredCandidates, items: Sequence[int]) -> np.ndarray:
    index = {int(v): i for i, v in enumerate(sc.candidates)}
    positions = []
    for item in items:
        if int(item) not in index:
            raise ValidationError(f"item {item} is not in the candidate pool")
        positions.append(index[int(item)])
    if len(set(positions)) != len(positions):
        raise ValidationError("output list contains duplicate items")
    return np.asarray(positions, dtype=np.int64)


def log_probabilities(sc: ScoredCandidates, cfg: DpConfig, delta_a: float, lists: np.ndarray) -> np.ndarray:
    """Exact log Pr(list) for each row of ``lists`` (pool positions, draw order)."""
    log_w = log_weights(sc, cfg, delta_a)
    lists = np.atleast_2d(np.asarray(lists, dtype=np.int64))
    rows = np.arange(lists.shape[0])
    remaining = np.broadcast_to(log_w, (lists.shape[0], log_w.size)).copy()
    total = np.zeros(lists.shape[0])
    for step in range(lists.shape[1]):
        chosen = lists[:, step]
        total += remaining[rows, chosen] - logsumexp(remaining, axis=1)
        remaining[rows, chosen] = -np.inf
    return total


def exact_output_probability(sc: ScoredCandidates, cfg: DpConfig, delta_a: float, items: Sequence[int]) -> float:
    """log of the product of the per-step categorical probabilities of ``items``."""
    _require(cfg, *SEQUENTIAL)
    positions = _positions(sc, items)
    if positions.size == 0:
        return 0.0
    return float(log_probabilities(sc, cfg, delta_a, positions[None, :])[0])


def ordered_lists(pool_size: int, k: int) -> np.ndarray:
    """All ordered k-lists of pool positions, as rows."""
    lists = list(itertools.permutations(range(pool_size), k))
    return np.asarray(lists, dtype=np.int64).reshape(len(lists), k)


def output_distribution(sc: ScoredCandidates, cfg: DpConfig, delta_a: float) -> Dict[Tuple[int, ...], float]:
    """Exact probability of every ordered min(K, |pool|)-list of node ids."""
    k = _effective_k(sc, cfg)
    lists = ordered_lists(len(sc), k)
    probs = np.exp(log_probabilities(sc, cfg, delta_a, lists))
    return {tuple(int(v) for v in sc.candidates[row]): float(p) for row, p in zip(lists, probs)}
