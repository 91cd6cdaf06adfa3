import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dplp.errors import ValidationError
from dplp.graph_core import Graph, non_neighbors
from dplp.heuristics import ScoredCandidates, ScoreFunction, score_all
from dplp.latent import radius_for_omega
from dplp.mechanisms import DpConfig, dplp_sigma, output_distribution
from dplp.metrics import (
    BOUND_CSV_HEADER,
    BoundParams,
    RankLossInput,
    bound_report,
    epsilon_bernstein,
    gamma_bar_bound_lemma2,
    gamma_bar_empirical,
    gamma_bar_exact,
    rank_loss_bound_thm2,
    ranking_loss,
    score_gap,
    surrogate_loss,
    tradeoff_check_lemma3,
    trivial_max_loss,
    write_bound_csv,
)
from dplp.streams import task_rng


def test_ranking_loss_examples():
    ordered = RankLossInput(d_method=(0.1, 0.2, 0.3), ideal_order_positions=(0, 1, 2))
    assert ranking_loss(ordered, 3) == 0.0
    reversed_ = RankLossInput(d_method=(0.3, 0.2, 0.1), ideal_order_positions=(3, 2, 1))
    assert ranking_loss(reversed_, 3) == pytest.approx(0.01)


def test_rank_loss_input_validation():
    with pytest.raises(ValueError):
        RankLossInput(d_method=(0.1, 0.2), ideal_order_positions=(0,))
    with pytest.raises(ValueError):
        RankLossInput(d_method=(0.1, 0.2), ideal_order_positions=(1, 1))
    with pytest.raises(ValidationError):
        ranking_loss(RankLossInput(d_method=(0.1,), ideal_order_positions=(0,)), 2)


def test_surrogate_loss_examples():
    assert surrogate_loss([0.3, 0.1], [0.1, 0.3], 2) == pytest.approx(0.08)
    assert surrogate_loss([0.2, 0.4], [0.2, 0.4], 2) == 0.0
    with pytest.raises(ValidationError):
        surrogate_loss([0.1], [0.1, 0.2], 2)


@settings(max_examples=200, deadline=None)
@given(
    distances=st.lists(st.floats(0, 2, allow_nan=False), min_size=2, max_size=12, unique=True),
    data=st.data(),
)
def test_surrogate_dominates_ranking_loss(distances, data):
    k = data.draw(st.integers(1, len(distances)))
    picks = data.draw(st.permutations(range(len(distances))))[:k]
    order = sorted(range(len(distances)), key=lambda i: distances[i])
    rank = {node: position for position, node in enumerate(order)}
    d_method = [distances[i] for i in picks]
    d_ideal = sorted(distances)[:k]
    rl = ranking_loss(RankLossInput(d_method=tuple(d_method), ideal_order_positions=tuple(rank[i] for i in picks)), k)
    assert 0 <= rl <= surrogate_loss(d_method, d_ideal, k) + 1e-12


def test_score_gap():
    sc = ScoredCandidates(0, [1, 2, 3], [3.0, 1.0, 2.0])
    assert score_gap(sc, [1, 3], 2) == 0.0
    assert score_gap(sc, [2, 3], 2) == pytest.approx(2.0)


def test_gamma_bar_empirical_limits(two_hubs):
    f = ScoreFunction.of("cn")
    greedy = DpConfig(epsilon_p=1e6, k=1)
    assert gamma_bar_empirical(two_hubs, f, greedy, 0, 200, task_rng(0, 1)) == pytest.approx(0.0, abs=1e-9)
    flat = Graph.from_edges(5, [(0, 1), (1, 2), (1, 3), (1, 4)])
    assert gamma_bar_empirical(flat, f, DpConfig(k=2), 0, 50, task_rng(0, 1)) == 0.0
    with pytest.raises(ValidationError):
        gamma_bar_empirical(two_hubs, f, greedy, 0, 0, task_rng(0, 1))


def test_gamma_bar_empirical_matches_enumeration(two_hubs):
    f = ScoreFunction.of("cn")
    cfg = DpConfig(epsilon_p=1.0, k=1)
    sc = score_all(two_hubs, f, 0, non_neighbors(two_hubs, 0))
    exact = gamma_bar_exact(sc, cfg, f.sensitivity)
    gaps = {items: score_gap(sc, items, 1) for items in output_distribution(sc, cfg, f.sensitivity)}
    dist = output_distribution(sc, cfg, f.sensitivity)
    variance = sum(p * (gaps[items] - exact) ** 2 for items, p in dist.items())
    trials = 4000
    estimate = gamma_bar_empirical(two_hubs, f, cfg, 0, trials, task_rng(21, 1))
    assert abs(estimate - exact) <= 3 * math.sqrt(variance / trials)


def test_score_loss_bound_hand_value():
    assert gamma_bar_bound_lemma2([2.0, 1.0], 1.0, 1.0, 3, 2) == pytest.approx(2.25 + 0.8)


def test_score_loss_bound_vanishes_as_sigma_grows():
    small = gamma_bar_bound_lemma2([5.0, 3.0, 1.0], 1.0, 50.0, 100, 3)
    large = gamma_bar_bound_lemma2([5.0, 3.0, 1.0], 1.0, 500.0, 100, 3)
    assert large < small
    assert large < 1e-6


def test_score_loss_bound_rejects_bad_input():
    with pytest.raises(ValidationError):
        gamma_bar_bound_lemma2([1.0, 2.0], 1.0, 1.0, 3, 2)
    with pytest.raises(ValidationError):
        gamma_bar_bound_lemma2([2.0], 1.0, 1.0, 3, 2)
    with pytest.raises(ValidationError):
        gamma_bar_bound_lemma2([2.0, 1.0], 1.0, 0.0, 3, 2)


@pytest.mark.parametrize("epsilon_p", [0.01, 0.1])
def test_score_loss_bound_covers_exact_loss_at_small_budgets(epsilon_p):
    sc = ScoredCandidates(0, [1, 2, 3, 4, 5, 6], [3.0, 2.0, 1.0, 0.0, 0.0, 0.0])
    cfg = DpConfig(epsilon_p=epsilon_p, k=2)
    sigma = dplp_sigma(epsilon_p, 2, 1.0)
    exact = gamma_bar_exact(sc, cfg, 1.0)
    assert 0 < exact <= gamma_bar_bound_lemma2([3.0, 2.0, 1.0, 0.0, 0.0, 0.0], 1.0, sigma, len(sc), 2)


def test_epsilon_bernstein():
    log_term = math.log(200.0)
    assert epsilon_bernstein(100, 0.01) == pytest.approx(math.sqrt(2 * log_term / 100) + 7 * log_term / 297)
    with pytest.raises(ValidationError):
        epsilon_bernstein(1, 0.01)
    with pytest.raises(ValidationError):
        epsilon_bernstein(100, 1.0)


def test_trivial_max_loss():
    assert trivial_max_loss(3, 0.1) == pytest.approx(0.02)


def test_common_neighbors_bound_value():
    r = radius_for_omega(2, 0.05)
    p = BoundParams(n_nodes=1000, dimension=2, k=3, r=r, delta=0.005, gamma_bar=0.0, heuristic="cn")
    eps = epsilon_bernstein(1000, 0.005)
    assert rank_loss_bound_thm2(p) == pytest.approx(4 * 27 * r ** 2 * (6 * eps / 0.05) ** (1 / 3))


@pytest.mark.parametrize("heuristic", ["cn", "aa", "jc"])
def test_bound_is_monotone_in_gamma_bar_and_delta(heuristic):
    r = radius_for_omega(2, 0.05)
    values = []
    for gamma_bar in (0.0, 0.5, 2.0, 10.0):
        p = BoundParams(n_nodes=500, dimension=2, k=3, r=r, delta=0.005, gamma_bar=gamma_bar, heuristic=heuristic)
        values.append(rank_loss_bound_thm2(p))
    assert values == sorted(values)
    loose = BoundParams(n_nodes=500, dimension=2, k=3, r=r, delta=0.001, gamma_bar=0.5, heuristic=heuristic)
    tight = BoundParams(n_nodes=500, dimension=2, k=3, r=r, delta=0.05, gamma_bar=0.5, heuristic=heuristic)
    assert rank_loss_bound_thm2(loose) >= rank_loss_bound_thm2(tight)


def test_adamic_adar_bound_skipped_on_sparse_graphs():
    r = radius_for_omega(2, 0.001)
    report = bound_report(BoundParams(n_nodes=100, dimension=2, k=2, r=r, delta=0.01, gamma_bar=0.0, heuristic="aa"))
    assert report.status == "skipped"
    assert report.bound is None
    assert not report.informative


def test_bound_params_validation():
    with pytest.raises(ValueError):
        BoundParams(n_nodes=3, dimension=2, k=4, r=0.1, delta=0.01, gamma_bar=0.0, heuristic="cn")
    with pytest.raises(ValueError):
        BoundParams(n_nodes=30, dimension=2, k=2, r=0.1, delta=0.01, gamma_bar=0.0, heuristic="external")
    with pytest.raises(ValueError):
        BoundParams(n_nodes=30, dimension=2, k=2, r=0.1, delta=1.5, gamma_bar=0.0, heuristic="cn")


def test_privacy_utility_tradeoff_check():
    assert tradeoff_check_lemma3(1.0, 2.0, 1, 1.0, 1.0).holds
    check = tradeoff_check_lemma3(100.0, 1.0, 1, 1.0, 1.0)
    assert not check.holds
    assert check.lhs == pytest.approx(math.log(50.0))
    with pytest.raises(ValidationError):
        tradeoff_check_lemma3(0.0, 1.0, 1, 1.0, 1.0)


def test_bound_csv():
    r = radius_for_omega(2, 0.05)
    reports = [
        bound_report(BoundParams(n_nodes=10**6, dimension=2, k=3, r=r, delta=0.005, gamma_bar=0.0, heuristic=h))
        for h in ("cn", "jc")
    ]
    sink = io.StringIO()
    write_bound_csv(reports, sink)
    lines = sink.getvalue().splitlines()
    assert lines[0].split(",") == BOUND_CSV_HEADER
    assert len(lines) == 3
    assert all(line.endswith(",ok") for line in lines[1:])
    assert np.isfinite(float(lines[1].split(",")[8]))
