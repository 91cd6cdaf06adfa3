import io

import pytest

from dplp.audit import (
    AUDIT_CSV_HEADER,
    BoundKind,
    audit_exact,
    audit_random_suite,
    claimed_bound,
    random_graph,
    write_audit_csv,
)
from dplp.errors import EnumerationLimitError, ValidationError
from dplp.graph_core import Graph
from dplp.heuristics import ScoreFunction
from dplp.mechanisms import DpConfig
from dplp.settings import Settings
from dplp.streams import task_rng


def test_claimed_bounds():
    assert claimed_bound(ScoreFunction.of("cn"), DpConfig(epsilon_p=0.4)) == (BoundKind.HALF_EPSILON, 0.2)
    assert claimed_bound(ScoreFunction.of("jc"), DpConfig(epsilon_p=0.4)) == (BoundKind.HALF_EPSILON, 0.2)
    assert claimed_bound(ScoreFunction.of("aa"), DpConfig(epsilon_p=0.4)) == (BoundKind.EPSILON, 0.4)
    assert claimed_bound(ScoreFunction.of("cn"), DpConfig(epsilon_p=0.4, mechanism="exponential")) == (BoundKind.HALF_EPSILON, 0.2)
    assert claimed_bound(ScoreFunction.of("jc"), DpConfig(epsilon_p=0.4, mechanism="exponential")) == (BoundKind.HALF_EPSILON, 0.2)
    assert claimed_bound(ScoreFunction.of("aa"), DpConfig(epsilon_p=0.4, mechanism="exponential")) == (BoundKind.EPSILON, 0.4)
    assert claimed_bound(ScoreFunction.of("cn"), DpConfig(epsilon_p=0.4, mechanism="laplace")) == (BoundKind.EPSILON, 0.4)


def test_incident_perturbations_are_skipped(path4):
    report = audit_exact(path4, ScoreFunction.of("cn"), DpConfig(epsilon_p=1.0, k=2), 0)
    assert report.skipped_incident == 3
    assert report.pairs_checked == 3
    assert report.outputs_checked == 3 * 2
    assert report.passed


@pytest.mark.parametrize("heuristic", ["cn", "jc", "aa"])
def test_dplp_stays_within_claimed_bound(path4, heuristic):
    f = ScoreFunction.of(heuristic)
    cfg = DpConfig(epsilon_p=1.0, k=2)
    for q in range(path4.node_count):
        report = audit_exact(path4, f, cfg, q)
        assert report.passed
        assert report.max_abs_log_ratio <= report.claimed_bound + 1e-9


def test_inflated_sigma_fails_the_audit():
    g = Graph.from_edges(5, [(0, 1), (1, 2), (2, 3), (3, 4), (1, 3)])
    report = audit_exact(g, ScoreFunction.of("cn"), DpConfig(epsilon_p=0.1, k=2, sigma=5.0), 0)
    assert not report.passed
    assert report.witness is not None
    assert report.witness.query == 0
    assert not report.witness.perturbation.touches(0)
    assert report.tightness > 1


@pytest.mark.parametrize("mechanism, kind", [
    ("gaussian", BoundKind.NOT_PURE),
    ("laplace", BoundKind.NO_CLOSED_FORM),
    ("nonprivate", BoundKind.NON_PRIVATE),
])
def test_mechanisms_without_exact_audit(path4, mechanism, kind):
    report = audit_exact(path4, ScoreFunction.of("cn"), DpConfig(mechanism=mechanism), 0)
    assert report.bound_kind is kind
    assert not report.passed


def test_enumeration_limit(monkeypatch):
    monkeypatch.setattr("dplp.audit.get_settings", lambda: Settings(max_enumeration=5))
    g = Graph.from_edges(5, [(0, 1)])
    with pytest.raises(EnumerationLimitError) as info:
        audit_exact(g, ScoreFunction.of("cn"), DpConfig(k=2), 0)
    assert info.value.count == 6


def test_random_graph_size():
    rng = task_rng(1, 2)
    for _ in range(20):
        g = random_graph(6, rng)
        assert 3 <= g.node_count <= 6


@pytest.mark.parametrize("heuristic, mechanism", [("cn", "dplp"), ("jc", "dplp"), ("aa", "dplp"), ("cn", "exponential")])
def test_random_suite_passes(heuristic, mechanism):
    cfg = DpConfig(epsilon_p=0.5, k=2, mechanism=mechanism)
    report = audit_random_suite(6, 6, ScoreFunction.of(heuristic), cfg, task_rng(5, 2), threads=2)
    assert report.passed
    assert report.pairs_checked > 0
    assert 0 < report.tightness <= 1 + 1e-9


def test_random_suite_is_thread_count_independent():
    f = ScoreFunction.of("cn")
    cfg = DpConfig(epsilon_p=0.5, k=2)
    one = audit_random_suite(4, 5, f, cfg, task_rng(9, 2), threads=1)
    many = audit_random_suite(4, 5, f, cfg, task_rng(9, 2), threads=4)
    assert one == many


def test_random_suite_rejects_large_graphs():
    with pytest.raises(ValidationError):
        audit_random_suite(1, 12, ScoreFunction.of("cn"), DpConfig(k=2), task_rng(0, 2))
    with pytest.raises(ValidationError):
        audit_random_suite(1, 0, ScoreFunction.of("cn"), DpConfig(k=2), task_rng(0, 2))


@pytest.mark.parametrize("heuristic", ["cn", "jc"])
def test_exponential_meets_half_epsilon_for_monotone_scores(heuristic):
    cfg = DpConfig(epsilon_p=1.0, k=2, mechanism="exponential")
    report = audit_random_suite(8, 6, ScoreFunction.of(heuristic), cfg, task_rng(11, 2), threads=2)
    assert report.bound_kind is BoundKind.HALF_EPSILON
    assert report.passed
    assert report.max_abs_log_ratio <= 0.5 + 1e-9


@pytest.mark.parametrize("max_nodes", [1, 2])
def test_random_suite_on_tiny_graphs_is_vacuous(max_nodes):
    report = audit_random_suite(5, max_nodes, ScoreFunction.of("cn"), DpConfig(k=2), task_rng(3, 2))
    assert report.passed
    assert report.pairs_checked == 0
    assert report.max_abs_log_ratio == 0.0


def test_audit_csv(path4):
    report = audit_exact(path4, ScoreFunction.of("cn"), DpConfig(epsilon_p=1.0, k=2), 0)
    sink = io.StringIO()
    write_audit_csv(report, sink)
    header, row = sink.getvalue().splitlines()
    assert header.split(",") == AUDIT_CSV_HEADER
    assert row.startswith("pure-eps/2,1.0,")
    assert row.endswith(",3,6,true")
