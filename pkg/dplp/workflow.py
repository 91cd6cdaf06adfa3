"""LangGraph pipelines behind the `recommend` and `latent-sim` subcommands.

Each pipeline is a linear StateGraph: validate -> ... -> format. Nodes return
partial state updates; `format` produces the plain values the CLI prints.
"""
import logging
import math
from typing import Any, Dict, List, Optional, TypedDict

import numpy as np
from langgraph.graph import END, StateGraph
from langsmith.run_helpers import traceable

from dplp.errors import ValidationError
from dplp.graph_core import Graph, load_edge_list, non_neighbors
from dplp.heuristics import HeuristicKind, ScoredCandidates, ScoreFunction, load_external_scores, score_all
from dplp.latent import LatentModel, generate, ideal_ranking, latent_distances, radius_for_omega
from dplp.mechanisms import DpConfig, MechanismKind, Recommendation, recommend
from dplp.metrics import BoundParams, RankLossInput, bound_report, ranking_loss, score_gap, surrogate_loss
from dplp.settings import get_settings
from dplp.streams import GRAPH_STREAM, MECHANISM_STREAM, task_rng

logger = logging.getLogger(__name__)

PROJECT = get_settings().trace_project


def build_score_function(heuristic: str, scores_path: Optional[str] = None, sensitivity: Optional[float] = None) -> ScoreFunction:
    kind = HeuristicKind(heuristic)
    if kind is HeuristicKind.EXTERNAL:
        if not scores_path or sensitivity is None:
            raise ValidationError("external scores need --scores and --sensitivity")
        with open(scores_path, encoding="utf-8") as source:
            return load_external_scores(source, sensitivity)
    return ScoreFunction.of(kind)


# --- recommend ---------------------------------------------------------------

class RecommendState(TypedDict, total=False):
    graph_path: str
    heuristic: str
    scores_path: Optional[str]
    sensitivity: Optional[float]
    mechanism: str
    epsilon_p: float
    k: int
    delta_p: float
    seed: int
    query: int
    config: DpConfig
    graph: Graph
    score_function: ScoreFunction
    query_index: int
    candidates: ScoredCandidates
    recommendation: Recommendation
    items: List[int]


@traceable(project_name=PROJECT)
def validate_request(state: RecommendState):
    for field in ("graph_path", "heuristic", "query"):
        if state.get(field) is None:
            raise ValidationError(f"missing {field}")
    config = DpConfig(
        epsilon_p=state.get("epsilon_p", 0.1),
        k=state.get("k", 10),
        mechanism=MechanismKind(state.get("mechanism", "dplp")),
        delta_p=state.get("delta_p", 1e-5),
        seed=state.get("seed", 0),
    )
    return {"config": config}


@traceable(project_name=PROJECT)
def load_inputs(state: RecommendState):
    with open(state["graph_path"], encoding="utf-8") as source:
        graph = load_edge_list(source)
    f = build_score_function(state["heuristic"], state.get("scores_path"), state.get("sensitivity"))
    return {"graph": graph, "score_function": f, "query_index": graph.index_of(state["query"])}


@traceable(project_name=PROJECT)
def score_candidates(state: RecommendState):
    g, u = state["graph"], state["query_index"]
    return {"candidates": score_all(g, state["score_function"], u, non_neighbors(g, u))}


@traceable(project_name=PROJECT)
def sample_recommendation(state: RecommendState):
    cfg = state["config"]
    rng = task_rng(cfg.seed, state["query_index"], 0, MECHANISM_STREAM)
    rec = recommend(state["candidates"], cfg, state["score_function"].sensitivity, rng)
    return {"recommendation": rec}


@traceable(project_name=PROJECT)
def format_recommendation(state: RecommendState):
    labels = state["graph"].labels
    return {"items": [int(labels[v]) for v in state["recommendation"].items]}


recommend_workflow = StateGraph(RecommendState)
recommend_workflow.add_node("validate", validate_request)
recommend_workflow.add_node("load", load_inputs)
recommend_workflow.add_node("score", score_candidates)
recommend_workflow.add_node("sample", sample_recommendation)
recommend_workflow.add_node("format", format_recommendation)
recommend_workflow.add_edge("validate", "load")
recommend_workflow.add_edge("load", "score")
recommend_workflow.add_edge("score", "sample")
recommend_workflow.add_edge("sample", "format")
recommend_workflow.add_edge("format", END)
recommend_workflow.set_entry_point("validate")

recommend_app = recommend_workflow.compile()


# --- latent simulation ---------------------------------------------------------

class LatentSimState(TypedDict, total=False):
    n: int
    dimension: int
    omega: float
    heuristics: List[str]
    mechanism: str
    epsilons: List[float]
    k: int
    delta: float
    delta_p: float
    trials: int
    max_queries: Optional[int]
    seed: int
    radius: float
    model: LatentModel
    graph: Graph
    queries: List[int]
    ideal: Dict[int, Dict[str, Any]]
    cells: List[Dict[str, Any]]
    rows: List[Dict[str, Any]]
    csv_rows: List[List[str]]


LATENT_CSV_HEADER = [
    "heuristic", "mechanism", "epsilon_p", "n_nodes", "D", "K", "r", "omega", "delta", "queries",
    "mean_ranking_loss", "mean_surrogate_loss", "gamma_bar", "epsilon", "bound", "informative",
    "proposition1_violations", "status",
]


@traceable(project_name=PROJECT)
def validate_simulation(state: LatentSimState):
    if not state.get("epsilons"):
        raise ValidationError("at least one epsilon is required")
    if state.get("k", 0) < 1 or state.get("trials", 1) < 1:
        raise ValidationError("k and trials must be >= 1")
    if state.get("dimension", 0) < 2:
        raise ValidationError("latent dimension must be >= 2")
    for heuristic in state.get("heuristics", []):
        if HeuristicKind(heuristic) is HeuristicKind.EXTERNAL:
            raise ValidationError("latent simulation runs the built-in heuristics only")
    return {"radius": radius_for_omega(state["dimension"], state["omega"])}


@traceable(project_name=PROJECT)
def generate_graph(state: LatentSimState):
    rng = task_rng(state["seed"], GRAPH_STREAM)
    model, graph = generate(state["n"], state["dimension"], state["radius"], rng)
    k = state["k"]
    eligible = [u for u in range(graph.node_count) if graph.node_count - 1 - graph.degree(u) >= k]
    if state.get("max_queries") is not None and len(eligible) > state["max_queries"]:
        chosen = rng.choice(np.asarray(eligible), size=state["max_queries"], replace=False)
        eligible = sorted(int(u) for u in chosen)
    ideal = {}
    for u in eligible:
        order = ideal_ranking(model, u, non_neighbors(graph, u))
        ideal[u] = {
            "rank": {int(v): i for i, v in enumerate(order)},
            "distances": latent_distances(model, u, order[:k]),
        }
    return {"model": model, "graph": graph, "queries": eligible, "ideal": ideal}


def _measure(state: LatentSimState, f: ScoreFunction, cfg: DpConfig) -> Dict[str, Any]:
    g, model, k = state["graph"], state["model"], cfg.k
    losses, surrogates, gaps = [], [], []
    violations = 0
    for u in state["queries"]:
        sc = score_all(g, f, u, non_neighbors(g, u))
        ideal = state["ideal"][u]
        for trial in range(state.get("trials", 1)):
            rec = recommend(sc, cfg, f.sensitivity, task_rng(cfg.seed, u, trial, MECHANISM_STREAM))
            d_method = latent_distances(model, u, rec.items)
            ranks = tuple(ideal["rank"][v] for v in rec.items)
            rl = ranking_loss(RankLossInput(d_method=tuple(d_method), ideal_order_positions=ranks), k)
            sl = surrogate_loss(d_method, ideal["distances"], k)
            violations += rl > sl + 1e-12
            losses.append(rl)
            surrogates.append(sl)
            gaps.append(score_gap(sc, rec.items, k))
    count = len(losses)
    return {
        "queries": len(state["queries"]),
        "mean_ranking_loss": math.fsum(losses) / count if count else None,
        "mean_surrogate_loss": math.fsum(surrogates) / count if count else None,
        "gamma_bar": max(0.0, math.fsum(gaps) / count) if count else None,
        "proposition1_violations": int(violations),
    }


@traceable(project_name=PROJECT)
def simulate(state: LatentSimState):
    cells = []
    for heuristic in state["heuristics"]:
        f = ScoreFunction.of(heuristic)
        for eps in state["epsilons"]:
            cfg = DpConfig(
                epsilon_p=eps,
                k=state["k"],
                mechanism=MechanismKind(state.get("mechanism", "dplp")),
                delta_p=state.get("delta_p", 1e-5),
                seed=state["seed"],
            )
            cells.append({"heuristic": f.kind, "mechanism": cfg.mechanism, "epsilon_p": eps, **_measure(state, f, cfg)})
    return {"cells": cells}


@traceable(project_name=PROJECT)
def attach_bounds(state: LatentSimState):
    rows = []
    n = state["graph"].node_count
    for cell in state["cells"]:
        row = dict(cell)
        row.update(epsilon=None, bound=None, informative=False)
        if cell["gamma_bar"] is None or n < max(2, state["k"]):
            row["status"] = "skipped"
        else:
            report = bound_report(BoundParams(
                n_nodes=n, dimension=state["dimension"], k=state["k"], r=state["radius"],
                delta=state["delta"], gamma_bar=cell["gamma_bar"], heuristic=cell["heuristic"],
            ))
            row.update(epsilon=report.epsilon, bound=report.bound, informative=report.informative)
            if report.status != "ok":
                row["status"] = report.status
            else:
                row["status"] = "ok" if report.informative else "vacuous"
        rows.append(row)
    return {"rows": rows}


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return f"{value:.12g}"
    if hasattr(value, "value"):
        return value.value
    return str(value)


@traceable(project_name=PROJECT)
def format_rows(state: LatentSimState):
    shared = {
        "n_nodes": state["graph"].node_count, "D": state["dimension"], "K": state["k"],
        "r": state["radius"], "omega": state["omega"], "delta": state["delta"],
    }
    return {"csv_rows": [[_cell({**shared, **row}[column]) for column in LATENT_CSV_HEADER] for row in state["rows"]]}


latent_workflow = StateGraph(LatentSimState)
latent_workflow.add_node("validate", validate_simulation)
latent_workflow.add_node("generate", generate_graph)
latent_workflow.add_node("simulate", simulate)
latent_workflow.add_node("bound", attach_bounds)
latent_workflow.add_node("format", format_rows)
latent_workflow.add_edge("validate", "generate")
latent_workflow.add_edge("generate", "simulate")
latent_workflow.add_edge("simulate", "bound")
latent_workflow.add_edge("bound", "format")
latent_workflow.add_edge("format", END)
latent_workflow.set_entry_point("validate")

latent_sim_app = latent_workflow.compile()
