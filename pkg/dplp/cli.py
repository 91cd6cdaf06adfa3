"""Command-line front end.

Exit status: 0 on success, 1 on invalid input or usage, 2 on runtime failure
(including a failed or non-pure privacy audit).
"""
import argparse
import csv
import logging
import math
import shlex
import sys
from contextlib import contextmanager
from typing import Callable, List, Optional, Sequence

import pydantic

from dplp import __version__
from dplp.audit import audit_random_suite, write_audit_csv
from dplp.errors import ValidationError
from dplp.graph_core import Graph, graph_statistics, load_edge_list
from dplp.harness import SplitSpec, sweep
from dplp.heuristics import HeuristicKind
from dplp.latent import generate, radius_for_omega
from dplp.mechanisms import DpConfig, MechanismKind
from dplp.metrics import BoundParams, bound_report, write_bound_csv
from dplp.settings import get_settings
from dplp.streams import GRAPH_STREAM, MAX_SEED, task_rng
from dplp.workflow import LATENT_CSV_HEADER, build_score_function, latent_sim_app, recommend_app

logger = logging.getLogger("dplp")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _float_list(text: str) -> List[float]:
    try:
        values = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError(f"expected at least one number, got {text!r}")
    return values


def _choice_list(choices: Sequence[str]) -> Callable[[str], List[str]]:
    def parse(text: str) -> List[str]:
        values = [x.strip().lower() for x in text.split(",") if x.strip()]
        bad = [v for v in values if v not in choices]
        if bad or not values:
            raise argparse.ArgumentTypeError(f"invalid choice(s) {bad or text!r}; choose from {', '.join(choices)}")
        return values
    return parse


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value <= MAX_SEED:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return value


HEURISTICS = [h.value for h in HeuristicKind]
MECHANISMS = [m.value for m in MechanismKind]


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=_seed, default=0)
    parser.add_argument("--threads", type=int, default=None, help="worker threads (default: DPLP_THREADS or all cores)")
    parser.add_argument("--output", default=None, help="write CSV here instead of stdout")
    parser.add_argument("--verbose", action="store_true")


def _graph_source(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--graph", help="edge-list file")
    parser.add_argument("--synthetic-n", type=int, help="use a latent synthetic graph with this many nodes")
    parser.add_argument("--dim", type=int, default=2)
    parser.add_argument("--omega", type=float, default=0.05)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dplp", description="Differentially private top-K link prediction")
    parser.add_argument("--version", action="version", version=f"dplp {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("recommend", help="top-K list for one query node")
    p.add_argument("--graph", required=True)
    p.add_argument("--heuristic", choices=HEURISTICS, default="cn")
    p.add_argument("--scores", help="external score file (heuristic=external)")
    p.add_argument("--sensitivity", type=float)
    p.add_argument("--mechanism", choices=MECHANISMS, default="dplp")
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--delta-p", type=float, default=1e-5)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--query", type=int, required=True, help="query node label as written in the graph file")
    _common(p)

    for name, help_text in (("evaluate", "expected MAP of one configuration"), ("sweep", "expected MAP over a grid")):
        p = sub.add_parser(name, help=help_text)
        _graph_source(p)
        p.add_argument("--heuristic", type=_choice_list(HEURISTICS), default=["cn"])
        p.add_argument("--scores")
        p.add_argument("--sensitivity", type=float)
        p.add_argument("--mechanism", type=_choice_list(MECHANISMS), default=["dplp"])
        p.add_argument("--epsilon", type=_float_list, default=[0.1])
        p.add_argument("--delta-p", type=float, default=1e-5)
        p.add_argument("--k", type=int, default=10)
        p.add_argument("--trials", type=int, default=10)
        p.add_argument("--keep-fraction", type=float, default=0.85)
        _common(p)

    p = sub.add_parser("latent-sim", help="ranking loss on latent graphs against the closed-form bound")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--omega", type=float, required=True)
    p.add_argument("--heuristic", type=_choice_list(["cn", "jc", "aa"]), default=["cn"])
    p.add_argument("--mechanism", choices=MECHANISMS, default="dplp")
    p.add_argument("--epsilon", type=_float_list, default=[0.1])
    p.add_argument("--delta-p", type=float, default=1e-5)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--delta", type=float, default=0.001)
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--max-queries", type=int, default=None)
    _common(p)

    p = sub.add_parser("bounds", help="evaluate the ranking-loss bound on a parameter grid")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--omega", type=float, required=True)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--delta", type=float, default=0.005)
    p.add_argument("--gamma-bar", type=_float_list, default=[0.0])
    p.add_argument("--heuristic", type=_choice_list(["cn", "jc", "aa"]), default=["cn", "aa", "jc"])
    _common(p)

    p = sub.add_parser("audit", help="exact privacy audit on random small graphs")
    p.add_argument("--nodes", type=int, default=7)
    p.add_argument("--graphs", type=int, default=50)
    p.add_argument("--heuristic", choices=["cn", "jc", "aa"], default="cn")
    p.add_argument("--mechanism", choices=MECHANISMS, default="dplp")
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--delta-p", type=float, default=1e-5)
    p.add_argument("--k", type=int, default=2)
    _common(p)

    p = sub.add_parser("stats", help="dataset statistics")
    p.add_argument("--graph", required=True)
    _common(p)
    return parser


@contextmanager
def _sink(path: Optional[str]):
    if path is None:
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="") as handle:
            yield handle


def _load_graph(args) -> Graph:
    if args.graph:
        with open(args.graph, encoding="utf-8") as source:
            return load_edge_list(source)
    if args.synthetic_n is None:
        raise ValidationError("either --graph or --synthetic-n is required")
    r = radius_for_omega(args.dim, args.omega)
    _, graph = generate(args.synthetic_n, args.dim, r, task_rng(args.seed, GRAPH_STREAM))
    return graph


def cmd_recommend(args) -> int:
    result = recommend_app.invoke({
        "graph_path": args.graph, "heuristic": args.heuristic, "scores_path": args.scores,
        "sensitivity": args.sensitivity, "mechanism": args.mechanism, "epsilon_p": args.epsilon,
        "k": args.k, "delta_p": args.delta_p, "seed": args.seed, "query": args.query,
    })
    with _sink(args.output) as out:
        for item in result["items"]:
            out.write(f"{item}\n")
    return 0


def cmd_sweep(args) -> int:
    if args.command == "evaluate" and (len(args.epsilon) != 1 or len(args.mechanism) != 1 or len(args.heuristic) != 1):
        raise ValidationError("evaluate takes a single epsilon, mechanism and heuristic; use sweep for grids")
    graph = _load_graph(args)
    functions = [build_score_function(h, args.scores, args.sensitivity) for h in args.heuristic]
    spec = SplitSpec(keep_fraction=args.keep_fraction, k=args.k, trials=args.trials, seed=args.seed)
    template = DpConfig(epsilon_p=args.epsilon[0], k=args.k, mechanism=MechanismKind(args.mechanism[0]), delta_p=args.delta_p, seed=args.seed)
    report = sweep(graph, functions, template, args.epsilon, spec, [MechanismKind(m) for m in args.mechanism], threads=args.threads)
    with _sink(args.output) as out:
        report.write_csv(out)
    return 0


def cmd_latent_sim(args) -> int:
    result = latent_sim_app.invoke({
        "n": args.n, "dimension": args.dim, "omega": args.omega, "heuristics": args.heuristic,
        "mechanism": args.mechanism, "epsilons": args.epsilon, "k": args.k, "delta": args.delta,
        "delta_p": args.delta_p, "trials": args.trials, "max_queries": args.max_queries, "seed": args.seed,
    })
    with _sink(args.output) as out:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(LATENT_CSV_HEADER)
        writer.writerows(result["csv_rows"])
    return 0


def cmd_bounds(args) -> int:
    r = radius_for_omega(args.dim, args.omega)
    reports = [
        bound_report(BoundParams(n_nodes=args.n, dimension=args.dim, k=args.k, r=r, delta=args.delta, gamma_bar=g, heuristic=h))
        for h in args.heuristic
        for g in args.gamma_bar
    ]
    with _sink(args.output) as out:
        write_bound_csv(reports, out)
    return 0


def cmd_audit(args) -> int:
    cfg = DpConfig(epsilon_p=args.epsilon, k=args.k, mechanism=MechanismKind(args.mechanism), delta_p=args.delta_p, seed=args.seed)
    f = build_score_function(args.heuristic)
    report = audit_random_suite(args.graphs, args.nodes, f, cfg, task_rng(args.seed, GRAPH_STREAM), threads=args.threads)
    with _sink(args.output) as out:
        write_audit_csv(report, out)
    if report.witness is not None:
        logger.info("audit worst case: %s", report.witness)
    return 0 if report.passed else 2


def cmd_stats(args) -> int:
    with open(args.graph, encoding="utf-8") as source:
        stats = graph_statistics(load_edge_list(source))
    with _sink(args.output) as out:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["nodes", "edges", "avg_degree", "clustering", "diameter", "status"])
        # empty diameter cell for disconnected graphs
        connected = math.isfinite(stats.diameter)
        writer.writerow([
            stats.nodes, stats.edges, f"{stats.avg_degree:.6g}", f"{stats.clustering:.6g}",
            f"{stats.diameter:g}" if connected else "", "ok" if connected else "disconnected",
        ])
    return 0


COMMANDS = {
    "recommend": cmd_recommend,
    "evaluate": cmd_sweep,
    "sweep": cmd_sweep,
    "latent-sim": cmd_latent_sim,
    "bounds": cmd_bounds,
    "audit": cmd_audit,
    "stats": cmd_stats,
}


def run(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)

    level = logging.INFO if args.verbose else getattr(logging, get_settings().log_level, logging.WARNING)
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    print(f"# seed={args.seed} cmd={shlex.join(argv)} version={__version__}", file=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except (ValidationError, pydantic.ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        logger.debug("runtime failure", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
