"""Command-line entry points for detection, learning, localization,
simulation, evaluation, and the full online loop.

Exit codes: 0 success, 2 configuration problem, 3 bad or degenerate data,
4 optimization divergence.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .data import (
    graph_to_json,
    load_csv,
    load_graph,
    make_batches,
    write_csv,
)
from .errors import ConfigError, DataError, DivergenceError
from .learner import LearnerConfig, bootstrap_initial, train_batch
from .localize import localize
from .metrics import FaultCase, summarize
from .pipeline import config_from_mapping, run_online, write_run_outputs
from .synth import SyntheticSpec, generate
from .trigger import (
    DEFAULT_C_QUANTILE,
    DEFAULT_ENERGY,
    DEFAULT_KAPPA,
    DEFAULT_WINDOW,
    run_detector,
)


def _cmd_detect(args: argparse.Namespace) -> int:
    frame = load_csv(args.input, args.kpi)
    events = run_detector(
        frame.values,
        l_win=args.window,
        energy=args.energy,
        t0=args.t0,
        c_quantile=args.c_quantile,
        kappa=args.kappa,
        force_trigger=args.force_at,
    )
    for event in events:
        print(json.dumps({"t": event.t, "y": event.y}))
    return 0


def _cmd_learn(args: argparse.Namespace) -> int:
    frame = load_csv(args.input, args.kpi)
    if frame.n_rows <= args.bootstrap_rows:
        raise DataError(
            f"need more than {args.bootstrap_rows} rows to learn, got {frame.n_rows}"
        )
    config = LearnerConfig(
        epochs=args.epochs,
        lr=args.lr,
        lambda1=args.lambda1,
        lambda2=args.lambda2,
        seed=args.seed,
    )
    _, state = bootstrap_initial(
        frame.values[: args.bootstrap_rows],
        frame.entity_names,
        frame.kpi_index,
        config,
    )
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    batches = make_batches(frame, args.bootstrap_rows, args.batch_size)
    if args.max_batches is not None:
        batches = batches[: args.max_batches]
    for batch in batches:
        graph, artifacts = train_batch(state, batch)
        path = outdir / f"graph_k{batch.index}.json"
        path.write_text(json.dumps(graph_to_json(graph), indent=2) + "\n")
        print(
            json.dumps(
                {
                    "k": batch.index,
                    "edges": graph.edge_count(),
                    "loss": artifacts.loss_trace[-1],
                }
            )
        )
    return 0


def _cmd_localize(args: argparse.Namespace) -> int:
    graph = load_graph(args.graph)
    causes = localize(
        graph,
        args.k,
        phi_jump=args.phi_jump,
        restart=args.restart,
    )
    payload = {
        "causes": [{"node": label, "score": score} for label, score in causes.entries]
    }
    print(json.dumps(payload))
    return 0


def _cmd_simulate(args: argparse.Namespace) -> int:
    spec = SyntheticSpec(
        m=args.m,
        t_normal=args.t_normal,
        t_fault=args.t_fault,
        edge_prob=args.edge_prob,
        fault_node=args.fault_node,
        shift_magnitude=args.shift,
        noise_std=args.noise,
        seed=args.seed,
    )
    frame, graph, truth = generate(spec)
    write_csv(frame, args.out)
    truth_payload = {
        "trigger": truth["trigger"],
        "root_causes": truth["root_causes"],
        "nodes": truth["nodes"],
        "dag": graph_to_json(graph)["edges"],
    }
    Path(args.truth).write_text(json.dumps(truth_payload, indent=2) + "\n")
    return 0


def _load_predictions(path: str) -> list[str]:
    try:
        payload = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"predictions file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"predictions file {path} is not valid JSON: {exc}") from exc
    if isinstance(payload, dict) and "causes" in payload:
        return [entry["node"] for entry in payload["causes"]]
    raise DataError(f"predictions file {path} lacks a 'causes' list")


def _cmd_eval(args: argparse.Namespace) -> int:
    try:
        truth = json.loads(Path(args.truth).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"truth file not found: {args.truth}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"truth file {args.truth} is not valid JSON: {exc}") from exc
    predicted = _load_predictions(args.pred)
    nodes = truth.get("nodes")
    if nodes is not None:
        unknown = [node for node in predicted if node not in nodes]
        if unknown:
            raise DataError(
                f"predicted nodes {unknown} are not in the truth node set"
            )
    case = FaultCase(
        trigger_time=int(truth.get("trigger", 0)),
        root_causes=frozenset(truth["root_causes"]),
        predicted=tuple(predicted),
    )
    ks = [int(part) for part in args.k.split(",") if part]
    n_total = args.n_total
    if n_total is None:
        n_total = len(nodes) - 1 if nodes and "kpi" in nodes else len(predicted)
    table = summarize([case], ks, n_total)
    print(json.dumps(table))
    width = max(len(name) for name in table)
    for name, value in table.items():
        print(f"{name:<{width}}  {value:.6f}")
    return 0


_RUN_OVERRIDES = {
    "window": "trigger.window",
    "energy": "trigger.energy",
    "kappa": "trigger.kappa",
    "t0": "trigger.t0",
    "batch_size": "learner.batch_size",
    "epochs": "learner.epochs",
    "lr": "learner.lr",
    "lambda1": "learner.lambda1",
    "lambda2": "learner.lambda2",
    "seed": "learner.seed",
    "alpha": "converge.alpha",
    "threshold": "converge.threshold",
    "rbo_p": "converge.rbo_p",
    "phi_jump": "localize.phi_jump",
    "restart": "localize.restart",
    "k": "localize.k",
    "max_batches": "pipeline.max_batches",
}


def _cmd_run(args: argparse.Namespace) -> int:
    mapping: dict = {}
    if args.config is not None:
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            mapping = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(mapping, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
    for attr, key in _RUN_OVERRIDES.items():
        value = getattr(args, attr)
        if value is not None:
            mapping[key] = value
    config = config_from_mapping(mapping)
    frame = load_csv(args.input, args.kpi)
    result = run_online(frame, config, outdir=args.outdir)
    write_run_outputs(result, args.outdir)
    summary = {
        "episodes": len(result.episodes),
        "converged": sum(1 for ep in result.episodes if ep.converged),
        "events": len(result.events),
    }
    print(json.dumps(summary))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="streamrca",
        description="Online root-cause analysis for metric streams",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    detect = sub.add_parser("detect", help="change-point detection only")
    detect.add_argument("--input", required=True, help="metrics CSV")
    detect.add_argument("--kpi", default="kpi", help="KPI column name")
    detect.add_argument("--window", type=int, default=DEFAULT_WINDOW)
    detect.add_argument("--energy", type=float, default=DEFAULT_ENERGY)
    detect.add_argument("--c-quantile", type=float, default=DEFAULT_C_QUANTILE)
    detect.add_argument("--kappa", type=float, default=DEFAULT_KAPPA)
    detect.add_argument("--t0", type=int, default=None, help="base period length")
    detect.add_argument(
        "--force-at", type=int, default=None, help="force a trigger at this index"
    )
    detect.set_defaults(func=_cmd_detect)

    learn = sub.add_parser("learn", help="offline incremental graph learning")
    learn.add_argument("--input", required=True)
    learn.add_argument("--kpi", default="kpi")
    learn.add_argument("--outdir", required=True, help="snapshot directory")
    learn.add_argument("--bootstrap-rows", type=int, default=200)
    learn.add_argument("--batch-size", type=int, default=20)
    learn.add_argument("--epochs", type=int, default=LearnerConfig.epochs)
    learn.add_argument("--lr", type=float, default=LearnerConfig.lr)
    learn.add_argument("--lambda1", type=float, default=LearnerConfig.lambda1)
    learn.add_argument("--lambda2", type=float, default=LearnerConfig.lambda2)
    learn.add_argument("--seed", type=int, default=LearnerConfig.seed)
    learn.add_argument("--max-batches", type=int, default=None)
    learn.set_defaults(func=_cmd_learn)

    loc = sub.add_parser("localize", help="rank root causes for a graph")
    loc.add_argument("--graph", required=True, help="graph JSON file")
    loc.add_argument("--k", type=int, default=5)
    loc.add_argument("--restart", type=float, default=0.3)
    loc.add_argument("--phi-jump", type=float, default=0.15)
    loc.set_defaults(func=_cmd_localize)

    sim = sub.add_parser("simulate", help="generate a synthetic fault episode")
    sim.add_argument("--out", required=True, help="CSV output path")
    sim.add_argument("--truth", required=True, help="truth JSON output path")
    sim.add_argument("--m", type=int, default=10)
    sim.add_argument("--t-normal", type=int, default=400)
    sim.add_argument("--t-fault", type=int, default=200)
    sim.add_argument("--edge-prob", type=float, default=None)
    sim.add_argument("--fault-node", type=int, default=0)
    sim.add_argument("--shift", type=float, default=5.0)
    sim.add_argument("--noise", type=float, default=1.0)
    sim.add_argument("--seed", type=int, default=0)
    sim.set_defaults(func=_cmd_simulate)

    ev = sub.add_parser("eval", help="score predictions against ground truth")
    ev.add_argument("--pred", required=True, help="predictions JSON (causes list)")
    ev.add_argument("--truth", required=True, help="truth JSON from simulate")
    ev.add_argument("--k", default="1,3,5", help="comma-separated K values")
    ev.add_argument("--n-total", type=int, default=None, help="entity count for RP")
    ev.set_defaults(func=_cmd_eval)

    run = sub.add_parser("run", help="full online loop over a CSV stream")
    run.add_argument("--input", required=True)
    run.add_argument("--kpi", default="kpi")
    run.add_argument("--config", default=None, help="flat-key JSON config")
    run.add_argument("--outdir", required=True)
    run.add_argument("--window", type=int, default=None)
    run.add_argument("--energy", type=float, default=None)
    run.add_argument("--kappa", type=float, default=None)
    run.add_argument("--t0", type=int, default=None)
    run.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    run.add_argument("--epochs", type=int, default=None)
    run.add_argument("--lr", type=float, default=None)
    run.add_argument("--lambda1", type=float, default=None)
    run.add_argument("--lambda2", type=float, default=None)
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--alpha", type=float, default=None)
    run.add_argument("--threshold", type=float, default=None)
    run.add_argument("--rbo-p", dest="rbo_p", type=float, default=None)
    run.add_argument("--phi-jump", dest="phi_jump", type=float, default=None)
    run.add_argument("--restart", type=float, default=None)
    run.add_argument("--k", type=int, default=None)
    run.add_argument("--max-batches", dest="max_batches", type=int, default=None)
    run.set_defaults(func=_cmd_run)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
