"""Command line entry point: ``fedgs {run,matrix,graph,availability}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import graph as g3
from .availability import AvailabilityModel, availability_trace, write_trace_csv
from .config import ExperimentConfig, apply_overrides, parse_config, parse_override
from .domain import FedGSError
from .engine import build_client_graph, build_dataset, run_experiment
from .matrix import parse_matrix, run_matrix, set_base_field
from .model import init_params
from .results import check_writable, fmt, output_paths, write_results


def _load(args) -> ExperimentConfig:
    cfg = parse_config(args.config)
    overrides = dict(parse_override(s) for s in args.set or [])
    if getattr(args, "workers", None) is not None:
        overrides["workers"] = args.workers
    return apply_overrides(cfg, overrides) if overrides else cfg


def cmd_run(args) -> int:
    cfg = _load(args)
    out = args.out or cfg.output.dir or "results"
    paths = output_paths(out, cfg.name)
    check_writable(paths)
    result = run_experiment(cfg)
    write_results(result, paths, trace=cfg.output.trace or args.trace, counts=cfg.output.counts)
    s = result.summary
    print(f"{cfg.name}: min_test_loss={fmt(s['min_test_loss'])} final_var_v={fmt(s['final_var_v'])} -> {paths['rounds']}")
    return 1 if s["aborted"] else 0


def cmd_matrix(args) -> int:
    matrix = parse_matrix(args.config_dir)
    if args.processes is not None:
        matrix.processes = args.processes
    for text in args.set or []:
        set_base_field(matrix, *parse_override(text))
    out = Path(args.out or (Path(args.config_dir) / "results" if Path(args.config_dir).is_dir() else "results"))
    out.mkdir(parents=True, exist_ok=True)
    result = run_matrix(matrix, out)
    width = max(len(s) for s in result.samplers)
    print(" " * width + "  " + "  ".join(f"{m:>10}" for m in result.modes))
    for s in result.samplers:
        print(f"{s:<{width}}  " + "  ".join(f"{result.table[(s, m)]:>10.4f}" for m in result.modes))
    return 0


def cmd_graph(args) -> int:
    cfg = _load(args)
    train, val = build_dataset(cfg)
    graph = build_client_graph(cfg, train, val, init_params(train.dim, train.num_classes))
    out = Path(args.out or f"{cfg.name}.graph.txt")
    out.parent.mkdir(parents=True, exist_ok=True)
    g3.export_edge_list(graph, out)
    print(f"{len(graph.edges())} edges over {graph.N} clients -> {out}")
    return 0


def cmd_availability(args) -> int:
    cfg = _load(args)
    train, _ = build_dataset(cfg)
    av = cfg.availability
    seed = cfg.seeds.availability_seed
    model = AvailabilityModel.build(av.mode, av.beta, train.profiles(), seed, period=av.period, lognormal_param=av.lognormal_param, num_y=train.num_classes)
    trace = availability_trace(model, cfg.rounds, seed)
    out = Path(args.out or f"{cfg.name}.trace.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    write_trace_csv(trace, model.N, out)
    print(f"{cfg.rounds} rounds x {model.N} clients -> {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fedgs", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, target="config"):
        sp.add_argument(target)
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config field, e.g. trainer.E=5")
        sp.add_argument("--out")

    r = sub.add_parser("run", help="run one experiment")
    common(r)
    r.add_argument("--workers", type=int)
    r.add_argument("--trace", action="store_true", help="also write the availability trace")
    r.set_defaults(func=cmd_run)

    m = sub.add_parser("matrix", help="run a sampler x availability x seed grid")
    common(m, "config_dir")
    m.add_argument("--processes", type=int)
    m.set_defaults(func=cmd_matrix)

    g = sub.add_parser("graph", help="build the client graph and export it as an edge list")
    common(g)
    g.set_defaults(func=cmd_graph)

    a = sub.add_parser("availability", help="dump the availability trace")
    common(a)
    a.set_defaults(func=cmd_availability)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (FedGSError, OSError) as exc:
        print(f"fedgs: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
