"""``coarsenet`` command-line interface.

Exit codes: 0 success, 1 bad input or missing artifacts, 2 candidate
exhaustion (partial hierarchy still written), 3 oracle scale guard.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
import warnings
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from ._validation import InputError
from .coarsener import CandidateExhaustionWarning, coarsen
from .config import TASKS, RunConfig
from .costs import BRUTE_FORCE_MAX_NODES
from .datasets import (find_dataset, planetoid_splits, read_linqs, read_ogb_csv, read_planetoid,
                       split_edges)
from .evaluation import TrainConfig, infer_nc, train_eval_lp, train_sgc_nc
from .graph import Graph, build_coarse
from .io import (FormatError, load_coarse_graph, load_graph, read_edges, save_coarse_graph,
                 save_graph, write_edges, write_json_line, write_node_map, write_partition)
from .oracle import disjoint_edges_fixture, run_oracle

EXIT_OK, EXIT_INPUT, EXIT_EXHAUSTED, EXIT_SCALE = 0, 1, 2, 3

logger = logging.getLogger("coarsenet")


def _threads(args) -> int | None:
    if getattr(args, "threads", None):
        return args.threads
    env = os.environ.get("COARSENET_THREADS")
    if env:
        try:
            value = int(env)
        except ValueError:
            raise InputError(f"COARSENET_THREADS must be an integer, got {env!r}") from None
        if value < 1:
            raise InputError("COARSENET_THREADS must be >= 1")
        return value
    return None


def _add_graph_args(p, required=True):
    p.add_argument("--edges", required=required, help="edge list: src<TAB>dst[<TAB>weight]")
    p.add_argument("--features", required=required, help="CMX1 binary or text feature matrix")
    p.add_argument("--labels", help="node<TAB>class file")
    p.add_argument("--splits", help="node<TAB>train|valid|test file")


def _load_input(args):
    for name in ("edges", "features", "labels", "splits"):
        path = getattr(args, name)
        if path and not Path(path).exists():
            raise FormatError(f"{path}: no such file")
    return load_graph(args.edges, args.features, args.labels, args.splits)


def _lp_split_graph(g: Graph, seed: int):
    return split_edges(g, seed=seed)


def cmd_coarsen(args) -> int:
    cfg = RunConfig.resolve(
        args.dataset, ratio=args.ratio, batch=args.batch, sgc_k=args.sgc_k, pca_dim=args.pca_dim,
        knn=args.knn, global_frac=args.global_frac, cost=args.cost, seed=args.seed,
        task=args.task, max_regenerations=args.max_regenerations, debug_verify=args.debug_verify,
    )
    tic = time.perf_counter()
    g, original = _load_input(args)
    load_s = time.perf_counter() - tic
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for stale in out.glob("level_*.part"):
        stale.unlink()
    train = g
    if cfg.task == "lp":
        train, held = _lp_split_graph(g, cfg.seed)
        split_dir = out / "lp_split"
        split_dir.mkdir(exist_ok=True)
        for name, pairs in held.items():
            write_edges(split_dir / f"{name}.tsv", pairs[:, 0], pairs[:, 1])
    tic = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CandidateExhaustionWarning)
        hierarchy = coarsen(train, **cfg.coarsen_kwargs())
    summarize_s = time.perf_counter() - tic
    tic = time.perf_counter()
    for level, part in enumerate(hierarchy.levels):
        write_partition(out / f"level_{level}.part", part)
    save_coarse_graph(out / "coarse", build_coarse(train, hierarchy.final))
    write_node_map(out / "node_map.tsv", original)
    stats_path = out / "stats.json"
    with open(stats_path, "w", encoding="utf-8") as fh:
        for rec in hierarchy.stats:
            write_json_line(fh, {k: v for k, v in rec.items() if k != "seconds"})
        write_json_line(fh, dict(summary=True, status=hierarchy.status, n=g.n,
                                 n_prime=hierarchy.final.n_prime, levels=len(hierarchy.levels) - 1,
                                 regenerations=hierarchy.regenerations, config=cfg.to_dict()))
    write_s = time.perf_counter() - tic
    with open(out / "timings.json", "w", encoding="utf-8") as fh:
        for rec in hierarchy.stats:
            write_json_line(fh, dict(level=rec["level"], seconds=rec["seconds"]))
        write_json_line(fh, dict(phase="load", seconds=load_s))
        write_json_line(fh, dict(phase="summarize", seconds=summarize_s))
        write_json_line(fh, dict(phase="write", seconds=write_s))
    if hierarchy.status == "exhausted":
        print(f"coarsenet: candidates exhausted at n'={hierarchy.final.n_prime} "
              f"(target {cfg.ratio * g.n:.1f}); partial hierarchy written", file=sys.stderr)
        return EXIT_EXHAUSTED
    return EXIT_OK


def _summary(out: Path) -> dict:
    path = out / "stats.json"
    if not path.exists():
        raise FormatError(f"{path}: missing; run 'coarsenet coarsen' first")
    with open(path, encoding="utf-8") as fh:
        records = [json.loads(line) for line in fh if line.strip()]
    summary = [r for r in records if r.get("summary")]
    if not summary:
        raise FormatError(f"{path}: no summary record")
    seconds = 0.0
    timing = out / "timings.json"
    if timing.exists():
        with open(timing, encoding="utf-8") as fh:
            for line in fh:
                rec = json.loads(line)
                if rec.get("phase") == "summarize":
                    seconds = rec["seconds"]
    return dict(summary[-1], summarize_s=seconds)


def cmd_eval(args) -> int:
    out = Path(args.out)
    coarse_dir = out / "coarse"
    if not (coarse_dir / "features.cmx").exists():
        raise FormatError(f"{coarse_dir}: missing coarse artifacts; run 'coarsenet coarsen' first")
    summary = _summary(out)
    task = args.task or summary["config"]["task"]
    if task not in ("nc", "lp"):
        raise InputError("eval needs --task nc or lp")
    g, _ = _load_input(args)
    cg = load_coarse_graph(coarse_dir)
    ratio = summary["config"]["ratio"]
    cfg = TrainConfig(seed=summary["config"]["seed"] if args.seed is None else args.seed)
    K = args.model_k
    if task == "nc":
        tic = time.perf_counter()
        model = train_sgc_nc(cg, K, cfg)
        train_s = time.perf_counter() - tic
        report = infer_nc(g, model, ratio)
        report.train_s = train_s
    else:
        split_dir = out / "lp_split"
        held = {}
        for name in ("valid", "test"):
            path = split_dir / f"{name}.tsv"
            if not path.exists():
                raise FormatError(f"{path}: missing; coarsen with --task lp")
            src, dst, _ = read_edges(path)
            held[name] = np.column_stack([src, dst])
        train, _ = _lp_split_graph(g, summary["config"]["seed"])
        report = train_eval_lp(cg, train, held, K, cfg, ratio, full_edges=g.edge_array())
    report.summarize_s = summary["summarize_s"]
    print(json.dumps(report.to_dict(), sort_keys=True))
    return EXIT_OK


def cmd_oracle(args) -> int:
    if args.nodes > BRUTE_FORCE_MAX_NODES:
        print(f"coarsenet: oracle refused: {args.nodes} nodes exceeds guard of "
              f"{BRUTE_FORCE_MAX_NODES}", file=sys.stderr)
        return EXIT_SCALE
    exact, approx = disjoint_edges_fixture()
    print(f"disjoint-edges fixture: exact={round(exact, 12)!r} approx={round(approx, 12)!r}")
    report = run_oracle(args.graphs, args.nodes, args.seed, args.pairs, fault=args.inject_fault)
    print(f"instances={report.instances} pairs={report.pairs} tight_pairs={report.tight_pairs} "
          f"max_exact_error={report.max_exact_error:.3e} min_bound_slack={report.min_bound_slack:.3e} "
          f"max_tight_gap={report.max_tight_gap:.3e}")
    bad_fixture = abs(exact - 1.0) > 1e-9 or abs(approx - 1.0) > 1e-9
    if bad_fixture:
        print("violation: disjoint-edges fixture expected exact=1.0 approx=1.0")
    for v in report.violations[: args.show]:
        print("violation: " + json.dumps(v, sort_keys=True, default=str))
    if report.violations or bad_fixture:
        print(f"FAILED: {len(report.violations)} violation(s)")
        return EXIT_INPUT
    print("OK")
    return EXIT_OK


def cmd_convert(args) -> int:
    src = Path(args.input)
    if not src.exists():
        raise FormatError(f"{src}: no such file or directory")
    ids = None
    if args.format == "linqs":
        name = args.name or src.name
        g, ids, _ = read_linqs(src / f"{name}.content", src / f"{name}.cites")
    elif args.format == "planetoid":
        g = read_planetoid(src, args.name or src.name)
    elif args.format == "ogb":
        g = read_ogb_csv(src)
    else:
        if not args.name:
            raise InputError("--format auto needs --name")
        g = find_dataset(args.name, src)
        if g is None:
            raise FormatError(f"{src}: no recognizable dataset {args.name!r}")
    if g.splits is None and g.labels is not None:
        g = Graph(g.adjacency, g.features, g.labels, planetoid_splits(g.labels, seed=args.seed))
    save_graph(args.out, g, original_ids=ids if ids is not None else np.arange(g.n))
    print(f"wrote {g.n} nodes, {g.edge_array().shape[0]} edges to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coarsenet", description="Graph coarsening by convolution matching.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("coarsen", help="build a coarsening hierarchy")
    _add_graph_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--dataset", help="use tuned defaults for cora or citeseer")
    p.add_argument("--ratio", type=float)
    p.add_argument("--batch", type=int)
    p.add_argument("--sgc-k", type=int)
    p.add_argument("--pca-dim", type=int)
    p.add_argument("--knn", type=int)
    p.add_argument("--global-frac", type=float)
    p.add_argument("--cost", choices=("approx", "exact"))
    p.add_argument("--seed", type=int)
    p.add_argument("--task", choices=TASKS)
    p.add_argument("--max-regenerations", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--debug-verify", action="store_true")
    p.set_defaults(func=cmd_coarsen)

    p = sub.add_parser("eval", help="train on the coarse graph, score on the original")
    _add_graph_args(p)
    p.add_argument("--out", required=True, help="directory written by 'coarsen'")
    p.add_argument("--task", choices=("nc", "lp"))
    p.add_argument("--model-k", type=int, default=2, help="propagation depth of the model")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("oracle", help="check cached costs against brute force")
    p.add_argument("--graphs", type=int, default=100)
    p.add_argument("--nodes", type=int, default=50)
    p.add_argument("--pairs", type=int, default=5, help="random live pairs per graph")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--inject-fault", choices=("skip-s-update",))
    p.add_argument("--show", type=int, default=5, help="violations to print")
    p.add_argument("--threads", type=int)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("convert", help="convert citation or OGB files to native format")
    p.add_argument("--format", choices=("linqs", "planetoid", "ogb", "auto"), default="auto")
    p.add_argument("--input", required=True)
    p.add_argument("--name", help="dataset stem, e.g. cora")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0, help="seed for generated splits")
    p.set_defaults(func=cmd_convert)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    if args.command == "coarsen" and args.seed is None:
        args.seed = 0
    try:
        with threadpool_limits(limits=_threads(args)):
            return args.func(args)
    except InputError as exc:
        print(f"coarsenet: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
