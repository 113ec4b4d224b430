"""Command line entry points.

    satloop prove FILE [guidance options]
    satloop serve --model PATH [--addr HOST:PORT] [--workers N] ...
    satloop bench SPEC.toml
    satloop grid GRID.toml
    satloop loop LOOP.toml
    satloop gen-corpus --out DIR [--family F] [--count N] [--seed S]
"""

from __future__ import annotations

import argparse
import json
import os
import signal
import sys
import threading

from .corpus import FAMILIES, generate_corpus
from .features import PairMode
from .gbdt import load_model_file
from .harness import (
    load_bench_toml,
    load_grid_toml,
    load_loop_toml,
    render_table,
    run_benchmark,
    run_grid,
    run_loop,
)
from .problems import DerivationTrace, load_problem, write_trace
from .prover import GuidanceConfig, Limits, Mode, solve
from .server import EvalServer, parse_address


def _add_prove(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("prove", help="run the saturation loop on one problem")
    p.add_argument("file")
    p.add_argument("--mode", default="baseline", choices=[m.value for m in Mode])
    p.add_argument("--fast-model", help="local tree model file")
    p.add_argument("--parental-model", help="parent-pair tree model file")
    p.add_argument("--server", help="HOST:PORT of an eval server")
    p.add_argument("--two-phase-threshold", type=float, default=0.1)
    p.add_argument("--parental-threshold", type=float, default=0.05)
    p.add_argument("--pair-mode", default="cat", choices=[m.value for m in PairMode])
    p.add_argument("--query", type=int, default=256, help="max vectors per server call")
    p.add_argument("--context", type=int, default=768, help="max context ids sent")
    p.add_argument("--coop", action="store_true",
                   help="alternate model and baseline queues")
    p.add_argument("--max-processed", type=int)
    p.add_argument("--max-generated", type=int)
    p.add_argument("--time", type=float, help="wall clock limit in seconds")
    p.add_argument("--trace", help="write the full derivation trace here")
    p.add_argument("--proof", help="write the proof (trace subset) here")


def _cmd_prove(args: argparse.Namespace) -> int:
    config = GuidanceConfig(
        mode=Mode(args.mode),
        coop=args.coop,
        fast_model=args.fast_model,
        parental_model=args.parental_model,
        server=args.server,
        two_phase_threshold=args.two_phase_threshold,
        parental_threshold=args.parental_threshold,
        pair_mode=PairMode(args.pair_mode),
        query_limit=args.query,
        context_limit=args.context,
    )
    limits = Limits(args.max_processed, args.max_generated, args.time)
    problem = load_problem(args.file)
    result = solve(problem, config, limits)
    stats = result.stats
    print(
        f"{problem.name}: {result.status.value}  "
        f"processed={stats['processed']} generated={stats['generated']} "
        f"frozen={stats['frozen']} revived={stats['revived']} "
        f"wall={stats['wall_time']:.2f}s"
    )
    if args.trace:
        with open(args.trace, "w", encoding="utf-8") as fh:
            fh.write(write_trace(result.trace))
    if args.proof and result.proof is not None:
        proof_trace = DerivationTrace(result.proof.records, problem.name)
        with open(args.proof, "w", encoding="utf-8") as fh:
            fh.write(write_trace(proof_trace))
    return 0 if result.status.value == "Unsat" else 1


def _cmd_serve(args: argparse.Namespace) -> int:
    model = load_model_file(args.model)
    host, port = parse_address(args.addr)
    server = EvalServer(
        model, host, port, workers=args.workers, batch_size=args.batch, wait=args.wait
    )
    server.start()
    print(f"serving {args.model} on {server.host}:{server.port} "
          f"(workers={args.workers} batch={args.batch} wait={args.wait})")
    stop = threading.Event()
    signal.signal(signal.SIGINT, lambda *_: stop.set())
    signal.signal(signal.SIGTERM, lambda *_: stop.set())
    stop.wait()
    server.shutdown()
    return 0


def _cmd_bench(args: argparse.Namespace) -> int:
    spec = load_bench_toml(args.spec)
    trace_dir = spec["trace_dir"]
    out_dir = spec["out_dir"]
    row, results = run_benchmark(
        spec["label"], spec["problems"], spec["config"], spec["limits"],
        spec["parallel"], trace_dir,
    )
    print(render_table([row]))
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "results.jsonl"), "w", encoding="utf-8") as fh:
            for r in results:
                fh.write(json.dumps(r.__dict__, sort_keys=True) + "\n")
    return 0


def _cmd_grid(args: argparse.Namespace) -> int:
    spec = load_grid_toml(args.spec)
    rows = run_grid(
        spec["label"], spec["problems"], spec["config"], spec["limits"],
        spec["axes"], spec["parallel"],
    )
    print(render_table([r.result for r in rows]))
    best = rows[0]
    print(f"best: {best.params}")
    if spec["out_dir"]:
        os.makedirs(spec["out_dir"], exist_ok=True)
        with open(os.path.join(spec["out_dir"], "grid.json"), "w",
                  encoding="utf-8") as fh:
            json.dump(
                [{"params": r.params, **r.result.deterministic_view()} for r in rows],
                fh, indent=2, sort_keys=True,
            )
            fh.write("\n")
    return 0


def _cmd_loop(args: argparse.Namespace) -> int:
    report = run_loop(load_loop_toml(args.spec))
    print(report.table)
    print(f"best two-phase threshold: {report.best_two_phase_threshold}")
    print(f"best parental threshold: {report.best_parental_threshold}")
    return 0


def _cmd_gen_corpus(args: argparse.Namespace) -> int:
    paths = generate_corpus(args.out, args.count, args.family, args.seed)
    print(f"wrote {len(paths)} problems to {args.out}")
    return 0


def main(argv: "list[str] | None" = None) -> int:
    parser = argparse.ArgumentParser(prog="satloop")
    sub = parser.add_subparsers(dest="command", required=True)

    _add_prove(sub)

    p = sub.add_parser("serve", help="run a clause evaluation server")
    p.add_argument("--model", required=True)
    p.add_argument("--addr", default="127.0.0.1:7317")
    p.add_argument("--workers", type=int, default=28)
    p.add_argument("--batch", type=int, default=8)
    p.add_argument("--wait", type=float, default=0.01)

    p = sub.add_parser("bench", help="run a benchmark spec")
    p.add_argument("spec")
    p = sub.add_parser("grid", help="run a grid search spec")
    p.add_argument("spec")
    p = sub.add_parser("loop", help="run the full train/eval loop")
    p.add_argument("spec")

    p = sub.add_parser("gen-corpus", help="generate synthetic problems")
    p.add_argument("--out", required=True)
    p.add_argument("--family", default="mix", choices=list(FAMILIES) + ["mix"])
    p.add_argument("--count", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)

    args = parser.parse_args(argv)
    commands = {
        "prove": _cmd_prove,
        "serve": _cmd_serve,
        "bench": _cmd_bench,
        "grid": _cmd_grid,
        "loop": _cmd_loop,
        "gen-corpus": _cmd_gen_corpus,
    }
    return commands[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
