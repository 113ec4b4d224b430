"""Benchmark harness: corpus runs, grid search, and the learning loop.

`run_benchmark` runs one configuration over a list of problem files,
optionally in parallel worker processes, and aggregates a result row.
`run_grid` sweeps config axes over the same problems and ranks the
rows. `run_loop` is the whole pipeline: run the baseline over the
training split, harvest traces, build datasets, train the local, the
served, and the parental models, then evaluate every guidance mode on
the dev split and the final pick on the holdout split.

Corpus splits are 90/5/5 by a seeded shuffle. The holdout list sits
behind a guard that raises on second access: nothing in the loop can
tune against it, and the report records that it was read only once.

Rankings and the report's deterministic view use solved counts and mean
processed-clause counts; wall-clock columns are reported but never
compared, since repeat runs can't reproduce them.
"""

from __future__ import annotations

import glob
import itertools
import json
import multiprocessing
import os
import time
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import tomli

from .features import FeatureConfig, Featurizer, PairMode
from .gbdt import TreeParams, load_dataset, save_model_file, train
from .problems import load_problem, load_trace, write_trace
from .prover import GuidanceConfig, Limits, Mode, Status, solve
from .server import EvalServer
from .traindata import LabelScheme, SamplingConfig, emit_dataset


@dataclass
class ProblemResult:
    problem: str
    status: str
    processed: int
    generated: int
    wall_time: float
    error: str = ""


@dataclass
class MethodResult:
    """One row of a result table: a configuration over a problem set."""

    label: str
    solved: int
    attempted: int
    mean_processed: float
    mean_generated: float
    wall_time: float
    solved_names: list[str] = field(default_factory=list)

    def deterministic_view(self) -> dict:
        return {
            "label": self.label,
            "solved": self.solved,
            "attempted": self.attempted,
            "mean_processed": round(self.mean_processed, 6),
            "mean_generated": round(self.mean_generated, 6),
            "solved_names": list(self.solved_names),
        }


def render_table(rows: Sequence[MethodResult]) -> str:
    header = f"{'method':<28} {'solved':>9} {'mean_proc':>10} {'mean_gen':>10} {'wall_s':>8}"
    lines = [header, "-" * len(header)]
    for r in rows:
        lines.append(
            f"{r.label:<28} {f'{r.solved}/{r.attempted}':>9} "
            f"{r.mean_processed:>10.1f} {r.mean_generated:>10.1f} {r.wall_time:>8.1f}"
        )
    return "\n".join(lines)


_WORKER: dict = {}


def _init_worker(config: GuidanceConfig, limits: Limits, trace_dir: Optional[str]) -> None:
    _WORKER["config"] = config
    _WORKER["limits"] = limits
    _WORKER["trace_dir"] = trace_dir


def _bench_path(path: str) -> ProblemResult:
    config: GuidanceConfig = _WORKER["config"]
    limits: Limits = _WORKER["limits"]
    trace_dir: Optional[str] = _WORKER["trace_dir"]
    name = os.path.splitext(os.path.basename(path))[0]
    t0 = time.monotonic()
    try:
        problem = load_problem(path)
        result = solve(problem, config, limits)
    except Exception as exc:  # noqa: BLE001 - a bad problem must not sink the run
        return ProblemResult(name, "Error", 0, 0, time.monotonic() - t0, str(exc))
    if trace_dir is not None:
        with open(os.path.join(trace_dir, problem.name + ".trace"), "w",
                  encoding="utf-8") as fh:
            fh.write(write_trace(result.trace))
    return ProblemResult(
        problem.name,
        result.status.value,
        result.stats["processed"],
        result.stats["generated"],
        time.monotonic() - t0,
    )


def run_benchmark(
    label: str,
    paths: Sequence[str],
    config: GuidanceConfig,
    limits: Limits,
    parallel: int = 1,
    trace_dir: Optional[str] = None,
) -> tuple[MethodResult, list[ProblemResult]]:
    """Run one configuration over the given problems; aggregate means
    are over solved problems only."""
    if trace_dir is not None:
        os.makedirs(trace_dir, exist_ok=True)
    if parallel > 1 and len(paths) > 1:
        ctx = multiprocessing.get_context("spawn")
        with ctx.Pool(
            min(parallel, len(paths)), _init_worker, (config, limits, trace_dir)
        ) as pool:
            results = pool.map(_bench_path, paths)
    else:
        _init_worker(config, limits, trace_dir)
        results = [_bench_path(p) for p in paths]
    solved = [r for r in results if r.status == Status.UNSAT.value]
    row = MethodResult(
        label=label,
        solved=len(solved),
        attempted=len(results),
        mean_processed=(
            sum(r.processed for r in solved) / len(solved) if solved else 0.0
        ),
        mean_generated=(
            sum(r.generated for r in solved) / len(solved) if solved else 0.0
        ),
        wall_time=sum(r.wall_time for r in results),
        solved_names=[r.problem for r in solved],
    )
    return row, results


@dataclass
class GridRow:
    params: dict
    result: MethodResult


def run_grid(
    label: str,
    paths: Sequence[str],
    base: GuidanceConfig,
    limits: Limits,
    axes: dict[str, list],
    parallel: int = 1,
) -> list[GridRow]:
    """Sweep the cartesian product of axes over base; rows come back
    ranked best first (solved desc, then mean processed asc, then axis
    order for full ties)."""
    keys = list(axes)
    rows: list[GridRow] = []
    for combo in itertools.product(*(axes[k] for k in keys)):
        params = dict(zip(keys, combo))
        config = replace(base, **params)
        desc = ",".join(f"{k}={v}" for k, v in params.items())
        row, _ = run_benchmark(f"{label}[{desc}]", paths, config, limits, parallel)
        rows.append(GridRow(params, row))
    rows.sort(key=lambda r: (-r.result.solved, r.result.mean_processed))
    return rows


class CorpusSplit:
    """Train/dev/holdout partition with a one-shot holdout.

    The holdout list may be read exactly once; a second read raises.
    Selection must happen on dev, and the single read is the final
    evaluation.
    """

    def __init__(self, train: list[str], dev: list[str], holdout: list[str]):
        self.train = train
        self.dev = dev
        self._holdout = holdout
        self.holdout_reads = 0

    @property
    def holdout(self) -> list[str]:
        self.holdout_reads += 1
        if self.holdout_reads > 1:
            raise RuntimeError("holdout split may be read only once per experiment")
        return list(self._holdout)


def split_corpus(paths: Sequence[str], seed: int = 0) -> CorpusSplit:
    """Deterministic 90/5/5 split of the given problem files."""
    import random

    ordered = sorted(paths)
    random.Random(f"{seed}:split").shuffle(ordered)
    n = len(ordered)
    n_dev = max(1, n * 5 // 100)
    n_holdout = max(1, n * 5 // 100)
    if n < 3:
        raise ValueError("need at least 3 problems to split")
    dev = ordered[:n_dev]
    holdout = ordered[n_dev : n_dev + n_holdout]
    train = ordered[n_dev + n_holdout :]
    return CorpusSplit(train, dev, holdout)


@dataclass
class LoopConfig:
    corpus_dir: str
    out_dir: str
    seed: int = 0
    parallel: int = 1
    limits: Limits = field(
        default_factory=lambda: Limits(max_processed=250, max_generated=20000)
    )
    features: FeatureConfig = field(default_factory=FeatureConfig)
    fast_params: TreeParams = TreeParams(trees=40, max_depth=6, max_leaves=31)
    slow_params: TreeParams = TreeParams(trees=120, max_depth=10, max_leaves=128)
    parental_params: TreeParams = TreeParams(trees=60, max_depth=8, max_leaves=64)
    rho: Optional[float] = 8.0
    pair_mode: PairMode = PairMode.CAT
    two_phase_grid: list[float] = field(default_factory=lambda: [0.0, 0.03, 0.1, 0.3])
    parental_grid: list[float] = field(
        default_factory=lambda: [0.0, 0.005, 0.01, 0.03, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5]
    )
    query_limit: int = 256
    context_limit: int = 768
    server_workers: int = 8
    server_batch: int = 8
    server_wait: float = 0.005
    run_holdout: bool = True


@dataclass
class LoopReport:
    methods: dict[str, MethodResult]
    grid_two_phase: list[GridRow]
    grid_parental: list[GridRow]
    best_two_phase_threshold: float
    best_parental_threshold: float
    dataset_stats: dict
    holdout: Optional[MethodResult]
    holdout_reads: int
    table: str

    def deterministic_view(self) -> dict:
        """Everything reproducible across repeat runs (no wall clocks)."""
        return {
            "methods": {k: v.deterministic_view() for k, v in self.methods.items()},
            "grid_two_phase": [
                {"params": r.params, **r.result.deterministic_view()}
                for r in self.grid_two_phase
            ],
            "grid_parental": [
                {"params": r.params, **r.result.deterministic_view()}
                for r in self.grid_parental
            ],
            "best_two_phase_threshold": self.best_two_phase_threshold,
            "best_parental_threshold": self.best_parental_threshold,
            "dataset_stats": self.dataset_stats,
            "holdout": self.holdout.deterministic_view() if self.holdout else None,
            "holdout_reads": self.holdout_reads,
        }


def run_loop(cfg: LoopConfig) -> LoopReport:
    """Train guidance from baseline traces and evaluate every mode.

    Writes traces, datasets, models, report.json, and table.txt under
    cfg.out_dir, and returns the report.
    """
    os.makedirs(cfg.out_dir, exist_ok=True)
    paths = sorted(glob.glob(os.path.join(cfg.corpus_dir, "*.p")))
    if not paths:
        raise FileNotFoundError(f"no .p files under {cfg.corpus_dir}")
    split = split_corpus(paths, cfg.seed)

    # 1. Baseline over the training split, keeping traces.
    trace_dir = os.path.join(cfg.out_dir, "traces")
    base_config = GuidanceConfig(mode=Mode.BASELINE, features=cfg.features)
    train_row, _ = run_benchmark(
        "baseline/train", split.train, base_config, cfg.limits, cfg.parallel, trace_dir
    )

    # 2. Datasets from the traces.
    traces = [
        load_trace(p) for p in sorted(glob.glob(os.path.join(trace_dir, "*.trace")))
    ]
    featurizer = Featurizer(cfg.features)
    clause_path = os.path.join(cfg.out_dir, "clauses.ds")
    clause_stats = emit_dataset(
        traces, LabelScheme.PROOF_CLAUSES, featurizer, clause_path
    )
    pair_path = os.path.join(cfg.out_dir, "pairs.ds")
    pair_stats = emit_dataset(
        traces,
        LabelScheme.PROOF_PARENTS,
        featurizer,
        pair_path,
        cfg.pair_mode,
        SamplingConfig(cfg.rho, cfg.seed),
    )

    # 3. Models: a small tree for in-process scoring, a larger one for
    # the server, and the parent-pair filter.
    clause_data, _ = load_dataset(clause_path)
    pair_data, _ = load_dataset(pair_path)
    fast = train(clause_data, cfg.fast_params, cfg.features.dimension)
    slow = train(clause_data, cfg.slow_params, cfg.features.dimension)
    pair_dim = (
        2 * cfg.features.dimension
        if cfg.pair_mode is PairMode.CAT
        else cfg.features.dimension
    )
    parental = train(pair_data, cfg.parental_params, pair_dim)
    save_model_file(fast, os.path.join(cfg.out_dir, "fast.slgb"))
    save_model_file(slow, os.path.join(cfg.out_dir, "slow.slgb"))
    save_model_file(parental, os.path.join(cfg.out_dir, "parental.slgb"))

    # 4. Dev evaluation of every mode, grids for the thresholds.
    methods: dict[str, MethodResult] = {"train/baseline": train_row}
    methods["baseline"], _ = run_benchmark(
        "baseline", split.dev, base_config, cfg.limits, cfg.parallel
    )
    local_config = GuidanceConfig(
        mode=Mode.LOCAL_MODEL, coop=True, fast_model=fast, features=cfg.features
    )
    methods["local"], _ = run_benchmark(
        "local", split.dev, local_config, cfg.limits, cfg.parallel
    )

    server = EvalServer(
        slow,
        workers=cfg.server_workers,
        batch_size=cfg.server_batch,
        wait=cfg.server_wait,
    )
    server.start()
    try:
        addr = f"127.0.0.1:{server.port}"
        two_phase_base = replace(
            local_config,
            mode=Mode.TWO_PHASE,
            server=addr,
            query_limit=cfg.query_limit,
            context_limit=cfg.context_limit,
        )
        grid_two_phase = run_grid(
            "two-phase", split.dev, two_phase_base, cfg.limits,
            {"two_phase_threshold": list(cfg.two_phase_grid)}, cfg.parallel,
        )
        best_tp = grid_two_phase[0].params["two_phase_threshold"]
        methods["two-phase"] = grid_two_phase[0].result

        parental_base = replace(
            local_config, mode=Mode.PARENTAL, parental_model=parental,
            pair_mode=cfg.pair_mode,
        )
        grid_parental = run_grid(
            "parental", split.dev, parental_base, cfg.limits,
            {"parental_threshold": list(cfg.parental_grid)}, cfg.parallel,
        )
        best_pf = grid_parental[0].params["parental_threshold"]
        methods["parental"] = grid_parental[0].result

        three_config = replace(
            two_phase_base,
            mode=Mode.THREE_PHASE,
            parental_model=parental,
            pair_mode=cfg.pair_mode,
            two_phase_threshold=best_tp,
            parental_threshold=best_pf,
        )
        methods["three-phase"], _ = run_benchmark(
            "three-phase", split.dev, three_config, cfg.limits, cfg.parallel
        )

        # 5. One holdout shot with the dev winner among the guided modes.
        holdout_row = None
        if cfg.run_holdout:
            candidates = ["local", "two-phase", "parental", "three-phase"]
            winner = min(
                candidates,
                key=lambda m: (-methods[m].solved, methods[m].mean_processed),
            )
            configs = {
                "local": local_config,
                "two-phase": replace(two_phase_base, two_phase_threshold=best_tp),
                "parental": replace(parental_base, parental_threshold=best_pf),
                "three-phase": three_config,
            }
            holdout_row, _ = run_benchmark(
                f"holdout/{winner}", split.holdout, configs[winner],
                cfg.limits, cfg.parallel,
            )
            methods["holdout"] = holdout_row
    finally:
        server.shutdown()

    dataset_stats = {
        "clauses": json.loads(clause_stats.to_json()),
        "pairs": json.loads(pair_stats.to_json()),
    }
    table_rows = [methods[k] for k in methods]
    report = LoopReport(
        methods=methods,
        grid_two_phase=grid_two_phase,
        grid_parental=grid_parental,
        best_two_phase_threshold=best_tp,
        best_parental_threshold=best_pf,
        dataset_stats=dataset_stats,
        holdout=holdout_row,
        holdout_reads=split.holdout_reads,
        table=render_table(table_rows),
    )
    with open(os.path.join(cfg.out_dir, "report.json"), "w", encoding="utf-8") as fh:
        json.dump(report.deterministic_view(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(cfg.out_dir, "table.txt"), "w", encoding="utf-8") as fh:
        fh.write(report.table + "\n")
    return report


# ---------------------------------------------------------------------------
# TOML loading for the CLI.


def _features_from(d: dict) -> FeatureConfig:
    return FeatureConfig(
        base=d.get("base", 1 << 15),
        walk_length=d.get("walk_length", 3),
        count_features=d.get("count_features", True),
    )


def _limits_from(d: dict) -> Limits:
    return Limits(
        max_processed=d.get("max_processed"),
        max_generated=d.get("max_generated"),
        max_seconds=d.get("max_seconds"),
    )


def _config_from(d: dict, features: FeatureConfig, base_dir: str) -> GuidanceConfig:
    def _path(key: str) -> Optional[str]:
        value = d.get(key)
        if value is None or os.path.isabs(value):
            return value
        return os.path.join(base_dir, value)

    return GuidanceConfig(
        mode=Mode(d.get("mode", "baseline")),
        coop=d.get("coop", False),
        fast_model=_path("fast_model"),
        parental_model=_path("parental_model"),
        server=d.get("server"),
        two_phase_threshold=d.get("two_phase_threshold", 0.1),
        parental_threshold=d.get("parental_threshold", 0.05),
        pair_mode=PairMode(d.get("pair_mode", "cat")),
        query_limit=d.get("query_limit", 256),
        context_limit=d.get("context_limit", 768),
        penalty_weight=d.get("penalty_weight", 1e8),
        features=features,
    )


def _tree_params_from(d: dict, default: TreeParams) -> TreeParams:
    return TreeParams(
        trees=d.get("trees", default.trees),
        max_depth=d.get("max_depth", default.max_depth),
        max_leaves=d.get("max_leaves", default.max_leaves),
        learning_rate=d.get("learning_rate", default.learning_rate),
        min_samples_leaf=d.get("min_samples_leaf", default.min_samples_leaf),
    )


def _expand_problems(patterns: Sequence[str], base_dir: str) -> list[str]:
    out: list[str] = []
    for pattern in patterns:
        if not os.path.isabs(pattern):
            pattern = os.path.join(base_dir, pattern)
        matches = sorted(glob.glob(pattern))
        if not matches and os.path.exists(pattern):
            matches = [pattern]
        out.extend(matches)
    if not out:
        raise FileNotFoundError(f"no problems matched {list(patterns)}")
    return out


def load_bench_toml(path: str) -> dict:
    """Parse a benchmark spec; every relative path is taken relative to
    the spec file, so specs work from any working directory."""
    with open(path, "rb") as fh:
        raw = tomli.load(fh)
    base_dir = os.path.dirname(os.path.abspath(path))

    def _dir(key: str) -> Optional[str]:
        value = raw.get(key)
        if value is None or os.path.isabs(value):
            return value
        return os.path.join(base_dir, value)

    features = _features_from(raw.get("features", {}))
    return {
        "label": raw.get("label", os.path.basename(path)),
        "problems": _expand_problems(raw["problems"], base_dir),
        "config": _config_from(raw.get("config", {}), features, base_dir),
        "limits": _limits_from(raw.get("limits", {})),
        "parallel": raw.get("parallel", 1),
        "trace_dir": _dir("trace_dir"),
        "out_dir": _dir("out_dir"),
    }


def load_grid_toml(path: str) -> dict:
    spec = load_bench_toml(path)
    with open(path, "rb") as fh:
        raw = tomli.load(fh)
    axes = raw.get("axes", {})
    if not axes:
        raise ValueError(f"{path}: grid spec needs an [axes] table")
    spec["axes"] = {k: list(v) for k, v in axes.items()}
    return spec


def load_loop_toml(path: str) -> LoopConfig:
    with open(path, "rb") as fh:
        raw = tomli.load(fh)
    base_dir = os.path.dirname(os.path.abspath(path))

    def _dir(key: str, default: Optional[str] = None) -> str:
        value = raw.get(key, default)
        if value is None:
            raise ValueError(f"{path}: missing {key}")
        return value if os.path.isabs(value) else os.path.join(base_dir, value)

    defaults = LoopConfig("", "")
    server = raw.get("server", {})
    return LoopConfig(
        corpus_dir=_dir("corpus_dir"),
        out_dir=_dir("out_dir"),
        seed=raw.get("seed", 0),
        parallel=raw.get("parallel", 1),
        limits=_limits_from(raw.get("limits", {})) if "limits" in raw else defaults.limits,
        features=_features_from(raw.get("features", {})),
        fast_params=_tree_params_from(raw.get("fast_model", {}), defaults.fast_params),
        slow_params=_tree_params_from(raw.get("slow_model", {}), defaults.slow_params),
        parental_params=_tree_params_from(
            raw.get("parental_model", {}), defaults.parental_params
        ),
        rho=raw.get("rho", defaults.rho),
        pair_mode=PairMode(raw.get("pair_mode", "cat")),
        two_phase_grid=list(raw.get("two_phase_grid", defaults.two_phase_grid)),
        parental_grid=list(raw.get("parental_grid", defaults.parental_grid)),
        query_limit=raw.get("query_limit", 256),
        context_limit=raw.get("context_limit", 768),
        server_workers=server.get("workers", defaults.server_workers),
        server_batch=server.get("batch_size", defaults.server_batch),
        server_wait=server.get("wait", defaults.server_wait),
        run_holdout=raw.get("run_holdout", True),
    )
