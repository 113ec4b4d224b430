"""The saturation loop and its guidance modes.

The core is a given-clause loop: pick an unprocessed clause, move it to
the processed set, and generate every resolvent and factor between it
and the processed clauses (itself included). The loop maintains the
usual invariant that all mutual inferences among processed clauses have
been performed, so exhaustion of the unprocessed set (and the freezer)
really means saturation.

Guidance modes decide the pick:

- BASELINE        symbol-weight priority queue, FIFO on ties
- LOCAL_MODEL     in-process tree model scores each new clause
- SERVER_MODEL    a remote model scores clause batches
- TWO_PHASE       a small local model prefilters; only clauses above a
                  threshold are sent to the remote model, the rest are
                  enqueued with a large penalty weight (never deleted)
- PARENTAL        resolvents whose parent pair scores below a threshold
                  go to a freezer instead of the queues
- THREE_PHASE     parental filter + two-phase clause scoring

Every mode keeps both a baseline-ordered and a model-ordered queue over
the same live set, so cooperative selection (alternating queues each
turn) and degradation on server failure need no re-scoring. Frozen
clauses are revived when the unprocessed set runs dry, which keeps the
filtered modes refutation-complete; SATURATED is only reported when the
queues and the freezer are both empty.
"""

from __future__ import annotations

import enum
import heapq
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from .features import FeatureConfig, Featurizer, PairMode, SparseVector
from .gbdt import TreeModel, load_model_file
from .inference import factor, is_tautology, match_atom, resolve, symbol_weight
from .problems import (
    DerivationTrace,
    Problem,
    ProofObject,
    TraceRecord,
    extract_proof,
    mark_proof,
)
from .server import ScoreClient, ServerError, ServerUnavailable
from .terms import Clause, Rule, rename_literals


class Mode(enum.Enum):
    BASELINE = "baseline"
    LOCAL_MODEL = "local"
    SERVER_MODEL = "server"
    TWO_PHASE = "two-phase"
    PARENTAL = "parental"
    THREE_PHASE = "three-phase"


class Status(enum.Enum):
    UNSAT = "Unsat"
    SATURATED = "Saturated"
    RESOURCE_OUT = "ResourceOut"


MODEL_MODES = frozenset(
    {Mode.LOCAL_MODEL, Mode.SERVER_MODEL, Mode.TWO_PHASE, Mode.PARENTAL, Mode.THREE_PHASE}
)
SERVER_MODES = frozenset({Mode.SERVER_MODEL, Mode.TWO_PHASE, Mode.THREE_PHASE})
PARENTAL_MODES = frozenset({Mode.PARENTAL, Mode.THREE_PHASE})

DEFAULT_PENALTY_WEIGHT = 1e8

# Variable ids in clauses stay far below this, so unit subsumption
# patterns renamed past it can never collide with a candidate's ids.
_UNIT_PATTERN_OFFSET = 1 << 40


@dataclass
class GuidanceConfig:
    mode: Mode = Mode.BASELINE
    coop: bool = False
    fast_model: "TreeModel | str | None" = None
    parental_model: "TreeModel | str | None" = None
    server: "str | tuple[str, int] | None" = None
    two_phase_threshold: float = 0.1
    parental_threshold: float = 0.05
    pair_mode: PairMode = PairMode.CAT
    query_limit: int = 256
    context_limit: int = 768
    penalty_weight: float = DEFAULT_PENALTY_WEIGHT
    features: FeatureConfig = field(default_factory=FeatureConfig)


@dataclass
class Limits:
    max_processed: Optional[int] = None
    max_generated: Optional[int] = None
    max_seconds: Optional[float] = None


@dataclass
class SolveResult:
    status: Status
    proof: Optional[ProofObject]
    trace: DerivationTrace
    stats: dict
    processed_ids: list[int]


class _Record:
    """Mutable trace row; frozen into TraceRecord when the run ends."""

    __slots__ = ("id", "rule", "parents", "processed", "in_proof", "text")

    def __init__(self, id: int, rule: Rule, parents: tuple[int, ...], text: str):
        self.id = id
        self.rule = rule
        self.parents = parents
        self.processed = False
        self.in_proof = False
        self.text = text


class _State:
    def __init__(self) -> None:
        self.records: list[_Record] = []
        self.record_of: dict[int, _Record] = {}
        self.live: dict[int, Clause] = {}
        self.processed: dict[int, Clause] = {}
        self.processed_ids: list[int] = []
        self.baseline_heap: list[tuple[float, int]] = []
        self.learned_heap: list[tuple[float, int]] = []
        self.freezer: list[Clause] = []
        self.seen: set[str] = set()
        # Processed unit atoms, for forward subsumption. A ground unit
        # subsumes exactly the clauses containing it literally, so those
        # live in a hash set; units with variables are kept as one-way
        # match patterns keyed by (predicate, polarity), renamed far
        # apart so matching against any candidate literal is safe.
        self.unit_ground: set[tuple[bool, object]] = set()
        self.unit_open: dict[tuple, list] = {}
        self.pred_index: dict[tuple, list[tuple[int, int]]] = {}
        self.turn = 0
        self.degraded = False
        self.stats: dict = {
            "processed": 0,
            "generated": 0,
            "frozen": 0,
            "revived": 0,
            "fast_rejected": 0,
            "server_batches": 0,
            "server_failures": 0,
            "discarded_dup": 0,
            "discarded_taut": 0,
            "discarded_subsumed": 0,
            "parental_pairs_scored": 0,
            "turns": 0,
            "degraded": False,
        }

    def new_record(self, clause: Clause) -> None:
        clause.id = len(self.records)
        rec = _Record(clause.id, clause.rule, clause.parents, clause.text)
        self.records.append(rec)
        self.record_of[clause.id] = rec

    def enqueue(self, clause: Clause, learned_key: float) -> None:
        self.live[clause.id] = clause
        heapq.heappush(self.baseline_heap, (float(symbol_weight(clause)), clause.id))
        heapq.heappush(self.learned_heap, (learned_key, clause.id))

    def pop(self, heap: list[tuple[float, int]]) -> Optional[Clause]:
        while heap:
            _, cid = heapq.heappop(heap)
            clause = self.live.pop(cid, None)
            if clause is not None:
                return clause
        return None

    def trace(self, problem: str) -> DerivationTrace:
        return DerivationTrace(
            [
                TraceRecord(r.id, r.rule, r.parents, r.processed, r.in_proof, r.text)
                for r in self.records
            ],
            problem,
        )


def _load(model: "TreeModel | str | None") -> Optional[TreeModel]:
    if isinstance(model, str):
        return load_model_file(model)
    return model


def _validate(config: GuidanceConfig, fast, parental) -> None:
    if config.mode in (Mode.LOCAL_MODEL, Mode.TWO_PHASE, Mode.THREE_PHASE) and fast is None:
        raise ValueError(f"{config.mode.value} mode needs a fast (local) model")
    if config.mode in SERVER_MODES and config.server is None:
        raise ValueError(f"{config.mode.value} mode needs a server address")
    if config.mode in PARENTAL_MODES and parental is None:
        raise ValueError(f"{config.mode.value} mode needs a parental model")
    if config.query_limit < 1 or config.context_limit < 0:
        raise ValueError("query_limit must be >= 1 and context_limit >= 0")


def score_with_server(
    client: ScoreClient,
    vectors: Sequence[SparseVector],
    query_limit: int,
    context: Sequence[int],
    stats: dict,
) -> list[float]:
    """Score vectors through the server in at most query_limit sized
    requests. Raises ServerUnavailable on transport failure."""
    scores: list[float] = []
    for start in range(0, len(vectors), query_limit):
        batch = vectors[start : start + query_limit]
        scores.extend(client.evaluate(batch, context))
        stats["server_batches"] += 1
    return scores


def parental_partition(
    children: Sequence[Clause],
    model: TreeModel,
    threshold: float,
    featurizer: Featurizer,
    pair_mode: PairMode,
    parent_of: Callable[[int], Clause],
    stats: dict,
) -> tuple[list[Clause], list[Clause]]:
    """Split resolution children into (kept, frozen) by parent-pair score.

    Only resolvents are judged: factors and inputs pass through, and a
    pair producing several children gets one score (cached per call).
    Children score strictly below the threshold freeze.
    """
    kept: list[Clause] = []
    frozen: list[Clause] = []
    cache: dict[tuple[int, int], float] = {}
    for child in children:
        if child.rule is not Rule.RESOLUTION:
            kept.append(child)
            continue
        key = (child.parents[0], child.parents[1])
        score = cache.get(key)
        if score is None:
            vec = featurizer.pair_vector(parent_of(key[0]), parent_of(key[1]), pair_mode)
            score = model.score(vec)
            cache[key] = score
            stats["parental_pairs_scored"] += 1
        if score < threshold:
            frozen.append(child)
        else:
            kept.append(child)
    return kept, frozen


class _Scorer:
    """Assigns queue weights to new clauses according to the mode.

    Weights order the learned queue ascending, so model scores enter as
    their negation; penalized clauses get a large positive weight that
    keeps them selectable but last.
    """

    def __init__(self, config: GuidanceConfig, featurizer: Featurizer, state: _State):
        self.config = config
        self.featurizer = featurizer
        self.state = state
        self.fast = _load(config.fast_model)
        self.parental = _load(config.parental_model)
        _validate(config, self.fast, self.parental)
        self.client: Optional[ScoreClient] = None
        if config.mode in SERVER_MODES:
            self.client = ScoreClient(config.server)

    def close(self) -> None:
        if self.client is not None:
            self.client.close()

    def _context(self) -> list[int]:
        return self.state.processed_ids[-self.config.context_limit :]

    def weights(self, clauses: Sequence[Clause]) -> list[float]:
        mode = self.config.mode
        if mode is Mode.BASELINE:
            return [float(symbol_weight(c)) for c in clauses]
        if mode is Mode.PARENTAL and self.fast is None:
            # Parental filtering without a clause model: selection stays
            # baseline, only the freezer distinguishes the run.
            return [float(symbol_weight(c)) for c in clauses]
        vectors = [self.featurizer.clause_vector(c) for c in clauses]
        if mode in (Mode.LOCAL_MODEL, Mode.PARENTAL) or (
            self.state.degraded and mode is Mode.SERVER_MODEL
        ):
            if self.fast is None:
                # degraded server mode with no local fallback model
                return [float(symbol_weight(c)) for c in clauses]
            return [-self.fast.score(v) for v in vectors]
        if mode is Mode.SERVER_MODEL:
            try:
                scores = score_with_server(
                    self.client, vectors, self.config.query_limit,
                    self._context(), self.state.stats,
                )
                return [-s for s in scores]
            except (ServerUnavailable, ServerError):
                self._degrade()
                if self.fast is not None:
                    return [-self.fast.score(v) for v in vectors]
                return [float(symbol_weight(c)) for c in clauses]
        # TWO_PHASE and THREE_PHASE: fast prefilter, remote rescoring.
        assert self.fast is not None
        fast_scores = [self.fast.score(v) for v in vectors]
        weights = [0.0] * len(clauses)
        send: list[int] = []
        for k, score in enumerate(fast_scores):
            if score <= self.config.two_phase_threshold:
                weights[k] = self.config.penalty_weight
                self.state.stats["fast_rejected"] += 1
            else:
                send.append(k)
        if send and not self.state.degraded:
            try:
                scores = score_with_server(
                    self.client, [vectors[k] for k in send],
                    self.config.query_limit, self._context(), self.state.stats,
                )
                for k, score in zip(send, scores):
                    weights[k] = -score
                return weights
            except (ServerUnavailable, ServerError):
                self._degrade()
        for k in send:
            weights[k] = -fast_scores[k]
        return weights

    def _degrade(self) -> None:
        self.state.degraded = True
        self.state.stats["degraded"] = True
        self.state.stats["server_failures"] += 1


def _select(state: _State, config: GuidanceConfig) -> Optional[Clause]:
    guided = config.mode is not Mode.BASELINE and not (
        config.mode is Mode.SERVER_MODEL
        and state.degraded
        and config.fast_model is None
    )
    if config.coop and guided:
        prefer_learned = state.turn % 2 == 0
    else:
        prefer_learned = guided
    state.turn += 1
    state.stats["turns"] += 1
    first = state.learned_heap if prefer_learned else state.baseline_heap
    second = state.baseline_heap if prefer_learned else state.learned_heap
    clause = state.pop(first)
    if clause is None:
        clause = state.pop(second)
    return clause


def solve(
    problem: Problem,
    config: GuidanceConfig = GuidanceConfig(),
    limits: Limits = Limits(),
) -> SolveResult:
    """Run the saturation loop on a problem until refutation, saturation,
    or a resource limit. The returned trace records every clause the run
    created, in creation order, including filtered and discarded ones."""
    t0 = time.monotonic()
    state = _State()
    featurizer = Featurizer(config.features)
    scorer = _Scorer(config, featurizer, state)
    try:
        return _run(problem, config, limits, state, scorer, t0)
    finally:
        scorer.close()
        state.stats["wall_time"] = time.monotonic() - t0


def _run(
    problem: Problem,
    config: GuidanceConfig,
    limits: Limits,
    state: _State,
    scorer: _Scorer,
    t0: float,
) -> SolveResult:
    parental_on = config.mode in PARENTAL_MODES

    def finish(status: Status) -> SolveResult:
        trace = state.trace(problem.name)
        proof = None
        if status is Status.UNSAT:
            trace = mark_proof(trace)
            proof = extract_proof(trace)
        state.stats["processed"] = len(state.processed_ids)
        return SolveResult(status, proof, trace, state.stats, list(state.processed_ids))

    def admit(clause: Clause) -> Optional[Clause]:
        """Forward simplification; returns the clause if it should be
        enqueued, None if discarded. Never sees the empty clause."""
        if clause.text in state.seen:
            state.stats["discarded_dup"] += 1
            return None
        state.seen.add(clause.text)
        if is_tautology(clause):
            state.stats["discarded_taut"] += 1
            return None
        for lit in clause.literals:
            if (lit.positive, lit.atom) in state.unit_ground:
                state.stats["discarded_subsumed"] += 1
                return None
            pats = state.unit_open.get((lit.atom.sym, lit.positive))
            if pats and any(match_atom(p, lit.atom) for p in pats):
                state.stats["discarded_subsumed"] += 1
                return None
        return clause

    def enqueue_scored(clauses: list[Clause]) -> None:
        if not clauses:
            return
        for clause, weight in zip(clauses, scorer.weights(clauses)):
            clause.weight = weight
            state.enqueue(clause, weight)

    # Inputs: record all, enqueue the survivors.
    batch: list[Clause] = []
    for original in problem.clauses:
        clause = Clause(original.literals, rule=Rule.INPUT)
        state.new_record(clause)
        if clause.is_empty():
            state.record_of[clause.id].processed = True
            return finish(Status.UNSAT)
        admitted = admit(clause)
        if admitted is not None:
            batch.append(admitted)
    enqueue_scored(batch)

    while True:
        if limits.max_seconds is not None and time.monotonic() - t0 > limits.max_seconds:
            return finish(Status.RESOURCE_OUT)
        if limits.max_generated is not None and state.stats["generated"] >= limits.max_generated:
            return finish(Status.RESOURCE_OUT)
        if not state.live:
            if state.freezer:
                revived = state.freezer
                state.freezer = []
                for clause in revived:
                    clause.frozen = False
                state.stats["revived"] += len(revived)
                enqueue_scored(revived)
                continue
            return finish(Status.SATURATED)
        if limits.max_processed is not None and len(state.processed_ids) >= limits.max_processed:
            return finish(Status.RESOURCE_OUT)

        given = _select(state, config)
        assert given is not None
        rec = state.record_of[given.id]
        rec.processed = True
        state.processed[given.id] = given
        state.processed_ids.append(given.id)
        if len(given) == 1:
            unit = given.literals[0]
            if given.max_var < 0:
                state.unit_ground.add((unit.positive, unit.atom))
            else:
                pat = rename_literals(given.literals, _UNIT_PATTERN_OFFSET)[0]
                state.unit_open.setdefault((unit.atom.sym, unit.positive), []).append(
                    pat.atom
                )
        for i, lit in enumerate(given.literals):
            state.pred_index.setdefault((lit.atom.sym, lit.positive), []).append(
                (given.id, i)
            )

        children: list[Clause] = []
        empty_child: Optional[Clause] = None
        for child in factor(given):
            state.new_record(child)
            state.stats["generated"] += 1
            children.append(child)
        for i, lit in enumerate(given.literals):
            partners = state.pred_index.get((lit.atom.sym, not lit.positive), ())
            for cid, j in partners:
                if cid == given.id and j <= i:
                    continue
                child = resolve(given, i, state.processed[cid], j)
                if child is None:
                    continue
                state.new_record(child)
                state.stats["generated"] += 1
                if child.is_empty():
                    empty_child = child
                    break
                children.append(child)
            if empty_child is not None:
                break
        if empty_child is not None:
            # the contradiction counts as processed, like an input $false,
            # so proof membership implies processed in every trace
            state.record_of[empty_child.id].processed = True
            return finish(Status.UNSAT)

        # Forward simplification must run before the pair filter: revival
        # skips admit(), so the freezer may only ever hold clauses that
        # passed it, or duplicate texts would be processed again after
        # every thaw and the closure would be re-derived without bound.
        children = [c for c in children if admit(c) is not None]
        if parental_on and children:
            children, frozen = parental_partition(
                children, scorer.parental, config.parental_threshold,
                scorer.featurizer, config.pair_mode,
                lambda cid: state.processed[cid], state.stats,
            )
            for clause in frozen:
                clause.frozen = True
                state.freezer.append(clause)
            state.stats["frozen"] += len(frozen)

        enqueue_scored(children)


def prove_file(
    path: str,
    config: GuidanceConfig = GuidanceConfig(),
    limits: Limits = Limits(),
) -> SolveResult:
    from .problems import load_problem

    return solve(load_problem(path), config, limits)
