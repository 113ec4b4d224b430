"""Saturation loop: statuses, guidance modes, freezer, degradation."""

import heapq
import math
from functools import lru_cache

import numpy as np
import pytest

from satloop import prover
from satloop.features import FeatureConfig, Featurizer, PairMode
from satloop.gbdt import LabeledVector, Tree, TreeModel, TreeParams, train
from satloop.problems import check_proof, first_failed_step, parse_problem, write_trace
from satloop.prover import (
    DEFAULT_PENALTY_WEIGHT,
    GuidanceConfig,
    Limits,
    Mode,
    Status,
    prove_file,
    score_with_server,
    solve,
)
from satloop.server import EvalServer, ScoreClient

from util import C


def chain_text(n: int, branch: bool = False) -> str:
    goal = "f(" * n + "c" + ")" * n
    lines = [
        "cnf(start, axiom, p(c)).",
        "cnf(step, axiom, ~p(X) | p(f(X))).",
    ]
    if branch:
        lines.append("cnf(side, axiom, ~p(X) | q(g(X))).")
    lines.append(f"cnf(goal, negated_conjecture, ~p({goal})).")
    return "\n".join(lines)


def ground_chain_text(n: int) -> str:
    lines = [f"cnf(a0, axiom, q0)."]
    for i in range(n):
        lines.append(f"cnf(r{i}, axiom, ~q{i} | q{i + 1}).")
    lines.append(f"cnf(goal, negated_conjecture, ~q{n}).")
    return "\n".join(lines)


def ground_oracle(clauses: list[frozenset]) -> tuple[str, int]:
    """Independent given-clause saturation over signed-integer ground
    clauses: same weight selection, dedup, tautology and unit-subsumption
    rules as the prover, none of its machinery."""
    seen: set[frozenset] = set()
    live: dict[int, frozenset] = {}
    processed: list[tuple[int, frozenset]] = []
    units: list[frozenset] = []
    next_id = 0

    def admit(c: frozenset) -> bool:
        nonlocal next_id
        next_id += 1
        if c in seen:
            return False
        seen.add(c)
        if any(-l in c for l in c):
            return False
        if any(next(iter(u)) in c for u in units):
            return False
        return True

    for c in clauses:
        if admit(c):
            live[next_id - 1] = c
    while live:
        cid = min(live, key=lambda i: (2 * len(live[i]), i))
        given = live.pop(cid)
        processed.append((cid, given))
        if len(given) == 1:
            units.append(given)
        for lit in sorted(given, key=abs):
            for _, other in processed:
                if -lit in other:
                    child = (given - {lit}) | (other - {-lit})
                    if not child:
                        return "Unsat", len(processed)
                    if admit(frozenset(child)):
                        live[next_id - 1] = frozenset(child)
    return "Saturated", len(processed)


_FZ = Featurizer(FeatureConfig())


@lru_cache(maxsize=1)
def _pool():
    texts = [
        "p(c)", "p(f(c))", "p(f(f(c)))", "q(g(c))", "q(g(f(c)))",
        "~p(X)|p(f(X))", "~p(X)|q(g(X))", "~p(f(f(f(f(c)))))",
        "p(X)|q(g(X))", "~q(X)",
    ]
    return [C(t) for t in texts]


@lru_cache(maxsize=1)
def fast_model() -> TreeModel:
    # label the g-junk negative so guided runs steer toward chain clauses
    data = [
        LabeledVector(0 if "g(" in c.text else 1, _FZ.clause_vector(c))
        for c in _pool()
    ]
    return train(data, TreeParams(trees=6, max_leaves=6, learning_rate=0.3),
                 dimension=_FZ.config.dimension)


@lru_cache(maxsize=1)
def parental_model() -> TreeModel:
    pool = _pool()
    data = []
    for i, a in enumerate(pool):
        for b in pool[:4]:
            vec = _FZ.pair_vector(a, b, PairMode.CAT)
            data.append(LabeledVector(i % 2, vec))
    return train(data, TreeParams(trees=4, max_leaves=6),
                 dimension=2 * _FZ.config.dimension)


@pytest.fixture(scope="module")
def server():
    srv = EvalServer(fast_model(), workers=4, batch_size=8, wait=0.005)
    srv.start()
    yield srv
    srv.shutdown()


def _texts(result, ids):
    by_id = {r.id: r.text for r in result.trace.records}
    return [by_id[i] for i in ids]


def test_single_resolution_refutation():
    result = solve(parse_problem("cnf(a, axiom, p(a)).\ncnf(b, axiom, ~p(X)).", "t"))
    assert result.status is Status.UNSAT
    assert result.stats["generated"] == 1
    assert len(result.trace.records) == 3
    assert result.proof is not None and len(result.proof.records) == 3


def test_single_clause_saturates():
    result = solve(parse_problem("cnf(a, axiom, p(a)).", "t"))
    assert result.status is Status.SATURATED
    assert result.proof is None
    assert result.stats["processed"] == 1


def test_empty_input_clause_is_immediate_unsat():
    prob = parse_problem("cnf(a, axiom, p(c)).\ncnf(bot, axiom, $false).", "t")
    result = solve(prob)
    assert result.status is Status.UNSAT
    assert result.stats["generated"] == 0
    assert check_proof(result.proof, prob)


def test_chain12_processed_count_matches_ground_oracle():
    n = 12
    prob = parse_problem(ground_chain_text(n), "chain_12")
    result = solve(prob)
    assert result.status is Status.UNSAT
    assert check_proof(result.proof, prob)

    atoms = {f"q{i}": i + 1 for i in range(n + 1)}
    ground = [frozenset({atoms["q0"]})]
    ground += [frozenset({-atoms[f"q{i}"], atoms[f"q{i + 1}"]}) for i in range(n)]
    ground += [frozenset({-atoms[f"q{n}"]})]
    status, count = ground_oracle(ground)
    assert status == "Unsat"
    # 2n + 2: both unit endpoints, every rule, every derived unit, and the
    # final given that meets the goal
    assert result.stats["processed"] == count == 26


def test_functional_chain_all_depths():
    for n in (1, 2, 5):
        prob = parse_problem(chain_text(n), f"chain_f{n}")
        result = solve(prob)
        assert result.status is Status.UNSAT
        assert first_failed_step(result.proof, prob) is None


def test_resource_limits():
    prob = parse_problem(chain_text(8), "chain_f8")
    assert solve(prob, limits=Limits(max_processed=2)).status is Status.RESOURCE_OUT
    assert solve(prob, limits=Limits(max_generated=1)).status is Status.RESOURCE_OUT
    assert solve(prob, limits=Limits(max_seconds=0.0)).status is Status.RESOURCE_OUT


def test_forward_simplification_stats_and_trace():
    text = """
    cnf(a, axiom, p(c)).
    cnf(b, axiom, p(c)).
    cnf(t, axiom, q(c) | ~q(c)).
    cnf(u, axiom, r(X)).
    cnf(v, axiom, q(c)).
    cnf(w, axiom, ~q(X) | r(f(X))).
    """
    result = solve(parse_problem(text, "simp"))
    assert result.status is Status.SATURATED
    assert result.stats["discarded_dup"] == 1
    assert result.stats["discarded_taut"] == 1
    assert result.stats["discarded_subsumed"] == 1
    # discarded clauses still appear in the trace, unprocessed
    texts = [r.text for r in result.trace.records]
    assert texts.count("p(c)") == 2
    assert "r(f(c))" in texts
    rec = next(r for r in result.trace.records if r.text == "r(f(c))")
    assert not rec.processed


def test_mode_configuration_is_validated():
    prob = parse_problem(chain_text(1), "c")
    with pytest.raises(ValueError):
        solve(prob, GuidanceConfig(mode=Mode.LOCAL_MODEL))
    with pytest.raises(ValueError):
        solve(prob, GuidanceConfig(mode=Mode.SERVER_MODEL))
    with pytest.raises(ValueError):
        solve(prob, GuidanceConfig(mode=Mode.PARENTAL))
    with pytest.raises(ValueError):
        solve(prob, GuidanceConfig(mode=Mode.TWO_PHASE, fast_model=fast_model(),
                                   server="x:1", query_limit=0))


def _count_stump() -> TreeModel:
    """Score grows with the symbol-occurrence count slot."""
    base = _FZ.config.base
    tree = Tree(
        feature=np.array([base + 3, -1, base + 3, -1, -1], dtype=np.int64),
        threshold=np.array([2.5, 0.0, 4.5, 0.0, 0.0]),
        left=np.array([1, -1, 3, -1, -1], dtype=np.int32),
        right=np.array([2, -1, 4, -1, -1], dtype=np.int32),
        value=np.array([0.0, -2.0, 0.0, 0.0, 2.0]),
    )
    return TreeModel(_FZ.config.dimension, 0.0, [tree])


_INERT = """
cnf(light, axiom, p(c)).
cnf(mid, axiom, q(c, d)).
cnf(heavy, axiom, r(f(c), g(d, d)).
"""


def test_selection_orders_baseline_local_coop():
    text = _INERT.replace("g(d, d)).", "g(d, d))).")
    prob = parse_problem(text, "inert")
    stump = _count_stump()

    base_run = solve(prob)
    assert _texts(base_run, base_run.processed_ids) == [
        "p(c)", "q(c,d)", "r(f(c),g(d,d))"]

    local = solve(prob, GuidanceConfig(mode=Mode.LOCAL_MODEL, fast_model=stump))
    assert _texts(local, local.processed_ids) == [
        "r(f(c),g(d,d))", "q(c,d)", "p(c)"]

    coop = solve(prob, GuidanceConfig(mode=Mode.LOCAL_MODEL, fast_model=stump,
                                      coop=True))
    assert _texts(coop, coop.processed_ids) == [
        "r(f(c),g(d,d))", "p(c)", "q(c,d)"]
    assert coop.stats["turns"] == 3


def test_select_falls_back_when_preferred_queue_empty():
    state = prover._State()
    clause = C("p(c)")
    state.new_record(clause)
    state.live[clause.id] = clause
    heapq.heappush(state.baseline_heap, (1.0, clause.id))
    config = GuidanceConfig(mode=Mode.LOCAL_MODEL, coop=True)
    picked = prover._select(state, config)
    assert picked is clause
    assert state.turn == 1 and state.stats["turns"] == 1


def _depth_stump() -> TreeModel:
    """Stump on the depth slot: score 0.9 when nesting >= 3, else 0.05."""
    base = _FZ.config.base
    tree = Tree(
        feature=np.array([base + 5, -1, -1], dtype=np.int64),
        threshold=np.array([3.0, 0.0, 0.0]),
        left=np.array([1, -1, -1], dtype=np.int32),
        right=np.array([2, -1, -1], dtype=np.int32),
        value=np.array([0.0, math.log(1 / 19), math.log(9.0)]),
    )
    return TreeModel(_FZ.config.dimension, 0.0, [tree])


def test_two_phase_penalizes_without_server_calls(server):
    stump = _depth_stump()
    deep = C("p(f(f(f(a))))")
    flat = C("p(a)")
    assert stump.score(_FZ.clause_vector(deep)) == pytest.approx(0.9)
    assert stump.score(_FZ.clause_vector(flat)) == pytest.approx(0.05)

    state = prover._State()
    config = GuidanceConfig(mode=Mode.TWO_PHASE, fast_model=stump,
                            server=server.address, two_phase_threshold=0.1)
    scorer = prover._Scorer(config, _FZ, state)
    try:
        weights = scorer.weights([deep, flat])
    finally:
        scorer.close()
    assert weights[1] == DEFAULT_PENALTY_WEIGHT
    assert weights[0] == -fast_model().score(_FZ.clause_vector(deep))
    assert state.stats["fast_rejected"] == 1
    assert state.stats["server_batches"] == 1


def test_score_with_server_obeys_query_limit(server):
    with ScoreClient(server.address) as client:
        vectors = [_FZ.clause_vector(c) for c in _pool()] * 100
        stats = {"server_batches": 0}
        scores = score_with_server(client, vectors, 256, [], stats)
    assert len(scores) == 1000
    assert stats["server_batches"] == 4  # ceil(1000 / 256)


def test_parental_threshold_zero_matches_local_model():
    prob = parse_problem(chain_text(4, branch=True), "branchy")
    limits = Limits(max_processed=400, max_generated=4000)
    local = solve(prob, GuidanceConfig(mode=Mode.LOCAL_MODEL,
                                       fast_model=fast_model()), limits)
    par = solve(prob, GuidanceConfig(mode=Mode.PARENTAL, fast_model=fast_model(),
                                     parental_model=parental_model(),
                                     parental_threshold=0.0), limits)
    assert local.status is Status.UNSAT
    assert par.stats["frozen"] == 0
    assert write_trace(par.trace) == write_trace(local.trace)
    assert par.processed_ids == local.processed_ids


def test_two_phase_threshold_zero_matches_server_model(server):
    prob = parse_problem(chain_text(4, branch=True), "branchy")
    limits = Limits(max_processed=400, max_generated=4000)
    remote = solve(prob, GuidanceConfig(mode=Mode.SERVER_MODEL,
                                        server=server.address), limits)
    two = solve(prob, GuidanceConfig(mode=Mode.TWO_PHASE, fast_model=fast_model(),
                                     server=server.address,
                                     two_phase_threshold=0.0), limits)
    assert remote.status is Status.UNSAT
    assert two.stats["fast_rejected"] == 0
    assert two.processed_ids == remote.processed_ids
    assert write_trace(two.trace) == write_trace(remote.trace)


def test_parental_filter_freezes_and_revives_to_saturation():
    prob = parse_problem("cnf(a, axiom, p(c)).\ncnf(b, axiom, ~p(X) | q(X)).", "s")
    result = solve(prob, GuidanceConfig(mode=Mode.PARENTAL,
                                        parental_model=parental_model(),
                                        parental_threshold=1.0))
    assert result.status is Status.SATURATED
    assert result.stats["frozen"] == 1
    assert result.stats["revived"] == 1
    assert result.stats["processed"] == 3


def test_refutation_through_the_freezer():
    prob = parse_problem(chain_text(2), "chain_f2")
    result = solve(prob, GuidanceConfig(mode=Mode.PARENTAL,
                                        parental_model=parental_model(),
                                        parental_threshold=1.0))
    assert result.status is Status.UNSAT
    assert result.stats["frozen"] > 0
    assert result.stats["revived"] > 0
    assert check_proof(result.proof, prob)


def test_parental_pair_cache_scores_each_pair_once():
    prob = parse_problem(chain_text(3, branch=True), "branchy3")
    result = solve(prob, GuidanceConfig(mode=Mode.PARENTAL, fast_model=fast_model(),
                                        parental_model=parental_model(),
                                        parental_threshold=0.05))
    assert result.status is Status.UNSAT
    # every scored pair produced at least one child; a cache miss per child
    # would make this strictly larger
    resolution_pairs = {
        r.parents for r in result.trace.records if len(r.parents) == 2
    }
    assert result.stats["parental_pairs_scored"] <= len(resolution_pairs)


def test_penalized_clauses_remain_selectable(server):
    prob = parse_problem(chain_text(3), "chain_f3")
    result = solve(prob, GuidanceConfig(mode=Mode.TWO_PHASE, fast_model=fast_model(),
                                        server=server.address,
                                        two_phase_threshold=0.9999999))
    assert result.status is Status.UNSAT
    assert result.stats["fast_rejected"] > 0
    assert check_proof(result.proof, prob)


def test_three_phase_runs_whole_pipeline(server):
    prob = parse_problem(chain_text(4, branch=True), "branchy")
    result = solve(
        prob,
        GuidanceConfig(mode=Mode.THREE_PHASE, fast_model=fast_model(),
                       parental_model=parental_model(), server=server.address,
                       two_phase_threshold=0.05, parental_threshold=0.02),
        Limits(max_processed=400, max_generated=4000),
    )
    assert result.status is Status.UNSAT
    assert result.stats["parental_pairs_scored"] > 0
    assert check_proof(result.proof, prob)


def _dead_address():
    srv = EvalServer(fast_model(), workers=1, batch_size=2, wait=0.005)
    srv.start()
    addr = srv.address
    srv.shutdown()
    return addr


def test_server_mode_degrades_to_fast_model():
    prob = parse_problem(chain_text(3), "chain_f3")
    result = solve(prob, GuidanceConfig(mode=Mode.SERVER_MODEL,
                                        fast_model=fast_model(),
                                        server=_dead_address()))
    assert result.status is Status.UNSAT
    assert result.stats["degraded"] is True
    assert result.stats["server_failures"] == 1
    assert result.stats["server_batches"] == 0


def test_server_mode_degrades_to_baseline_without_fast_model():
    prob = parse_problem(chain_text(3), "chain_f3")
    result = solve(prob, GuidanceConfig(mode=Mode.SERVER_MODEL,
                                        server=_dead_address()))
    baseline = solve(prob)
    assert result.status is Status.UNSAT
    assert result.stats["degraded"] is True
    assert _texts(result, result.processed_ids) == _texts(
        baseline, baseline.processed_ids
    )


def test_two_phase_degrades_to_fast_scores():
    prob = parse_problem(chain_text(3), "chain_f3")
    dead = _dead_address()
    result = solve(prob, GuidanceConfig(mode=Mode.TWO_PHASE, fast_model=fast_model(),
                                        server=dead, two_phase_threshold=0.0))
    local = solve(prob, GuidanceConfig(mode=Mode.LOCAL_MODEL, fast_model=fast_model()))
    assert result.status is Status.UNSAT
    assert result.stats["degraded"] is True
    assert result.stats["server_failures"] == 1
    # after degrading, surviving clauses ride the fast scores
    assert _texts(result, result.processed_ids) == _texts(
        local, local.processed_ids
    )


def test_rerun_is_deterministic():
    prob = parse_problem(chain_text(4, branch=True), "branchy")
    config = GuidanceConfig(mode=Mode.LOCAL_MODEL, fast_model=fast_model())
    a = solve(prob, config)
    b = solve(prob, config)
    assert write_trace(a.trace) == write_trace(b.trace)
    assert a.processed_ids == b.processed_ids
    drop = lambda s: {k: v for k, v in s.items() if k != "wall_time"}
    assert drop(a.stats) == drop(b.stats)


def test_prove_file(tmp_path):
    path = tmp_path / "chain.p"
    path.write_text(chain_text(2))
    result = prove_file(str(path))
    assert result.status is Status.UNSAT
    assert result.trace.problem == "chain"
