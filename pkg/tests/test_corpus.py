"""Problem generator: determinism, parseability, and refutability."""

from __future__ import annotations

import os
import random

import pytest

from satloop.corpus import (
    FAMILIES,
    gen_ground,
    generate_corpus,
    generate_problem,
)
from satloop.groundsat import int_clauses, is_ground, problem_unsat, truth_table_unsat
from satloop.problems import parse_problem
from satloop.prover import GuidanceConfig, Limits, Mode, Status, solve


def test_generate_problem_is_deterministic():
    for family in FAMILIES:
        a = generate_problem(family, 3, seed=11)
        b = generate_problem(family, 3, seed=11)
        assert a == b


def test_generate_problem_varies_with_index_and_seed():
    texts = {
        generate_problem("chain", index, seed)[1]
        for index in range(4)
        for seed in (0, 1)
    }
    assert len(texts) > 1


def test_generate_problem_names_carry_family_and_index():
    name, _ = generate_problem("equiv", 7, seed=0)
    assert name == "equiv_0007"


def test_mix_rotates_families_by_index():
    names = [generate_problem("mix", i, seed=0)[0] for i in range(8)]
    assert names == [
        "chain_0000", "equiv_0001", "grid_0002", "ground_0003",
        "chain_0004", "equiv_0005", "grid_0006", "ground_0007",
    ]


def test_unknown_family_rejected():
    with pytest.raises(ValueError):
        generate_problem("spiral", 0, seed=0)


@pytest.mark.parametrize("family", FAMILIES)
def test_all_families_parse(family):
    for index in range(6):
        name, text = generate_problem(family, index, seed=5)
        problem = parse_problem(text, name)
        assert problem.clauses
        if family != "ground":
            assert "negated_conjecture" in problem.roles


def test_ground_family_is_ground_and_unsat():
    for index in range(10):
        _, text = generate_problem("ground", index, seed=3)
        problem = parse_problem(text)
        assert is_ground(problem)
        assert problem_unsat(problem)


def test_ground_family_unsat_by_truth_table_when_small():
    rng = random.Random("truth-table-check")
    for _ in range(3):
        problem = parse_problem(gen_ground(rng))
        clauses, atoms = int_clauses(problem)
        if len(atoms) <= 10:
            assert truth_table_unsat(clauses, len(atoms))


@pytest.mark.parametrize("family", ("chain", "equiv", "grid", "ground"))
def test_each_family_has_refutable_instances(family):
    # Every family must yield problems the baseline prover can close out;
    # instances vary in difficulty, so two solves within budget suffice.
    solved = 0
    for index in range(8):
        name, text = generate_problem(family, index, seed=7)
        result = solve(
            parse_problem(text, name),
            GuidanceConfig(mode=Mode.BASELINE),
            Limits(max_processed=300, max_generated=20000),
        )
        if result.status is Status.UNSAT:
            solved += 1
    assert solved >= 2


def test_generate_corpus_writes_expected_files(tmp_path):
    paths = generate_corpus(str(tmp_path), count=8, family="mix", seed=2)
    assert len(paths) == 8
    assert [os.path.basename(p) for p in paths[:4]] == [
        "chain_0000.p", "equiv_0001.p", "grid_0002.p", "ground_0003.p",
    ]
    for path in paths:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
        name = os.path.splitext(os.path.basename(path))[0]
        family = name.rsplit("_", 1)[0]
        index = int(name.rsplit("_", 1)[1])
        assert text == generate_problem(family, index, seed=2)[1]


def test_generate_corpus_is_reproducible(tmp_path):
    first = generate_corpus(str(tmp_path / "a"), count=6, family="mix", seed=9)
    second = generate_corpus(str(tmp_path / "b"), count=6, family="mix", seed=9)
    for pa, pb in zip(first, second):
        with open(pa, encoding="utf-8") as fa, open(pb, encoding="utf-8") as fb:
            assert fa.read() == fb.read()
