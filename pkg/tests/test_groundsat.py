"""Ground SAT oracle: DPLL against truth tables and hand-built cases."""

from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from satloop.groundsat import (
    _propagate,
    dpll_satisfiable,
    dpll_unsat,
    int_clauses,
    is_ground,
    problem_unsat,
    truth_table_unsat,
)
from satloop.problems import parse_problem


def F(*lits: int) -> frozenset[int]:
    return frozenset(lits)


# --- is_ground / int_clauses --------------------------------------------------


def test_is_ground_accepts_variable_free_problems():
    prob = parse_problem(
        "cnf(a, axiom, p(c) | ~q(f(c), d)).\n"
        "cnf(b, axiom, r).\n"
    )
    assert is_ground(prob)


def test_is_ground_rejects_any_variable():
    prob = parse_problem("cnf(a, axiom, p(c)).\ncnf(b, axiom, ~p(X) | p(f(X))).\n")
    assert not is_ground(prob)


def test_int_clauses_numbers_atoms_by_first_appearance():
    prob = parse_problem(
        "cnf(a, axiom, p(c) | ~q).\n"
        "cnf(b, axiom, q | ~p(c)).\n"
        "cnf(c, axiom, r | p(c)).\n"
    )
    clauses, atoms = int_clauses(prob)
    assert atoms == {"p(c)": 1, "q": 2, "r": 3}
    assert clauses == [F(1, -2), F(2, -1), F(3, 1)]


def test_int_clauses_distinguishes_atoms_by_full_term_text():
    prob = parse_problem("cnf(a, axiom, p(c) | p(d) | p(f(c))).\n")
    clauses, atoms = int_clauses(prob)
    assert len(atoms) == 3
    assert clauses == [F(1, 2, 3)]


def test_int_clauses_rejects_nonground():
    prob = parse_problem("cnf(a, axiom, p(X)).\n")
    with pytest.raises(ValueError):
        int_clauses(prob)


# --- unit propagation ---------------------------------------------------------


def test_propagate_closes_unit_chain():
    assigned: dict[int, bool] = {}
    out = _propagate([F(1), F(-1, 2), F(-2, 3)], assigned)
    assert out == []
    assert assigned == {1: True, 2: True, 3: True}


def test_propagate_conflict_on_opposite_units():
    assert _propagate([F(1), F(-1)], {}) is None


def test_propagate_conflict_via_emptied_clause():
    # Assigning 1 them 2 by units leaves (-1 | -2) empty.
    assert _propagate([F(1), F(2), F(-1, -2)], {}) is None


def test_propagate_keeps_undecided_clauses():
    assigned: dict[int, bool] = {}
    out = _propagate([F(1), F(2, 3)], assigned)
    assert out == [F(2, 3)]
    assert assigned == {1: True}


# --- DPLL on hand cases -------------------------------------------------------


def test_dpll_empty_set_is_satisfiable():
    assert dpll_satisfiable([])


def test_dpll_empty_clause_is_unsat():
    assert dpll_unsat([F()])


def test_dpll_simple_contradiction():
    assert dpll_unsat([F(1), F(-1)])


def test_dpll_requires_search_beyond_propagation():
    # No units, no pure literals: (1|2)(1|-2)(-1|2)(-1|-2).
    clauses = [F(1, 2), F(1, -2), F(-1, 2), F(-1, -2)]
    assert dpll_unsat(clauses)


def test_dpll_pure_literal_case_is_satisfiable():
    # 3 occurs only positively; setting it satisfies everything reachable.
    clauses = [F(1, 3), F(-1, 3), F(2, -2)]
    assert dpll_satisfiable(clauses)


def test_dpll_pigeonhole_two_holes_three_pigeons():
    # Atom h(p, q) = pigeon p in hole q, numbered 1..6 row-major.
    def at(p: int, q: int) -> int:
        return 2 * p + q + 1

    clauses = [F(at(p, 0), at(p, 1)) for p in range(3)]
    for q in range(2):
        for p1 in range(3):
            for p2 in range(p1 + 1, 3):
                clauses.append(F(-at(p1, q), -at(p2, q)))
    assert dpll_unsat(clauses)
    assert truth_table_unsat(clauses, 6)


# --- DPLL vs truth table ------------------------------------------------------

_N_ATOMS = 4

_lits = st.tuples(st.integers(1, _N_ATOMS), st.booleans()).map(
    lambda av: av[0] if av[1] else -av[0]
)
_clauses = st.lists(
    st.frozensets(_lits, min_size=0, max_size=3), min_size=0, max_size=8
)


@settings(max_examples=300, deadline=None)
@given(_clauses)
def test_dpll_matches_truth_table(clauses):
    assert dpll_unsat(clauses) == truth_table_unsat(list(clauses), _N_ATOMS)


# --- end-to-end on parsed problems ---------------------------------------------


def test_problem_unsat_on_parsed_ground_problem():
    prob = parse_problem(
        "cnf(a, axiom, p(c)).\n"
        "cnf(b, axiom, ~p(c) | q(c)).\n"
        "cnf(g, negated_conjecture, ~q(c)).\n"
    )
    assert problem_unsat(prob)


def test_problem_unsat_false_on_satisfiable_problem():
    prob = parse_problem("cnf(a, axiom, p(c) | q(c)).\ncnf(b, axiom, ~p(c)).\n")
    assert not problem_unsat(prob)
