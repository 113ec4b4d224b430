"""Propositional (un)satisfiability for ground clause sets.

This is the independent oracle the tests and the corpus generator use
to certify that ground problems are unsatisfiable. It shares nothing
with the saturation loop: clauses become integer literals and a small
DPLL with unit propagation and pure-literal elimination decides them.
"""

from __future__ import annotations

from itertools import product
from typing import Iterable, Optional

from .problems import Problem
from .terms import _term_text, term_var_ids


def is_ground(problem: Problem) -> bool:
    return all(
        next(term_var_ids(lit.atom), None) is None
        for clause in problem.clauses
        for lit in clause.literals
    )


def int_clauses(problem: Problem) -> tuple[list[frozenset[int]], dict[str, int]]:
    """Encode a ground problem as sets of nonzero ints (sign = polarity).

    Atom numbering follows first appearance, starting at 1.
    """
    if not is_ground(problem):
        raise ValueError("problem is not ground")
    atoms: dict[str, int] = {}
    clauses: list[frozenset[int]] = []
    for clause in problem.clauses:
        lits = set()
        for lit in clause.literals:
            text = _term_text(lit.atom, {})
            idx = atoms.setdefault(text, len(atoms) + 1)
            lits.add(idx if lit.positive else -idx)
        clauses.append(frozenset(lits))
    return clauses, atoms


def _propagate(clauses: list[frozenset[int]], assigned: dict[int, bool]) -> Optional[list[frozenset[int]]]:
    """Apply an assignment and run unit propagation; None on conflict."""
    work = clauses
    changed = True
    while changed:
        changed = False
        next_work: list[frozenset[int]] = []
        for clause in work:
            reduced = []
            satisfied = False
            for lit in clause:
                val = assigned.get(abs(lit))
                if val is None:
                    reduced.append(lit)
                elif (lit > 0) == val:
                    satisfied = True
                    break
            if satisfied:
                continue
            if not reduced:
                return None
            if len(reduced) == 1:
                lit = reduced[0]
                atom = abs(lit)
                want = lit > 0
                if assigned.get(atom, want) != want:
                    return None
                if atom not in assigned:
                    assigned[atom] = want
                    changed = True
            next_work.append(frozenset(reduced))
        work = next_work
    return work


def dpll_satisfiable(clauses: Iterable[frozenset[int]]) -> bool:
    def go(work: list[frozenset[int]], assigned: dict[int, bool]) -> bool:
        reduced = _propagate(work, assigned)
        if reduced is None:
            return False
        if not reduced:
            return True
        # Pure literal elimination.
        polarity: dict[int, int] = {}
        for clause in reduced:
            for lit in clause:
                polarity[abs(lit)] = polarity.get(abs(lit), 0) | (1 if lit > 0 else 2)
        for atom, seen in sorted(polarity.items()):
            if seen != 3:
                trial = dict(assigned)
                trial[atom] = seen == 1
                return go(reduced, trial)
        atom = min(abs(lit) for clause in reduced for lit in clause)
        for value in (True, False):
            trial = dict(assigned)
            trial[atom] = value
            if go(reduced, trial):
                return True
        return False

    return go(list(clauses), {})


def dpll_unsat(clauses: Iterable[frozenset[int]]) -> bool:
    return not dpll_satisfiable(clauses)


def truth_table_unsat(clauses: list[frozenset[int]], n_atoms: int) -> bool:
    """Brute force over all assignments; only sane for small n_atoms."""
    for values in product((False, True), repeat=n_atoms):
        ok = True
        for clause in clauses:
            if not any((lit > 0) == values[abs(lit) - 1] for lit in clause):
                ok = False
                break
        if ok:
            return False
    return True


def problem_unsat(problem: Problem) -> bool:
    clauses, _ = int_clauses(problem)
    return dpll_unsat(clauses)
