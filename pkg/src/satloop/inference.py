"""Inference rules: binary resolution, factoring, and the cheap
simplification predicates (tautology, subsumption, symbol weight).

The calculus is resolution + factoring only. Equality gets no special
treatment; problems that need it must axiomatize it.
"""

from __future__ import annotations

from typing import Optional

from .terms import (
    Clause,
    Rule,
    Subst,
    Term,
    Var,
    apply_to_literal,
    rename_literals,
    renumber_vars,
    unify,
)


def resolve(c1: Clause, i: int, c2: Clause, j: int) -> Optional[Clause]:
    """Binary resolvent of c1 on literal i against c2 on literal j.

    The literals must have opposite polarity and the same predicate; c2 is
    renamed apart internally, so c1 and c2 may be the same clause object.
    Returns None when the atoms do not unify. Resolvent variables are
    fresh: numbered past anything used by either parent.
    """
    l1 = c1.literals[i]
    l2 = c2.literals[j]
    if l1.positive == l2.positive or l1.atom.sym != l2.atom.sym:
        return None
    offset = c1.max_var + 1
    other = rename_literals(c2.literals, offset)
    mgu = unify(l1.atom, other[j].atom)
    if mgu is None:
        return None
    rest = [apply_to_literal(lit, mgu) for k, lit in enumerate(c1.literals) if k != i]
    rest += [apply_to_literal(lit, mgu) for k, lit in enumerate(other) if k != j]
    other_max = c2.max_var + offset if c2.max_var >= 0 else -1
    fresh = max(c1.max_var, other_max) + 1
    lits = renumber_vars(tuple(rest), fresh)
    return Clause(lits, parents=(c1.id, c2.id), rule=Rule.RESOLUTION)


def factor(c: Clause) -> list[Clause]:
    """All proper binary factors of c, deduplicated by canonical text.

    A factor unifies two same-polarity literals and applies the unifier to
    the whole clause; the merged duplicate disappears in normalization.
    """
    out: list[Clause] = []
    seen: set[str] = set()
    fresh = c.max_var + 1
    n = len(c.literals)
    for i in range(n):
        for j in range(i + 1, n):
            li, lj = c.literals[i], c.literals[j]
            if li.positive != lj.positive or li.atom.sym != lj.atom.sym:
                continue
            mgu = unify(li.atom, lj.atom)
            if mgu is None:
                continue
            lits = tuple(apply_to_literal(lit, mgu) for lit in c.literals)
            factored = Clause(
                renumber_vars(lits, fresh), parents=(c.id,), rule=Rule.FACTORING
            )
            if len(factored) < len(c) and factored.text not in seen:
                seen.add(factored.text)
                out.append(factored)
    return out


def is_tautology(c: Clause) -> bool:
    """True when some literal occurs in both polarities."""
    positives = {lit.atom for lit in c.literals if lit.positive}
    return any(not lit.positive and lit.atom in positives for lit in c.literals)


def _match_term(pattern: Term, target: Term, subst: Subst) -> Optional[Subst]:
    # One-way matching: only pattern variables may be bound.
    if type(pattern) is Var:
        bound = subst.get(pattern.id)
        if bound is None:
            ext = dict(subst)
            ext[pattern.id] = target
            return ext
        return subst if bound == target else None
    if type(target) is Var or pattern.sym != target.sym:
        return None
    for p, t in zip(pattern.args, target.args):
        nxt = _match_term(p, t, subst)
        if nxt is None:
            return None
        subst = nxt
    return subst


def match_atom(pattern: Term, target: Term) -> bool:
    """One-way match of pattern onto target (target variables are rigid).

    The caller must hand in a pattern renamed apart from the target."""
    return _match_term(pattern, target, {}) is not None


def subsumes(c1: Clause, c2: Clause) -> bool:
    """True when some substitution maps c1's literals to a sub-multiset of c2's.

    Each literal of c1 must match a distinct literal occurrence in c2
    under a single substitution, so subsumption here is reflexive and
    transitive but never maps two copies onto one occurrence.
    """
    if len(c1) > len(c2):
        return False
    pats = rename_literals(c1.literals, c2.max_var + 1)

    def extend(k: int, used: int, subst: Subst) -> bool:
        if k == len(pats):
            return True
        pat = pats[k]
        for m, lit in enumerate(c2.literals):
            if used & (1 << m) or lit.positive != pat.positive:
                continue
            nxt = _match_term(pat.atom, lit.atom, subst)
            if nxt is not None and extend(k + 1, used | (1 << m), nxt):
                return True
        return False

    return extend(0, 0, {})


def symbol_weight(c: Clause, func_weight: int = 2, var_weight: int = 1) -> int:
    """Weighted count of symbol and variable occurrences across the clause."""
    total = 0
    for lit in c.literals:
        stack: list[Term] = [lit.atom]
        while stack:
            t = stack.pop()
            if type(t) is Var:
                total += var_weight
            else:
                total += func_weight
                stack.extend(t.args)
    return total
