"""First-order terms, literals, clauses, and unification.

Terms are immutable. Variables are identified by small integers that are
local to a clause; inference rules rename them apart before unifying.
Clauses normalize their literal order on construction so that variant
clauses render to identical canonical text, which is what the rest of the
system uses for duplicate detection and for trace files.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterator, Optional, Union


class Rule(enum.Enum):
    INPUT = "input"
    RESOLUTION = "resolution"
    FACTORING = "factoring"


@dataclass(frozen=True, slots=True)
class Sym:
    """A function or predicate symbol with a fixed arity."""

    name: str
    arity: int
    is_predicate: bool = False


@dataclass(frozen=True, slots=True)
class Var:
    id: int


@dataclass(frozen=True, slots=True)
class App:
    """Application of a symbol to argument terms; constants have no args."""

    sym: Sym
    args: tuple["Term", ...] = ()


Term = Union[Var, App]

# A substitution maps variable ids to terms. Substitutions returned by
# unify() are idempotent: no bound variable occurs in any image term.
Subst = dict[int, Term]


@dataclass(frozen=True, slots=True)
class Literal:
    positive: bool
    atom: App

    def negated(self) -> "Literal":
        return Literal(not self.positive, self.atom)


def term_var_ids(t: Term) -> Iterator[int]:
    """Yield variable ids in t, left to right, with repeats."""
    stack = [t]
    while stack:
        cur = stack.pop()
        if type(cur) is Var:
            yield cur.id
        else:
            stack.extend(reversed(cur.args))


def max_var_id(literals: tuple[Literal, ...]) -> int:
    """Largest variable id used in the literals, or -1 if ground."""
    top = -1
    for lit in literals:
        for vid in term_var_ids(lit.atom):
            if vid > top:
                top = vid
    return top


def _walk(t: Term, subst: Subst) -> Term:
    while type(t) is Var and t.id in subst:
        t = subst[t.id]
    return t


def _occurs(vid: int, t: Term, subst: Subst) -> bool:
    stack = [t]
    while stack:
        cur = _walk(stack.pop(), subst)
        if type(cur) is Var:
            if cur.id == vid:
                return True
        else:
            stack.extend(cur.args)
    return False


def apply_subst(t: Term, subst: Subst) -> Term:
    # Iterative post-order rebuild; saturation routinely produces terms
    # deep enough to overflow the interpreter stack.
    if not subst:
        return t
    done: list[Term] = []
    work: list[tuple[bool, Term]] = [(False, t)]
    while work:
        building, cur = work.pop()
        if building:
            n = len(cur.args)
            args = tuple(done[len(done) - n :])
            del done[len(done) - n :]
            done.append(App(cur.sym, args))
            continue
        while type(cur) is Var:
            bound = subst.get(cur.id)
            if bound is None:
                break
            cur = bound
        if type(cur) is Var or not cur.args:
            done.append(cur)
        else:
            work.append((True, cur))
            work.extend((False, a) for a in reversed(cur.args))
    return done[0]


def apply_to_literal(lit: Literal, subst: Subst) -> Literal:
    atom = apply_subst(lit.atom, subst)
    assert isinstance(atom, App)
    return Literal(lit.positive, atom)


def _resolved(subst: Subst) -> Subst:
    # Flatten variable chains so the result is idempotent. The occurs
    # check has already ruled out cycles.
    return {vid: apply_subst(t, subst) for vid, t in subst.items()}


def unify(a: Term, b: Term) -> Optional[Subst]:
    """Most general unifier of a and b, or None.

    Always performs the occurs check. The returned substitution is
    idempotent and binds only variables appearing in the inputs.
    """
    subst: Subst = {}
    stack = [(a, b)]
    while stack:
        s, t = stack.pop()
        s = _walk(s, subst)
        t = _walk(t, subst)
        if s == t:
            continue
        if isinstance(s, Var):
            if _occurs(s.id, t, subst):
                return None
            subst[s.id] = t
        elif isinstance(t, Var):
            if _occurs(t.id, s, subst):
                return None
            subst[t.id] = s
        else:
            if s.sym != t.sym:
                return None
            stack.extend(zip(s.args, t.args))
    return _resolved(subst)


def rename_literals(literals: tuple[Literal, ...], offset: int) -> tuple[Literal, ...]:
    """Shift every variable id by offset (renaming apart)."""
    if offset == 0:
        return literals
    subst: Subst = {}
    out = []
    for lit in literals:
        for vid in term_var_ids(lit.atom):
            if vid not in subst:
                subst[vid] = Var(vid + offset)
        out.append(apply_to_literal(lit, subst))
    return tuple(out)


def renumber_vars(literals: tuple[Literal, ...], start: int = 0) -> tuple[Literal, ...]:
    """Rename variables to start, start+1, ... in order of first occurrence."""
    mapping: Subst = {}
    out = []
    for lit in literals:
        for vid in term_var_ids(lit.atom):
            if vid not in mapping:
                mapping[vid] = Var(start + len(mapping))
        out.append(apply_to_literal(lit, mapping))
    return tuple(out)


def _term_text(t: Term, var_names: dict[int, str]) -> str:
    out: list[str] = []
    stack: list[Term | str] = [t]
    while stack:
        cur = stack.pop()
        tp = type(cur)
        if tp is str:
            out.append(cur)
        elif tp is Var:
            name = var_names.get(cur.id)
            if name is None:
                name = f"X{len(var_names)}"
                var_names[cur.id] = name
            out.append(name)
        elif not cur.args:
            out.append(cur.sym.name)
        else:
            pieces: list[Term | str] = [cur.sym.name, "("]
            for k, a in enumerate(cur.args):
                if k:
                    pieces.append(",")
                pieces.append(a)
            pieces.append(")")
            stack.extend(reversed(pieces))
    return "".join(out)


def literal_text(lit: Literal, var_names: dict[int, str]) -> str:
    body = _term_text(lit.atom, var_names)
    return body if lit.positive else "~" + body


def literals_text(literals: tuple[Literal, ...]) -> str:
    """Canonical text: variables renamed X0, X1, ... by first occurrence."""
    if not literals:
        return "$false"
    names: dict[int, str] = {}
    return "|".join(literal_text(lit, names) for lit in literals)


def _blind_text(t: Term, out: list[str]) -> None:
    stack: list[Term | str] = [t]
    while stack:
        cur = stack.pop()
        tp = type(cur)
        if tp is str:
            out.append(cur)
        elif tp is Var:
            out.append("*")
        elif not cur.args:
            out.append(cur.sym.name)
        else:
            pieces: list[Term | str] = [cur.sym.name, "("]
            for k, a in enumerate(cur.args):
                if k:
                    pieces.append(",")
                pieces.append(a)
            pieces.append(")")
            stack.extend(reversed(pieces))


def literal_sort_key(lit: Literal) -> str:
    """Variable-blind rendering used to order literals within a clause."""
    out = ["" if lit.positive else "~"]
    _blind_text(lit.atom, out)
    return "".join(out)


def normalize_literals(literals: tuple[Literal, ...]) -> tuple[Literal, ...]:
    """Drop exact duplicate literals, then stable-sort by variable-blind key."""
    seen = set()
    kept = []
    for lit in literals:
        if lit not in seen:
            seen.add(lit)
            kept.append(lit)
    kept.sort(key=literal_sort_key)
    return tuple(kept)


@dataclass(eq=False)
class Clause:
    """A disjunction of literals plus derivation metadata.

    The id is assigned by whoever owns the clause (prover state or
    parser); parents refer to clause ids. Literal order and variable
    names are normalized on construction, and the canonical text is
    precomputed since nearly every clause gets deduplicated or traced.
    """

    literals: tuple[Literal, ...]
    id: int = -1
    parents: tuple[int, ...] = ()
    rule: Rule = Rule.INPUT
    frozen: bool = False
    weight: float = 0.0
    text: str = field(init=False, default="", repr=False)
    max_var: int = field(init=False, default=-1, repr=False)

    def __post_init__(self) -> None:
        self.literals = normalize_literals(self.literals)
        self.text = literals_text(self.literals)
        self.max_var = max_var_id(self.literals)

    def is_empty(self) -> bool:
        return not self.literals

    def __len__(self) -> int:
        return len(self.literals)
