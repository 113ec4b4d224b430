"""Shared builders and hypothesis strategies for the test suite."""

from __future__ import annotations

from hypothesis import strategies as st

from satloop.problems import SymbolTable, parse_clause_text
from satloop.terms import App, Clause, Literal, Sym, Var


def fsym(name: str, arity: int) -> Sym:
    return Sym(name, arity, False)


def psym(name: str, arity: int) -> Sym:
    return Sym(name, arity, True)


def const(name: str) -> App:
    return App(fsym(name, 0))


def fn(name: str, *args) -> App:
    return App(fsym(name, len(args)), tuple(args))


def lit(positive: bool, pred: str, *args) -> Literal:
    return Literal(positive, App(psym(pred, len(args)), tuple(args)))


def C(text: str, **kw) -> Clause:
    """Clause from bare disjunction text, with its own symbol table."""
    return Clause(parse_clause_text(text, SymbolTable()), **kw)


# --- term/literal/clause strategies over a tiny fixed signature --------------

_FUNCS = [("c", 0), ("d", 0), ("f", 1), ("g", 2)]
_PREDS = [("p", 1), ("q", 2), ("r", 0)]


def terms(max_depth: int = 3, n_vars: int = 3):
    base = st.one_of(
        st.integers(0, n_vars - 1).map(Var),
        st.sampled_from([const("c"), const("d")]),
    )

    def extend(children):
        return st.one_of(
            children.map(lambda t: fn("f", t)),
            st.tuples(children, children).map(lambda ts: fn("g", *ts)),
        )

    return st.recursive(base, extend, max_leaves=max_depth * 2)


def literals(max_depth: int = 2, n_vars: int = 3):
    def build(draw_args):
        positive, name_arity, args = draw_args
        name, arity = name_arity
        return Literal(positive, App(psym(name, arity), tuple(args[:arity])))

    return st.tuples(
        st.booleans(),
        st.sampled_from(_PREDS),
        st.lists(terms(max_depth, n_vars), min_size=2, max_size=2),
    ).map(build)


def clauses(max_lits: int = 3, n_vars: int = 3):
    return st.lists(literals(n_vars=n_vars), min_size=0, max_size=max_lits).map(
        lambda ls: Clause(tuple(ls))
    )
