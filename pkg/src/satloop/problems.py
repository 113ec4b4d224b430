"""Problem files, derivation traces, and proof checking.

Problems use a small TPTP-style clause normal form:

    % comment to end of line
    cnf(name, role, lit1 | lit2 | ... ).

Lowercase identifiers are symbols, uppercase are variables, `~` negates.
Roles from {axiom, hypothesis, definition, lemma, plain} are treated as
axioms; negated_conjecture is kept distinct only for bookkeeping.

A derivation trace is a line-oriented record of every clause a prover
run touched. The text format is versioned and diffable:

    TRACE v1
    id <TAB> rule <TAB> parents <TAB> P|. <TAB> *|. <TAB> clause text

where parents is a comma-separated id list (`.` when empty), `P` marks
clauses that were processed, and `*` marks proof members.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional

from .inference import factor, resolve
from .terms import App, Clause, Literal, Rule, Sym, Var

AXIOM_ROLES = frozenset(
    {"axiom", "hypothesis", "definition", "lemma", "plain", "negated_conjecture"}
)

TRACE_HEADER = "TRACE v1"


class ParseError(Exception):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{message} at line {line}, column {col}")
        self.line = line
        self.col = col


class ArityError(ParseError):
    """A symbol was used with two different arities, or as both a
    predicate and a function."""

    def __init__(self, symbol: str, message: str, line: int, col: int):
        super().__init__(message, line, col)
        self.symbol = symbol


class TraceFormatError(Exception):
    pass


class SymbolTable:
    """Names to symbols, enforcing one arity and one kind per name."""

    def __init__(self) -> None:
        self._by_name: dict[str, Sym] = {}

    def declare(
        self, name: str, arity: int, is_predicate: bool, line: int = 0, col: int = 0
    ) -> Sym:
        sym = self._by_name.get(name)
        if sym is None:
            sym = Sym(name, arity, is_predicate)
            self._by_name[name] = sym
            return sym
        if sym.arity != arity:
            raise ArityError(
                name,
                f"symbol '{name}' used with arity {arity} but declared with {sym.arity}",
                line,
                col,
            )
        if sym.is_predicate != is_predicate:
            kind = "predicate" if is_predicate else "function"
            raise ArityError(
                name, f"symbol '{name}' used as {kind} but declared otherwise", line, col
            )
        return sym

    def copy(self) -> "SymbolTable":
        dup = SymbolTable()
        dup._by_name = dict(self._by_name)
        return dup

    def __len__(self) -> int:
        return len(self._by_name)


@dataclass
class Problem:
    name: str
    clauses: list[Clause]
    roles: list[str]
    symbols: SymbolTable = field(default_factory=SymbolTable)


_TOKEN = re.compile(
    r"""(?P<ws>\s+)
      | (?P<comment>%[^\n]*)
      | (?P<lname>[a-z][A-Za-z0-9_]*)
      | (?P<uname>[A-Z_][A-Za-z0-9_]*)
      | (?P<num>[0-9]+)
      | (?P<dollar>\$[a-z]+)
      | (?P<punct>[(),.|~])
    """,
    re.VERBOSE,
)


class _Tokenizer:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0
        self.line = 1
        self.col = 1

    def next(self) -> tuple[str, str, int, int]:
        while self.pos < len(self.text):
            m = _TOKEN.match(self.text, self.pos)
            if m is None:
                raise ParseError(
                    f"unexpected character {self.text[self.pos]!r}", self.line, self.col
                )
            kind = m.lastgroup or ""
            tok = m.group()
            line, col = self.line, self.col
            newlines = tok.count("\n")
            if newlines:
                self.line += newlines
                self.col = len(tok) - tok.rfind("\n")
            else:
                self.col += len(tok)
            self.pos = m.end()
            if kind in ("ws", "comment"):
                continue
            return kind, tok, line, col
        return "eof", "", self.line, self.col


class _Parser:
    def __init__(self, text: str, symbols: Optional[SymbolTable] = None):
        self.toks = _Tokenizer(text)
        self.symbols = symbols if symbols is not None else SymbolTable()
        self.kind, self.tok, self.line, self.col = self.toks.next()

    def _advance(self) -> None:
        self.kind, self.tok, self.line, self.col = self.toks.next()

    def _expect(self, token: str) -> None:
        if self.tok != token:
            raise ParseError(f"expected {token!r}, found {self.tok!r}", self.line, self.col)
        self._advance()

    def parse_problem(self, name: str) -> Problem:
        clauses: list[Clause] = []
        roles: list[str] = []
        while self.kind != "eof":
            if self.tok != "cnf":
                raise ParseError(
                    f"expected 'cnf', found {self.tok!r}", self.line, self.col
                )
            self._advance()
            self._expect("(")
            if self.kind not in ("lname", "uname", "num"):
                raise ParseError("expected a clause name", self.line, self.col)
            self._advance()
            self._expect(",")
            role_line, role_col = self.line, self.col
            if self.kind != "lname":
                raise ParseError("expected a role", self.line, self.col)
            role = self.tok
            if role not in AXIOM_ROLES:
                raise ParseError(f"unknown role {role!r}", role_line, role_col)
            self._advance()
            self._expect(",")
            parenthesized = self.tok == "("
            if parenthesized:
                self._advance()
            lits = self._literals()
            if parenthesized:
                self._expect(")")
            self._expect(")")
            self._expect(".")
            clauses.append(Clause(lits, id=len(clauses), rule=Rule.INPUT))
            roles.append(role)
        return Problem(name, clauses, roles, self.symbols)

    def _literals(self) -> tuple[Literal, ...]:
        varmap: dict[str, Var] = {}
        lits = [self._literal(varmap)]
        while self.tok == "|":
            self._advance()
            lits.append(self._literal(varmap))
        return tuple(lit for lit in lits if lit is not None)

    def _literal(self, varmap: dict[str, Var]) -> Optional[Literal]:
        if self.tok == "$false":
            # Placeholder for the empty clause; contributes no literal.
            self._advance()
            return None
        positive = True
        if self.tok == "~":
            positive = False
            self._advance()
        atom = self._app(varmap, is_predicate=True)
        return Literal(positive, atom)

    def _app(self, varmap: dict[str, Var], is_predicate: bool) -> App:
        if self.kind not in ("lname", "num"):
            raise ParseError(
                f"expected a symbol, found {self.tok!r}", self.line, self.col
            )
        name, line, col = self.tok, self.line, self.col
        self._advance()
        args: list = []
        if self.tok == "(":
            self._advance()
            args.append(self._term(varmap))
            while self.tok == ",":
                self._advance()
                args.append(self._term(varmap))
            self._expect(")")
        sym = self.symbols.declare(name, len(args), is_predicate, line, col)
        return App(sym, tuple(args))

    def _term(self, varmap: dict[str, Var]):
        if self.kind == "uname":
            var = varmap.get(self.tok)
            if var is None:
                var = Var(len(varmap))
                varmap[self.tok] = var
            self._advance()
            return var
        return self._app(varmap, is_predicate=False)


def parse_problem(text: str, name: str = "") -> Problem:
    """Parse a CNF problem. Raises ParseError (with line and column) on
    syntax errors and ArityError on inconsistent symbol use."""
    return _Parser(text).parse_problem(name)


def load_problem(path: str, name: Optional[str] = None) -> Problem:
    import os

    if name is None:
        name = os.path.splitext(os.path.basename(path))[0]
    with open(path, "r", encoding="utf-8") as fh:
        return parse_problem(fh.read(), name)


def parse_clause_text(text: str, symbols: SymbolTable) -> tuple[Literal, ...]:
    """Parse a bare disjunction (trace clause text) against a symbol table."""
    parser = _Parser(text, symbols)
    lits = parser._literals()
    if parser.kind != "eof":
        raise ParseError(
            f"trailing input {parser.tok!r} after clause", parser.line, parser.col
        )
    return lits


@dataclass(frozen=True)
class TraceRecord:
    id: int
    rule: Rule
    parents: tuple[int, ...]
    processed: bool
    in_proof: bool
    text: str


@dataclass
class DerivationTrace:
    """Every clause seen in a run: inputs, kept children, and discarded
    children alike. Records are ordered by id, and parents always precede
    children, so a trace can be replayed or labeled in one pass."""

    records: list[TraceRecord]
    problem: str = field(default="", compare=False)

    def by_id(self) -> dict[int, TraceRecord]:
        return {r.id: r for r in self.records}

    def empty_clause_id(self) -> Optional[int]:
        for rec in self.records:
            if rec.text == "$false":
                return rec.id
        return None


def write_trace(trace: DerivationTrace) -> str:
    lines = [TRACE_HEADER]
    for r in trace.records:
        parents = ",".join(str(p) for p in r.parents) if r.parents else "."
        lines.append(
            "\t".join(
                (
                    str(r.id),
                    r.rule.value,
                    parents,
                    "P" if r.processed else ".",
                    "*" if r.in_proof else ".",
                    r.text,
                )
            )
        )
    return "\n".join(lines) + "\n"


def read_trace(text: str, problem: str = "") -> DerivationTrace:
    lines = text.splitlines()
    if not lines or lines[0].strip() != TRACE_HEADER:
        raise TraceFormatError("missing trace header")
    records: list[TraceRecord] = []
    seen_ids: set[int] = set()
    for lineno, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        parts = raw.split("\t")
        if len(parts) != 6:
            raise TraceFormatError(f"line {lineno}: expected 6 fields, got {len(parts)}")
        id_s, rule_s, parents_s, proc_s, proof_s, clause_text = parts
        try:
            cid = int(id_s)
            rule = Rule(rule_s)
        except ValueError as exc:
            raise TraceFormatError(f"line {lineno}: {exc}") from None
        parents: tuple[int, ...]
        if parents_s == ".":
            parents = ()
        else:
            try:
                parents = tuple(int(p) for p in parents_s.split(","))
            except ValueError:
                raise TraceFormatError(f"line {lineno}: bad parent list") from None
        if proc_s not in ("P", ".") or proof_s not in ("*", "."):
            raise TraceFormatError(f"line {lineno}: bad flag field")
        if any(p not in seen_ids for p in parents):
            raise TraceFormatError(f"line {lineno}: parent does not precede clause {cid}")
        if cid in seen_ids:
            raise TraceFormatError(f"line {lineno}: duplicate clause id {cid}")
        seen_ids.add(cid)
        records.append(
            TraceRecord(cid, rule, parents, proc_s == "P", proof_s == "*", clause_text)
        )
    return DerivationTrace(records, problem)


def load_trace(path: str, problem: Optional[str] = None) -> DerivationTrace:
    import os

    if problem is None:
        problem = os.path.basename(path)
        for suffix in (".trace", ".txt"):
            if problem.endswith(suffix):
                problem = problem[: -len(suffix)]
                break
    with open(path, "r", encoding="utf-8") as fh:
        return read_trace(fh.read(), problem)


@dataclass
class ProofObject:
    """The ancestor closure of a derived empty clause, ordered by id.

    Input records have no parents; every other record's parents appear
    earlier in the list; the final record is the empty clause.
    """

    records: list[TraceRecord]
    problem: str = field(default="", compare=False)


def extract_proof(trace: DerivationTrace) -> Optional[ProofObject]:
    """Ancestor closure of the empty clause, or None when no refutation
    was found."""
    empty_id = trace.empty_clause_id()
    if empty_id is None:
        return None
    by_id = trace.by_id()
    needed: set[int] = set()
    stack = [empty_id]
    while stack:
        cid = stack.pop()
        if cid in needed:
            continue
        needed.add(cid)
        stack.extend(by_id[cid].parents)
    records = [r for r in trace.records if r.id in needed]
    return ProofObject(records, trace.problem)


def mark_proof(trace: DerivationTrace) -> DerivationTrace:
    """Return a copy of the trace with in_proof set on the ancestor
    closure of the empty clause (unchanged when there is none)."""
    proof = extract_proof(trace)
    if proof is None:
        return trace
    in_proof = {r.id for r in proof.records}
    records = [
        TraceRecord(r.id, r.rule, r.parents, r.processed, r.id in in_proof, r.text)
        for r in trace.records
    ]
    return DerivationTrace(records, trace.problem)


def first_failed_step(proof: ProofObject, problem: Problem) -> Optional[int]:
    """Replay every step of the proof; return the id of the first record
    that cannot be justified, or None when the proof checks out.

    Inputs must match a problem clause up to variable renaming; each
    inference must be reproducible from its recorded parents; the proof
    must end in the empty clause.
    """
    if not proof.records or proof.records[-1].text != "$false":
        return proof.records[-1].id if proof.records else -1
    symbols = problem.symbols.copy()
    input_texts = {c.text for c in problem.clauses}
    clauses: dict[int, Clause] = {}
    for rec in proof.records:
        try:
            lits = parse_clause_text(rec.text, symbols)
        except ParseError:
            return rec.id
        # Canonicalizing here makes the replay insensitive to variable
        # names and literal order in the file.
        clause = Clause(lits, id=rec.id, parents=rec.parents, rule=rec.rule)
        if rec.rule is Rule.INPUT:
            if rec.parents or clause.text not in input_texts:
                return rec.id
        elif rec.rule is Rule.RESOLUTION:
            if len(rec.parents) != 2 or not _replay_resolution(clause, rec, clauses):
                return rec.id
        elif rec.rule is Rule.FACTORING:
            if len(rec.parents) != 1 or rec.parents[0] not in clauses:
                return rec.id
            parent = clauses[rec.parents[0]]
            if not any(f.text == clause.text for f in factor(parent)):
                return rec.id
        clauses[rec.id] = clause
    return None


def _replay_resolution(clause: Clause, rec: TraceRecord, clauses: dict[int, Clause]) -> bool:
    p1, p2 = rec.parents
    if p1 not in clauses or p2 not in clauses:
        return False
    c1, c2 = clauses[p1], clauses[p2]
    for i in range(len(c1)):
        for j in range(len(c2)):
            r = resolve(c1, i, c2, j)
            if r is not None and r.text == clause.text:
                return True
    return False


def check_proof(proof: ProofObject, problem: Problem) -> bool:
    """Independent replay of a proof against its problem."""
    return first_failed_step(proof, problem) is None
