"""Clause featurization for the guidance models.

Clauses are turned into sparse count vectors in three steps:

1. Anonymize: a predicate of arity k becomes "pk", a function of arity k
   becomes "fk", and every variable becomes "*". Symbol names never
   reach the model, so guidance transfers across signatures; only shape
   carries signal.
2. Walk: each node of a literal's term tree contributes one feature
   string, the dot-joined path of the last `walk_length` anonymized
   tokens on the way down from the literal root to that node. The root
   token is prefixed with "+" or "-" for the literal's polarity, e.g.
   featurizing p(a) yields "+p1" and "+p1.f0".
3. Hash: feature strings are hashed with 64-bit FNV-1a and masked to
   `base - 1` (base is a power of two), accumulating counts per bucket.

Six global count features (literal count, positive and negative literal
counts, symbol and variable occurrence counts, maximum term depth) live
at reserved indices base .. base+5, after the hashed buckets.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterator, Optional

from .terms import App, Clause, Literal, Sym, Term, Var

FNV64_OFFSET = 0xCBF29CE484222325
FNV64_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1

COUNT_FEATURES = 6


def fnv1a_64(data: bytes) -> int:
    """64-bit FNV-1a hash."""
    h = FNV64_OFFSET
    for byte in data:
        h = ((h ^ byte) * FNV64_PRIME) & _MASK64
    return h


def hash_feature(feature: str, base: int) -> int:
    """Bucket index of a feature string: FNV-1a of its UTF-8 bytes,
    masked to base - 1. Requires base to be a power of two."""
    return fnv1a_64(feature.encode("utf-8")) & (base - 1)


def anonymize(sym: Sym) -> str:
    return ("p" if sym.is_predicate else "f") + str(sym.arity)


@dataclass(frozen=True)
class FeatureConfig:
    base: int = 1 << 15
    walk_length: int = 3
    count_features: bool = True

    def __post_init__(self) -> None:
        if self.base < 2 or self.base & (self.base - 1):
            raise ValueError(f"hash base must be a power of two, got {self.base}")
        if self.walk_length < 1:
            raise ValueError("walk length must be at least 1")

    @property
    def dimension(self) -> int:
        return self.base + COUNT_FEATURES if self.count_features else self.base

    @property
    def depth_index(self) -> Optional[int]:
        return self.base + 5 if self.count_features else None


@dataclass
class SparseVector:
    """Sparse counts over a fixed dimension; zero entries are never stored."""

    dimension: int
    entries: dict[int, float]

    def to_pairs(self) -> list[tuple[int, float]]:
        return sorted(self.entries.items())


def clause_walks(clause: Clause, walk_length: int = 3) -> Iterator[str]:
    """Yield one walk string per term node, repeats included."""
    for lit in clause.literals:
        root = ("+" if lit.positive else "-") + anonymize(lit.atom.sym)
        path = (root,)
        yield root
        stack: list[tuple[Term, tuple[str, ...]]] = [
            (arg, path) for arg in reversed(lit.atom.args)
        ]
        while stack:
            term, above = stack.pop()
            token = "*" if isinstance(term, Var) else anonymize(term.sym)
            here = (above + (token,))[-walk_length:]
            yield ".".join(here)
            if isinstance(term, App):
                stack.extend((arg, here) for arg in reversed(term.args))


def _counts(clause: Clause) -> list[int]:
    n_pos = sum(1 for lit in clause.literals if lit.positive)
    n_sym = 0
    n_var = 0
    depth = 0
    for lit in clause.literals:
        stack: list[tuple[Term, int]] = [(lit.atom, 1)]
        while stack:
            term, d = stack.pop()
            if d > depth:
                depth = d
            if isinstance(term, Var):
                n_var += 1
            else:
                n_sym += 1
                stack.extend((arg, d + 1) for arg in term.args)
    return [len(clause.literals), n_pos, len(clause.literals) - n_pos, n_sym, n_var, depth]


def featurize_clause(clause: Clause, config: FeatureConfig) -> SparseVector:
    entries: dict[int, float] = {}
    for walk in clause_walks(clause, config.walk_length):
        idx = hash_feature(walk, config.base)
        entries[idx] = entries.get(idx, 0.0) + 1.0
    if config.count_features:
        for offset, value in enumerate(_counts(clause)):
            if value:
                entries[config.base + offset] = float(value)
    return SparseVector(config.dimension, entries)


class PairMode(enum.Enum):
    FUSE = "fuse"
    CAT = "cat"


def pair_features(
    u: SparseVector,
    v: SparseVector,
    mode: PairMode,
    depth_index: Optional[int] = None,
) -> SparseVector:
    """Combine two clause vectors into one parent-pair vector.

    FUSE adds the vectors elementwise, except the depth slot (when
    given) which takes the max. CAT concatenates: u keeps its indices,
    v is shifted up by the shared dimension.
    """
    if u.dimension != v.dimension:
        raise ValueError("pair members must share a dimension")
    if mode is PairMode.FUSE:
        entries = dict(u.entries)
        for idx, val in v.entries.items():
            entries[idx] = entries.get(idx, 0.0) + val
        if depth_index is not None and depth_index in entries:
            du = u.entries.get(depth_index, 0.0)
            dv = v.entries.get(depth_index, 0.0)
            entries[depth_index] = max(du, dv)
        return SparseVector(u.dimension, entries)
    entries = dict(u.entries)
    for idx, val in v.entries.items():
        entries[idx + u.dimension] = val
    return SparseVector(2 * u.dimension, entries)


class Featurizer:
    """featurize_clause with a per-instance cache of clause vectors.

    Caching is keyed by canonical clause text, which is safe because
    featurization is invariant under variable renaming (all variables
    anonymize to "*") and clauses of equal text are variants.
    """

    def __init__(self, config: Optional[FeatureConfig] = None):
        self.config = config if config is not None else FeatureConfig()
        self._cache: dict[str, SparseVector] = {}

    def clause_vector(self, clause: Clause) -> SparseVector:
        vec = self._cache.get(clause.text)
        if vec is None:
            vec = featurize_clause(clause, self.config)
            self._cache[clause.text] = vec
        return vec

    def pair_vector(self, a: Clause, b: Clause, mode: PairMode) -> SparseVector:
        return pair_features(
            self.clause_vector(a),
            self.clause_vector(b),
            mode,
            self.config.depth_index,
        )


def format_sparse_line(label: int, vector: SparseVector, comment: str = "") -> str:
    """One training example: `<label> <idx>:<count> ...` plus an optional
    trailing comment (used for the originating problem name)."""
    parts = [str(label)]
    parts.extend(
        f"{idx}:{int(val) if float(val).is_integer() else val}"
        for idx, val in vector.to_pairs()
    )
    line = " ".join(parts)
    if comment:
        line += f"  # {comment}"
    return line


def parse_sparse_line(line: str, dimension: int) -> tuple[int, SparseVector, str]:
    comment = ""
    if "#" in line:
        line, comment = line.split("#", 1)
        comment = comment.strip()
    fields = line.split()
    label = int(fields[0])
    entries: dict[int, float] = {}
    for item in fields[1:]:
        idx_s, val_s = item.split(":")
        idx = int(idx_s)
        if idx >= dimension or idx < 0:
            raise ValueError(f"index {idx} out of range for dimension {dimension}")
        entries[idx] = float(val_s)
    return label, SparseVector(dimension, entries), comment
