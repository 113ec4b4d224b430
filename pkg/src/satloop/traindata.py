"""Turning derivation traces into training data.

Three labeling schemes:

- PROOF_CLAUSES  one example per processed clause; positive when the
                 clause is in the proof's ancestor closure. Used to
                 train clause selection models.
- PROOF_PARENTS  one example per parent pair that produced at least one
                 resolvent; positive when some child is in the proof.
- GIVEN_PARENTS  like PROOF_PARENTS, but a child counts as good when it
                 was processed (selected as given), proof or not. This
                 labels far more pairs positive and needs no refutation.

A pair is keyed unordered but vectorized in the orientation it was
first generated with. Pairs that produced both good and bad children
are labeled positive and counted as mixed.

Negatives usually dwarf positives, so emission supports per-problem
downsampling: keep every positive, draw at most rho negatives per
positive with an RNG seeded by (seed, problem) so the result does not
depend on trace ordering or concurrency.
"""

from __future__ import annotations

import enum
import json
import logging
import random
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .features import Featurizer, PairMode
from .gbdt import LabeledVector
from .problems import DerivationTrace, SymbolTable, parse_clause_text
from .terms import Clause, Rule

log = logging.getLogger(__name__)


class LabelScheme(enum.Enum):
    PROOF_CLAUSES = "proof-clauses"
    PROOF_PARENTS = "proof-parents"
    GIVEN_PARENTS = "given-parents"


@dataclass(frozen=True)
class SamplingConfig:
    """rho = negatives kept per positive (None keeps everything)."""

    rho: Optional[float] = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.rho is not None and self.rho < 1:
            raise ValueError("rho must be at least 1 when given")


@dataclass
class PairRecord:
    parents: tuple[int, int]
    positive: bool
    mixed: bool
    problem: str = ""


@dataclass
class DatasetStats:
    pos: int = 0
    neg: int = 0
    mixed: int = 0
    per_problem: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {
                "pos": self.pos,
                "neg": self.neg,
                "mixed": self.mixed,
                "per_problem": self.per_problem,
            },
            indent=2,
            sort_keys=True,
        )


def trace_clauses(trace: DerivationTrace, ids: Optional[set[int]] = None) -> dict[int, Clause]:
    """Rebuild Clause objects from trace texts (all records, or just ids).

    Each trace gets a fresh symbol table; texts within one trace must
    agree on arities or this raises.
    """
    symbols = SymbolTable()
    out: dict[int, Clause] = {}
    for rec in trace.records:
        if ids is not None and rec.id not in ids:
            continue
        out[rec.id] = Clause(
            parse_clause_text(rec.text, symbols),
            id=rec.id,
            parents=rec.parents,
            rule=rec.rule,
        )
    return out


def label_clause_data(
    trace: DerivationTrace, featurizer: Featurizer
) -> list[LabeledVector]:
    """Processed clauses as labeled vectors: proof members against the
    rest. Traces without a refutation yield nothing (and a warning),
    since every label would be negative."""
    if trace.empty_clause_id() is None:
        log.warning("trace %s has no refutation; no clause examples", trace.problem)
        return []
    wanted = {r.id for r in trace.records if r.processed}
    clauses = trace_clauses(trace, wanted)
    out = []
    for rec in trace.records:
        if not rec.processed:
            continue
        vec = featurizer.clause_vector(clauses[rec.id])
        out.append(LabeledVector(1 if rec.in_proof else 0, vec, trace.problem))
    return out


def label_parental_data(trace: DerivationTrace, scheme: LabelScheme) -> list[PairRecord]:
    """One record per unordered parent pair of resolution steps, in
    first-generation order and orientation. Under PROOF_PARENTS a child
    counts as good when it is in the proof; under GIVEN_PARENTS when it
    was processed."""
    if scheme is LabelScheme.PROOF_CLAUSES:
        raise ValueError("parental labels need a parent-pair scheme")
    by_key: dict[tuple[int, int], PairRecord] = {}
    saw_bad: dict[tuple[int, int], bool] = {}
    for rec in trace.records:
        if rec.rule is not Rule.RESOLUTION or len(rec.parents) != 2:
            continue
        a, b = rec.parents
        key = (a, b) if a <= b else (b, a)
        good = rec.in_proof if scheme is LabelScheme.PROOF_PARENTS else rec.processed
        pair = by_key.get(key)
        if pair is None:
            by_key[key] = PairRecord((a, b), good, False, trace.problem)
            saw_bad[key] = not good
        else:
            if good:
                pair.positive = True
            else:
                saw_bad[key] = True
    records = list(by_key.values())
    for key, pair in by_key.items():
        pair.mixed = pair.positive and saw_bad[key]
    return records


def _is_positive(record) -> bool:
    if isinstance(record, PairRecord):
        return record.positive
    return record.label == 1


def _problem_of(record) -> str:
    return record.problem


def sample_negatives(records: Sequence, config: SamplingConfig) -> list:
    """Per-problem downsampling: all positives, at most rho negatives
    per positive, drawn without replacement. Original record order is
    preserved; the draw depends only on (seed, problem)."""
    if config.rho is None:
        return list(records)
    by_problem: dict[str, list[int]] = {}
    for k, rec in enumerate(records):
        by_problem.setdefault(_problem_of(rec), []).append(k)
    keep: set[int] = set()
    for problem, indices in by_problem.items():
        pos = [k for k in indices if _is_positive(records[k])]
        neg = [k for k in indices if not _is_positive(records[k])]
        keep.update(pos)
        quota = min(len(neg), int(config.rho * len(pos)))
        if quota:
            rng = random.Random(f"{config.seed}:{problem}")
            keep.update(rng.sample(neg, quota))
    return [rec for k, rec in enumerate(records) if k in keep]


def pair_vectors(
    trace: DerivationTrace,
    records: Sequence[PairRecord],
    featurizer: Featurizer,
    pair_mode: PairMode,
) -> list[LabeledVector]:
    """Vectorize pair records against their trace, in record order."""
    needed = {p for rec in records for p in rec.parents}
    clauses = trace_clauses(trace, needed)
    out = []
    for rec in records:
        vec = featurizer.pair_vector(
            clauses[rec.parents[0]], clauses[rec.parents[1]], pair_mode
        )
        out.append(LabeledVector(1 if rec.positive else 0, vec, rec.problem))
    return out


def emit_dataset(
    traces: Sequence[DerivationTrace],
    scheme: LabelScheme,
    featurizer: Featurizer,
    out_path: str,
    pair_mode: PairMode = PairMode.CAT,
    sampling: SamplingConfig = SamplingConfig(),
) -> DatasetStats:
    """Label every trace, downsample negatives, write the sparse text
    dataset plus a .stats.json sidecar; returns the stats.

    PROOF_* schemes skip traces without a refutation. Dimension is the
    featurizer's (doubled for concatenated pairs).
    """
    from .gbdt import save_dataset

    stats = DatasetStats()
    examples: list[LabeledVector] = []
    dimension = featurizer.config.dimension
    if scheme is not LabelScheme.PROOF_CLAUSES and pair_mode is PairMode.CAT:
        dimension *= 2
    for trace in traces:
        if scheme is LabelScheme.PROOF_CLAUSES:
            rows = sample_negatives(label_clause_data(trace, featurizer), sampling)
            vectors = rows
            mixed = 0
        else:
            if scheme is LabelScheme.PROOF_PARENTS and trace.empty_clause_id() is None:
                log.warning(
                    "trace %s has no refutation; skipped for %s",
                    trace.problem,
                    scheme.value,
                )
                continue
            pairs = sample_negatives(label_parental_data(trace, scheme), sampling)
            vectors = pair_vectors(trace, pairs, featurizer, pair_mode)
            mixed = sum(1 for p in pairs if p.mixed)
        pos = sum(1 for v in vectors if v.label == 1)
        neg = len(vectors) - pos
        stats.pos += pos
        stats.neg += neg
        stats.mixed += mixed
        if vectors:
            stats.per_problem[trace.problem] = {"pos": pos, "neg": neg, "mixed": mixed}
        examples.extend(vectors)
    save_dataset(out_path, examples, dimension)
    with open(out_path + ".stats.json", "w", encoding="utf-8") as fh:
        fh.write(stats.to_json() + "\n")
    return stats
