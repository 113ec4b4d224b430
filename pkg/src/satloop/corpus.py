"""Synthetic CNF problem generator.

The benchmark corpus mixes four families, each refutable by resolution
alone and salted with distractor clauses. Since featurization sees only
anonymized symbol shapes, distractors are built from signatures the
proof-relevant clauses never use (arity-3 predicates, wrapped argument
terms), so their uselessness is visible in the features and learnable.

- chain   a unary fact pushed through a successor rule to a goal at
          depth n; distractor streams use ternary predicates and may
          branch, which buries deep chains for weight-ordered search.
- equiv   a linear chain of binary edges closed under transitivity;
          the main elements are wrapped in a unary function while junk
          edges sit on bare constants, so junk floods the light end of
          the weight order. A tower rule keeps generating heavier
          copies of every edge.
- grid    reachability on a quarter-plane with two successor rules;
          diagonal goal; optional branching distractor streams.
- ground  random propositional CNF, certified unsatisfiable by the
          DPLL oracle before emission.

Generation is deterministic per (seed, family, index): every instance
gets its own RNG, so corpora are reproducible file by file.
"""

from __future__ import annotations

import os
import random
from typing import Callable

from .groundsat import dpll_satisfiable

FAMILIES = ("chain", "equiv", "grid", "ground")


def _cnf(name: str, role: str, *lits: str) -> str:
    return f"cnf({name}, {role}, {' | '.join(lits)})."


def _nest(fn: str, core: str, depth: int) -> str:
    out = core
    for _ in range(depth):
        out = f"{fn}({out})"
    return out


def _junk_streams(rng: random.Random, count: int, branch_prob: float) -> list[str]:
    """Ternary-predicate derivation streams that never meet the goal."""
    lines = []
    for k in range(count):
        pred = f"r{k}"
        lines.append(_cnf(f"junk{k}_seed", "axiom", f"{pred}(c, c, c)"))
        lines.append(
            _cnf(f"junk{k}_grow", "axiom", f"~{pred}(X, Y, Z)", f"{pred}(g1(X), Y, Z)")
        )
        if rng.random() < branch_prob:
            lines.append(
                _cnf(
                    f"junk{k}_fork", "axiom", f"~{pred}(X, Y, Z)", f"{pred}(g2(X), Y, Z)"
                )
            )
    return lines


def gen_chain(rng: random.Random) -> str:
    depth = rng.randint(5, 14)
    lines = [
        _cnf("start", "axiom", "q(c)"),
        _cnf("step", "axiom", "~q(X)", "q(f(X))"),
    ]
    lines += _junk_streams(rng, rng.randint(1, 6), branch_prob=0.7)
    lines.append(_cnf("goal", "negated_conjecture", f"~q({_nest('f', 'c', depth)})"))
    return "\n".join(lines) + "\n"


def gen_equiv(rng: random.Random) -> str:
    k = rng.randint(5, 9)
    junk = rng.randint(3, 10)
    lines = [_cnf("trans", "axiom", "~e(X, Y)", "~e(Y, Z)", "e(X, Z)")]
    if rng.random() < 0.8:
        lines.append(_cnf("tower", "axiom", "~e(X, Y)", "e(v(X), v(Y))"))
    for i in range(k - 1):
        lines.append(_cnf(f"edge{i}", "axiom", f"e(u(a{i}), u(a{i + 1}))"))
    for j in range(junk - 1):
        lines.append(_cnf(f"junk{j}", "axiom", f"e(b{j}, b{j + 1})"))
    lines.append(_cnf("goal", "negated_conjecture", f"~e(u(a0), u(a{k - 1}))"))
    return "\n".join(lines) + "\n"


def gen_grid(rng: random.Random) -> str:
    m = rng.randint(2, 5)
    lines = [
        _cnf("origin", "axiom", "reach(z, z)"),
        _cnf("right", "axiom", "~reach(X, Y)", "reach(s(X), Y)"),
        _cnf("up", "axiom", "~reach(X, Y)", "reach(X, s(Y))"),
    ]
    lines += _junk_streams(rng, rng.randint(1, 4), branch_prob=0.6)
    corner = _nest("s", "z", m)
    lines.append(_cnf("goal", "negated_conjecture", f"~reach({corner}, {corner})"))
    return "\n".join(lines) + "\n"


def gen_ground(rng: random.Random) -> str:
    """Random propositional CNF, rejection-sampled to be unsatisfiable."""
    n_atoms = rng.randint(6, 10)
    n_clauses = int(n_atoms * rng.uniform(4.5, 5.5))
    for _ in range(200):
        clauses: list[frozenset[int]] = []
        texts: list[str] = []
        for i in range(n_clauses):
            width = 2 if rng.random() < 0.3 else 3
            atoms = rng.sample(range(1, n_atoms + 1), width)
            lits = frozenset(a if rng.random() < 0.5 else -a for a in atoms)
            if len(lits) < width:
                continue
            clauses.append(lits)
            texts.append(
                _cnf(
                    f"c{len(texts)}",
                    "axiom",
                    *(f"p{a}" if a > 0 else f"~p{-a}" for a in sorted(lits, key=abs)),
                )
            )
        if clauses and not dpll_satisfiable(clauses):
            return "\n".join(texts) + "\n"
    # Statistically unreachable; still, never emit a satisfiable file.
    return "\n".join(
        [_cnf("c0", "axiom", "p1"), _cnf("c1", "negated_conjecture", "~p1")]
    ) + "\n"


_GENERATORS: dict[str, Callable[[random.Random], str]] = {
    "chain": gen_chain,
    "equiv": gen_equiv,
    "grid": gen_grid,
    "ground": gen_ground,
}


def generate_problem(family: str, index: int, seed: int) -> tuple[str, str]:
    """(name, text) for one instance; deterministic in all arguments."""
    if family == "mix":
        family = FAMILIES[index % len(FAMILIES)]
    gen = _GENERATORS.get(family)
    if gen is None:
        raise ValueError(f"unknown family {family!r}; pick from {FAMILIES + ('mix',)}")
    rng = random.Random(f"{seed}:{family}:{index}")
    return f"{family}_{index:04d}", gen(rng)


def generate_corpus(
    out_dir: str, count: int, family: str = "mix", seed: int = 0
) -> list[str]:
    """Write `count` problems as .p files; returns the paths in order."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for index in range(count):
        name, text = generate_problem(family, index, seed)
        path = os.path.join(out_dir, name + ".p")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
        paths.append(path)
    return paths
