"""satloop: a saturation prover with learned clause selection.

The pieces, bottom up: first-order terms and resolution (`terms`,
`inference`), problem files and derivation traces (`problems`),
anonymized clause featurization (`features`), boosted-tree models
(`gbdt`), a batched scoring server (`server`), the guided given-clause
loop (`prover`), trace labeling and dataset emission (`traindata`), a
synthetic corpus (`corpus`, `groundsat`), and the benchmark/experiment
harness (`harness`, `cli`).
"""

from .features import FeatureConfig, Featurizer, PairMode, SparseVector
from .gbdt import LabeledVector, TreeModel, TreeParams, load_model_file, save_model_file, train
from .harness import LoopConfig, run_benchmark, run_grid, run_loop, split_corpus
from .problems import (
    DerivationTrace,
    ParseError,
    Problem,
    ProofObject,
    check_proof,
    extract_proof,
    load_problem,
    parse_problem,
    read_trace,
    write_trace,
)
from .prover import GuidanceConfig, Limits, Mode, SolveResult, Status, solve
from .server import EvalServer, ScoreClient
from .terms import Clause, Literal, Rule
from .traindata import LabelScheme, SamplingConfig, emit_dataset

__version__ = "0.1.0"

__all__ = [
    "Clause",
    "DerivationTrace",
    "EvalServer",
    "FeatureConfig",
    "Featurizer",
    "GuidanceConfig",
    "LabelScheme",
    "LabeledVector",
    "Limits",
    "Literal",
    "LoopConfig",
    "Mode",
    "PairMode",
    "ParseError",
    "Problem",
    "ProofObject",
    "Rule",
    "SamplingConfig",
    "ScoreClient",
    "SolveResult",
    "SparseVector",
    "Status",
    "TreeModel",
    "TreeParams",
    "check_proof",
    "emit_dataset",
    "extract_proof",
    "load_model_file",
    "load_problem",
    "parse_problem",
    "read_trace",
    "run_benchmark",
    "run_grid",
    "run_loop",
    "save_model_file",
    "solve",
    "split_corpus",
    "train",
    "write_trace",
]
