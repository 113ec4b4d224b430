"""Gradient boosted trees over sparse count vectors.

Binary classification with logistic loss, grown leaf-wise with exact
greedy splits. This is deliberately self-contained: scores must be
reproducible bit-for-bit across processes (the eval server and the
in-process scorer must agree exactly), so the model owns its arithmetic
end to end and its serialization is a fixed little-endian layout.

Determinism is part of the contract. Split search scans features in
ascending index order and positions in ascending value order, and every
tie (equal gain anywhere) resolves to the first candidate in that scan.
Training the same data with the same params yields an identical model.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .features import SparseVector, format_sparse_line, parse_sparse_line

_LAMBDA = 1e-6
_MIN_GAIN = 1e-12
_MARGIN_CLAMP = 30.0
# Cap on elements per scratch matrix in split search; keeps peak memory
# flat no matter how many features are active.
_BLOCK_ELEMS = 2_000_000

_MAGIC = b"SLGB"
_VERSION = 1


@dataclass(frozen=True)
class TreeParams:
    trees: int = 100
    max_depth: int = 6
    max_leaves: int = 31
    learning_rate: float = 0.2
    min_samples_leaf: int = 1


@dataclass
class LabeledVector:
    label: int
    vector: SparseVector
    problem: str = ""


@dataclass
class Tree:
    """Flat node arrays; index 0 is the root, feature -1 marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def n_nodes(self) -> int:
        return len(self.feature)


@dataclass
class TreeModel:
    dimension: int
    base_score: float
    trees: list[Tree] = field(default_factory=list)

    def margin(self, vector: SparseVector) -> float:
        total = self.base_score
        get = vector.entries.get
        for tree in self.trees:
            node = 0
            feature = tree.feature
            while feature[node] >= 0:
                if get(int(feature[node]), 0.0) < tree.threshold[node]:
                    node = tree.left[node]
                else:
                    node = tree.right[node]
            total += tree.value[node]
        return total

    def score(self, vector: SparseVector) -> float:
        """Probability-like score, strictly inside (0, 1)."""
        return _sigmoid_scalar(self.margin(vector))

    def score_many(self, vectors: Iterable[SparseVector]) -> list[float]:
        return [self.score(v) for v in vectors]


def _sigmoid_scalar(margin: float) -> float:
    m = min(max(margin, -_MARGIN_CLAMP), _MARGIN_CLAMP)
    return 1.0 / (1.0 + math.exp(-m))


def _sigmoid(margins: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(margins, -_MARGIN_CLAMP, _MARGIN_CLAMP)))


def logistic_loss(labels: np.ndarray, margins: np.ndarray) -> float:
    """Mean negative log-likelihood; used by tests to watch training."""
    p = _sigmoid(margins)
    eps = 1e-15
    p = np.clip(p, eps, 1.0 - eps)
    return float(-np.mean(labels * np.log(p) + (1.0 - labels) * np.log(1.0 - p)))


class _NodeBuild:
    __slots__ = ("rows", "depth", "col", "threshold", "left", "right", "value",
                 "gain", "split_left", "split_right")

    def __init__(self, rows: np.ndarray, depth: int):
        self.rows = rows
        self.depth = depth
        self.col = -1
        self.threshold = 0.0
        self.left = -1
        self.right = -1
        self.value = 0.0
        self.gain = -math.inf
        self.split_left: Optional[np.ndarray] = None
        self.split_right: Optional[np.ndarray] = None


def _best_split(
    node: _NodeBuild,
    x_t: np.ndarray,
    order_t: np.ndarray,
    g: np.ndarray,
    h: np.ndarray,
    params: TreeParams,
) -> None:
    """Fill node.gain/col/threshold/split_* with the best exact split.

    Scans every feature column; for each, rows are visited in globally
    presorted order restricted to this node. Candidate thresholds are
    midpoints between adjacent distinct values. Ties on gain go to the
    lowest feature index, then the lowest split position.
    """
    m = len(node.rows)
    msl = params.min_samples_leaf
    if m < 2 * msl or m < 2:
        return
    n_total = order_t.shape[1]
    n_features = order_t.shape[0]
    in_node = np.zeros(n_total, dtype=bool)
    in_node[node.rows] = True
    g_total = float(g[node.rows].sum())
    h_total = float(h[node.rows].sum())
    parent_obj = g_total * g_total / (h_total + _LAMBDA)

    counts = np.arange(1, m, dtype=np.int64)
    count_ok = (counts >= msl) & ((m - counts) >= msl)

    block = max(1, _BLOCK_ELEMS // max(m, 1))
    for start in range(0, n_features, block):
        stop = min(start + block, n_features)
        ob = order_t[start:stop]
        idx = ob[in_node[ob]].reshape(stop - start, m)
        xs = np.take_along_axis(x_t[start:stop], idx, axis=1)
        gl = np.cumsum(g[idx], axis=1)[:, :-1]
        hl = np.cumsum(h[idx], axis=1)[:, :-1]
        gr = g_total - gl
        hr = h_total - hl
        gain = gl * gl / (hl + _LAMBDA) + gr * gr / (hr + _LAMBDA) - parent_obj
        valid = (xs[:, 1:] > xs[:, :-1]) & count_ok
        gain = np.where(valid, gain, -np.inf)
        flat = int(np.argmax(gain))
        best = float(gain.ravel()[flat])
        if best > node.gain and best > _MIN_GAIN:
            f_local, pos = divmod(flat, m - 1)
            node.gain = best
            node.col = start + f_local
            lo = float(xs[f_local, pos])
            hi = float(xs[f_local, pos + 1])
            node.threshold = (lo + hi) / 2.0
            node.split_left = idx[f_local, : pos + 1].copy()
            node.split_right = idx[f_local, pos + 1 :].copy()


def _grow_tree(
    x_t: np.ndarray,
    order_t: np.ndarray,
    g: np.ndarray,
    h: np.ndarray,
    params: TreeParams,
) -> list[_NodeBuild]:
    n = x_t.shape[1]
    root = _NodeBuild(np.arange(n, dtype=np.int64), 0)
    nodes = [root]
    if root.depth < params.max_depth:
        _best_split(root, x_t, order_t, g, h, params)
    n_leaves = 1
    while n_leaves < params.max_leaves:
        best_idx = -1
        best_gain = _MIN_GAIN
        for i, cand in enumerate(nodes):
            if cand.left == -1 and cand.gain > best_gain:
                best_gain = cand.gain
                best_idx = i
        if best_idx < 0:
            break
        node = nodes[best_idx]
        assert node.split_left is not None and node.split_right is not None
        left = _NodeBuild(node.split_left, node.depth + 1)
        right = _NodeBuild(node.split_right, node.depth + 1)
        node.left = len(nodes)
        nodes.append(left)
        node.right = len(nodes)
        nodes.append(right)
        node.split_left = node.split_right = None
        for child in (left, right):
            if child.depth < params.max_depth:
                _best_split(child, x_t, order_t, g, h, params)
        n_leaves += 1
    return nodes


def train(
    data: Sequence[LabeledVector],
    params: TreeParams = TreeParams(),
    dimension: Optional[int] = None,
) -> TreeModel:
    """Fit a boosted-tree classifier on labeled sparse vectors.

    Labels must be 0 or 1. One Newton step per leaf: value is
    -sum(grad) / (sum(hess) + lambda), scaled by the learning rate, with
    grad = p - y and hess = p (1 - p) from the logistic loss. The model
    starts from a zero base margin.
    """
    if not data:
        raise ValueError("cannot train on an empty dataset")
    if dimension is None:
        dimension = data[0].vector.dimension
    for ex in data:
        if ex.label not in (0, 1):
            raise ValueError(f"labels must be 0 or 1, got {ex.label!r}")
        if ex.vector.dimension != dimension:
            raise ValueError("all vectors must share one dimension")

    n = len(data)
    active = sorted({idx for ex in data for idx in ex.vector.entries})
    if not active:
        active = [0]
    col_of = {orig: c for c, orig in enumerate(active)}
    x = np.zeros((n, len(active)), dtype=np.float32)
    for r, ex in enumerate(data):
        for orig, val in ex.vector.entries.items():
            x[r, col_of[orig]] = val
    y = np.array([ex.label for ex in data], dtype=np.float64)

    x_t = np.ascontiguousarray(x.T)
    order_t = np.ascontiguousarray(np.argsort(x, axis=0, kind="stable").T)
    feature_of_col = np.array(active, dtype=np.int64)

    margins = np.zeros(n, dtype=np.float64)
    model = TreeModel(dimension, 0.0)
    for _ in range(params.trees):
        p = _sigmoid(margins)
        g = p - y
        h = p * (1.0 - p)
        nodes = _grow_tree(x_t, order_t, g, h, params)
        feature = np.full(len(nodes), -1, dtype=np.int64)
        threshold = np.zeros(len(nodes), dtype=np.float64)
        left = np.full(len(nodes), -1, dtype=np.int32)
        right = np.full(len(nodes), -1, dtype=np.int32)
        value = np.zeros(len(nodes), dtype=np.float64)
        for i, node in enumerate(nodes):
            if node.left >= 0:
                feature[i] = feature_of_col[node.col]
                threshold[i] = node.threshold
                left[i] = node.left
                right[i] = node.right
            else:
                gsum = float(g[node.rows].sum())
                hsum = float(h[node.rows].sum())
                leaf = -gsum / (hsum + _LAMBDA) * params.learning_rate
                value[i] = leaf
                margins[node.rows] += leaf
        model.trees.append(Tree(feature, threshold, left, right, value))
    return model


def save_model(model: TreeModel) -> bytes:
    out = bytearray()
    out += _MAGIC
    out += struct.pack("<IQdI", _VERSION, model.dimension, model.base_score,
                       len(model.trees))
    for tree in model.trees:
        out += struct.pack("<I", tree.n_nodes())
        out += tree.feature.astype("<i8").tobytes()
        out += tree.threshold.astype("<f8").tobytes()
        out += tree.left.astype("<i4").tobytes()
        out += tree.right.astype("<i4").tobytes()
        out += tree.value.astype("<f8").tobytes()
    return bytes(out)


def load_model(data: bytes) -> TreeModel:
    if data[:4] != _MAGIC:
        raise ValueError("not a tree model file")
    version, dimension, base_score, n_trees = struct.unpack_from("<IQdI", data, 4)
    if version != _VERSION:
        raise ValueError(f"unsupported model version {version}")
    pos = 4 + struct.calcsize("<IQdI")
    trees = []
    for _ in range(n_trees):
        (n_nodes,) = struct.unpack_from("<I", data, pos)
        pos += 4

        def take(dtype: str, width: int) -> np.ndarray:
            nonlocal pos
            arr = np.frombuffer(data, dtype=dtype, count=n_nodes, offset=pos).copy()
            pos += width * n_nodes
            return arr

        feature = take("<i8", 8)
        threshold = take("<f8", 8)
        left = take("<i4", 4)
        right = take("<i4", 4)
        value = take("<f8", 8)
        trees.append(Tree(feature, threshold, left, right, value))
    return TreeModel(int(dimension), float(base_score), trees)


def save_model_file(model: TreeModel, path: str) -> None:
    with open(path, "wb") as fh:
        fh.write(save_model(model))


def load_model_file(path: str) -> TreeModel:
    with open(path, "rb") as fh:
        return load_model(fh.read())


def dump_text(model: TreeModel) -> str:
    """Human-readable rendering of every tree, for debugging models."""
    lines = [
        f"model dimension={model.dimension} base_score={model.base_score!r} "
        f"trees={len(model.trees)}"
    ]
    for t, tree in enumerate(model.trees):
        lines.append(f"tree {t} nodes={tree.n_nodes()}")
        for i in range(tree.n_nodes()):
            if tree.feature[i] >= 0:
                lines.append(
                    f"  {i}: [x{tree.feature[i]} < {tree.threshold[i]!r}] "
                    f"then {tree.left[i]} else {tree.right[i]}"
                )
            else:
                lines.append(f"  {i}: leaf {tree.value[i]!r}")
    return "\n".join(lines) + "\n"


def save_dataset(path: str, data: Sequence[LabeledVector], dimension: int) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"#dim {dimension}\n")
        for ex in data:
            fh.write(format_sparse_line(ex.label, ex.vector, ex.problem) + "\n")


def load_dataset(path: str) -> tuple[list[LabeledVector], int]:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if not header.startswith("#dim "):
            raise ValueError(f"{path}: missing #dim header")
        dimension = int(header.split()[1])
        data = []
        for line in fh:
            line = line.strip()
            if not line:
                continue
            label, vec, problem = parse_sparse_line(line, dimension)
            data.append(LabeledVector(label, vec, problem))
    return data, dimension
