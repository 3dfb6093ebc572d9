"""Gini decision-tree baseline: one CART tree per output position over
bag-of-radicals counts, optionally concatenated with the cognate indicator.

Split tests are ``x[f] <= t`` with integer ``t``. Among splits of equal
quality the lowest feature index wins, then the lowest threshold, so the
fitted tree does not depend on the order of the training samples.
"""

from __future__ import annotations

import contextlib
import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .ids import RadicalInventory
from .phonology import POSITIONS, LexiconEntry, PhonemeVocab, SyllableParts, indicator_matrix

# relative slack when comparing split scores, absorbing float summation noise
TIE_EPS = 1e-12
TREE_FORMAT_VERSION = 1


class EmptyData(ValueError):
    pass


@dataclass(frozen=True)
class DtConfig:
    criterion: str = "gini"
    max_depth: Optional[int] = None
    min_samples_leaf: int = 5

    def __post_init__(self):
        if self.criterion != "gini":
            raise ValueError(f"unsupported criterion {self.criterion!r}")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be non-negative")


@dataclass
class TreeNode:
    counts: np.ndarray
    feature: Optional[int] = None
    threshold: Optional[int] = None
    left: Optional["TreeNode"] = None
    right: Optional["TreeNode"] = None

    @property
    def is_leaf(self) -> bool:
        return self.feature is None

    @property
    def prediction(self) -> int:
        return int(np.argmax(self.counts))

    def walk(self):
        """Pre-order iteration yielding (node, depth)."""
        stack = [(self, 0)]
        while stack:
            node, d = stack.pop()
            yield node, d
            if not node.is_leaf:
                stack.append((node.right, d + 1))
                stack.append((node.left, d + 1))

    def n_nodes(self) -> int:
        return sum(1 for _ in self.walk())

    def depth(self) -> int:
        return max(d for _, d in self.walk())

    def to_json(self) -> dict:
        """Nested dict; internal nodes carry feature, threshold and children."""
        out = {}
        stack = [(self, out)]
        while stack:
            node, obj = stack.pop()
            obj["counts"] = [int(c) for c in node.counts]
            if not node.is_leaf:
                obj.update(feature=node.feature, threshold=node.threshold, left={}, right={})
                stack.append((node.left, obj["left"]))
                stack.append((node.right, obj["right"]))
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "TreeNode":
        root = cls(np.asarray(obj["counts"], dtype=np.int64))
        stack = [(root, obj)]
        while stack:
            node, o = stack.pop()
            if "feature" in o:
                node.feature, node.threshold = int(o["feature"]), int(o["threshold"])
                node.left = cls(np.asarray(o["left"]["counts"], dtype=np.int64))
                node.right = cls(np.asarray(o["right"]["counts"], dtype=np.int64))
                stack.append((node.left, o["left"]))
                stack.append((node.right, o["right"]))
        return root


def gini(counts: np.ndarray) -> float:
    n = counts.sum()
    return 1.0 - float(np.sum((counts / n) ** 2)) if n else 0.0


@dataclass(frozen=True)
class Split:
    feature: int
    threshold: int
    impurity: float  # sample-weighted gini of the two children


def _as_counts(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X)
    if X.ndim != 2:
        raise ValueError("features must be a 2-D matrix")
    Xi = np.rint(X).astype(np.int64)
    if np.any(Xi != X) or np.any(Xi < 0):
        raise ValueError("features must be non-negative integers (counts or bits)")
    return Xi


def _best_split(rows, r, c, v, y, parent, n_features, n_classes, min_leaf) -> Optional[Split]:
    """Best strictly improving split of the node holding sample ids ``rows``.
    ``(r, c, v)`` are the node's non-zero feature entries."""
    n = len(rows)
    score_parent = float(np.sum(parent.astype(float) ** 2)) / n
    best = None  # (score, feature, threshold)
    key = c * n_classes + y[r]
    for t in np.unique(np.concatenate([[0], v])):
        right = np.bincount(key[v > t], minlength=n_features * n_classes).reshape(n_features, n_classes)
        nr = right.sum(axis=1)
        nl = n - nr
        ok = (nl >= min_leaf) & (nr >= min_leaf)
        if not ok.any():
            continue
        left = parent[None, :] - right
        with np.errstate(divide="ignore", invalid="ignore"):
            score = (left.astype(float) ** 2).sum(axis=1) / nl + (right.astype(float) ** 2).sum(axis=1) / nr
        score[~ok] = -np.inf
        f = int(np.argmax(score))
        top = score[f]
        # lowest feature within the tie band at this threshold
        f = int(np.flatnonzero(score >= top - TIE_EPS * abs(top))[0])
        s = float(score[f])
        if best is None or s > best[0] + TIE_EPS * abs(best[0]):
            best = (s, f, int(t))
        elif s >= best[0] - TIE_EPS * abs(best[0]) and f < best[1]:
            best = (s, f, int(t))
    if best is None or best[0] <= score_parent + TIE_EPS * abs(score_parent):
        return None
    return Split(best[1], best[2], 1.0 - best[0] / n)


def best_split(X: np.ndarray, y: np.ndarray, n_classes: Optional[int] = None, min_samples_leaf: int = 1) -> Optional[Split]:
    """Root split of a single tree, or None when no split strictly lowers gini."""
    X = _as_counts(X)
    y = np.asarray(y, dtype=np.int64)
    k = int(n_classes if n_classes is not None else y.max() + 1)
    r, c = np.nonzero(X)
    parent = np.bincount(y, minlength=k)
    return _best_split(np.arange(len(y)), r, c, X[r, c], y, parent, X.shape[1], k, min_samples_leaf)


def fit_tree(X: np.ndarray, y: np.ndarray, n_classes: int, config: DtConfig = DtConfig()) -> TreeNode:
    X = _as_counts(X)
    y = np.asarray(y, dtype=np.int64)
    if len(y) == 0:
        raise EmptyData("cannot fit a tree on zero samples")
    if len(y) != X.shape[0]:
        raise ValueError("features and labels are not aligned")
    n_features = X.shape[1]
    r_all, c_all = np.nonzero(X)
    v_all = X[r_all, c_all]
    goes_left = np.zeros(len(y), dtype=bool)
    root = TreeNode(np.bincount(y, minlength=n_classes))
    stack = [(root, np.arange(len(y)), r_all, c_all, v_all, 0)]
    while stack:
        node, rows, r, c, v, depth = stack.pop()
        n = len(rows)
        if (
            np.count_nonzero(node.counts) <= 1
            or n < 2 * config.min_samples_leaf
            or (config.max_depth is not None and depth >= config.max_depth)
        ):
            continue
        split = _best_split(rows, r, c, v, y, node.counts, n_features, n_classes, config.min_samples_leaf)
        if split is None:
            continue
        node.feature, node.threshold = split.feature, split.threshold
        goes_left[rows] = True
        on_f = c == split.feature
        goes_left[r[on_f][v[on_f] > split.threshold]] = False
        mask_rows = goes_left[rows]
        mask_nz = goes_left[r]
        goes_left[rows] = False
        lrows, rrows = rows[mask_rows], rows[~mask_rows]
        node.left = TreeNode(np.bincount(y[lrows], minlength=n_classes))
        node.right = TreeNode(np.bincount(y[rrows], minlength=n_classes))
        stack.append((node.right, rrows, r[~mask_nz], c[~mask_nz], v[~mask_nz], depth + 1))
        stack.append((node.left, lrows, r[mask_nz], c[mask_nz], v[mask_nz], depth + 1))
    return root


def tree_apply(tree: TreeNode, X: np.ndarray) -> np.ndarray:
    """Predicted class per row (majority of the reached leaf, lowest index on ties)."""
    X = np.asarray(X)
    out = np.empty(X.shape[0], dtype=np.int64)
    stack = [(tree, np.arange(X.shape[0]))]
    while stack:
        node, idx = stack.pop()
        if node.is_leaf:
            out[idx] = node.prediction
            continue
        go = X[idx, node.feature] <= node.threshold
        stack.append((node.left, idx[go]))
        stack.append((node.right, idx[~go]))
    return out


def fit(X: np.ndarray, Y: np.ndarray, n_classes: Sequence[int], config: DtConfig = DtConfig()) -> list[TreeNode]:
    """Three trees, one per output position (onset, nucleus, coda)."""
    Y = np.asarray(Y)
    if Y.ndim != 2 or Y.shape[1] != len(n_classes):
        raise ValueError("labels must have one column per position")
    return [fit_tree(X, Y[:, k], n_classes[k], config) for k in range(Y.shape[1])]


def dt_predict_indices(trees: Sequence[TreeNode], X: np.ndarray) -> np.ndarray:
    return np.stack([tree_apply(t, X) for t in trees], axis=1)


class DecisionTreeModel:
    """Tree baseline bundled with the feature layout it was trained on."""

    kind = "dt"

    def __init__(
        self,
        inventory: RadicalInventory,
        vocab: PhonemeVocab,
        config: DtConfig = DtConfig(),
        use_indicator: bool = False,
        positional_indicator: bool = True,
        trees: Optional[list[TreeNode]] = None,
    ):
        self.inventory = inventory
        self.vocab = vocab
        self.config = config
        self.use_indicator = use_indicator
        self.positional_indicator = positional_indicator
        self.trees = trees

    def features(self, entries: Sequence[LexiconEntry]) -> np.ndarray:
        if any(e.bor is None for e in entries):
            raise ValueError("tree input needs bag-of-radicals counts on every entry")
        X = np.stack([e.bor.as_array() for e in entries]) if entries else np.zeros((0, len(self.inventory) + 1))
        if self.use_indicator:
            X = np.concatenate([X, indicator_matrix(entries, self.vocab, self.positional_indicator)], axis=1)
        return X

    def fit(self, entries: Sequence[LexiconEntry]) -> "DecisionTreeModel":
        if not entries:
            raise EmptyData("cannot fit a tree on zero entries")
        Y = np.array([self.vocab.encode_target(e.target) for e in entries], dtype=np.int64)
        self.trees = fit(self.features(entries), Y, self.vocab.target_sizes(), self.config)
        return self

    def predict_indices(self, entries: Sequence[LexiconEntry]) -> np.ndarray:
        return dt_predict_indices(self.trees, self.features(entries))

    def predict(self, entries: Sequence[LexiconEntry]) -> list[SyllableParts]:
        return [self.vocab.decode_target(row) for row in self.predict_indices(entries)]

    def to_json(self) -> dict:
        return {
            "format": "hanpron-tree",
            "version": TREE_FORMAT_VERSION,
            "config": {
                "criterion": self.config.criterion,
                "max_depth": self.config.max_depth,
                "min_samples_leaf": self.config.min_samples_leaf,
            },
            "use_indicator": self.use_indicator,
            "positional_indicator": self.positional_indicator,
            "inventory": list(self.inventory.radicals),
            "vocab": self.vocab.to_json(),
            "vocab_hash": self.vocab.digest(),
            "trees": {pos: t.to_json() for pos, t in zip(POSITIONS, self.trees)},
        }

    @classmethod
    def from_json(cls, obj: dict) -> "DecisionTreeModel":
        if obj.get("format") != "hanpron-tree" or obj.get("version") != TREE_FORMAT_VERSION:
            raise ValueError("not a tree model file")
        return cls(
            RadicalInventory(tuple(obj["inventory"])),
            PhonemeVocab.from_json(obj["vocab"]),
            DtConfig(**obj["config"]),
            obj["use_indicator"],
            obj["positional_indicator"],
            [TreeNode.from_json(obj["trees"][pos]) for pos in POSITIONS],
        )

    def save(self, path: Union[str, Path]) -> None:
        obj = self.to_json()
        with _deep_nesting():
            text = json.dumps(obj, ensure_ascii=False)
        Path(path).write_text(text + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "DecisionTreeModel":
        text = Path(path).read_text(encoding="utf-8")
        with _deep_nesting():
            obj = json.loads(text)
        return cls.from_json(obj)


@contextlib.contextmanager
def _deep_nesting(limit: int = 50_000):
    # the json codec recurses once per nesting level; degenerate trees are deep
    old = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old, limit))
    try:
        yield
    finally:
        sys.setrecursionlimit(old)


def dt_predict(model: DecisionTreeModel, entries: Sequence[LexiconEntry]) -> list[SyllableParts]:
    return model.predict(entries)
