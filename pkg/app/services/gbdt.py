"""Histogram gradient-boosted trees with a softmax cross-entropy objective"""

from typing import Any, Dict, List, Optional
import logging

import numpy as np

from app.models.schemas import Hyperparameters

logger = logging.getLogger(__name__)

HESSIAN_FLOOR = 1e-16


class Tree:
    """Flat binary tree; feature == -1 marks a leaf"""

    def __init__(self):
        self.feature: List[int] = []
        self.threshold: List[float] = []
        self.left: List[int] = []
        self.right: List[int] = []
        self.value: List[float] = []
        self.gain: List[float] = []

    def add_node(self, value: float = 0.0) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(value)
        self.gain.append(0.0)
        return len(self.feature) - 1

    @property
    def depth(self) -> int:
        def walk(node: int) -> int:
            if self.feature[node] < 0:
                return 0
            return 1 + max(walk(self.left[node]), walk(self.right[node]))

        return walk(0)

    def predict(self, X: np.ndarray) -> np.ndarray:
        feature = np.asarray(self.feature)
        threshold = np.asarray(self.threshold)
        left = np.asarray(self.left)
        right = np.asarray(self.right)
        value = np.asarray(self.value)
        rows = np.arange(X.shape[0])
        node = np.zeros(X.shape[0], dtype=int)
        for _ in range(self.depth):
            f = feature[node]
            internal = f >= 0
            if not internal.any():
                break
            go_left = X[rows, np.where(internal, f, 0)] <= threshold[node]
            node = np.where(internal, np.where(go_left, left[node], right[node]), node)
        return value[node]

    def to_dict(self) -> Dict[str, list]:
        return {
            "feature": list(self.feature),
            "threshold": list(self.threshold),
            "left": list(self.left),
            "right": list(self.right),
            "value": list(self.value),
            "gain": list(self.gain),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, list]) -> "Tree":
        tree = cls()
        for key in ("feature", "threshold", "left", "right", "value", "gain"):
            setattr(tree, key, list(data[key]))
        return tree


def bin_edges(X: np.ndarray, n_bins: int) -> List[np.ndarray]:
    """Candidate split thresholds per feature from training quantiles"""
    qs = np.linspace(0.0, 1.0, n_bins + 1)[1:-1]
    edges = []
    for j in range(X.shape[1]):
        col = X[:, j]
        cuts = np.unique(np.quantile(col, qs)) if col.size else np.zeros(0)
        # a threshold at the column max would send every row left
        edges.append(cuts[cuts < col.max()] if col.size else cuts)
    return edges


def apply_bins(X: np.ndarray, edges: List[np.ndarray]) -> np.ndarray:
    """Bin index b such that edges[b-1] < x <= edges[b]"""
    binned = np.zeros(X.shape, dtype=np.int32)
    for j, cuts in enumerate(edges):
        binned[:, j] = np.searchsorted(cuts, X[:, j], side="left")
    return binned


class GradientBoostedTrees:
    """Multiclass boosted trees, one tree per class per round"""

    def __init__(self, params: Optional[Hyperparameters] = None, n_bins: int = 32, seed: int = 0):
        self.params = params or Hyperparameters()
        self.n_bins = n_bins
        self.seed = seed
        self.n_classes = 0
        self.base_score: np.ndarray = np.zeros(0)
        self.trees: List[List[Tree]] = []

    # ------------------------------------------------------------------

    def fit(self, X: np.ndarray, y: np.ndarray, n_classes: Optional[int] = None) -> "GradientBoostedTrees":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=int)
        n, n_features = X.shape
        self.n_classes = int(n_classes if n_classes is not None else y.max() + 1)
        k = self.n_classes
        rng = np.random.default_rng(self.seed)
        p = self.params

        counts = np.bincount(y, minlength=k).astype(float)
        priors = np.maximum(counts / max(n, 1), 1e-6)
        self.base_score = np.log(priors / priors.sum())
        self.trees = []
        if k < 2 or n == 0:
            return self

        edges = bin_edges(X, self.n_bins)
        binned = apply_bins(X, edges)
        onehot = np.eye(k)[y]
        logits = np.tile(self.base_score, (n, 1))

        for _ in range(p.n_estimators):
            prob = _softmax(logits)
            grad = prob - onehot
            hess = np.maximum(2.0 * prob * (1.0 - prob), HESSIAN_FLOOR)
            rows = np.flatnonzero(rng.random(n) < p.subsample) if p.subsample < 1.0 else np.arange(n)
            if rows.size == 0:
                rows = np.arange(n)
            n_cols = max(1, int(round(p.colsample * n_features)))
            cols = np.sort(rng.choice(n_features, size=n_cols, replace=False)) if n_cols < n_features else np.arange(n_features)

            round_trees = []
            for c in range(k):
                tree = self._grow(binned, edges, grad[:, c], hess[:, c], rows, cols)
                logits[:, c] += tree.predict(X)
                round_trees.append(tree)
            self.trees.append(round_trees)
        return self

    def _grow(self, binned, edges, grad, hess, rows, cols) -> Tree:
        p = self.params
        lam = p.reg_lambda
        tree = Tree()
        root = tree.add_node()
        stack = [(root, rows, 0)]
        while stack:
            node, idx, depth = stack.pop()
            g_sum = grad[idx].sum()
            h_sum = hess[idx].sum()
            tree.value[node] = -p.learning_rate * g_sum / (h_sum + lam)
            if depth >= p.max_depth or idx.size < 2:
                continue

            # histograms of every candidate column in one pass
            width = self.n_bins
            sub = binned[np.ix_(idx, cols)] + np.arange(cols.size) * width
            g_hist = np.bincount(sub.ravel(), weights=np.repeat(grad[idx], cols.size), minlength=cols.size * width)
            h_hist = np.bincount(sub.ravel(), weights=np.repeat(hess[idx], cols.size), minlength=cols.size * width)
            g_left = np.cumsum(g_hist.reshape(cols.size, width), axis=1)[:, :-1]
            h_left = np.cumsum(h_hist.reshape(cols.size, width), axis=1)[:, :-1]
            g_right = g_sum - g_left
            h_right = h_sum - h_left
            n_cuts = np.array([edges[j].size for j in cols])
            valid = (
                (np.arange(width - 1)[None, :] < n_cuts[:, None])
                & (h_left >= p.min_child_weight)
                & (h_right >= p.min_child_weight)
            )
            if not valid.any():
                continue
            parent_score = g_sum * g_sum / (h_sum + lam)
            gain = 0.5 * (g_left ** 2 / (h_left + lam) + g_right ** 2 / (h_right + lam) - parent_score) - p.min_split_loss
            gain = np.where(valid, gain, -np.inf)
            flat = int(np.argmax(gain))
            ci, b = divmod(flat, width - 1)
            gain = float(gain[ci, b])
            if gain <= 1e-12:
                continue
            j = int(cols[ci])
            go_left = binned[idx, j] <= b
            left = tree.add_node()
            right = tree.add_node()
            tree.feature[node] = j
            tree.threshold[node] = float(edges[j][b])
            tree.left[node] = left
            tree.right[node] = right
            tree.gain[node] = gain
            stack.append((right, idx[~go_left], depth + 1))
            stack.append((left, idx[go_left], depth + 1))
        return tree

    # ------------------------------------------------------------------

    def raw_predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        logits = np.tile(self.base_score, (X.shape[0], 1))
        for round_trees in self.trees:
            for c, tree in enumerate(round_trees):
                logits[:, c] += tree.predict(X)
        return logits

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return _softmax(self.raw_predict(X))

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.raw_predict(X), axis=1)

    def split_gains(self, n_features: int) -> np.ndarray:
        """Total split gain per feature"""
        totals = np.zeros(n_features)
        for round_trees in self.trees:
            for tree in round_trees:
                for f, g in zip(tree.feature, tree.gain):
                    if f >= 0:
                        totals[f] += g
        return totals

    def to_dict(self) -> Dict[str, Any]:
        return {
            "params": self.params.model_dump(),
            "n_bins": self.n_bins,
            "seed": self.seed,
            "n_classes": self.n_classes,
            "base_score": self.base_score.tolist(),
            "trees": [[t.to_dict() for t in round_trees] for round_trees in self.trees],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "GradientBoostedTrees":
        model = cls(Hyperparameters(**data["params"]), data["n_bins"], data["seed"])
        model.n_classes = data["n_classes"]
        model.base_score = np.asarray(data["base_score"], dtype=float)
        model.trees = [[Tree.from_dict(t) for t in round_trees] for round_trees in data["trees"]]
        return model


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)
