"""Gradient-boosted regression trees with logistic loss, trained from scratch.

Histogram-style training: each feature is quantile-binned once, split search
scans cumulative gradient/hessian sums per bin. Split thresholds are actual
feature values, so inference on raw vectors reproduces the training partition
bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DegenerateCorpus
from ..features import FEATURE_COUNT, extract_features
from .base import Detector


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass
class RegressionTree:
    feature: np.ndarray  # int32 per node, -1 for leaves
    threshold: np.ndarray  # f64 per node, split rule is x[feature] <= threshold
    left: np.ndarray  # int32 child indexes
    right: np.ndarray
    value: np.ndarray  # f64 leaf outputs, 0 for internal nodes

    def predict_one(self, x: np.ndarray) -> float:
        i = 0
        while self.feature[i] >= 0:
            i = int(self.left[i]) if x[self.feature[i]] <= self.threshold[i] else int(self.right[i])
        return float(self.value[i])


@dataclass
class TreeTrainConfig:
    rounds: int = 100
    depth: int = 3
    learning_rate: float = 0.1
    bins: int = 64
    reg_lambda: float = 1.0
    min_child_weight: float = 1e-3


class TreeEnsembleModel(Detector):
    def __init__(
        self,
        trees: list[RegressionTree],
        learning_rate: float,
        base_score: float,
        threshold: float = 0.5,
        detector_id: str = "tree-ensemble",
    ):
        self.trees = trees
        self.learning_rate = float(learning_rate)
        self.base_score = float(base_score)
        self.threshold = float(threshold)
        self.detector_id = detector_id

    def predict_margin(self, x: np.ndarray) -> float:
        total = 0.0
        for tree in self.trees:
            total += tree.predict_one(x)
        return self.base_score + self.learning_rate * total

    def predict_proba(self, x: np.ndarray) -> float:
        return float(sigmoid(self.predict_margin(x)))

    def score_bytes(self, data: bytes) -> float:
        return self.predict_proba(extract_features(data))


def _bin_features(X: np.ndarray, bins: int) -> tuple[list[np.ndarray], np.ndarray]:
    """Quantile bin edges per feature and the binned matrix (bin c means x <= edges[c])."""
    n_features = X.shape[1]
    edges: list[np.ndarray] = []
    binned = np.zeros(X.shape, dtype=np.int32)
    qs = np.linspace(0.0, 1.0, bins + 1)[1:-1]
    for f in range(n_features):
        col = X[:, f]
        e = np.unique(np.quantile(col, qs))
        edges.append(e)
        binned[:, f] = np.searchsorted(e, col, side="left")
    return edges, binned


class _NodeBuilder:
    """Recursive greedy splitter over a fixed binned matrix."""

    def __init__(self, flat_bins, edges, n_features, bins, cfg: TreeTrainConfig):
        self.flat_bins = flat_bins  # (n, features) with per-feature offsets pre-added
        self.edges = edges
        self.n_features = n_features
        self.bins = bins
        self.cfg = cfg
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []
        self.leaf_rows: list[tuple[int, np.ndarray]] = []

    def _new_node(self) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(0.0)
        return len(self.feature) - 1

    def build(self, idx: np.ndarray, g: np.ndarray, h: np.ndarray, depth: int) -> int:
        node = self._new_node()
        cfg = self.cfg
        gs = g[idx]
        hs = h[idx]
        g_tot = float(gs.sum())
        h_tot = float(hs.sum())
        if depth >= cfg.depth or len(idx) < 2:
            return self._leaf(node, idx, g_tot, h_tot)

        width = self.n_features * self.bins
        cells = self.flat_bins[idx].ravel()
        hist_g = np.bincount(cells, weights=np.repeat(gs, self.n_features), minlength=width)
        hist_h = np.bincount(cells, weights=np.repeat(hs, self.n_features), minlength=width)
        gl = np.cumsum(hist_g.reshape(self.n_features, self.bins), axis=1)
        hl = np.cumsum(hist_h.reshape(self.n_features, self.bins), axis=1)
        gr = g_tot - gl
        hr = h_tot - hl

        lam = cfg.reg_lambda
        gain = gl**2 / (hl + lam) + gr**2 / (hr + lam) - g_tot**2 / (h_tot + lam)
        valid = (hl >= cfg.min_child_weight) & (hr >= cfg.min_child_weight)
        for f in range(self.n_features):  # cuts beyond the last edge split nothing
            valid[f, len(self.edges[f]) :] = False
        gain = np.where(valid, gain, -np.inf)

        best = int(np.argmax(gain))  # row-major: ties resolve to lowest feature, lowest cut
        best_f, best_c = divmod(best, self.bins)
        if not np.isfinite(gain[best_f, best_c]) or gain[best_f, best_c] <= 1e-12:
            return self._leaf(node, idx, g_tot, h_tot)

        thr = float(self.edges[best_f][best_c])
        go_left = self.flat_bins[idx, best_f] - best_f * self.bins <= best_c
        self.feature[node] = best_f
        self.threshold[node] = thr
        self.left[node] = self.build(idx[go_left], g, h, depth + 1)
        self.right[node] = self.build(idx[~go_left], g, h, depth + 1)
        return node

    def _leaf(self, node: int, idx: np.ndarray, g_tot: float, h_tot: float) -> int:
        self.value[node] = -g_tot / (h_tot + self.cfg.reg_lambda)
        self.leaf_rows.append((node, idx))
        return node

    def pack(self) -> RegressionTree:
        return RegressionTree(
            feature=np.array(self.feature, dtype=np.int32),
            threshold=np.array(self.threshold, dtype=np.float64),
            left=np.array(self.left, dtype=np.int32),
            right=np.array(self.right, dtype=np.int32),
            value=np.array(self.value, dtype=np.float64),
        )


def train_tree_ensemble(
    X: np.ndarray,
    y: np.ndarray,
    cfg: TreeTrainConfig | None = None,
    detector_id: str = "tree-ensemble",
) -> TreeEnsembleModel:
    """Fit the boosted ensemble on a feature matrix and 0/1 labels."""
    cfg = cfg or TreeTrainConfig()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != FEATURE_COUNT:
        raise ValueError(f"expected (n, {FEATURE_COUNT}) feature matrix, got {X.shape}")
    classes = np.unique(y)
    if classes.size < 2:
        raise DegenerateCorpus(f"training corpus has a single class: {classes.tolist()}")

    prior = float(np.clip(y.mean(), 1e-6, 1.0 - 1e-6))
    base = float(np.log(prior / (1.0 - prior)))

    edges, binned = _bin_features(X, cfg.bins)
    offsets = (np.arange(X.shape[1], dtype=np.int32) * cfg.bins)[None, :]
    flat_bins = binned + offsets

    margins = np.full(X.shape[0], base)
    all_rows = np.arange(X.shape[0])
    trees: list[RegressionTree] = []
    for _ in range(cfg.rounds):
        p = sigmoid(margins)
        g = p - y
        h = p * (1.0 - p)
        builder = _NodeBuilder(flat_bins, edges, X.shape[1], cfg.bins, cfg)
        builder.build(all_rows, g, h, depth=0)
        tree = builder.pack()
        trees.append(tree)
        for node, idx in builder.leaf_rows:
            margins[idx] += cfg.learning_rate * tree.value[node]

    return TreeEnsembleModel(
        trees=trees,
        learning_rate=cfg.learning_rate,
        base_score=base,
        detector_id=detector_id,
    )
