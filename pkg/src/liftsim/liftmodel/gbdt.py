"""Gradient-boosted decision trees with logistic loss.

Single-machine Newton boosting over integer-bucketed features: every
feature value is clipped into [0, max_bins) and treated as its own
histogram bin, so split search is exact greedy over all (feature, bin)
cuts. Deterministic for a given seed, including row subsampling and
tie-breaking (first feature, then lowest threshold wins on equal gain).
"""
from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from ..seeds import rng_for


class TrainingError(ValueError):
    """Raised when the sample set cannot be trained on."""


@dataclass(frozen=True)
class GBDTParams:
    n_trees: int = 150
    max_depth: int = 4
    learning_rate: float = 0.15
    subsample: float = 0.8
    reg_lambda: float = 1.0
    min_child_weight: float = 1.0
    min_samples_leaf: int = 10
    max_bins: int = 64

    def __post_init__(self) -> None:
        if self.n_trees <= 0 or self.max_depth <= 0:
            raise ValueError("n_trees and max_depth must be positive")
        if not 0 < self.learning_rate <= 1:
            raise ValueError("learning_rate must be in (0, 1]")
        if not 0 < self.subsample <= 1:
            raise ValueError("subsample must be in (0, 1]")
        if self.reg_lambda < 0 or self.min_child_weight < 0:
            raise ValueError("regularizers must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Tree:
    """Flat array representation: node i is a leaf iff feature[i] < 0."""

    feature: np.ndarray    # int32
    threshold: np.ndarray  # float64 bin edge; go left when x <= threshold
    left: np.ndarray       # int32 child index
    right: np.ndarray
    value: np.ndarray      # float64 leaf increment (0 on internal nodes)

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int32)
        while True:
            feat = self.feature[node]
            internal = feat >= 0
            if not internal.any():
                return self.value[node]
            rows = np.nonzero(internal)[0]
            go_left = X[rows, feat[internal]] <= self.threshold[node[internal]]
            node[rows] = np.where(go_left, self.left[node[internal]],
                                  self.right[node[internal]])

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Tree":
        return cls(
            feature=np.asarray(data["feature"], dtype=np.int32),
            threshold=np.asarray(data["threshold"], dtype=np.float64),
            left=np.asarray(data["left"], dtype=np.int32),
            right=np.asarray(data["right"], dtype=np.int32),
            value=np.asarray(data["value"], dtype=np.float64),
        )


@dataclass
class GBDTModel:
    """Boosted ensemble producing raw log-odds scores."""

    base_score: float
    trees: list[Tree] = field(default_factory=list)
    params: GBDTParams = field(default_factory=GBDTParams)
    seed: int = 0
    n_features: int = 0

    def raw_score(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.n_features:
            raise ValueError(
                f"expected {self.n_features} features, got {X.shape[1]}")
        Xb = np.clip(X, 0, self.params.max_bins - 1)
        out = np.full(len(Xb), self.base_score)
        for tree in self.trees:
            out += tree.predict(Xb)
        return out

    def to_dict(self) -> dict:
        return {
            "base_score": self.base_score,
            "seed": self.seed,
            "n_features": self.n_features,
            "params": self.params.to_dict(),
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GBDTModel":
        return cls(
            base_score=float(data["base_score"]),
            trees=[Tree.from_dict(t) for t in data["trees"]],
            params=GBDTParams(**data["params"]),
            seed=int(data["seed"]),
            n_features=int(data["n_features"]),
        )


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class _TreeBuilder:
    def __init__(self, Xb: np.ndarray, g: np.ndarray, h: np.ndarray,
                 params: GBDTParams):
        self.Xb = Xb
        self.g = g
        self.h = h
        self.params = params
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []

    def _new_node(self) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(0.0)
        return len(self.feature) - 1

    def build(self, rows: np.ndarray) -> int:
        root = self._new_node()
        self._split(root, rows, depth=0)
        return root

    def _leaf_value(self, rows: np.ndarray) -> float:
        lam = self.params.reg_lambda
        G = float(self.g[rows].sum())
        H = float(self.h[rows].sum())
        return -self.params.learning_rate * G / (H + lam) if H + lam > 0 else 0.0

    def _split(self, node: int, rows: np.ndarray, depth: int) -> None:
        params = self.params
        if depth >= params.max_depth or len(rows) < 2 * params.min_samples_leaf:
            self.value[node] = self._leaf_value(rows)
            return
        g = self.g[rows]
        h = self.h[rows]
        G, H = float(g.sum()), float(h.sum())
        lam = params.reg_lambda
        parent_score = G * G / (H + lam)

        best_gain = 0.0
        best_feat = -1
        best_bin = -1
        n_bins = params.max_bins
        for f in range(self.Xb.shape[1]):
            bins = self.Xb[rows, f].astype(np.int64)
            g_hist = np.bincount(bins, weights=g, minlength=n_bins)
            h_hist = np.bincount(bins, weights=h, minlength=n_bins)
            c_hist = np.bincount(bins, minlength=n_bins)
            gl = np.cumsum(g_hist)[:-1]
            hl = np.cumsum(h_hist)[:-1]
            cl = np.cumsum(c_hist)[:-1]
            gr = G - gl
            hr = H - hl
            cr = len(rows) - cl
            valid = (
                (cl >= params.min_samples_leaf)
                & (cr >= params.min_samples_leaf)
                & (hl >= params.min_child_weight)
                & (hr >= params.min_child_weight)
            )
            if not valid.any():
                continue
            with np.errstate(divide="ignore", invalid="ignore"):
                gains = np.where(
                    valid,
                    gl * gl / (hl + lam) + gr * gr / (hr + lam) - parent_score,
                    -np.inf,
                )
            gains = np.where(np.isfinite(gains), gains, -np.inf)
            b = int(np.argmax(gains))
            if gains[b] > best_gain:
                best_gain = float(gains[b])
                best_feat = f
                best_bin = b
        if best_feat < 0 or best_gain <= 0.0:
            self.value[node] = self._leaf_value(rows)
            return

        go_left = self.Xb[rows, best_feat] <= best_bin
        left_rows = rows[go_left]
        right_rows = rows[~go_left]
        self.feature[node] = best_feat
        self.threshold[node] = float(best_bin)
        left = self._new_node()
        right = self._new_node()
        self.left[node] = left
        self.right[node] = right
        self._split(left, left_rows, depth + 1)
        self._split(right, right_rows, depth + 1)

    def tree(self) -> Tree:
        return Tree(
            feature=np.asarray(self.feature, dtype=np.int32),
            threshold=np.asarray(self.threshold, dtype=np.float64),
            left=np.asarray(self.left, dtype=np.int32),
            right=np.asarray(self.right, dtype=np.int32),
            value=np.asarray(self.value, dtype=np.float64),
        )


def train_gbdt(
    X: np.ndarray,
    y: np.ndarray,
    params: GBDTParams | None = None,
    seed: int = 0,
    sample_weight: np.ndarray | None = None,
) -> GBDTModel:
    """Fit a boosted logistic-loss ensemble; deterministic per seed."""
    params = params or GBDTParams()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or len(X) != len(y):
        raise TrainingError("X must be (n, f) aligned with y")
    w = (np.ones(len(y)) if sample_weight is None
         else np.asarray(sample_weight, dtype=np.float64))
    pos = float(w[y > 0].sum())
    neg = float(w[y <= 0].sum())
    if pos <= 0 or neg <= 0:
        raise TrainingError("training needs both positive and negative samples")

    Xb = np.clip(X, 0, params.max_bins - 1)
    base = float(np.log(pos / neg))
    scores = np.full(len(y), base)
    rng = rng_for(seed, "gbdt")
    model = GBDTModel(base_score=base, params=params, seed=seed,
                      n_features=X.shape[1])
    n = len(y)
    for _ in range(params.n_trees):
        prob = _sigmoid(scores)
        g = w * (prob - y)
        h = np.maximum(w * prob * (1.0 - prob), 1e-12)
        if params.subsample < 1.0:
            rows = np.nonzero(rng.random(n) < params.subsample)[0]
            if rows.size < 2 * params.min_samples_leaf:
                rows = np.arange(n)
        else:
            rows = np.arange(n)
        builder = _TreeBuilder(Xb, g, h, params)
        builder.build(rows)
        tree = builder.tree()
        model.trees.append(tree)
        scores += tree.predict(Xb)
    return model
