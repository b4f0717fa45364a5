"""Regression trees, bagged forests and gradient-boosted trees.

Trees are grown greedily. A node with ``n`` rows and residual sum ``S`` gets
the leaf value ``S / (n + leaf_l2)``; a split is scored by
``S_L^2/(n_L + l2) + S_R^2/(n_R + l2)``, which for ``l2 = 0`` is exactly the
squared-error (variance) reduction of CART. Impure nodes are split whenever
a legal split exists, even at zero gain, so greedy growth can still solve
XOR-type interactions.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..errors import BadCheckpoint, BadConfig

LEAF = -1


@dataclass
class Tree:
    """Flat array representation; ``feature[i] == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        node = np.zeros(len(X), dtype=np.int64)
        active = self.feature[node] != LEAF
        while active.any():
            idx = np.flatnonzero(active)
            cur = node[idx]
            go_left = X[idx, self.feature[cur]] <= self.threshold[cur]
            node[idx] = np.where(go_left, self.left[cur], self.right[cur])
            active = self.feature[node] != LEAF
        return self.value[node]

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def depth(self) -> int:
        depths = {0: 0}
        for i in range(self.n_nodes):
            if self.feature[i] != LEAF:
                depths[int(self.left[i])] = depths[i] + 1
                depths[int(self.right[i])] = depths[i] + 1
        return max(depths.values())

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(
            np.asarray(d["feature"], dtype=np.int64),
            np.asarray(d["threshold"], dtype=np.float64),
            np.asarray(d["left"], dtype=np.int64),
            np.asarray(d["right"], dtype=np.int64),
            np.asarray(d["value"], dtype=np.float64),
        )


def _best_split(X: np.ndarray, y: np.ndarray, features: np.ndarray, min_leaf: int, l2: float):
    """Return (gain, feature, threshold) of the best legal split, or None."""
    n = len(y)
    total = y.sum()
    parent = total * total / (n + l2)
    cols = X[:, features]
    order = np.argsort(cols, axis=0, kind="stable")
    xs = np.take_along_axis(cols, order, axis=0)
    s_left = np.cumsum(y[order], axis=0)[:-1]
    n_left = np.arange(1, n)[:, None]
    # only split between distinct values and respect min_leaf
    ok = (xs[1:] > xs[:-1]) & (n_left >= min_leaf) & (n - n_left >= min_leaf)
    if not ok.any():
        return None
    score = s_left**2 / (n_left + l2) + (total - s_left) ** 2 / (n - n_left + l2)
    score = np.where(ok, score, -np.inf)
    # first maximum in (feature, position) order for a deterministic choice
    flat = int(np.argmax(score.T))
    j, i = divmod(flat, n - 1)
    return score[i, j] - parent, int(features[j]), 0.5 * (xs[i, j] + xs[i + 1, j])


def fit_tree(
    X: np.ndarray,
    y: np.ndarray,
    max_depth: int | None = None,
    min_leaf: int = 1,
    leaf_l2: float = 0.0,
    max_features: int | None = None,
    rng: np.random.Generator | None = None,
) -> Tree:
    """Grow one regression tree. ``max_features`` draws a random feature
    subset at every split (requires ``rng``)."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, p = X.shape
    if n < 1:
        raise BadConfig("cannot fit a tree on zero rows")
    if max_features is not None and max_features < p and rng is None:
        raise BadConfig("feature subsampling needs an rng")
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(rows):
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        value.append(y[rows].sum() / (len(rows) + leaf_l2))
        return len(feature) - 1

    root = new_node(np.arange(n))
    stack = [(root, np.arange(n), 0)]
    while stack:
        node, rows, depth = stack.pop()
        if max_depth is not None and depth >= max_depth:
            continue
        if len(rows) < 2 * min_leaf:
            continue
        yr = y[rows]
        if np.all(yr == yr[0]):
            continue
        if max_features is not None and max_features < p:
            feats = np.sort(rng.choice(p, size=max_features, replace=False))
        else:
            feats = np.arange(p)
        split = _best_split(X[rows], yr, feats, min_leaf, leaf_l2)
        if split is None:
            continue
        _, f, thr = split
        mask = X[rows, f] <= thr
        feature[node], threshold[node] = f, thr
        lnode, rnode = new_node(rows[mask]), new_node(rows[~mask])
        left[node], right[node] = lnode, rnode
        stack.append((rnode, rows[~mask], depth + 1))
        stack.append((lnode, rows[mask], depth + 1))
    return Tree(
        np.asarray(feature, dtype=np.int64),
        np.asarray(threshold),
        np.asarray(left, dtype=np.int64),
        np.asarray(right, dtype=np.int64),
        np.asarray(value),
    )


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 200
    max_depth: int | None = None
    min_leaf: int = 2
    # fraction of features tried per split (<= 1) or an absolute count (> 1)
    features_per_split: float = 1 / 3
    bootstrap: bool = True
    seed: int = 0

    def n_features(self, p: int) -> int:
        if self.features_per_split > 1:
            return min(p, int(self.features_per_split))
        return max(1, int(round(self.features_per_split * p)))

    def validate(self) -> None:
        if self.n_trees < 1 or self.min_leaf < 1:
            raise BadConfig("n_trees and min_leaf must be positive")
        if self.max_depth is not None and self.max_depth < 1:
            raise BadConfig("max_depth must be positive")
        if not self.features_per_split > 0:
            raise BadConfig("features_per_split must be positive")


@dataclass(frozen=True)
class GbtConfig:
    n_rounds: int = 200
    learning_rate: float = 0.05
    max_depth: int | None = 3
    leaf_l2: float = 1.0
    min_leaf: int = 2
    seed: int = 0

    def validate(self) -> None:
        if self.n_rounds < 1 or self.min_leaf < 1:
            raise BadConfig("n_rounds and min_leaf must be positive")
        if not 0 < self.learning_rate <= 1:
            raise BadConfig("shrinkage must lie in (0, 1]")
        if self.leaf_l2 < 0:
            raise BadConfig("leaf_l2 must be non-negative")
        if self.max_depth is not None and self.max_depth < 1:
            raise BadConfig("max_depth must be positive")


@dataclass
class Forest:
    trees: list[Tree]
    config: ForestConfig = field(default_factory=ForestConfig)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.mean([t.predict(X) for t in self.trees], axis=0)


@dataclass
class Booster:
    base_score: float
    trees: list[Tree]
    config: GbtConfig = field(default_factory=GbtConfig)

    def predict(self, X: np.ndarray, n_rounds: int | None = None) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        out = np.full(len(X), self.base_score)
        for t in self.trees[:n_rounds]:
            out += self.config.learning_rate * t.predict(X)
        return out


def fit_forest(X: np.ndarray, y: np.ndarray, cfg: ForestConfig = ForestConfig()) -> Forest:
    """Bagged CART trees; each tree has its own RNG stream spawned from
    ``cfg.seed`` so results do not depend on fitting order."""
    cfg.validate()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, p = X.shape
    if n < cfg.min_leaf:
        raise BadConfig(f"need at least min_leaf={cfg.min_leaf} rows")
    m = cfg.n_features(p)
    trees = []
    for seq in np.random.SeedSequence(cfg.seed).spawn(cfg.n_trees):
        rng = np.random.default_rng(seq)
        rows = rng.integers(0, n, size=n) if cfg.bootstrap else np.arange(n)
        trees.append(fit_tree(X[rows], y[rows], cfg.max_depth, cfg.min_leaf, 0.0, m, rng))
    return Forest(trees, cfg)


def predict_forest(forest: Forest, X: np.ndarray) -> np.ndarray:
    return forest.predict(X)


def fit_gbt(X: np.ndarray, y: np.ndarray, cfg: GbtConfig = GbtConfig()) -> Booster:
    """Stagewise squared-loss boosting: each round fits a tree to the current
    residuals and adds it with shrinkage ``cfg.learning_rate``."""
    cfg.validate()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    base = float(y.mean())
    pred = np.full(len(y), base)
    trees = []
    for _ in range(cfg.n_rounds):
        tree = fit_tree(X, y - pred, cfg.max_depth, cfg.min_leaf, cfg.leaf_l2)
        trees.append(tree)
        pred = pred + cfg.learning_rate * tree.predict(X)
    return Booster(base, trees, cfg)


def predict_gbt(booster: Booster, X: np.ndarray) -> np.ndarray:
    return booster.predict(X)


# -- portable JSON tree-list format

def _config_dict(cfg) -> dict:
    return asdict(cfg)


def model_to_dict(model: Forest | Booster) -> dict:
    if isinstance(model, Forest):
        return {"format": "nanopk-trees/1", "kind": "forest",
                "config": _config_dict(model.config),
                "trees": [t.to_dict() for t in model.trees]}
    return {"format": "nanopk-trees/1", "kind": "booster",
            "config": _config_dict(model.config), "base_score": model.base_score,
            "trees": [t.to_dict() for t in model.trees]}


def model_from_dict(d: dict) -> Forest | Booster:
    try:
        if d.get("format") != "nanopk-trees/1":
            raise BadCheckpoint("unknown tree checkpoint format")
        trees = [Tree.from_dict(t) for t in d["trees"]]
        if d["kind"] == "forest":
            return Forest(trees, ForestConfig(**d["config"]))
        if d["kind"] == "booster":
            return Booster(float(d["base_score"]), trees, GbtConfig(**d["config"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise BadCheckpoint(f"corrupt tree checkpoint: {exc}") from exc
    raise BadCheckpoint(f"unknown tree model kind {d.get('kind')!r}")


def save_trees(path: str | Path, models: dict[str, Forest | Booster]) -> None:
    Path(path).write_text(json.dumps({k: model_to_dict(m) for k, m in models.items()}))


def load_trees(path: str | Path) -> dict[str, Forest | Booster]:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise BadCheckpoint(f"cannot read tree checkpoint {path}: {exc}") from exc
    return {k: model_from_dict(v) for k, v in raw.items()}
