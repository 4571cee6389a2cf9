"""Downstream learners: numpy MLP, greedy tree baseline, random-trees
embedding, and cross-validated grid search.

The MLP is a single ReLU hidden layer with a softmax head, trained by
full-batch gradient descent on cross-entropy plus an L2 weight penalty.
``loss_and_gradients`` is module-level so tests can check the analytic
gradients against finite differences.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .data import Dataset, TooFewSamples
from .forest import ZeroShotForest
from .metrics import macro_f1_score
from .schema import DatasetSchema
from .tree import DecisionTree, Leaf, Predicate, Split

GRID_HIDDEN_SIZES = (10, 25, 50, 75, 100)
GRID_L2_STRENGTHS = (0.0001, 0.001, 0.01, 0.1, 1.0)


class NonFiniteLoss(FloatingPointError):
    pass


class DimensionMismatch(ValueError):
    pass


@dataclass(frozen=True)
class MlpConfig:
    hidden_size: int = 50
    l2_strength: float = 0.0001
    learning_rate: float = 0.01
    max_epochs: int = 2000
    seed: int = 0


def init_params(n_inputs: int, hidden_size: int, n_outputs: int, rng) -> dict:
    """He-scaled weights, zero biases."""
    return {
        "W1": rng.normal(0.0, np.sqrt(2.0 / max(n_inputs, 1)), (n_inputs, hidden_size)),
        "b1": np.zeros(hidden_size),
        "W2": rng.normal(0.0, np.sqrt(2.0 / hidden_size), (hidden_size, n_outputs)),
        "b2": np.zeros(n_outputs),
    }


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def forward(params: dict, X: np.ndarray):
    hidden = np.maximum(X @ params["W1"] + params["b1"], 0.0)
    probabilities = _softmax(hidden @ params["W2"] + params["b2"])
    return hidden, probabilities


def loss_and_gradients(params: dict, X: np.ndarray, Y: np.ndarray, l2_strength: float):
    """Mean cross-entropy plus l2_strength * (|W1|^2 + |W2|^2), with gradients.

    Y is one-hot, shape (n_samples, n_classes). Biases are not penalized.
    """
    n = X.shape[0]
    hidden, probs = forward(params, X)
    ce = -np.mean(np.log(np.clip((probs * Y).sum(axis=1), 1e-12, None)))
    penalty = l2_strength * (np.sum(params["W1"] ** 2) + np.sum(params["W2"] ** 2))
    loss = ce + penalty

    d_logits = (probs - Y) / n
    d_W2 = hidden.T @ d_logits + 2 * l2_strength * params["W2"]
    d_b2 = d_logits.sum(axis=0)
    d_hidden = (d_logits @ params["W2"].T) * (hidden > 0)
    d_W1 = X.T @ d_hidden + 2 * l2_strength * params["W1"]
    d_b1 = d_hidden.sum(axis=0)
    return float(loss), {"W1": d_W1, "b1": d_b1, "W2": d_W2, "b2": d_b2}


class MlpClassifier(ClassifierMixin, BaseEstimator):
    """Single-hidden-layer softmax classifier, deterministic under seed.

    Early stopping watches the training loss: once it improves by less than
    ``tol`` over ``patience`` consecutive epochs, training ends. Prediction
    is the argmax row class; exact ties resolve to the earliest class in
    ``class_order`` (or sorted label order when unset).
    """

    def __init__(
        self,
        hidden_size: int = 50,
        l2_strength: float = 0.0001,
        learning_rate: float = 0.01,
        max_epochs: int = 2000,
        seed: int = 0,
        tol: float = 1e-6,
        patience: int = 20,
        class_order: Optional[Sequence] = None,
    ):
        self.hidden_size = hidden_size
        self.l2_strength = l2_strength
        self.learning_rate = learning_rate
        self.max_epochs = max_epochs
        self.seed = seed
        self.tol = tol
        self.patience = patience
        self.class_order = class_order

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        if not np.all(np.isfinite(X)):
            raise ValueError("design matrix contains non-finite values")
        y = list(y)
        observed = set(y)
        if self.class_order is not None:
            classes = [c for c in self.class_order if c in observed]
            stray = observed - set(classes)
            if stray:
                raise ValueError(f"labels outside class_order: {sorted(map(str, stray))}")
        else:
            classes = sorted(observed)
        if len(classes) < 2:
            raise ValueError(f"need >= 2 classes, got {classes}")
        self.classes_ = list(classes)
        index = {label: i for i, label in enumerate(self.classes_)}
        Y = np.zeros((len(y), len(self.classes_)))
        Y[np.arange(len(y)), [index[label] for label in y]] = 1.0

        rng = np.random.default_rng(self.seed)
        params = init_params(X.shape[1], self.hidden_size, len(self.classes_), rng)
        history = []
        for epoch in range(self.max_epochs):
            loss, grads = loss_and_gradients(params, X, Y, self.l2_strength)
            if not np.isfinite(loss):
                raise NonFiniteLoss(f"loss became non-finite at epoch {epoch}")
            history.append(loss)
            if len(history) > self.patience and history[-1 - self.patience] - loss < self.tol:
                break
            for key in params:
                params[key] = params[key] - self.learning_rate * grads[key]
        self.params_ = params
        self.loss_curve_ = history
        self.n_features_in_ = X.shape[1]
        return self

    def _check_matrix(self, X) -> np.ndarray:
        check_is_fitted(self, "params_")
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features_in_:
            raise DimensionMismatch(
                f"expected {self.n_features_in_} columns, got {X.shape[1] if X.ndim == 2 else X.shape}"
            )
        return X

    def predict_proba(self, X) -> np.ndarray:
        return forward(self.params_, self._check_matrix(X))[1]

    def predict(self, X) -> list:
        probs = self.predict_proba(X)
        return [self.classes_[i] for i in np.argmax(probs, axis=1)]

    def to_dict(self) -> dict:
        check_is_fitted(self, "params_")
        return {
            "classes": list(map(str, self.classes_)),
            "shapes": {key: list(value.shape) for key, value in self.params_.items()},
            "weights": {key: value.ravel().tolist() for key, value in self.params_.items()},
        }

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(self.to_dict(), handle)

    def load_params(self, payload: dict) -> "MlpClassifier":
        self.classes_ = list(payload["classes"])
        self.params_ = {
            key: np.asarray(payload["weights"][key]).reshape(payload["shapes"][key])
            for key in payload["weights"]
        }
        self.n_features_in_ = self.params_["W1"].shape[0]
        return self


def mlp_fit(X, y, config: MlpConfig, class_order: Optional[Sequence] = None) -> MlpClassifier:
    return MlpClassifier(
        hidden_size=config.hidden_size,
        l2_strength=config.l2_strength,
        learning_rate=config.learning_rate,
        max_epochs=config.max_epochs,
        seed=config.seed,
        class_order=class_order,
    ).fit(X, y)


def mlp_predict(model: MlpClassifier, X) -> list:
    return model.predict(X)


@dataclass(frozen=True)
class GreedyTreeConfig:
    max_depth: int = 2
    min_samples_leaf: int = 1


def _gini(labels: Sequence) -> float:
    counts = np.array(list(Counter(labels).values()), dtype=float)
    fractions = counts / counts.sum()
    return float(1.0 - np.sum(fractions**2))


def _majority(labels: Sequence, label_order: Sequence) -> object:
    counts = Counter(labels)
    best = max(counts.values())
    ranking = {label: i for i, label in enumerate(label_order)}
    return min(
        (label for label, count in counts.items() if count == best),
        key=lambda label: ranking.get(label, len(ranking)),
    )


def _candidate_predicates(feature, values):
    if feature.is_numeric:
        unique = sorted(set(values))
        return [
            Predicate(feature.name, "<=", (a + b) / 2.0) for a, b in zip(unique, unique[1:])
        ]
    order = list(feature.categories or [])
    observed = set(values)
    categories = [c for c in order if c in observed] + sorted(observed - set(order))
    return [Predicate(feature.name, "==", c) for c in categories]


def _best_split(rows, labels, schema: DatasetSchema, min_samples_leaf: int):
    """Exhaustive Gini search; ties keep the earliest (feature, threshold)."""
    parent = _gini(labels)
    total = len(labels)
    best = None
    best_gain = 1e-12  # no split unless impurity strictly improves
    for feature in schema.features:
        values = [row[feature.name] for row in rows]
        for predicate in _candidate_predicates(feature, values):
            mask = [predicate.holds_for(row) for row in rows]
            left = [label for label, hit in zip(labels, mask) if hit]
            right = [label for label, hit in zip(labels, mask) if not hit]
            if len(left) < min_samples_leaf or len(right) < min_samples_leaf:
                continue
            children = (len(left) * _gini(left) + len(right) * _gini(right)) / total
            gain = parent - children
            if gain > best_gain:
                best_gain = gain
                best = (predicate, mask)
    return best


class GreedyTreeClassifier(ClassifierMixin, BaseEstimator):
    """Top-down Gini tree over raw rows, the data-driven shallow baseline.

    Numeric candidate thresholds are midpoints of consecutive sorted unique
    values; nominal candidates are per-category equality tests. The fitted
    tree is a plain DecisionTree, so predict and truth_vector both apply.
    """

    def __init__(self, schema: Optional[DatasetSchema] = None, max_depth: int = 2,
                 min_samples_leaf: int = 1):
        self.schema = schema
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf

    def fit(self, X, y):
        if self.schema is None:
            raise ValueError("schema is required")
        rows, labels = list(X), list(y)
        if not rows:
            raise ValueError("empty training set")
        label_order = list(self.schema.target.labels)

        def grow(rows, labels, depth):
            if len(set(labels)) == 1 or depth >= self.max_depth:
                return Leaf(_majority(labels, label_order))
            found = _best_split(rows, labels, self.schema, self.min_samples_leaf)
            if found is None:
                return Leaf(_majority(labels, label_order))
            predicate, mask = found
            left_rows = [row for row, hit in zip(rows, mask) if hit]
            left_labels = [label for label, hit in zip(labels, mask) if hit]
            right_rows = [row for row, hit in zip(rows, mask) if not hit]
            right_labels = [label for label, hit in zip(labels, mask) if not hit]
            return Split(
                predicate,
                grow(left_rows, left_labels, depth + 1),
                grow(right_rows, right_labels, depth + 1),
            )

        self.tree_ = DecisionTree(grow(rows, labels, 0))
        self.classes_ = label_order
        return self

    def predict(self, X) -> list:
        check_is_fitted(self, "tree_")
        return [self.tree_.predict(row) for row in X]


def greedy_tree_fit(dataset: Dataset, config: GreedyTreeConfig = GreedyTreeConfig()) -> DecisionTree:
    model = GreedyTreeClassifier(
        schema=dataset.schema,
        max_depth=config.max_depth,
        min_samples_leaf=config.min_samples_leaf,
    ).fit(dataset.rows, dataset.labels)
    return model.tree_


@dataclass(frozen=True)
class RandomTreesConfig:
    n_trees: int = 5
    max_depth: int = 5
    seed: int = 0


def random_trees_embedding(
    schema: DatasetSchema, train: Dataset, config: RandomTreesConfig = RandomTreesConfig()
) -> ZeroShotForest:
    """Label-free random forest for embedding baselines.

    Each node picks a feature uniformly; numeric thresholds are uniform in
    the train range, nominal tests pick a train-observed category uniformly.
    Trees are complete to max_depth. Leaves carry the global majority label
    only to satisfy the tree type; embeddings never read them.
    """
    if not train.rows:
        raise ValueError("empty training set")
    rng = np.random.default_rng(config.seed)
    fill = _majority(train.labels, schema.target.labels)
    ranges = {}
    for feature in schema.features:
        values = [row[feature.name] for row in train.rows if row[feature.name] is not None]
        if not values:
            continue
        if feature.is_numeric:
            ranges[feature.name] = ("numeric", float(min(values)), float(max(values)))
        else:
            ranges[feature.name] = ("nominal", sorted(set(values)))
    names = sorted(ranges)

    def grow(depth: int):
        if depth >= config.max_depth:
            return Leaf(fill)
        name = names[rng.integers(len(names))]
        kind = ranges[name][0]
        if kind == "numeric":
            low, high = ranges[name][1], ranges[name][2]
            predicate = Predicate(name, "<=", float(rng.uniform(low, high)))
        else:
            categories = ranges[name][1]
            predicate = Predicate(name, "==", categories[rng.integers(len(categories))])
        return Split(predicate, grow(depth + 1), grow(depth + 1))

    trees = tuple(DecisionTree(grow(0)) for _ in range(config.n_trees))
    provenance = tuple(
        {"provider": "random-trees", "seed": config.seed, "index": i}
        for i in range(config.n_trees)
    )
    return ZeroShotForest(trees=trees, provenance=provenance)


def stratified_folds(labels: Sequence, folds: int, seed: int = 0,
                     label_order: Optional[Sequence] = None) -> list:
    """Disjoint, exhaustive fold index lists; each class dealt round-robin."""
    order = list(label_order) if label_order is not None else sorted(set(labels))
    by_class: dict = {label: [] for label in order}
    for index, label in enumerate(labels):
        by_class.setdefault(label, []).append(index)
    rng = np.random.default_rng(seed)
    assignments: list = [[] for _ in range(folds)]
    for label, indices in by_class.items():
        if not indices:
            continue
        if len(indices) < folds:
            raise TooFewSamples(
                f"class {label!r} has {len(indices)} sample(s); need >= {folds} for {folds}-fold CV"
            )
        indices = np.array(indices)
        rng.shuffle(indices)
        for position, index in enumerate(indices.tolist()):
            assignments[position % folds].append(index)
    return [sorted(fold) for fold in assignments]


def default_mlp_grid(seed: int = 0) -> list:
    """Full hidden-size x L2 grid, hidden size as the outer loop."""
    return [
        MlpConfig(hidden_size=h, l2_strength=l2, seed=seed)
        for h in GRID_HIDDEN_SIZES
        for l2 in GRID_L2_STRENGTHS
    ]


def cv_grid_search(
    X,
    y,
    grid: Optional[Sequence[MlpConfig]] = None,
    folds: int = 3,
    seed: int = 0,
    class_order: Optional[Sequence] = None,
):
    """Best config by mean validation macro F1 over stratified folds.

    Ties keep the earliest config in grid order. Returns (config, score).
    """
    X = np.asarray(X, dtype=float)
    y = list(y)
    if grid is None:
        grid = default_mlp_grid(seed=seed)
    fold_indices = stratified_folds(y, folds, seed=seed, label_order=class_order)
    alphabet = list(class_order) if class_order is not None else sorted(set(y))

    best_config, best_score = None, -1.0
    for config in grid:
        fold_scores = []
        for held_out in fold_indices:
            held = set(held_out)
            train_idx = [i for i in range(len(y)) if i not in held]
            model = mlp_fit(
                X[train_idx], [y[i] for i in train_idx], config, class_order=alphabet
            )
            predicted = model.predict(X[held_out])
            fold_scores.append(
                macro_f1_score([y[i] for i in held_out], predicted, labels=alphabet)
            )
        score = float(np.mean(fold_scores))
        if score > best_score:
            best_config, best_score = config, score
    return best_config, best_score
