"""Shared fixtures: the iris example, a rich mixed schema, random tree makers."""

from __future__ import annotations

import numpy as np
import pytest

from zerotree.schema import DatasetSchema, FeatureSpec, TargetSpec
from zerotree.text_format import parse_tree
from zerotree.tree import DecisionTree, Leaf, Predicate, Split

IRIS_TEXT = """|- petal width (cm) <= 0.80
| |- class: setosa
|- petal width (cm) > 0.80
| |- petal width (cm) <= 1.75
| | |- class: versicolor
| |- petal width (cm) > 1.75
| | |- class: virginica"""


def make_iris_schema() -> DatasetSchema:
    # names carry the unit annotation verbatim, as the canonical example writes them
    return DatasetSchema(
        features=(
            FeatureSpec("sepal length (cm)"),
            FeatureSpec("sepal width (cm)"),
            FeatureSpec("petal length (cm)"),
            FeatureSpec("petal width (cm)"),
        ),
        target=TargetSpec("species", ("setosa", "versicolor", "virginica")),
    )


@pytest.fixture
def iris_schema() -> DatasetSchema:
    return make_iris_schema()


@pytest.fixture
def iris_text() -> str:
    return IRIS_TEXT


@pytest.fixture
def iris_tree(iris_schema) -> DecisionTree:
    return parse_tree(IRIS_TEXT, iris_schema)


def make_rich_schema() -> DatasetSchema:
    """Ten mixed features with annotation-bearing names and nominal vocabularies."""
    return DatasetSchema(
        features=(
            FeatureSpec("age (years)"),
            FeatureSpec("resting heart rate (bpm)"),
            FeatureSpec("speed (km/h)"),
            FeatureSpec("weight"),
            FeatureSpec("temperature (C)"),
            FeatureSpec("score"),
            FeatureSpec("color", kind="nominal", categories=("red", "green", "blue")),
            FeatureSpec("size", kind="nominal", categories=("small", "medium", "large")),
            FeatureSpec("grade", kind="nominal", categories=("low", "high")),
            FeatureSpec("shape", kind="nominal", categories=("round", "square")),
        ),
        target=TargetSpec("outcome", ("alpha", "beta", "gamma")),
    )


def random_tree(rng: np.random.Generator, schema: DatasetSchema, max_depth: int = 5,
                split_chance: float = 0.7) -> DecisionTree:
    """Schema-conformant random tree; thresholds and categories stay parseable."""
    labels = schema.target.labels

    def grow(depth: int):
        if depth >= max_depth or rng.random() > split_chance:
            return Leaf(labels[rng.integers(len(labels))])
        feature = schema.features[rng.integers(len(schema.features))]
        if feature.is_numeric:
            op = ("<=", "<", ">", ">=")[rng.integers(4)]
            value = float(np.round(rng.uniform(-50, 150), 2))
        else:
            op = ("==", "!=")[rng.integers(2)]
            value = feature.categories[rng.integers(len(feature.categories))]
        return Split(Predicate(feature.name, op, value), grow(depth + 1), grow(depth + 1))

    node = grow(0)
    if isinstance(node, Leaf):  # keep at least one split so most trees are non-trivial
        node = Split(
            Predicate(schema.features[0].name, "<=", 1.0),
            node,
            Leaf(labels[rng.integers(len(labels))]),
        )
    return DecisionTree(node)


def random_sample(rng: np.random.Generator, schema: DatasetSchema) -> dict:
    sample = {}
    for feature in schema.features:
        if feature.is_numeric:
            sample[feature.name] = float(np.round(rng.uniform(-60, 160), 3))
        else:
            sample[feature.name] = feature.categories[rng.integers(len(feature.categories))]
    return sample
