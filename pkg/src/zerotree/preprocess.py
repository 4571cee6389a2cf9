"""Train-fitted preprocessing: kNN imputation, one-hot encoding, min-max scaling.

Both transformers fit on the train partition only; test rows never
influence neighbor pools, category vocabularies, or scaling bounds.
"""

from __future__ import annotations

from collections import Counter

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .data import Dataset


class AllMissingColumn(ValueError):
    pass


class KnnImputer(TransformerMixin, BaseEstimator):
    """Fill missing cells from the k nearest train rows.

    Distance is Euclidean over the numeric columns observed in both rows,
    min-max normalized by train bounds; rows sharing no observed numeric
    column sit at infinite distance. Numeric gaps take the neighbor mean,
    nominal gaps the neighbor mode (ties to the smallest value). Ties in
    distance break by train row order, so imputation is deterministic.
    """

    def __init__(self, k: int = 10):
        self.k = k

    def fit(self, dataset: Dataset, y=None):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        schema = dataset.schema
        self.schema_ = schema
        self.train_rows_ = [dict(row) for row in dataset.rows]
        self.numeric_names_ = [f.name for f in schema.features if f.is_numeric]
        self.nominal_names_ = [f.name for f in schema.features if not f.is_numeric]

        for feature in schema.features:
            observed = [row[feature.name] for row in dataset.rows if row[feature.name] is not None]
            if not observed:
                raise AllMissingColumn(f"column {feature.name!r} has no observed train values")

        self.bounds_ = {}
        for name in self.numeric_names_:
            values = [row[name] for row in dataset.rows if row[name] is not None]
            self.bounds_[name] = (min(values), max(values))
        self._train_matrix_ = self._normalized_matrix(dataset.rows)
        return self

    def _normalized_matrix(self, rows) -> np.ndarray:
        out = np.full((len(rows), len(self.numeric_names_)), np.nan)
        for j, name in enumerate(self.numeric_names_):
            low, high = self.bounds_[name]
            span = high - low
            for i, row in enumerate(rows):
                value = row.get(name)
                if value is None:
                    continue
                out[i, j] = (value - low) / span if span > 0 else 0.0
        return out

    def _distances(self, vector: np.ndarray) -> np.ndarray:
        diff = self._train_matrix_ - vector  # NaN wherever either side is missing
        shared = ~np.isnan(diff)
        squared = np.where(shared, diff, 0.0) ** 2
        dist = np.sqrt(squared.sum(axis=1))
        dist[~shared.any(axis=1)] = np.inf
        return dist

    def _fill(self, name: str, distances: np.ndarray):
        candidates = [
            (distances[i], i, row[name])
            for i, row in enumerate(self.train_rows_)
            if row[name] is not None
        ]
        candidates.sort(key=lambda item: (item[0], item[1]))
        nearest = candidates[: min(self.k, len(candidates))]
        values = [value for _, _, value in nearest]
        if name in self.numeric_names_:
            return float(np.mean(values))
        counts = Counter(values)
        best = max(counts.values())
        return min(value for value, count in counts.items() if count == best)

    def transform(self, dataset: Dataset) -> Dataset:
        check_is_fitted(self, "train_rows_")
        rows = []
        for row in dataset.rows:
            if all(row.get(name) is not None for name in row):
                rows.append(dict(row))
                continue
            vector = self._normalized_matrix([row])[0]
            distances = self._distances(vector)
            filled = dict(row)
            for name, value in row.items():
                if value is None:
                    filled[name] = self._fill(name, distances)
            rows.append(filled)
        return Dataset(
            schema=dataset.schema,
            rows=rows,
            labels=list(dataset.labels),
            source=dataset.source,
            lineage=dataset.lineage,
        )


def impute_knn(train: Dataset, apply_to: Dataset, k: int = 10) -> Dataset:
    return KnnImputer(k=k).fit(train).transform(apply_to)


class TabularEncoder(TransformerMixin, BaseEstimator):
    """Raw rows to a float design matrix: one-hot nominals, min-max numerics.

    The one-hot vocabulary is the train-observed categories (schema-declared
    order first, then extras in sorted order); unseen test categories encode
    as an all-zero block. Numeric columns map train min/max to 0/1 with a
    zero-denominator guard for constant columns; test values are not clipped.
    """

    def fit(self, dataset: Dataset, y=None):
        schema = dataset.schema
        self.schema_ = schema
        self.bounds_ = {}
        self.categories_ = {}
        for feature in schema.features:
            values = [row[feature.name] for row in dataset.rows]
            if any(value is None for value in values):
                raise ValueError(f"column {feature.name!r} still has missing values; impute first")
            if feature.is_numeric:
                self.bounds_[feature.name] = (min(values), max(values))
            else:
                observed = set(values)
                declared = [c for c in (feature.categories or []) if c in observed]
                extras = sorted(observed - set(declared))
                self.categories_[feature.name] = declared + extras
        return self

    def transform(self, dataset: Dataset) -> np.ndarray:
        check_is_fitted(self, "schema_")
        columns = []
        for feature in self.schema_.features:
            values = [row[feature.name] for row in dataset.rows]
            if any(value is None for value in values):
                raise ValueError(f"column {feature.name!r} still has missing values; impute first")
            if feature.is_numeric:
                low, high = self.bounds_[feature.name]
                span = high - low
                scaled = [(v - low) / span if span > 0 else 0.0 for v in values]
                columns.append(np.asarray(scaled, dtype=float).reshape(-1, 1))
            else:
                vocabulary = self.categories_[feature.name]
                block = np.zeros((len(values), len(vocabulary)))
                for i, value in enumerate(values):
                    if value in vocabulary:
                        block[i, vocabulary.index(value)] = 1.0
                columns.append(block)
        if not columns:
            return np.zeros((len(dataset.rows), 0))
        return np.hstack(columns)

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "schema_")
        names = []
        for feature in self.schema_.features:
            if feature.is_numeric:
                names.append(feature.name)
            else:
                names.extend(f"{feature.name}={c}" for c in self.categories_[feature.name])
        return np.asarray(names, dtype=object)


def encode_and_scale(train: Dataset, apply_to: Dataset) -> np.ndarray:
    return TabularEncoder().fit(train).transform(apply_to)
