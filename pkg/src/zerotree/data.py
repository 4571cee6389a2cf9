"""Dataset ingestion and repeated stratified train/test splitting.

Rows are mappings from feature name to raw value; missing cells (empty
string or "?") load as None. Ordinal values are stored as their position
in the declared category order so they behave numerically downstream.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .schema import DatasetSchema

MISSING_TOKENS = ("", "?")


class SchemaMismatch(ValueError):
    pass


class TooFewSamples(ValueError):
    pass


class CellTypeError(TypeError):
    """A cell whose text cannot be read under the column's declared kind."""

    def __init__(self, row: int, column: str, message: str):
        super().__init__(f"row {row}, column {column!r}: {message}")
        self.row = row
        self.column = column


@dataclass
class Dataset:
    schema: DatasetSchema
    rows: list  # feature dicts, None marks a missing cell
    labels: list  # target values, parallel to rows
    source: Optional[str] = None
    lineage: str = ""

    def __post_init__(self):
        if len(self.rows) != len(self.labels):
            raise ValueError(f"{len(self.rows)} rows but {len(self.labels)} labels")

    def __len__(self):
        return len(self.rows)

    def subset(self, indices: Sequence[int], lineage: str = "") -> "Dataset":
        return Dataset(
            schema=self.schema,
            rows=[self.rows[i] for i in indices],
            labels=[self.labels[i] for i in indices],
            source=self.source,
            lineage=lineage or self.lineage,
        )

    def class_counts(self) -> dict:
        counts = {label: 0 for label in self.schema.target.labels}
        for label in self.labels:
            counts[label] = counts.get(label, 0) + 1
        return counts

    def has_missing(self) -> bool:
        return any(value is None for row in self.rows for value in row.values())


def _parse_cell(schema: DatasetSchema, feature_name: str, token: str, row_number: int):
    token = token.strip()
    if token in MISSING_TOKENS:
        return None
    feature = schema.feature(feature_name)
    if feature.kind == "numeric":
        try:
            return float(token)
        except ValueError:
            raise CellTypeError(row_number, feature_name, f"not numeric: {token!r}")
    if feature.kind == "ordinal":
        try:
            return float(token)
        except ValueError:
            pass
        code = schema.ordinal_code(feature, token)
        if code is None:
            raise CellTypeError(
                row_number, feature_name, f"not numeric or a declared level: {token!r}"
            )
        return float(code)
    return token


def load_csv(path, schema_path=None, schema: Optional[DatasetSchema] = None) -> Dataset:
    """Read a CSV with a schema sidecar into a typed dataset.

    The header must cover every schema feature plus the target column;
    unknown extra columns are rejected rather than silently dropped.
    """
    if schema is None:
        if schema_path is None:
            raise ValueError("either schema_path or schema is required")
        schema = DatasetSchema.load(schema_path)

    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaMismatch(f"{path}: empty file")
        raw_rows = list(reader)

    column_map = {}  # column index -> schema feature name, or None for the target
    target_seen = False
    from .schema import normalize_token

    for index, name in enumerate(header):
        if normalize_token(name) == normalize_token(schema.target.name):
            if target_seen:
                raise SchemaMismatch(f"duplicate target column {name!r}")
            column_map[index] = None
            target_seen = True
            continue
        feature = schema.resolve_feature(name)
        if feature is None:
            raise SchemaMismatch(f"column {name!r} not in schema")
        if feature.name in column_map.values():
            raise SchemaMismatch(f"duplicate column for feature {feature.name!r}")
        column_map[index] = feature.name
    if not target_seen:
        raise SchemaMismatch(f"target column {schema.target.name!r} missing from header")
    covered = {name for name in column_map.values() if name is not None}
    absent = [f.name for f in schema.features if f.name not in covered]
    if absent:
        raise SchemaMismatch(f"schema features missing from header: {absent}")

    rows, labels = [], []
    for row_number, record in enumerate(raw_rows, start=2):  # header is line 1
        if len(record) != len(header):
            raise SchemaMismatch(f"row {row_number}: expected {len(header)} cells")
        sample = {}
        label = None
        for index, token in enumerate(record):
            name = column_map[index]
            if name is None:
                token = token.strip()
                resolved = schema.resolve_label(token)
                if resolved is None:
                    raise CellTypeError(
                        row_number, schema.target.name, f"unknown label {token!r}"
                    )
                label = resolved
            else:
                sample[name] = _parse_cell(schema, name, token, row_number)
        rows.append(sample)
        labels.append(label)
    return Dataset(schema=schema, rows=rows, labels=labels, source=str(path))


@dataclass(frozen=True)
class SplitPlan:
    train_fraction: float = 0.67
    repeats: int = 5
    seed: int = 0
    stratify: bool = True

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError(f"train_fraction must be in (0, 1), got {self.train_fraction}")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")


def _stratified_indices(labels, label_order, fraction, rng):
    """Per-class largest-remainder allocation toward round(fraction * N) train rows."""
    by_class = {label: [] for label in label_order}
    for index, label in enumerate(labels):
        by_class.setdefault(label, []).append(index)
    order = [label for label in by_class if by_class[label]]
    for label in order:
        if len(by_class[label]) < 2:
            raise TooFewSamples(
                f"class {label!r} has {len(by_class[label])} sample(s); need >= 2"
            )

    target = round(fraction * len(labels))
    sizes = {label: len(by_class[label]) for label in order}
    exact = {label: fraction * sizes[label] for label in order}
    quota = {label: int(np.floor(exact[label])) for label in order}
    need = target - sum(quota.values())
    by_remainder = sorted(
        order, key=lambda lab: (-(exact[lab] - quota[lab]), -sizes[lab], order.index(lab))
    )
    for label in by_remainder[:need]:
        quota[label] += 1
    for label in order:  # each class must reach both partitions
        quota[label] = min(max(quota[label], 1), sizes[label] - 1)
    drift = target - sum(quota.values())
    adjustable = sorted(order, key=lambda lab: (-sizes[lab], order.index(lab)))
    while drift != 0:
        moved = False
        for label in adjustable:
            if drift > 0 and quota[label] < sizes[label] - 1:
                quota[label] += 1
                drift -= 1
                moved = True
            elif drift < 0 and quota[label] > 1:
                quota[label] -= 1
                drift += 1
                moved = True
            if drift == 0:
                break
        if not moved:  # clamping left no room; accept the residual drift
            break

    train, test = [], []
    for label in order:
        indices = np.array(by_class[label])
        rng.shuffle(indices)
        train.extend(indices[: quota[label]].tolist())
        test.extend(indices[quota[label] :].tolist())
    return sorted(train), sorted(test)


def split_indices(labels, label_order, fraction, seed, repeat, stratify=True):
    """Deterministic (train, test) index lists for one repeat."""
    rng = np.random.default_rng([seed, repeat])
    if stratify:
        return _stratified_indices(labels, label_order, fraction, rng)
    indices = np.arange(len(labels))
    rng.shuffle(indices)
    cut = round(fraction * len(labels))
    return sorted(indices[:cut].tolist()), sorted(indices[cut:].tolist())


def make_splits(dataset: Dataset, plan: SplitPlan) -> list:
    """(train, test) dataset pairs, one per repeat, stratified by label."""
    pairs = []
    for repeat in range(plan.repeats):
        train_idx, test_idx = split_indices(
            dataset.labels,
            dataset.schema.target.labels,
            plan.train_fraction,
            plan.seed,
            repeat,
            stratify=plan.stratify,
        )
        tag = f"fraction={plan.train_fraction} seed={plan.seed} repeat={repeat}"
        pairs.append(
            (
                dataset.subset(train_idx, lineage=f"train {tag}"),
                dataset.subset(test_idx, lineage=f"test {tag}"),
            )
        )
    return pairs
