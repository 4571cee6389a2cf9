"""Immutable binary decision trees with classification and truth-vector evaluation.

A tree is a ``Split``/``Leaf`` structure. Every split holds one predicate;
its true child is taken when the predicate holds. Inner nodes are ordered
pre-order with the true branch first, which is also the line order of the
textual format, so text positions and truth-vector positions align.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterator, Mapping, Optional, Union

from .schema import DatasetSchema, normalize_token

NUMERIC_OPS = ("<=", "<", ">=", ">")
EQUALITY_OPS = ("==", "!=")
COMPARATORS = NUMERIC_OPS + EQUALITY_OPS

_COMPLEMENT = {"<=": ">", ">": "<=", "<": ">=", ">=": "<", "==": "!=", "!=": "=="}

Value = Union[int, float, str]


class UnknownFeatureError(KeyError):
    """A predicate references a feature absent from the sample."""


def _as_number(value) -> Optional[float]:
    if isinstance(value, bool):
        return float(value)
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            return None
    return None


@dataclass(frozen=True)
class Predicate:
    """A single comparison against one feature, e.g. petal width (cm) <= 0.80."""

    feature: str
    op: str
    value: Value

    def __post_init__(self):
        if self.op not in COMPARATORS:
            raise ValueError(f"unknown comparator {self.op!r}")

    def complement(self) -> "Predicate":
        return Predicate(self.feature, _COMPLEMENT[self.op], self.value)

    def holds_for(self, sample: Mapping[str, Value]) -> bool:
        try:
            observed = sample[self.feature]
        except KeyError:
            raise UnknownFeatureError(self.feature) from None
        if self.op in NUMERIC_OPS:
            left = _as_number(observed)
            right = _as_number(self.value)
            if left is None or right is None:
                raise ValueError(
                    f"comparator {self.op!r} needs numeric operands for "
                    f"{self.feature!r}; got {observed!r} vs {self.value!r}"
                )
            if self.op == "<=":
                return left <= right
            if self.op == "<":
                return left < right
            if self.op == ">=":
                return left >= right
            return left > right
        # Equality: numeric if both sides are numbers, otherwise normalized text.
        if isinstance(self.value, (int, float)) and not isinstance(self.value, bool):
            left = _as_number(observed)
            equal = left is not None and left == float(self.value)
        else:
            equal = normalize_token(str(observed)) == normalize_token(str(self.value))
        return equal if self.op == "==" else not equal


@dataclass(frozen=True)
class Leaf:
    label: str


@dataclass(frozen=True)
class Split:
    predicate: Predicate
    true_child: "Node"
    false_child: "Node"


Node = Union[Split, Leaf]


@dataclass(frozen=True)
class DecisionTree:
    """A binary predicate tree with class-labeled leaves."""

    root: Node

    def inner_nodes(self) -> list[Split]:
        """Pre-order inner nodes, true branch before false branch."""
        out: list[Split] = []

        def walk(node: Node) -> None:
            if isinstance(node, Split):
                out.append(node)
                walk(node.true_child)
                walk(node.false_child)

        walk(self.root)
        return out

    def inner_node_count(self) -> int:
        return len(self.inner_nodes())

    def leaf_count(self) -> int:
        return self.inner_node_count() + 1

    def depth(self) -> int:
        def walk(node: Node) -> int:
            if isinstance(node, Leaf):
                return 0
            return 1 + max(walk(node.true_child), walk(node.false_child))

        return walk(self.root)

    def predict(self, sample: Mapping[str, Value]) -> str:
        node = self.root
        while isinstance(node, Split):
            node = node.true_child if node.predicate.holds_for(sample) else node.false_child
        return node.label

    def truth_vector(self, sample: Mapping[str, Value]) -> tuple[int, ...]:
        """Truth value of every inner node (not only the taken path), in node order."""
        return tuple(int(split.predicate.holds_for(sample)) for split in self.inner_nodes())

    def features_used(self) -> list[str]:
        seen: dict[str, None] = {}
        for split in self.inner_nodes():
            seen.setdefault(split.predicate.feature)
        return list(seen)

    def leaf_labels(self) -> list[str]:
        out: list[str] = []

        def walk(node: Node) -> None:
            if isinstance(node, Leaf):
                out.append(node.label)
            else:
                walk(node.true_child)
                walk(node.false_child)

        walk(self.root)
        return out

    def to_dict(self) -> dict:
        def encode(node: Node) -> dict:
            if isinstance(node, Leaf):
                return {"class": node.label}
            return {
                "predicate": {
                    "feature": node.predicate.feature,
                    "op": node.predicate.op,
                    "value": node.predicate.value,
                },
                "true": encode(node.true_child),
                "false": encode(node.false_child),
            }

        return encode(self.root)

    @classmethod
    def from_dict(cls, payload: dict) -> "DecisionTree":
        def decode(entry: dict) -> Node:
            if "class" in entry:
                return Leaf(entry["class"])
            pred = entry["predicate"]
            return Split(
                Predicate(pred["feature"], pred["op"], pred["value"]),
                decode(entry["true"]),
                decode(entry["false"]),
            )

        return cls(decode(payload))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "DecisionTree":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class Violation:
    kind: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...]

    @property
    def valid(self) -> bool:
        return not self.violations

    def __iter__(self) -> Iterator[Violation]:
        return iter(self.violations)


def validate(
    tree: DecisionTree, schema: DatasetSchema, max_depth: Optional[int] = None
) -> ValidationReport:
    """Check a tree against a schema; violations are data, not errors."""
    violations: list[Violation] = []

    for split in tree.inner_nodes():
        pred = split.predicate
        spec = schema.resolve_feature(pred.feature)
        if spec is None:
            violations.append(
                Violation("unknown-feature", f"feature {pred.feature!r} not in schema")
            )
            continue
        value_is_number = isinstance(pred.value, (int, float)) and not isinstance(pred.value, bool)
        if pred.op in NUMERIC_OPS:
            if not spec.is_numeric or not value_is_number:
                violations.append(
                    Violation(
                        "comparator-mismatch",
                        f"{pred.op!r} on {spec.kind} feature {pred.feature!r} "
                        f"with value {pred.value!r}",
                    )
                )
        else:
            if not value_is_number and spec.kind == "numeric":
                violations.append(
                    Violation(
                        "comparator-mismatch",
                        f"equality against category {pred.value!r} on numeric "
                        f"feature {pred.feature!r}",
                    )
                )

    for label in tree.leaf_labels():
        if schema.resolve_label(label) is None:
            violations.append(
                Violation("unknown-label", f"leaf label {label!r} not in target alphabet")
            )

    if max_depth is not None and tree.depth() > max_depth:
        violations.append(
            Violation("depth-exceeded", f"depth {tree.depth()} exceeds maximum {max_depth}")
        )

    return ValidationReport(tuple(violations))
