"""Dataset schemas: named, typed features plus a target label alphabet.

Feature names are the join key between tabular data, textual trees, and
prompts, so all matching here is case-insensitive with whitespace trimmed
and an optional trailing bracket annotation (unit or category list)
stripped.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

FEATURE_KINDS = ("numeric", "nominal", "ordinal")

_TRAILING_ANNOTATION = re.compile(r"\s*\([^()]*\)\s*$")


def normalize_token(text: str) -> str:
    """Trim and casefold a name/value token for comparison."""
    return text.strip().casefold()


def strip_annotation(text: str) -> str:
    """Drop one trailing parenthesized annotation, e.g. 'petal width (cm)' -> 'petal width'."""
    return _TRAILING_ANNOTATION.sub("", text).strip()


@dataclass(frozen=True)
class FeatureSpec:
    """One named feature: numeric, nominal, or ordinal."""

    name: str
    kind: str = "numeric"
    unit: Optional[str] = None
    categories: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        if not self.name or not self.name.strip():
            raise ValueError("feature name must be non-empty")
        if self.kind not in FEATURE_KINDS:
            raise ValueError(f"unknown feature kind {self.kind!r} for {self.name!r}")
        if self.categories is not None:
            object.__setattr__(self, "categories", tuple(self.categories))
        if self.kind in ("nominal", "ordinal") and not self.categories:
            raise ValueError(f"{self.kind} feature {self.name!r} must declare categories")

    @property
    def is_numeric(self) -> bool:
        """Ordinal features are coded and treated as numeric downstream."""
        return self.kind in ("numeric", "ordinal")

    @property
    def annotated_name(self) -> str:
        """Name with unit or category values in brackets, as shown in prompts."""
        if self.unit:
            return f"{self.name} ({self.unit})"
        if self.kind == "nominal" and self.categories:
            return f"{self.name} ({' / '.join(self.categories)})"
        return self.name


@dataclass(frozen=True)
class TargetSpec:
    name: str
    labels: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        if len(self.labels) < 1:
            raise ValueError("target must declare at least one label")
        if len({normalize_token(l) for l in self.labels}) != len(self.labels):
            raise ValueError("target labels must be distinct (case-insensitively)")


@dataclass(frozen=True)
class DatasetSchema:
    """Feature list plus target; the single source of truth for name matching."""

    features: tuple[FeatureSpec, ...]
    target: TargetSpec
    _feature_index: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(self.features))
        names = [normalize_token(f.name) for f in self.features]
        if len(set(names)) != len(names):
            raise ValueError("feature names must be unique (case-insensitively)")
        index = {}
        for spec in self.features:
            # Later keys never overwrite earlier ones, so exact names win
            # over annotation-stripped aliases.
            for key in (
                normalize_token(spec.name),
                normalize_token(spec.annotated_name),
                normalize_token(strip_annotation(spec.name)),
            ):
                index.setdefault(key, spec)
        object.__setattr__(self, "_feature_index", index)

    @property
    def feature_names(self) -> list[str]:
        return [f.name for f in self.features]

    def feature(self, name: str) -> FeatureSpec:
        spec = self.resolve_feature(name)
        if spec is None:
            raise KeyError(name)
        return spec

    def resolve_feature(self, token: str) -> Optional[FeatureSpec]:
        """Match a raw feature token against the schema, or None if unknown."""
        for key in (normalize_token(token), normalize_token(strip_annotation(token))):
            if key in self._feature_index:
                return self._feature_index[key]
        return None

    def resolve_label(self, token: str) -> Optional[str]:
        """Canonical spelling of a target label, or None if unknown."""
        wanted = normalize_token(token)
        for label in self.target.labels:
            if normalize_token(label) == wanted:
                return label
        return None

    def ordinal_code(self, feature: FeatureSpec, value: str) -> Optional[int]:
        """Rank of an ordinal category value, or None if not declared."""
        wanted = normalize_token(value)
        for i, cat in enumerate(feature.categories or ()):
            if normalize_token(cat) == wanted:
                return i
        return None

    def to_dict(self) -> dict:
        features = []
        for f in self.features:
            entry: dict = {"name": f.name, "kind": f.kind}
            if f.unit is not None:
                entry["unit"] = f.unit
            if f.categories is not None:
                entry["categories"] = list(f.categories)
            features.append(entry)
        return {
            "target": {"name": self.target.name, "labels": list(self.target.labels)},
            "features": features,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "DatasetSchema":
        target = TargetSpec(payload["target"]["name"], tuple(payload["target"]["labels"]))
        features = tuple(
            FeatureSpec(
                name=entry["name"],
                kind=entry.get("kind", "numeric"),
                unit=entry.get("unit"),
                categories=tuple(entry["categories"]) if "categories" in entry else None,
            )
            for entry in payload["features"]
        )
        return cls(features=features, target=target)

    @classmethod
    def load(cls, path) -> "DatasetSchema":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")


def annotated_feature_line(features: Sequence[FeatureSpec]) -> str:
    """Comma-separated annotated names, the 'Features:' line of a prompt."""
    return ", ".join(f.annotated_name for f in features)
