"""Decision forests sampled from a chat model and their binary embeddings.

A forest is an ordered list of trees. Embedding a sample concatenates the
truth vectors of the trees' inner nodes, giving a vector in {0,1}^(n1+...+nm).
Bits are computed on raw feature values, because tree thresholds live in
original units; the augmented design matrix appends those bits to the
encoded, scaled columns used by downstream models.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .induction import DEFAULT_MAX_EXTRA_ATTEMPTS, InducedTree, PromptSpec, induce_tree
from .providers import CompletionProvider
from .schema import DatasetSchema
from .tree import DecisionTree


@dataclass(frozen=True)
class ZeroShotForest:
    trees: tuple
    provenance: tuple = ()  # per-tree metadata dicts, parallel to trees when present

    def __post_init__(self):
        object.__setattr__(self, "trees", tuple(self.trees))
        object.__setattr__(self, "provenance", tuple(self.provenance))
        if not self.trees:
            raise ValueError("a forest holds at least one tree")
        if self.provenance and len(self.provenance) != len(self.trees):
            raise ValueError("provenance must be empty or parallel to trees")

    def __len__(self):
        return len(self.trees)

    @property
    def total_inner_nodes(self) -> int:
        return sum(t.inner_node_count() for t in self.trees)

    def segments(self) -> list:
        """Half-open (start, stop) bit ranges, one per tree, in forest order."""
        bounds = []
        start = 0
        for tree in self.trees:
            stop = start + tree.inner_node_count()
            bounds.append((start, stop))
            start = stop
        return bounds

    def to_dict(self) -> dict:
        return {
            "trees": [t.to_dict() for t in self.trees],
            "provenance": [dict(p) for p in self.provenance],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "ZeroShotForest":
        return cls(
            trees=tuple(DecisionTree.from_dict(t) for t in payload["trees"]),
            provenance=tuple(payload.get("provenance", ())),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "ZeroShotForest":
        return cls.from_dict(json.loads(text))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(self.to_dict(), handle, indent=2, sort_keys=True)

    @classmethod
    def load(cls, path) -> "ZeroShotForest":
        with open(path, encoding="utf-8") as handle:
            return cls.from_dict(json.load(handle))


@dataclass(frozen=True)
class EmbeddingVector:
    bits: np.ndarray
    segments: tuple

    def __len__(self):
        return len(self.bits)

    def segment(self, index: int) -> np.ndarray:
        start, stop = self.segments[index]
        return self.bits[start:stop]


def sample_forest(
    spec: PromptSpec,
    schema: DatasetSchema,
    provider: CompletionProvider,
    m: int = 5,
    max_extra_attempts: int = DEFAULT_MAX_EXTRA_ATTEMPTS,
    repair: bool = False,
    attempt_offset: int = 0,
) -> ZeroShotForest:
    """Induce m trees from one prompt, each with its own retry budget.

    Members are assembled in request order. Each member's attempts occupy a
    disjoint attempt_index range, so a response cache never collapses the
    sampled forest into m copies of the first tree; ``attempt_offset``
    shifts the whole range for callers sampling several forests. Duplicate
    trees are kept; diversity is the temperature's job.
    """
    if m < 1:
        raise ValueError(f"forest size must be >= 1, got {m}")
    members: list[InducedTree] = []
    stride = 1 + max_extra_attempts
    for index in range(m):
        members.append(
            induce_tree(
                spec,
                schema,
                provider,
                max_extra_attempts=max_extra_attempts,
                repair=repair,
                attempt_offset=attempt_offset + index * stride,
            )
        )
    return ZeroShotForest(
        trees=tuple(member.tree for member in members),
        provenance=tuple(
            {
                "provider": member.provider,
                "attempts_used": member.attempts_used,
                "raw_text": member.raw_text,
            }
            for member in members
        ),
    )


def embed(forest: ZeroShotForest, sample) -> EmbeddingVector:
    """Concatenated truth vectors of all trees for one raw sample."""
    bits: list[int] = []
    for tree in forest.trees:
        bits.extend(tree.truth_vector(sample))
    return EmbeddingVector(
        bits=np.asarray(bits, dtype=np.int8), segments=tuple(forest.segments())
    )


def embed_matrix(forest: ZeroShotForest, rows: Sequence) -> np.ndarray:
    """Bit matrix of shape (len(rows), total_inner_nodes)."""
    width = forest.total_inner_nodes
    out = np.zeros((len(rows), width), dtype=np.int8)
    for i, row in enumerate(rows):
        out[i] = embed(forest, row).bits
    return out


def augment(X: np.ndarray, forest: ZeroShotForest, rows: Sequence, mode: str = "extend"):
    """Attach embedding bits to an encoded design matrix.

    ``rows`` are the raw (imputed, unencoded) samples behind X, in the same
    order; extend appends the bit columns, replace keeps only the bits.
    """
    if mode not in ("extend", "replace"):
        raise ValueError(f"mode must be 'extend' or 'replace', got {mode!r}")
    X = np.asarray(X, dtype=float)
    if X.shape[0] != len(rows):
        raise ValueError(f"matrix has {X.shape[0]} rows but {len(rows)} samples given")
    bits = embed_matrix(forest, rows).astype(float)
    if mode == "replace":
        return bits
    return np.hstack([X, bits])


def embedding_column_names(forest: ZeroShotForest) -> list:
    """Column names for exported bits: emb_{tree}_{node}, both zero-based."""
    names = []
    for t, tree in enumerate(forest.trees):
        names.extend(f"emb_{t}_{n}" for n in range(tree.inner_node_count()))
    return names


class ZeroShotForestEmbedding(TransformerMixin, BaseEstimator):
    """Transformer mapping raw rows to forest truth bits.

    ``fit`` samples a fresh forest from the provider unless one is supplied,
    ignoring X and y. ``transform`` takes raw rows (mappings from feature
    name to value) and returns the bit matrix; combining the bits with an
    encoded design matrix is ``augment``'s job.
    """

    def __init__(
        self,
        schema: Optional[DatasetSchema] = None,
        provider: Optional[CompletionProvider] = None,
        target_description: Optional[str] = None,
        trees: int = 5,
        max_depth: Optional[int] = None,
        max_extra_attempts: int = DEFAULT_MAX_EXTRA_ATTEMPTS,
        repair: bool = False,
        forest: Optional[ZeroShotForest] = None,
    ):
        self.schema = schema
        self.provider = provider
        self.target_description = target_description
        self.trees = trees
        self.max_depth = max_depth
        self.max_extra_attempts = max_extra_attempts
        self.repair = repair
        self.forest = forest

    def fit(self, X=None, y=None):
        if self.forest is not None:
            self.forest_ = self.forest
            return self
        if self.schema is None or self.provider is None:
            raise ValueError("schema and provider are required when no forest is given")
        description = self.target_description or self.schema.target.name
        spec = PromptSpec(
            target_description=description,
            features=tuple(self.schema.features),
            max_depth=self.max_depth,
        )
        self.forest_ = sample_forest(
            spec,
            self.schema,
            self.provider,
            m=self.trees,
            max_extra_attempts=self.max_extra_attempts,
            repair=self.repair,
        )
        return self

    def transform(self, X):
        check_is_fitted(self, "forest_")
        return embed_matrix(self.forest_, X)

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "forest_")
        return np.asarray(embedding_column_names(self.forest_), dtype=object)
