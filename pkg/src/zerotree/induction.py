"""Zero-shot tree induction: prompt a chat model with feature names only.

The prompt carries no training rows. It states the task, shows one fixed
in-context example (the iris tree), lists the annotated feature names,
and ends with a ``Decision tree:`` output indicator. Responses are parsed
and validated against the dataset schema; invalid responses burn one
attempt from a fixed budget (first try plus at most five retries).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Optional, Sequence

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .providers import CompletionProvider, EmptyResponse, ExhaustedAttempts
from .schema import DatasetSchema, FeatureSpec, annotated_feature_line
from .text_format import TreeParseError, extract_tree_block, parse_tree
from .tree import DecisionTree, validate

DEFAULT_MAX_EXTRA_ATTEMPTS = 5


@lru_cache(maxsize=None)
def _template(name: str) -> str:
    return resources.files("zerotree").joinpath("templates", name).read_text(encoding="utf-8")


def iris_example() -> str:
    """The fixed in-context example block (features line plus tree)."""
    return _template("iris_example.txt").strip("\n")


def grammar_text() -> str:
    """EBNF of the textual tree format, shipped with the templates."""
    return _template("grammar.ebnf")


@dataclass(frozen=True)
class PromptSpec:
    """Inputs of the induction mapping: target description, features, depth cap."""

    target_description: str
    features: Sequence[FeatureSpec]
    max_depth: Optional[int] = 2  # None asks the model to pick its own depth
    in_context_example: Optional[str] = None

    def __post_init__(self):
        if not self.features:
            raise ValueError("at least one feature is required")
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate feature names: {names}")
        if any(not name.strip() for name in names):
            raise ValueError("feature names must be non-empty")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError(f"max_depth must be >= 1, got {self.max_depth}")


@dataclass(frozen=True)
class InducedTree:
    tree: DecisionTree
    raw_text: str
    attempts_used: int
    provider: str


def build_prompt(spec: PromptSpec) -> str:
    """Render the induction prompt; pure function of the spec."""
    name = "induce_depth.txt" if spec.max_depth is not None else "induce_free.txt"
    example = spec.in_context_example if spec.in_context_example is not None else iris_example()
    prompt = _template(name).format(
        max_depth=spec.max_depth,
        target=spec.target_description,
        features=annotated_feature_line(spec.features),
        example=example,
    )
    return prompt.rstrip("\n")


def build_repair_prompt(raw_text: str) -> str:
    return _template("repair.txt").format(grammar=grammar_text(), raw=raw_text.strip()).rstrip("\n")


def repair_format(
    raw_text: str, schema: DatasetSchema, provider: CompletionProvider, attempt_index: int = 0
) -> DecisionTree:
    """Ask the provider to restate malformed tree text in the canonical grammar.

    Raises TreeParseError if the restated text still fails to parse.
    """
    reply = provider.complete(build_repair_prompt(raw_text), attempt_index=attempt_index)
    return parse_tree(extract_tree_block(reply), schema)


def induce_tree(
    spec: PromptSpec,
    schema: DatasetSchema,
    provider: CompletionProvider,
    max_extra_attempts: int = DEFAULT_MAX_EXTRA_ATTEMPTS,
    repair: bool = False,
    attempt_offset: int = 0,
) -> InducedTree:
    """First provider response that parses and validates, within the budget.

    With ``repair`` enabled, a parse failure of a fresh response spends the
    next attempt on a format-repair request instead of a new induction; a
    failed repair falls back to fresh induction. ``attempt_offset`` shifts
    cache identities so independent samples of one prompt stay independent.
    """
    prompt = build_prompt(spec)
    budget = 1 + max_extra_attempts
    failures = []
    attempts_used = 0
    repair_source = None  # raw text whose format the next attempt should repair
    while attempts_used < budget:
        index = attempt_offset + attempts_used
        fixing = repair_source is not None
        try:
            if fixing:
                raw = provider.complete(build_repair_prompt(repair_source), attempt_index=index)
                repair_source = None
            else:
                raw = provider.complete(prompt, attempt_index=index)
        except EmptyResponse as exc:
            attempts_used += 1
            failures.append(f"attempt {index}: {exc}")
            repair_source = None
            continue
        attempts_used += 1
        try:
            tree = parse_tree(extract_tree_block(raw), schema)
        except TreeParseError as exc:
            failures.append(f"attempt {index}: {exc}")
            if repair and not fixing:
                repair_source = raw
            continue
        report = validate(tree, schema, max_depth=spec.max_depth)
        if report.valid:
            return InducedTree(
                tree=tree,
                raw_text=raw,
                attempts_used=attempts_used,
                provider=provider.model_name,
            )
        notes = "; ".join(f"{v.kind}: {v.message}" for v in report.violations)
        failures.append(f"attempt {index}: invalid tree ({notes})")
    raise ExhaustedAttempts(attempts_used, failures)


class ZeroShotTreeClassifier(BaseEstimator):
    """Classifier whose fit step queries a chat model instead of the data.

    ``fit`` ignores X and y: the tree is induced from the schema's feature
    names and target description alone. Rows are mappings from feature name
    to raw (unencoded) value.
    """

    def __init__(
        self,
        schema: Optional[DatasetSchema] = None,
        provider: Optional[CompletionProvider] = None,
        target_description: Optional[str] = None,
        max_depth: Optional[int] = 2,
        max_extra_attempts: int = DEFAULT_MAX_EXTRA_ATTEMPTS,
        repair: bool = False,
        attempt_offset: int = 0,
    ):
        self.schema = schema
        self.provider = provider
        self.target_description = target_description
        self.max_depth = max_depth
        self.max_extra_attempts = max_extra_attempts
        self.repair = repair
        self.attempt_offset = attempt_offset

    def fit(self, X=None, y=None):
        if self.schema is None or self.provider is None:
            raise ValueError("schema and provider are required")
        description = self.target_description or self.schema.target.name
        spec = PromptSpec(
            target_description=description,
            features=tuple(self.schema.features),
            max_depth=self.max_depth,
        )
        self.induced_ = induce_tree(
            spec,
            self.schema,
            self.provider,
            max_extra_attempts=self.max_extra_attempts,
            repair=self.repair,
            attempt_offset=self.attempt_offset,
        )
        self.tree_ = self.induced_.tree
        self.classes_ = list(self.schema.target.labels)
        return self

    def predict(self, X):
        check_is_fitted(self, "tree_")
        return [self.tree_.predict(row) for row in X]
