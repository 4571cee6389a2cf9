"""End-to-end benchmark runs driven by a TOML config.

Two protocols share the preprocessing path (train-fitted kNN imputation,
one-hot encoding, min-max scaling, repeated stratified splits):

* induction: per split repeat, induce five valid trees from feature names
  only; the cell's repeat value is the median of the five trees' test
  scores. A shallow greedy tree trained on the data runs alongside.
* embedding: per split repeat, sample a forest, append its truth bits to
  the encoded matrices, and train a grid-searched MLP; comparators are the
  plain MLP and an MLP over random-trees bits.

Cell failures (exhausted retries, provider errors) are collected per cell
so one bad cell never aborts the rest of a run.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .data import Dataset, SplitPlan, TooFewSamples, load_csv, make_splits
from .forest import ZeroShotForest, augment, sample_forest
from .induction import DEFAULT_MAX_EXTRA_ATTEMPTS, PromptSpec, induce_tree
from .learners import (
    GreedyTreeConfig,
    MlpConfig,
    RandomTreesConfig,
    cv_grid_search,
    greedy_tree_fit,
    mlp_fit,
    random_trees_embedding,
)
from .metrics import CellScore, MetricsReport, balanced_accuracy_score, macro_f1_score
from .preprocess import KnnImputer, TabularEncoder
from .providers import (
    ChatClient,
    CompletionProvider,
    LlmError,
    MockProvider,
    ProviderConfig,
)
from .text_format import TreeParseError

GREEDY_DEPTH_GRID = (1, 2)
SELFCHECK_THRESHOLD = 0.8


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DatasetConfig:
    name: str
    csv: Path
    schema: Path
    target_description: Optional[str] = None
    forest: Optional[Path] = None  # fixture forest for embedding runs

    def load(self) -> Dataset:
        return load_csv(self.csv, schema_path=self.schema)


@dataclass(frozen=True)
class ProviderSpec:
    kind: str = "http"  # "http" or "script"
    model: str = "mock"
    endpoint: str = ""
    api_key_env: str = "LLM_API_KEY"
    temperature: Optional[float] = None  # None: protocol default (0.0 induce, 1.0 embed)
    max_output_tokens: int = 1024
    request_timeout: float = 60.0
    script: tuple = ()
    script_file: Optional[Path] = None


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str = "induction"
    datasets: tuple = ()
    providers: tuple = ()
    seed: int = 0
    cache_dir: Optional[Path] = None
    offline: bool = False
    # induction protocol
    max_depth: Optional[int] = 2
    max_extra_attempts: int = DEFAULT_MAX_EXTRA_ATTEMPTS
    repair: bool = False
    trees_per_cell: int = 5
    # embedding protocol
    embedding_trees: int = 5
    embedding_mode: str = "extend"
    # splits
    split_fractions: tuple = (0.67,)
    split_repeats: int = 5
    stratify: bool = True
    # downstream MLP
    hidden_sizes: tuple = (10, 25, 50, 75, 100)
    l2_strengths: tuple = (0.0001, 0.001, 0.01, 0.1, 1.0)
    mlp_max_epochs: int = 2000
    cv_folds: int = 3

    @classmethod
    def from_dict(cls, payload: dict, base_dir: Path) -> "ExperimentConfig":
        def resolve(value):
            path = Path(value)
            return path if path.is_absolute() else base_dir / path

        try:
            datasets = tuple(
                DatasetConfig(
                    name=entry["name"],
                    csv=resolve(entry["csv"]),
                    schema=resolve(entry["schema"]),
                    target_description=entry.get("target_description"),
                    forest=resolve(entry["forest"]) if "forest" in entry else None,
                )
                for entry in payload.get("datasets", [])
            )
            providers = tuple(
                ProviderSpec(
                    kind=entry.get("kind", "http"),
                    model=entry.get("model", "mock"),
                    endpoint=entry.get("endpoint", ""),
                    api_key_env=entry.get("api_key_env", "LLM_API_KEY"),
                    temperature=entry.get("temperature"),
                    max_output_tokens=entry.get("max_output_tokens", 1024),
                    request_timeout=entry.get("request_timeout", 60.0),
                    script=tuple(entry.get("script", ())),
                    script_file=resolve(entry["script_file"]) if "script_file" in entry else None,
                )
                for entry in payload.get("providers", [])
            )
            induction = payload.get("induction", {})
            embedding = payload.get("embedding", {})
            split = payload.get("split", {})
            mlp = payload.get("mlp", {})
            return cls(
                mode=payload.get("mode", "induction"),
                datasets=datasets,
                providers=providers,
                seed=payload.get("seed", 0),
                cache_dir=resolve(payload["cache_dir"]) if "cache_dir" in payload else None,
                offline=payload.get("offline", False),
                max_depth=induction.get("max_depth", 2),
                max_extra_attempts=induction.get("max_extra_attempts", DEFAULT_MAX_EXTRA_ATTEMPTS),
                repair=induction.get("repair", False),
                trees_per_cell=induction.get("trees_per_cell", 5),
                embedding_trees=embedding.get("trees", 5),
                embedding_mode=embedding.get("mode", "extend"),
                split_fractions=tuple(split.get("fractions", (0.67,))),
                split_repeats=split.get("repeats", 5),
                stratify=split.get("stratify", True),
                hidden_sizes=tuple(mlp.get("hidden_sizes", (10, 25, 50, 75, 100))),
                l2_strengths=tuple(mlp.get("l2_strengths", (0.0001, 0.001, 0.01, 0.1, 1.0))),
                mlp_max_epochs=mlp.get("max_epochs", 2000),
                cv_folds=mlp.get("folds", 3),
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"bad experiment config: {exc}")

    @classmethod
    def from_toml(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            with open(path, "rb") as handle:
                payload = tomllib.load(handle)
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}")
        config = cls.from_dict(payload, path.parent)
        if config.mode not in ("induction", "embedding"):
            raise ConfigError(f"mode must be induction or embedding, got {config.mode!r}")
        if config.embedding_mode not in ("extend", "replace"):
            raise ConfigError(f"embedding mode must be extend or replace, got {config.embedding_mode!r}")
        if not config.datasets:
            raise ConfigError("config lists no datasets")
        return config


def build_provider(
    spec: ProviderSpec, config: ExperimentConfig, default_temperature: float
) -> CompletionProvider:
    temperature = spec.temperature if spec.temperature is not None else default_temperature
    if spec.kind == "script":
        script = list(spec.script)
        if spec.script_file is not None:
            import json

            with open(spec.script_file, encoding="utf-8") as handle:
                script.extend(json.load(handle))
        return MockProvider(script, model_name=spec.model)
    if spec.kind != "http":
        raise ConfigError(f"unknown provider kind {spec.kind!r}")
    if not spec.endpoint:
        raise ConfigError(f"provider {spec.model!r} needs an endpoint")
    return ChatClient(
        ProviderConfig(
            endpoint_url=spec.endpoint,
            model_name=spec.model,
            api_key_env=spec.api_key_env,
            temperature=temperature,
            max_output_tokens=spec.max_output_tokens,
            request_timeout=spec.request_timeout,
        ),
        cache_dir=config.cache_dir,
        offline=config.offline,
    )


@dataclass(frozen=True)
class CellFailure:
    dataset: str
    method: str
    split_fraction: float
    repeat: int
    error: str


@dataclass
class ExperimentResult:
    report: MetricsReport
    failures: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


def cell_seed(*coordinates) -> int:
    """Stable small seed derived from (global seed, cell coordinates)."""
    return int(np.random.SeedSequence(list(coordinates)).generate_state(1)[0])


def _score_pair(y_true, y_pred, labels) -> tuple:
    return (
        macro_f1_score(y_true, y_pred, labels=labels),
        balanced_accuracy_score(y_true, y_pred, labels=labels),
    )


def _prepared_splits(dataset: Dataset, config: ExperimentConfig, fraction: float):
    """Imputed (repeat, train, test) triples; imputer fitted on train only."""
    plan = SplitPlan(
        train_fraction=fraction,
        repeats=config.split_repeats,
        seed=config.seed,
        stratify=config.stratify,
    )
    for repeat, (train, test) in enumerate(make_splits(dataset, plan)):
        imputer = KnnImputer(k=10).fit(train)
        yield repeat, imputer.transform(train), imputer.transform(test)


def _greedy_baseline(train: Dataset, labels) -> "object":
    """Depth from {1, 2} by training macro F1, shallower on ties."""
    best_tree, best_score = None, -1.0
    for depth in GREEDY_DEPTH_GRID:
        tree = greedy_tree_fit(train, GreedyTreeConfig(max_depth=depth))
        predictions = [tree.predict(row) for row in train.rows]
        score = macro_f1_score(train.labels, predictions, labels=labels)
        if score > best_score:
            best_tree, best_score = tree, score
    return best_tree


def run_induction_experiment(config: ExperimentConfig) -> ExperimentResult:
    scores: list = []
    failures: list = []
    stride = 1 + config.max_extra_attempts
    providers = [
        (spec, build_provider(spec, config, default_temperature=0.0))
        for spec in config.providers
    ]
    for dataset_config in config.datasets:
        dataset = dataset_config.load()
        schema = dataset.schema
        labels = schema.target.labels
        spec = PromptSpec(
            target_description=dataset_config.target_description or schema.target.name,
            features=tuple(schema.features),
            max_depth=config.max_depth,
        )
        for fraction in config.split_fractions:
            for repeat, train, test in _prepared_splits(dataset, config, fraction):
                tree = _greedy_baseline(train, labels)
                predictions = [tree.predict(row) for row in test.rows]
                f1, bacc = _score_pair(test.labels, predictions, labels)
                scores.append(
                    CellScore(dataset_config.name, "greedy-tree", fraction, repeat, f1, bacc)
                )
                for provider_spec, provider in providers:
                    method = f"zero-shot-tree:{provider_spec.model}"
                    try:
                        per_tree = []
                        for j in range(config.trees_per_cell):
                            offset = (repeat * config.trees_per_cell + j) * stride
                            induced = induce_tree(
                                spec,
                                schema,
                                provider,
                                max_extra_attempts=config.max_extra_attempts,
                                repair=config.repair,
                                attempt_offset=offset,
                            )
                            predictions = [induced.tree.predict(row) for row in test.rows]
                            per_tree.append(_score_pair(test.labels, predictions, labels))
                    except (LlmError, TreeParseError) as exc:
                        failures.append(
                            CellFailure(dataset_config.name, method, fraction, repeat, str(exc))
                        )
                        continue
                    scores.append(
                        CellScore(
                            dataset_config.name,
                            method,
                            fraction,
                            repeat,
                            float(np.median([s[0] for s in per_tree])),
                            float(np.median([s[1] for s in per_tree])),
                        )
                    )
    return ExperimentResult(report=MetricsReport(scores=scores), failures=failures)


def _fit_and_score(X_train, y_train, X_test, y_test, config, seed, labels):
    grid = [
        MlpConfig(hidden_size=h, l2_strength=l2, max_epochs=config.mlp_max_epochs, seed=seed)
        for h in config.hidden_sizes
        for l2 in config.l2_strengths
    ]
    best, _ = cv_grid_search(
        X_train, y_train, grid=grid, folds=config.cv_folds, seed=seed, class_order=labels
    )
    model = mlp_fit(X_train, y_train, best, class_order=labels)
    return _score_pair(y_test, model.predict(X_test), labels)


def run_embedding_experiment(config: ExperimentConfig) -> ExperimentResult:
    scores: list = []
    failures: list = []
    stride = 1 + config.max_extra_attempts
    providers = [
        (spec, build_provider(spec, config, default_temperature=1.0))
        for spec in config.providers
    ]
    for dataset_index, dataset_config in enumerate(config.datasets):
        dataset = dataset_config.load()
        schema = dataset.schema
        labels = schema.target.labels
        fixture_forest = (
            ZeroShotForest.load(dataset_config.forest) if dataset_config.forest else None
        )
        prompt_spec = PromptSpec(
            target_description=dataset_config.target_description or schema.target.name,
            features=tuple(schema.features),
            max_depth=None,
        )
        for fraction_index, fraction in enumerate(config.split_fractions):
            for repeat, train, test in _prepared_splits(dataset, config, fraction):
                seed = cell_seed(config.seed, dataset_index, fraction_index, repeat)
                encoder = TabularEncoder().fit(train)
                X_train, X_test = encoder.transform(train), encoder.transform(test)

                def attempt(method, make_matrices):
                    try:
                        A, B = make_matrices()
                        f1, bacc = _fit_and_score(
                            A, train.labels, B, test.labels, config, seed, labels
                        )
                    except (LlmError, TreeParseError, TooFewSamples) as exc:
                        failures.append(
                            CellFailure(dataset_config.name, method, fraction, repeat, str(exc))
                        )
                        return
                    scores.append(
                        CellScore(dataset_config.name, method, fraction, repeat, f1, bacc)
                    )

                attempt("mlp", lambda: (X_train, X_test))

                random_forest = random_trees_embedding(
                    schema, train, RandomTreesConfig(n_trees=5, seed=seed)
                )
                attempt(
                    "mlp+random-trees",
                    lambda: (
                        augment(X_train, random_forest, train.rows, config.embedding_mode),
                        augment(X_test, random_forest, test.rows, config.embedding_mode),
                    ),
                )

                # a fixture forest stands in for live sampling; without
                # providers it still earns a zero-shot column of its own
                sources = [(f"mlp+zero-shot:{ps.model}", p) for ps, p in providers]
                if not sources and fixture_forest is not None:
                    sources = [("mlp+zero-shot:fixture", None)]
                for method, provider in sources:

                    def matrices(provider=provider):
                        if fixture_forest is not None:
                            forest = fixture_forest
                        else:
                            forest = sample_forest(
                                prompt_spec,
                                schema,
                                provider,
                                m=config.embedding_trees,
                                max_extra_attempts=config.max_extra_attempts,
                                repair=config.repair,
                                attempt_offset=repeat * config.embedding_trees * stride,
                            )
                        return (
                            augment(X_train, forest, train.rows, config.embedding_mode),
                            augment(X_test, forest, test.rows, config.embedding_mode),
                        )

                    attempt(method, matrices)
    return ExperimentResult(report=MetricsReport(scores=scores), failures=failures)


@dataclass(frozen=True)
class SelfCheckResult:
    dataset: str
    best_depth: int
    train_f1: float

    @property
    def passed(self) -> bool:
        return self.train_f1 >= SELFCHECK_THRESHOLD


def selfcheck_dataset(dataset: Dataset, name: Optional[str] = None) -> SelfCheckResult:
    """Can a depth <= 2 greedy tree reach training macro F1 >= 0.8? Advisory only."""
    if dataset.has_missing():
        imputer = KnnImputer(k=10).fit(dataset)
        dataset = imputer.transform(dataset)
    labels = dataset.schema.target.labels
    best_depth, best_score = 1, -1.0
    for depth in GREEDY_DEPTH_GRID:
        tree = greedy_tree_fit(dataset, GreedyTreeConfig(max_depth=depth))
        predictions = [tree.predict(row) for row in dataset.rows]
        score = macro_f1_score(dataset.labels, predictions, labels=labels)
        if score > best_score:
            best_depth, best_score = depth, score
    return SelfCheckResult(
        dataset=name or dataset.source or "dataset", best_depth=best_depth, train_f1=best_score
    )
