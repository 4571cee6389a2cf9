"""Decision trees and tree embeddings induced from chat models without data.

The pieces compose in layers: schema and tree structures, the textual
wire format, provider clients, induction and forest sampling, tabular
preprocessing, downstream learners, metrics, and the benchmark driver.
"""

from .data import Dataset, SplitPlan, load_csv, make_splits
from .forest import (
    ZeroShotForest,
    ZeroShotForestEmbedding,
    augment,
    embed,
    embed_matrix,
    sample_forest,
)
from .induction import (
    InducedTree,
    PromptSpec,
    ZeroShotTreeClassifier,
    build_prompt,
    induce_tree,
    repair_format,
)
from .learners import (
    GreedyTreeClassifier,
    MlpClassifier,
    MlpConfig,
    cv_grid_search,
    greedy_tree_fit,
    random_trees_embedding,
)
from .metrics import (
    ConfusionMatrix,
    MetricsReport,
    balanced_accuracy,
    emit_table,
    macro_f1,
)
from .preprocess import KnnImputer, TabularEncoder, encode_and_scale, impute_knn
from .providers import ChatClient, MockProvider, ProviderConfig
from .schema import DatasetSchema, FeatureSpec, TargetSpec
from .text_format import TreeParseError, parse_tree, render_tree
from .tree import DecisionTree, Leaf, Predicate, Split, validate

__version__ = "0.1.0"

__all__ = [
    "ChatClient",
    "ConfusionMatrix",
    "Dataset",
    "DatasetSchema",
    "DecisionTree",
    "FeatureSpec",
    "GreedyTreeClassifier",
    "InducedTree",
    "KnnImputer",
    "Leaf",
    "MetricsReport",
    "MlpClassifier",
    "MlpConfig",
    "MockProvider",
    "Predicate",
    "PromptSpec",
    "ProviderConfig",
    "Split",
    "SplitPlan",
    "TabularEncoder",
    "TargetSpec",
    "TreeParseError",
    "ZeroShotForest",
    "ZeroShotForestEmbedding",
    "ZeroShotTreeClassifier",
    "augment",
    "balanced_accuracy",
    "build_prompt",
    "cv_grid_search",
    "embed",
    "embed_matrix",
    "emit_table",
    "encode_and_scale",
    "greedy_tree_fit",
    "impute_knn",
    "induce_tree",
    "load_csv",
    "macro_f1",
    "make_splits",
    "parse_tree",
    "random_trees_embedding",
    "render_tree",
    "repair_format",
    "sample_forest",
    "validate",
]
