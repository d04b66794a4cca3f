"""LLM-guided topology refinement for text-attributed graphs."""

from ._core import (
    BackendError,
    ConfigError,
    DataError,
    Graph,
    ParseFailure,
    build_pseudolabel_prompt,
    build_similarity_prompt,
    embedding_variation,
    extract_ranked_labels,
    extract_ratio,
    load_graph,
    make_split,
    normalized_adjacency,
    propagate,
    pseudo_labels_with_mock,
    refine_with_mock,
    run_experiment,
    shrinking_check,
    silhouette_score,
    synth_fixture,
    train_mode,
    unreliable_edge_ratio,
)

__all__ = [
    "BackendError",
    "ConfigError",
    "DataError",
    "Graph",
    "ParseFailure",
    "build_pseudolabel_prompt",
    "build_similarity_prompt",
    "embedding_variation",
    "extract_ranked_labels",
    "extract_ratio",
    "load_graph",
    "make_split",
    "normalized_adjacency",
    "propagate",
    "pseudo_labels_with_mock",
    "refine_with_mock",
    "run_experiment",
    "shrinking_check",
    "silhouette_score",
    "synth_fixture",
    "train_mode",
    "unreliable_edge_ratio",
]
