"""Thought-graph annotation of gene sets."""

from ._thought_graph import (
    Ontology,
    ThoughtGraph,
    ThoughtGraphError,
    cosine,
    default_config,
    generate,
    percentile,
)

__all__ = [
    "Ontology",
    "ThoughtGraph",
    "ThoughtGraphError",
    "cosine",
    "default_config",
    "generate",
    "percentile",
]
