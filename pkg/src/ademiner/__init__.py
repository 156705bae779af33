"""Adverse drug event mining: classification, NER, and relation extraction.

The three model stages follow the scikit-learn estimator protocol
(constructor hyperparameters, fit/predict, get_params) and compose into a
Pipeline that classifies documents, drops NEG ones at the gate, tags
ADE/Drug entity spans, and classifies every (reaction, drug) pair.
"""

from ademiner.classifier import DocumentClassifier
from ademiner.corpus import (
    CorpusStats,
    Document,
    EntitySpan,
    RelationCandidate,
    corpus_stats,
    generate_relation_candidates,
    kfold_split,
    labeled_candidates,
    read_conll,
    read_jsonl_docs,
    sample_negative_relations,
    write_conll,
)
from ademiner.embeddings import EmbeddingStore, load_vectors
from ademiner.evaluation import (
    aggregate,
    benchmark_timing,
    classification_report,
    evaluate_entities,
    match_entities,
    prf,
    relation_report,
    run_cv_experiment,
)
from ademiner.ner import NerTagger
from ademiner.pipeline import Pipeline, load_pipeline, run_batch, run_stream
from ademiner.relations import RelationClassifier, build_features
from ademiner.bundle import load_estimator, save_estimator
from ademiner.tokenization import tokenize

__version__ = "0.1.0"

__all__ = [
    "CorpusStats",
    "Document",
    "DocumentClassifier",
    "EmbeddingStore",
    "EntitySpan",
    "NerTagger",
    "Pipeline",
    "RelationCandidate",
    "RelationClassifier",
    "aggregate",
    "benchmark_timing",
    "build_features",
    "classification_report",
    "corpus_stats",
    "evaluate_entities",
    "generate_relation_candidates",
    "kfold_split",
    "labeled_candidates",
    "load_estimator",
    "load_pipeline",
    "load_vectors",
    "match_entities",
    "prf",
    "read_conll",
    "read_jsonl_docs",
    "relation_report",
    "run_batch",
    "run_cv_experiment",
    "run_stream",
    "sample_negative_relations",
    "save_estimator",
    "tokenize",
    "write_conll",
]
