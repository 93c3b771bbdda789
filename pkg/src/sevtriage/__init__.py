"""Severity triage toolkit for zero-day disclosure feeds.

Pipeline stages: ingest disclosure CSVs (:mod:`sevtriage.corpus`), build
named sparse feature blocks (:mod:`sevtriage.features`), reduce or select
dimensions (:mod:`sevtriage.reduction`, :mod:`sevtriage.selection`),
train from-scratch classical and neural classifiers
(:mod:`sevtriage.classical`, :mod:`sevtriage.neural`), combine them
(:mod:`sevtriage.ensembles`), and evaluate with imbalance-aware metrics
(:mod:`sevtriage.evaluation`). :mod:`sevtriage.cli` binds it together.
"""

__version__ = "0.1.0"

from .corpus import DisclosureRecord, LabeledDataset, clean, label, parse_csv, stratified_split
from .evaluation import benchmark, confusion, report, roc_auc
from .features import FeatureMatrix, KeywordLexicon, assemble, fit_tfidf, tokenize

__all__ = [
    "DisclosureRecord",
    "FeatureMatrix",
    "KeywordLexicon",
    "LabeledDataset",
    "assemble",
    "benchmark",
    "clean",
    "confusion",
    "fit_tfidf",
    "label",
    "parse_csv",
    "report",
    "roc_auc",
    "stratified_split",
    "tokenize",
]
