"""Dialect-conditioned CODA normalization baselines and edit-based evaluation."""

from codafy.corpus import (
    CITY_DIALECTS,
    Dialect,
    ParallelCorpus,
    ParallelExample,
    Sentence,
    Split,
    load_corpus,
    split_corpus,
    tokenize,
)

__version__ = "0.1.0"

__all__ = [
    "CITY_DIALECTS",
    "Dialect",
    "ParallelCorpus",
    "ParallelExample",
    "Sentence",
    "Split",
    "load_corpus",
    "split_corpus",
    "tokenize",
]
