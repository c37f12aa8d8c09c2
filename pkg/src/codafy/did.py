"""Sentence-level dialect identification.

Multinomial naive Bayes over character n-grams (word-padded with a boundary
marker) plus word unigrams, add-one smoothing, maximum-likelihood priors.
"""

from __future__ import annotations

import json
import math
import os
import unicodedata
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

from codafy._io import atomic_write_text
from codafy.corpus import DIALECT_ORDER, Dialect, Sentence

FORMAT_VERSION = 1
WORD_BOUNDARY = "⟨w⟩"
DEFAULT_ORDERS = (1, 2, 3)


class DidError(ValueError):
    pass


def extract_features(tokens: Sequence[str], orders: Sequence[int] = DEFAULT_ORDERS) -> Counter:
    """Feature occurrence counts for one sentence.

    Character n-gram features are prefixed ``c<n>:`` and word features ``w:``.
    The bare boundary marker is not a feature.
    """
    feats: Counter = Counter()
    for word in tokens:
        word = unicodedata.normalize("NFC", word)
        feats["w:" + word] += 1
        symbols = [WORD_BOUNDARY, *word, WORD_BOUNDARY]
        for n in orders:
            for k in range(len(symbols) - n + 1):
                gram = symbols[k : k + n]
                if n == 1 and gram[0] == WORD_BOUNDARY:
                    continue
                feats[f"c{n}:" + "".join(gram)] += 1
    return feats


@dataclass(frozen=True)
class DidModel:
    class_log_priors: dict[Dialect, float]
    feature_log_likelihoods: dict[Dialect, dict[str, float]]
    vocabulary: frozenset[str]
    orders: tuple[int, ...] = DEFAULT_ORDERS

    @property
    def labels(self) -> tuple[Dialect, ...]:
        return tuple(d for d in DIALECT_ORDER if d in self.class_log_priors)

    def to_json(self) -> str:
        doc = {
            "format_version": FORMAT_VERSION,
            "orders": list(self.orders),
            "class_log_priors": {d.value: self.class_log_priors[d] for d in self.labels},
            "feature_log_likelihoods": {
                d.value: dict(sorted(self.feature_log_likelihoods[d].items()))
                for d in self.labels
            },
        }
        return json.dumps(doc, ensure_ascii=False, indent=1) + "\n"

    def save(self, path: str | os.PathLike) -> None:
        atomic_write_text(path, self.to_json())

    @classmethod
    def from_json(cls, text: str) -> "DidModel":
        doc = json.loads(text)
        if doc.get("format_version") != FORMAT_VERSION:
            raise DidError(f"unsupported DID model version {doc.get('format_version')!r}")
        priors = {Dialect(k): float(v) for k, v in doc["class_log_priors"].items()}
        likelihoods = {
            Dialect(k): {unicodedata.normalize("NFC", f): float(v) for f, v in table.items()}
            for k, table in doc["feature_log_likelihoods"].items()
        }
        vocab = frozenset().union(*(t.keys() for t in likelihoods.values()))
        return cls(priors, likelihoods, vocab, tuple(doc["orders"]))

    @classmethod
    def load(cls, path: str | os.PathLike) -> "DidModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())


@dataclass(frozen=True)
class DidPrediction:
    label: Dialect
    scores: dict[Dialect, float]


def _tokens(sentence) -> Sequence[str]:
    return sentence.tokens if isinstance(sentence, Sentence) else sentence


def train_did(
    labeled: Iterable[tuple[Sentence, Dialect]],
    orders: Sequence[int] = DEFAULT_ORDERS,
    labels: Iterable[Dialect] | None = None,
) -> DidModel:
    """Fit the classifier.

    `labels` lists the classes the model must cover; each needs at least one
    training sentence. By default the classes are those seen in the data.
    """
    class_docs: Counter = Counter()
    class_feats: dict[Dialect, Counter] = {}
    for sentence, dialect in labeled:
        class_docs[dialect] += 1
        class_feats.setdefault(dialect, Counter()).update(extract_features(_tokens(sentence), orders))
    wanted = list(labels) if labels is not None else [d for d in DIALECT_ORDER if class_docs[d]]
    if not wanted:
        raise DidError("no training sentences")
    missing = [d.value for d in wanted if not class_docs[d]]
    if missing:
        raise DidError(f"no training sentences for label(s) {', '.join(missing)}")
    extra = [d.value for d in class_docs if d not in wanted]
    if extra:
        raise DidError(f"training data has labels outside the requested set: {', '.join(extra)}")

    vocab = frozenset().union(*(class_feats[d].keys() for d in wanted))
    v = len(vocab)
    total_docs = sum(class_docs[d] for d in wanted)
    priors = {d: math.log(class_docs[d] / total_docs) for d in DIALECT_ORDER if d in wanted}
    likelihoods: dict[Dialect, dict[str, float]] = {}
    for d in priors:
        feats = class_feats[d]
        mass = sum(feats.values()) + v
        denom = math.log(mass) if mass else 0.0
        likelihoods[d] = {f: math.log(feats[f] + 1) - denom for f in sorted(vocab)}
    return DidModel(priors, likelihoods, vocab, tuple(orders))


def did_scores(model: DidModel, sentence) -> dict[Dialect, float]:
    feats = extract_features(_tokens(sentence), model.orders)
    scores = {}
    for d in model.labels:
        table = model.feature_log_likelihoods[d]
        # Unknown features are skipped, not smoothed.
        scores[d] = model.class_log_priors[d] + sum(
            count * table[f] for f, count in feats.items() if f in model.vocabulary
        )
    return scores


def did_predict(model: DidModel, sentence) -> DidPrediction:
    scores = did_scores(model, sentence)
    best = max(scores.values())
    # Ties go to the earliest label in BEI < CAI < DOH < RAB < TUN < MSA.
    label = next(d for d in model.labels if scores[d] == best)
    return DidPrediction(label, scores)


def did_accuracy(model: DidModel, labeled: Iterable[tuple[Sentence, Dialect]]) -> float:
    labeled = list(labeled)
    if not labeled:
        raise DidError("accuracy needs a non-empty evaluation set")
    hits = sum(did_predict(model, s).label is gold for s, gold in labeled)
    return hits / len(labeled)
