"""Normalizers: Do-Nothing, bigram MLE lookup with unigram backoff, DID routing.

Also formats control-token inputs for external seq2seq systems and reads
their hypothesis files back for scoring.
"""

from __future__ import annotations

import enum
import json
import os
import unicodedata
from collections import defaultdict
from dataclasses import dataclass, field
from importlib import resources
from typing import Callable, Mapping, Sequence, Union

from codafy._io import atomic_write_text, read_lines
from codafy.align import LinkKind, align_words
from codafy.corpus import CITY_DIALECTS, Dialect, ParallelCorpus, Sentence, Split, tokenize
from codafy.did import DidModel, did_predict

FORMAT_VERSION = 1
BOUNDARY = "⟨s⟩"
JOINT = "JOINT"

Condition = Union[str, Dialect]


class NormalizeError(ValueError):
    pass


def do_nothing(sentence: Sentence) -> Sentence:
    return sentence


@dataclass
class MleModel:
    """Count tables for P(target | source span, previous raw token).

    ``bigram_counts[(prev, src)][target]`` and ``unigram_counts[src][target]``.
    A source span is one raw token, or two space-joined tokens for merges.
    """

    condition: Condition = JOINT
    bigram_counts: dict[tuple[str, str], dict[str, int]] = field(default_factory=dict)
    unigram_counts: dict[str, dict[str, int]] = field(default_factory=dict)

    def add(self, prev: str, src: str, target: str, count: int = 1) -> None:
        big = self.bigram_counts.setdefault((prev, src), {})
        big[target] = big.get(target, 0) + count
        uni = self.unigram_counts.setdefault(src, {})
        uni[target] = uni.get(target, 0) + count

    def to_json(self) -> str:
        nested: dict[str, dict[str, dict[str, int]]] = defaultdict(dict)
        for (prev, src), targets in self.bigram_counts.items():
            nested[prev][src] = dict(sorted(targets.items()))
        doc = {
            "format_version": FORMAT_VERSION,
            "condition": _condition_name(self.condition),
            "bigram_counts": {
                prev: dict(sorted(srcs.items())) for prev, srcs in sorted(nested.items())
            },
            "unigram_counts": {
                src: dict(sorted(t.items())) for src, t in sorted(self.unigram_counts.items())
            },
        }
        return json.dumps(doc, ensure_ascii=False, indent=1) + "\n"

    def save(self, path: str | os.PathLike) -> None:
        atomic_write_text(path, self.to_json())

    @classmethod
    def from_json(cls, text: str) -> "MleModel":
        doc = json.loads(text)
        if doc.get("format_version") != FORMAT_VERSION:
            raise NormalizeError(f"unsupported MLE model version {doc.get('format_version')!r}")
        nfc = lambda s: unicodedata.normalize("NFC", s)  # noqa: E731
        model = cls(_parse_condition(doc["condition"]))
        for prev, srcs in doc["bigram_counts"].items():
            for src, targets in srcs.items():
                model.bigram_counts[(nfc(prev), nfc(src))] = {
                    nfc(t): int(c) for t, c in targets.items()
                }
        for src, targets in doc["unigram_counts"].items():
            model.unigram_counts[nfc(src)] = {nfc(t): int(c) for t, c in targets.items()}
        return model

    @classmethod
    def load(cls, path: str | os.PathLike) -> "MleModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())


def _condition_name(condition: Condition) -> str:
    return condition.value if isinstance(condition, Dialect) else str(condition)


def _parse_condition(name: str) -> Condition:
    return JOINT if name == JOINT else Dialect(name)


def training_units(raw: Sequence[str], coda: Sequence[str]) -> list[tuple[str, str, str]]:
    """(prev raw token, source span text, target text) triples for one pair.

    Every alignment link yields a unit, MATCH included. Insertions have no
    source word of their own, so their target tokens ride on the preceding
    unit (or on the following one at sentence start).
    """
    units: list[list] = []
    pending: list[str] = []
    for link in align_words(raw, coda):
        tgt = list(coda[link.tgt_span[0] : link.tgt_span[1]])
        if link.kind is LinkKind.INS:
            if units:
                units[-1][2].extend(tgt)
            else:
                pending.extend(tgt)
            continue
        start, end = link.src_span
        prev = raw[start - 1] if start > 0 else BOUNDARY
        units.append([prev, " ".join(raw[start:end]), pending + tgt])
        pending = []
    return [(prev, src, " ".join(tgt)) for prev, src, tgt in units]


def train_mle(
    corpus: ParallelCorpus,
    condition: Condition = JOINT,
    split: Split | None = Split.TRAIN,
) -> MleModel:
    """Count aligned (context, source) -> target events.

    JOINT uses every dialect; a city condition uses that dialect only.
    ``split=None`` trains on every example regardless of split label.
    """
    if isinstance(condition, Dialect) and not condition.is_city:
        raise NormalizeError(f"cannot condition an MLE model on {condition.value}")
    selected = corpus.select(
        split=split, dialect=condition if isinstance(condition, Dialect) else None
    )
    if not len(selected):
        where = "" if split is None else f" {split.value}"
        raise NormalizeError(f"no{where} examples for condition {_condition_name(condition)}")
    model = MleModel(condition)
    for ex in selected:
        for prev, src, target in training_units(ex.raw.tokens, ex.coda.tokens):
            model.add(prev, src, target)
    return model


def argmax_target(targets: Mapping[str, int]) -> str:
    # Highest count; ties go to the lexicographically smallest target.
    return min(targets.items(), key=lambda kv: (-kv[1], kv[0]))[0]


def mle_predict(model: MleModel, sentence: Sentence) -> Sentence:
    """Left-to-right lookup with bigram -> unigram -> passthrough backoff.

    Context is always the raw previous token. A two-token merge span is
    taken first when it was seen merged in exactly this context.
    """
    words = sentence.tokens
    out: list[str] = []
    i = 0
    while i < len(words):
        prev = words[i - 1] if i > 0 else BOUNDARY
        w = words[i]
        if i + 1 < len(words) and (prev, f"{w} {words[i + 1]}") in model.bigram_counts:
            out.extend(argmax_target(model.bigram_counts[(prev, f"{w} {words[i + 1]}")]).split())
            i += 2
            continue
        if (prev, w) in model.bigram_counts:
            out.extend(argmax_target(model.bigram_counts[(prev, w)]).split())
        elif w in model.unigram_counts:
            out.extend(argmax_target(model.unigram_counts[w]).split())
        else:
            out.append(w)
        i += 1
    return Sentence.from_tokens(out)


DidLike = Union[DidModel, Callable[[Sentence], Dialect]]


def _did_label(did: DidLike, sentence: Sentence) -> Dialect:
    if isinstance(did, DidModel):
        return did_predict(did, sentence).label
    return did(sentence)


def route_predict(
    models: Mapping[Dialect, MleModel],
    did: DidLike,
    fallback: MleModel,
    sentence: Sentence,
) -> tuple[Sentence, Dialect]:
    """Pick the per-dialect model by DID; MSA (or a city with no model) uses `fallback`."""
    label = _did_label(did, sentence)
    model = models.get(label) if label.is_city else None
    return mle_predict(model or fallback, sentence), label


class NormalizerKind(str, enum.Enum):
    DO_NOTHING = "do-nothing"
    MLE_JOINT = "mle-joint"
    MLE_ENSEMBLE = "mle-ensemble"
    EXTERNAL = "external"


@dataclass
class Normalizer:
    kind: NormalizerKind
    joint: MleModel | None = None
    models: dict[Dialect, MleModel] = field(default_factory=dict)
    did: DidLike | None = None

    def __call__(self, sentence: Sentence) -> tuple[Sentence, Dialect | None]:
        if self.kind is NormalizerKind.DO_NOTHING:
            return do_nothing(sentence), None
        if self.kind is NormalizerKind.MLE_JOINT:
            return mle_predict(self.joint, sentence), None
        if self.kind is NormalizerKind.MLE_ENSEMBLE:
            return route_predict(self.models, self.did, self.joint, sentence)
        raise NormalizeError("external systems are scored from hypothesis files, not run")


class ControlScheme(str, enum.Enum):
    CITY = "city"
    MSA_PHRASE = "msa-phrase"
    DA_PHRASE = "da-phrase"
    DIGIT = "digit"

    @classmethod
    def parse(cls, name: str) -> "ControlScheme":
        key = name.strip().lower().replace("_", "-")
        try:
            return cls(key)
        except ValueError:
            raise NormalizeError(f"unknown control scheme {name!r}") from None


ControlTable = dict[tuple[ControlScheme, Dialect], str]


def parse_control_table(lines: Sequence[str]) -> ControlTable:
    table: ControlTable = {}
    for lineno, line in enumerate(lines, start=1):
        if not line.strip() or line.startswith("#"):
            continue
        cells = line.split("\t")
        if len(cells) != 3:
            raise NormalizeError(f"control table: expected 3 columns at line {lineno}")
        scheme, dialect, token = cells
        if scheme == "scheme":
            continue
        try:
            key = (ControlScheme.parse(scheme), Dialect.parse(dialect))
        except ValueError as exc:
            raise NormalizeError(f"control table: {exc} at line {lineno}") from None
        token = unicodedata.normalize("NFC", token.strip())
        if not token:
            raise NormalizeError(f"control table: empty token at line {lineno}")
        table[key] = token
    return table


def load_control_table(path: str | os.PathLike | None = None) -> ControlTable:
    """Read a ``scheme<TAB>dialect<TAB>token`` table; None loads the bundled defaults."""
    if path is None:
        text = resources.files("codafy").joinpath("data/control_tokens.tsv").read_text("utf-8")
        return parse_control_table(text.splitlines())
    return parse_control_table(read_lines(path))


def format_control_input(
    sentence: Sentence,
    dialect: Dialect,
    scheme: ControlScheme,
    table: ControlTable | None = None,
) -> str:
    """Prefix the control token(s) for `dialect` to the space-joined sentence."""
    if not dialect.is_city:
        raise NormalizeError(f"control tokens are defined for city dialects, not {dialect.value}")
    table = load_control_table() if table is None else table
    try:
        token = table[(scheme, dialect)]
    except KeyError:
        raise NormalizeError(
            f"no control token configured for scheme {scheme.value} and dialect {dialect.value}"
        ) from None
    return " ".join([token, *sentence.tokens])


def load_hypotheses(path: str | os.PathLike, expected_count: int) -> list[Sentence]:
    lines = read_lines(path)
    if len(lines) != expected_count:
        raise NormalizeError(
            f"{path}: expected {expected_count} hypothesis lines, found {len(lines)}"
        )
    return [Sentence(tuple(tokenize(line)), line) for line in lines]


def city_models_complete(models: Mapping[Dialect, MleModel]) -> bool:
    return all(d in models for d in CITY_DIALECTS)
