"""Parallel raw/CODA corpus: tokenization, TSV loading, and splitting."""

from __future__ import annotations

import enum
import math
import os
import unicodedata
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from codafy._io import atomic_write_text, read_lines


class Dialect(str, enum.Enum):
    BEI = "BEI"
    CAI = "CAI"
    DOH = "DOH"
    RAB = "RAB"
    TUN = "TUN"
    MSA = "MSA"

    @property
    def is_city(self) -> bool:
        return self is not Dialect.MSA

    @classmethod
    def parse(cls, code: str) -> "Dialect":
        try:
            return cls(code.strip().upper())
        except ValueError:
            raise ValueError(f"unknown dialect {code!r}") from None


# Fixed label order; also the tie-break order used by the DID classifier.
DIALECT_ORDER: tuple[Dialect, ...] = tuple(Dialect)
CITY_DIALECTS: tuple[Dialect, ...] = tuple(d for d in Dialect if d.is_city)

CITY_NAMES = {
    Dialect.BEI: "Beirut",
    Dialect.CAI: "Cairo",
    Dialect.DOH: "Doha",
    Dialect.RAB: "Rabat",
    Dialect.TUN: "Tunis",
    Dialect.MSA: "MSA",
}


class Split(str, enum.Enum):
    TRAIN = "train"
    DEV = "dev"
    TEST = "test"
    UNSPLIT = "unsplit"

    @classmethod
    def parse(cls, name: str) -> "Split":
        try:
            return cls(name.strip().lower())
        except ValueError:
            raise ValueError(f"unknown split {name!r}") from None


class CorpusError(ValueError):
    pass


# Arabic question mark, comma and semicolon are category Po already; listed
# explicitly so the rule does not depend on the Unicode database version.
_EXTRA_PUNCT = frozenset("؟،؛")


def is_punct(ch: str) -> bool:
    return ch in _EXTRA_PUNCT or unicodedata.category(ch).startswith("P")


def tokenize(text: str) -> list[str]:
    """Split NFC-normalized text on whitespace, detaching punctuation runs.

    >>> tokenize('AwSl lh.')
    ['AwSl', 'lh', '.']
    >>> tokenize('fAttny\"\"\"')
    ['fAttny', '\"\"\"']
    """
    tokens: list[str] = []
    for chunk in unicodedata.normalize("NFC", text).split():
        start = 0
        for i in range(1, len(chunk) + 1):
            if i == len(chunk) or is_punct(chunk[i]) != is_punct(chunk[i - 1]):
                tokens.append(chunk[start:i])
                start = i
    return tokens


@dataclass(frozen=True)
class Sentence:
    tokens: tuple[str, ...]
    raw_text: str = ""

    @classmethod
    def from_text(cls, text: str) -> "Sentence":
        return cls(tuple(tokenize(text)), unicodedata.normalize("NFC", text))

    @classmethod
    def from_tokens(cls, tokens: Iterable[str]) -> "Sentence":
        tokens = tuple(tokens)
        return cls(tokens, " ".join(tokens))

    @property
    def text(self) -> str:
        """Detokenized form: tokens joined by single spaces."""
        return " ".join(self.tokens)

    def __len__(self) -> int:
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)


@dataclass(frozen=True)
class ParallelExample:
    id: str
    dialect: Dialect
    raw: Sentence
    coda: Sentence
    split: Split = Split.UNSPLIT

    def __post_init__(self):
        if not self.dialect.is_city:
            raise CorpusError(f"{self.id}: {self.dialect.value} is not a city dialect")
        if not self.raw.tokens or not self.coda.tokens:
            raise CorpusError(f"{self.id}: raw and coda must both be non-empty")


@dataclass(frozen=True)
class ParallelCorpus:
    examples: tuple[ParallelExample, ...] = ()
    per_dialect_counts: dict[Dialect, int] = field(init=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "examples", tuple(self.examples))
        seen: set[str] = set()
        for ex in self.examples:
            if ex.id in seen:
                raise CorpusError(f"duplicate id {ex.id!r}")
            seen.add(ex.id)
        counts = Counter(ex.dialect for ex in self.examples)
        object.__setattr__(
            self, "per_dialect_counts", {d: counts[d] for d in CITY_DIALECTS if counts[d]}
        )

    def __len__(self) -> int:
        return len(self.examples)

    def __iter__(self):
        return iter(self.examples)

    def select(
        self,
        split: Split | None = None,
        dialect: Dialect | None = None,
    ) -> "ParallelCorpus":
        return ParallelCorpus(
            tuple(
                ex
                for ex in self.examples
                if (split is None or ex.split is split)
                and (dialect is None or ex.dialect is dialect)
            )
        )

    def split_counts(self) -> dict[Dialect, dict[Split, int]]:
        out: dict[Dialect, dict[Split, int]] = {}
        for ex in self.examples:
            row = out.setdefault(ex.dialect, {s: 0 for s in Split})
            row[ex.split] += 1
        return out


def load_corpus(path: str | os.PathLike, format: str = "tsv") -> ParallelCorpus:
    """Load a corpus TSV of ``id, dialect, raw, coda`` rows.

    A first row whose first cell is literally ``id`` is treated as a header.
    Blank lines are ignored. Errors name the 1-based line number.
    """
    if format != "tsv":
        raise CorpusError(f"unsupported corpus format {format!r}")
    examples: list[ParallelExample] = []
    seen: dict[str, int] = {}
    for lineno, line in enumerate(read_lines(path), start=1):
        if not line.strip():
            continue
        cells = line.split("\t")
        if lineno == 1 and cells[0] == "id":
            continue
        if len(cells) != 4:
            raise CorpusError(f"expected 4 columns, got {len(cells)} at line {lineno}")
        ex_id, code, raw, coda = cells
        try:
            dialect = Dialect.parse(code)
        except ValueError:
            raise CorpusError(f"unknown dialect {code!r} at line {lineno}") from None
        if not dialect.is_city:
            raise CorpusError(f"unknown dialect {code!r} at line {lineno}")
        if ex_id in seen:
            raise CorpusError(
                f"duplicate id {ex_id!r} at line {lineno} (first at line {seen[ex_id]})"
            )
        raw_s, coda_s = Sentence.from_text(raw), Sentence.from_text(coda)
        if not raw_s.tokens or not coda_s.tokens:
            raise CorpusError(f"empty raw or coda at line {lineno}")
        seen[ex_id] = lineno
        examples.append(ParallelExample(ex_id, dialect, raw_s, coda_s))
    return ParallelCorpus(tuple(examples))


def dump_corpus(corpus: ParallelCorpus) -> str:
    lines = ["id\tdialect\traw\tcoda"]
    for ex in corpus:
        lines.append(f"{ex.id}\t{ex.dialect.value}\t{ex.raw.raw_text}\t{ex.coda.raw_text}")
    return "\n".join(lines) + "\n"


def write_corpus(corpus: ParallelCorpus, path: str | os.PathLike) -> None:
    atomic_write_text(path, dump_corpus(corpus))


def split_sizes(n: int, ratios: Sequence[float]) -> tuple[int, int, int]:
    # The epsilon keeps e.g. 100 * 0.29 from flooring to 28.
    n_train = math.floor(n * ratios[0] + 1e-9)
    n_dev = math.floor(n * ratios[1] + 1e-9)
    return n_train, n_dev, n - n_train - n_dev


def split_corpus(
    corpus: ParallelCorpus,
    ratios: Sequence[float] = (0.70, 0.15, 0.15),
    seed: int = 0,
) -> ParallelCorpus:
    """Assign TRAIN/DEV/TEST per dialect after a seeded per-dialect shuffle.

    Each dialect gets its own generator derived from ``(seed, dialect index)``,
    so adding or removing one dialect does not perturb the others. File order
    of the examples is preserved; only the split labels change.
    """
    if len(ratios) != 3 or any(r < 0 for r in ratios):
        raise CorpusError(f"ratios must be three non-negative fractions, got {tuple(ratios)}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise CorpusError(f"ratios must sum to 1.0, got {sum(ratios)!r}")
    if not len(corpus):
        raise CorpusError("cannot split an empty corpus")

    assignment: dict[str, Split] = {}
    for idx, dialect in enumerate(DIALECT_ORDER):
        members = [ex.id for ex in corpus if ex.dialect is dialect]
        if not members:
            continue
        if len(members) < 3:
            raise CorpusError(
                f"dialect {dialect.value} has {len(members)} examples; need at least 3"
            )
        rng = np.random.default_rng([seed, idx])
        order = rng.permutation(len(members))
        n_train, n_dev, _ = split_sizes(len(members), ratios)
        for rank, pos in enumerate(order):
            if rank < n_train:
                label = Split.TRAIN
            elif rank < n_train + n_dev:
                label = Split.DEV
            else:
                label = Split.TEST
            assignment[members[pos]] = label
    return ParallelCorpus(tuple(replace(ex, split=assignment[ex.id]) for ex in corpus))


def dump_manifest(corpus: ParallelCorpus) -> str:
    return "".join(f"{ex.id}\t{ex.split.value}\n" for ex in corpus)


def write_manifest(corpus: ParallelCorpus, path: str | os.PathLike) -> None:
    atomic_write_text(path, dump_manifest(corpus))


def read_manifest(path: str | os.PathLike) -> dict[str, Split]:
    manifest: dict[str, Split] = {}
    for lineno, line in enumerate(read_lines(path), start=1):
        if not line.strip():
            continue
        cells = line.split("\t")
        if len(cells) != 2:
            raise CorpusError(f"manifest: expected 2 columns at line {lineno}")
        try:
            manifest[cells[0]] = Split.parse(cells[1])
        except ValueError as exc:
            raise CorpusError(f"manifest: {exc} at line {lineno}") from None
    return manifest


def apply_manifest(corpus: ParallelCorpus, manifest: dict[str, Split]) -> ParallelCorpus:
    missing = [ex.id for ex in corpus if ex.id not in manifest]
    if missing:
        raise CorpusError(f"manifest lacks {len(missing)} corpus ids, e.g. {missing[0]!r}")
    return ParallelCorpus(tuple(replace(ex, split=manifest[ex.id]) for ex in corpus))
