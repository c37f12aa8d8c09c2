"""Word alignment between raw and CODA token sequences.

The aligner is a dynamic program over token positions with six moves:

    MATCH / SUB   1 -> 1   ned(src, tgt), 0 for equal tokens
    DEL           1 -> 0   1.0 + 0.01 * len(token)
    INS           0 -> 1   1.0 + 0.01 * len(token)
    SPLIT         1 -> 2   ned(src, "t1 t2") + 0.1
    MERGE         2 -> 1   ned("s1 s2", tgt) + 0.1

where ned(a, b) = levenshtein(a, b) / (len(a) + len(b)) over code points.
Wider spans come out as chains of these moves. Costs within ``COST_EPS`` are
ties, resolved MATCH > SUB > MERGE > SPLIT > DEL > INS at every cell.
"""

from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

from codafy.corpus import CITY_DIALECTS, Dialect, ParallelCorpus

COST_EPS = 1e-9
INDEL_COST = 1.0
INDEL_LENGTH_PENALTY = 0.01
SPLIT_MERGE_PENALTY = 0.1
SPACE_SYMBOL = "<SPC>"


class LinkKind(enum.IntEnum):
    # Values double as tie-break priority (lower wins).
    MATCH = 0
    SUB = 1
    MERGE = 2
    SPLIT = 3
    DEL = 4
    INS = 5


# (source width, target width) consumed by each move.
MOVE_WIDTHS = {
    LinkKind.MATCH: (1, 1),
    LinkKind.SUB: (1, 1),
    LinkKind.MERGE: (2, 1),
    LinkKind.SPLIT: (1, 2),
    LinkKind.DEL: (1, 0),
    LinkKind.INS: (0, 1),
}


@dataclass(frozen=True)
class AlignLink:
    src_span: tuple[int, int]
    tgt_span: tuple[int, int]
    kind: LinkKind

    @property
    def src_len(self) -> int:
        return self.src_span[1] - self.src_span[0]

    @property
    def tgt_len(self) -> int:
        return self.tgt_span[1] - self.tgt_span[0]


@dataclass(frozen=True)
class Alignment:
    links: tuple[AlignLink, ...]
    cost: float = 0.0

    def __iter__(self):
        return iter(self.links)

    def __len__(self) -> int:
        return len(self.links)


@dataclass(frozen=True, order=True)
class Edit:
    src_start: int
    src_end: int
    replacement: str

    def __post_init__(self):
        if self.src_end < self.src_start:
            raise ValueError(f"bad edit span ({self.src_start}, {self.src_end})")
        if self.src_start == self.src_end and not self.replacement:
            raise ValueError("empty insertion edit")


@dataclass(frozen=True, order=True)
class CharEdit:
    src_chars: str
    tgt_chars: str

    def __post_init__(self):
        if not self.src_chars and not self.tgt_chars:
            raise ValueError("CharEdit needs at least one non-empty side")

    def __str__(self) -> str:
        return f"{show_chars(self.src_chars)}->{show_chars(self.tgt_chars)}"


def show_chars(chars: str) -> str:
    return chars.replace(" ", SPACE_SYMBOL)


def levenshtein(a: Sequence, b: Sequence) -> int:
    """Unit-cost edit distance between two sequences."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, start=1):
        cur = [i]
        for j, y in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y)))
        prev = cur
    return prev[-1]


@lru_cache(maxsize=1 << 18)
def normalized_distance(a: str, b: str) -> float:
    # Normalizing by the longer string instead lets a split+merge chain over
    # one-letter tokens undercut two plain substitutions.
    if a == b:
        return 0.0
    return levenshtein(a, b) / (len(a) + len(b))


def move_cost(kind: LinkKind, src: Sequence[str], tgt: Sequence[str]) -> float:
    """Cost of aligning the source tokens `src` to the target tokens `tgt`."""
    if kind is LinkKind.DEL:
        return INDEL_COST + INDEL_LENGTH_PENALTY * len(src[0])
    if kind is LinkKind.INS:
        return INDEL_COST + INDEL_LENGTH_PENALTY * len(tgt[0])
    dist = normalized_distance(" ".join(src), " ".join(tgt))
    if kind in (LinkKind.SPLIT, LinkKind.MERGE):
        dist += SPLIT_MERGE_PENALTY
    return dist


def align_words(src: Sequence[str], tgt: Sequence[str]) -> Alignment:
    n, m = len(src), len(tgt)
    inf = float("inf")
    cost = [[inf] * (m + 1) for _ in range(n + 1)]
    back: list[list[LinkKind | None]] = [[None] * (m + 1) for _ in range(n + 1)]
    cost[0][0] = 0.0
    for i in range(n + 1):
        for j in range(m + 1):
            if i == 0 and j == 0:
                continue
            best_cost, best_kind = inf, None
            for kind in LinkKind:
                di, dj = MOVE_WIDTHS[kind]
                if i < di or j < dj:
                    continue
                s, t = src[i - di : i], tgt[j - dj : j]
                if kind is LinkKind.MATCH and s[0] != t[0]:
                    continue
                if kind is LinkKind.SUB and s[0] == t[0]:
                    continue
                c = cost[i - di][j - dj] + move_cost(kind, s, t)
                if c < best_cost - COST_EPS:
                    best_cost, best_kind = c, kind
            cost[i][j], back[i][j] = best_cost, best_kind

    links: list[AlignLink] = []
    i, j = n, m
    while i or j:
        kind = back[i][j]
        di, dj = MOVE_WIDTHS[kind]
        links.append(AlignLink((i - di, i), (j - dj, j), kind))
        i, j = i - di, j - dj
    links.reverse()
    return Alignment(tuple(links), cost[n][m])


def span_text(tokens: Sequence[str], span: tuple[int, int]) -> str:
    return " ".join(tokens[span[0] : span[1]])


def extract_edits(
    alignment: Alignment, src: Sequence[str], tgt: Sequence[str]
) -> list[Edit]:
    """One edit per non-MATCH link, sorted by source span.

    Adjacent links are never merged; consecutive insertions at one point
    yield separate edits, kept in target order.
    """
    edits = [
        Edit(link.src_span[0], link.src_span[1], span_text(tgt, link.tgt_span))
        for link in alignment
        if link.kind is not LinkKind.MATCH
    ]
    # Stable: equal spans (chained insertions) keep alignment order.
    edits.sort(key=lambda e: (e.src_start, e.src_end))
    return edits


def gold_edits(src: Sequence[str], tgt: Sequence[str]) -> list[Edit]:
    return extract_edits(align_words(src, tgt), src, tgt)


def apply_edits(src: Sequence[str], edits: Iterable[Edit]) -> list[str]:
    """Patch `src` with sorted, non-overlapping edits."""
    out: list[str] = []
    pos = 0
    for edit in sorted(edits, key=lambda e: (e.src_start, e.src_end)):
        if edit.src_start < pos:
            raise ValueError(f"overlapping edit {edit}")
        out.extend(src[pos : edit.src_start])
        out.extend(edit.replacement.split())
        pos = edit.src_end
    out.extend(src[pos:])
    return out


def char_transformations(src: str, tgt: str) -> list[CharEdit]:
    """Non-identity character operations of a unit-cost Levenshtein alignment.

    Ties on the backtrace prefer MATCH, then SUB, then DEL, then INS. Each
    operation is a single code point; insertions and deletions have one side
    empty.

    >>> [str(e) for e in char_transformations("zγyrh", "Sγyrℏ")]
    ['z->S', 'h->ℏ']
    """
    n, m = len(src), len(tgt)
    d = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n + 1):
        d[i][0] = i
    for j in range(m + 1):
        d[0][j] = j
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            d[i][j] = min(
                d[i - 1][j - 1] + (src[i - 1] != tgt[j - 1]),
                d[i - 1][j] + 1,
                d[i][j - 1] + 1,
            )

    ops: list[CharEdit] = []
    i, j = n, m
    while i or j:
        if i and j and src[i - 1] == tgt[j - 1] and d[i][j] == d[i - 1][j - 1]:
            i, j = i - 1, j - 1
        elif i and j and d[i][j] == d[i - 1][j - 1] + 1:
            ops.append(CharEdit(src[i - 1], tgt[j - 1]))
            i, j = i - 1, j - 1
        elif i and d[i][j] == d[i - 1][j] + 1:
            ops.append(CharEdit(src[i - 1], ""))
            i -= 1
        else:
            ops.append(CharEdit("", tgt[j - 1]))
            j -= 1
    ops.reverse()
    return ops


def example_transformations(src: Sequence[str], tgt: Sequence[str]) -> list[CharEdit]:
    out: list[CharEdit] = []
    for link in align_words(src, tgt):
        if link.kind is not LinkKind.MATCH:
            out.extend(
                char_transformations(span_text(src, link.src_span), span_text(tgt, link.tgt_span))
            )
    return out


def count_transformations(corpus: ParallelCorpus) -> dict[Dialect, Counter]:
    counts: dict[Dialect, Counter] = {d: Counter() for d in CITY_DIALECTS}
    for ex in corpus:
        counts[ex.dialect].update(example_transformations(ex.raw.tokens, ex.coda.tokens))
    return counts


def rank_counts(counts: Counter) -> list[tuple[CharEdit, int]]:
    return sorted(counts.items(), key=lambda kv: (-kv[1], kv[0].src_chars, kv[0].tgt_chars))


def transformation_stats(
    corpus: ParallelCorpus, dialect: Dialect | None = None
) -> list[tuple[CharEdit, int]]:
    """Rank character transformations by count, overall or for one dialect."""
    per_dialect = count_transformations(corpus)
    if dialect is not None:
        return rank_counts(per_dialect.get(dialect, Counter()))
    total: Counter = Counter()
    for counts in per_dialect.values():
        total.update(counts)
    return rank_counts(total)


def format_stats_tsv(ranking: Sequence[tuple[CharEdit, int]], top: int | None = None) -> str:
    rows = ranking if top is None else ranking[:top]
    lines = ["rank\tsrc\ttgt\tcount"]
    for rank, (edit, count) in enumerate(rows, start=1):
        lines.append(f"{rank}\t{show_chars(edit.src_chars)}\t{show_chars(edit.tgt_chars)}\t{count}")
    return "\n".join(lines) + "\n"


def format_stats_columns(
    per_dialect: dict[Dialect, Sequence[tuple[CharEdit, int]]], top: int = 10
) -> str:
    """Side-by-side ranked columns, one per dialect."""
    dialects = list(per_dialect)
    header = ["rank"]
    for d in dialects:
        header += [f"{d.value}_src", f"{d.value}_tgt", f"{d.value}_count"]
    lines = ["\t".join(header)]
    depth = min(top, max((len(r) for r in per_dialect.values()), default=0))
    for k in range(depth):
        row = [str(k + 1)]
        for d in dialects:
            ranking = per_dialect[d]
            if k < len(ranking):
                edit, count = ranking[k]
                row += [show_chars(edit.src_chars), show_chars(edit.tgt_chars), str(count)]
            else:
                row += ["", "", ""]
        lines.append("\t".join(row))
    return "\n".join(lines) + "\n"
