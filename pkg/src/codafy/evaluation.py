"""Edit-based scoring (M2-style P/R/F), WER, significance, and error-analysis scaffolding."""

from __future__ import annotations

import enum
import json
import os
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from codafy._io import read_lines
from codafy.align import Edit, gold_edits, levenshtein
from codafy.corpus import CITY_NAMES, DIALECT_ORDER, Dialect, Sentence

DEFAULT_ITERATIONS = 10000
SIGNIFICANCE_LEVEL = 0.05


class EvaluationError(ValueError):
    pass


class ErrorCategory(str, enum.Enum):
    NON_CODA = "Non-CODA"
    HALLUCINATION = "Hallucination"
    RELATED_HALLUCINATION = "Related Hallucination"
    VALID = "Valid"
    DELETION = "Deletion"
    PUNCTUATION = "Punctuation"

    @classmethod
    def parse(cls, text: str) -> "ErrorCategory":
        key = text.strip().upper().replace("-", "_").replace(" ", "_")
        try:
            return cls[key]
        except KeyError:
            raise EvaluationError(f"unknown error category {text!r}") from None


def _tokens(s) -> tuple[str, ...]:
    return s.tokens if isinstance(s, Sentence) else tuple(s)


def f_beta(p: float, r: float, beta: float = 0.5) -> float:
    """(1 + b^2) p r / (b^2 p + r), defined as 0 when p and r are both 0."""
    b2 = beta * beta
    denom = b2 * p + r
    if denom == 0:
        return 0.0
    return (1 + b2) * p * r / denom


def precision_recall(matched: int, system: int, gold: int) -> tuple[float, float]:
    precision = 1.0 if system == 0 else matched / system
    if gold == 0:
        recall = 1.0 if system == 0 else 0.0
    else:
        recall = matched / gold
    return precision, recall


@dataclass(frozen=True)
class SentenceCounts:
    matched: int
    system: int
    gold: int
    word_errors: int
    ref_tokens: int


def sentence_counts(source, hypothesis, reference) -> SentenceCounts:
    src, hyp, ref = _tokens(source), _tokens(hypothesis), _tokens(reference)
    sys_edits = Counter(gold_edits(src, hyp))
    ref_edits = Counter(gold_edits(src, ref))
    matched = sum((sys_edits & ref_edits).values())
    return SentenceCounts(
        matched,
        sum(sys_edits.values()),
        sum(ref_edits.values()),
        levenshtein(hyp, ref),
        len(ref),
    )


@dataclass
class ScoreReport:
    matched_edits: int
    system_edits: int
    gold_edits: int
    precision: float
    recall: float
    f1: float
    f_half: float
    wer: float | None
    word_errors: int = 0
    ref_tokens: int = 0
    sentences: int = 0
    per_dialect: dict[str, "ScoreReport"] = field(default_factory=dict)

    @classmethod
    def from_counts(cls, counts: Iterable[SentenceCounts]) -> "ScoreReport":
        counts = list(counts)
        matched = sum(c.matched for c in counts)
        system = sum(c.system for c in counts)
        gold = sum(c.gold for c in counts)
        errors = sum(c.word_errors for c in counts)
        ref_tokens = sum(c.ref_tokens for c in counts)
        p, r = precision_recall(matched, system, gold)
        return cls(
            matched_edits=matched,
            system_edits=system,
            gold_edits=gold,
            precision=p,
            recall=r,
            f1=f_beta(p, r, 1.0),
            f_half=f_beta(p, r, 0.5),
            wer=errors / ref_tokens if ref_tokens else None,
            word_errors=errors,
            ref_tokens=ref_tokens,
            sentences=len(counts),
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["per_dialect"] = {k: v.to_dict() for k, v in self.per_dialect.items()}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n"


def _check_lengths(**lists) -> int:
    lengths = {k: len(v) for k, v in lists.items() if v is not None}
    if len(set(lengths.values())) > 1:
        detail = ", ".join(f"{k}={n}" for k, n in lengths.items())
        raise EvaluationError(f"length mismatch: {detail}")
    return next(iter(lengths.values()), 0)


def m2_score(
    sources: Sequence,
    hypotheses: Sequence,
    references: Sequence,
    dialects: Sequence[Dialect] | None = None,
) -> ScoreReport:
    """Micro-averaged edit P/R/F and WER, with per-dialect sub-reports when labeled.

    System and gold edits come from the same deterministic aligner run
    against the source; an edit matches only on identical span and
    replacement.
    """
    _check_lengths(sources=sources, hypotheses=hypotheses, references=references, dialects=dialects)
    counts = [sentence_counts(s, h, r) for s, h, r in zip(sources, hypotheses, references)]
    report = ScoreReport.from_counts(counts)
    if dialects is not None:
        for d in DIALECT_ORDER:
            subset = [c for c, label in zip(counts, dialects) if label is d]
            if subset:
                report.per_dialect[d.value] = ScoreReport.from_counts(subset)
    return report


def wer(hypotheses: Sequence, references: Sequence) -> float:
    """Corpus WER: summed token edit distance over summed reference length."""
    _check_lengths(hypotheses=hypotheses, references=references)
    errors = sum(levenshtein(_tokens(h), _tokens(r)) for h, r in zip(hypotheses, references))
    total = sum(len(_tokens(r)) for r in references)
    if total == 0:
        raise EvaluationError("WER is undefined with zero reference tokens")
    return errors / total


class Metric(str, enum.Enum):
    F_HALF = "f_half"
    WER = "wer"

    @classmethod
    def parse(cls, name: str) -> "Metric":
        key = name.strip().lower().replace("-", "_").replace(".", "_")
        aliases = {"f0_5": "f_half", "f05": "f_half"}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise EvaluationError(f"unknown metric {name!r}") from None


def _metric_from_sums(metric: Metric, sums: np.ndarray) -> np.ndarray:
    """Vectorized corpus metric; `sums` has columns matched, system, gold, errors, ref_tokens."""
    matched, system, gold, errors, ref_tokens = (sums[:, k].astype(float) for k in range(5))
    if metric is Metric.WER:
        return errors / np.maximum(ref_tokens, 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(system == 0, 1.0, matched / np.where(system == 0, 1, system))
        r = np.where(
            gold == 0, np.where(system == 0, 1.0, 0.0), matched / np.where(gold == 0, 1, gold)
        )
        denom = 0.25 * p + r
        f = np.where(denom == 0, 0.0, 1.25 * p * r / np.where(denom == 0, 1, denom))
    return f


@dataclass(frozen=True)
class SignificanceResult:
    metric: str
    score_a: float
    score_b: float
    observed_delta: float
    iterations: int
    seed: int
    at_least_as_extreme: int
    p_value: float

    @property
    def significant(self) -> bool:
        return self.p_value < SIGNIFICANCE_LEVEL


def approximate_randomization(
    sources: Sequence,
    references: Sequence,
    outputs_a: Sequence,
    outputs_b: Sequence,
    metric: Metric | str = Metric.F_HALF,
    iterations: int = DEFAULT_ITERATIONS,
    seed: int = 0,
    chunk: int = 1000,
) -> SignificanceResult:
    """Two-sided paired approximate randomization test over whole-sentence swaps.

    p = (#{|delta'| >= |delta|} + 1) / (iterations + 1). Swap masks are drawn
    from one seeded generator in fixed-size chunks, so the result depends
    only on the inputs, `iterations` and `seed`.
    """
    metric = Metric.parse(metric) if isinstance(metric, str) else metric
    n = _check_lengths(
        sources=sources, references=references, outputs_a=outputs_a, outputs_b=outputs_b
    )
    if iterations < 1:
        raise EvaluationError("iterations must be >= 1")

    def table(outputs) -> np.ndarray:
        rows = [
            (c.matched, c.system, c.gold, c.word_errors, c.ref_tokens)
            for c in (sentence_counts(s, o, r) for s, o, r in zip(sources, outputs, references))
        ]
        return np.array(rows, dtype=np.int64).reshape(n, 5)

    a, b = table(outputs_a), table(outputs_b)
    diff = b - a
    total_a, total_b = a.sum(axis=0), b.sum(axis=0)
    score_a = float(_metric_from_sums(metric, total_a[None, :])[0])
    score_b = float(_metric_from_sums(metric, total_b[None, :])[0])
    observed = abs(score_a - score_b)

    rng = np.random.default_rng(seed)
    hits = 0
    done = 0
    while done < iterations:
        k = min(chunk, iterations - done)
        swaps = (rng.random((k, n)) < 0.5).astype(np.int64)
        moved = swaps @ diff
        deltas = np.abs(
            _metric_from_sums(metric, total_a + moved) - _metric_from_sums(metric, total_b - moved)
        )
        hits += int(np.count_nonzero(deltas >= observed - 1e-12))
        done += k
    return SignificanceResult(
        metric=metric.value,
        score_a=score_a,
        score_b=score_b,
        observed_delta=observed,
        iterations=iterations,
        seed=seed,
        at_least_as_extreme=hits,
        p_value=(hits + 1) / (iterations + 1),
    )


def significance(
    sources: Sequence,
    references: Sequence,
    outputs_a: Sequence,
    outputs_b: Sequence,
    metric: Metric | str = Metric.F_HALF,
    iterations: int = DEFAULT_ITERATIONS,
    seed: int = 0,
) -> float:
    return approximate_randomization(
        sources, references, outputs_a, outputs_b, metric, iterations, seed
    ).p_value


class Side(str, enum.Enum):
    SPURIOUS = "SPURIOUS"
    MISSED = "MISSED"


@dataclass(frozen=True)
class MismatchRecord:
    sentence_id: str
    dialect: str
    side: Side
    edit: Edit
    source_text: str
    category: str = ""


DIFF_HEADER = ("id", "dialect", "side", "src_start", "src_end", "source", "replacement", "category")


def diff_report(
    sources: Sequence,
    hypotheses: Sequence,
    references: Sequence,
    dialects: Sequence[Dialect | None] | None = None,
    ids: Sequence[str] | None = None,
) -> list[MismatchRecord]:
    """One record per unmatched system edit (SPURIOUS) or gold edit (MISSED).

    Records are ordered by sentence, then by edit span and replacement,
    with SPURIOUS before MISSED at the same key.
    """
    n = _check_lengths(
        sources=sources, hypotheses=hypotheses, references=references, dialects=dialects, ids=ids
    )
    records: list[MismatchRecord] = []
    for k in range(n):
        src = _tokens(sources[k])
        sys_edits = Counter(gold_edits(src, _tokens(hypotheses[k])))
        ref_edits = Counter(gold_edits(src, _tokens(references[k])))
        sid = ids[k] if ids is not None else str(k + 1)
        label = dialects[k] if dialects is not None else None
        dialect = label.value if isinstance(label, Dialect) else ""
        rows = [(e, Side.SPURIOUS) for e in (sys_edits - ref_edits).elements()]
        rows += [(e, Side.MISSED) for e in (ref_edits - sys_edits).elements()]
        rows.sort(key=lambda row: (row[0].src_start, row[0].src_end, row[0].replacement, row[1] is Side.MISSED))
        for edit, side in rows:
            text = " ".join(src[edit.src_start : edit.src_end])
            records.append(MismatchRecord(sid, dialect, side, edit, text))
    return records


def format_diff_tsv(records: Sequence[MismatchRecord]) -> str:
    lines = ["\t".join(DIFF_HEADER)]
    for rec in records:
        lines.append(
            "\t".join(
                [
                    rec.sentence_id,
                    rec.dialect,
                    rec.side.value,
                    str(rec.edit.src_start),
                    str(rec.edit.src_end),
                    rec.source_text,
                    rec.edit.replacement,
                    rec.category,
                ]
            )
        )
    return "\n".join(lines) + "\n"


def read_diff_tsv(path: str | os.PathLike) -> list[MismatchRecord]:
    records = []
    for lineno, line in enumerate(read_lines(path), start=1):
        if not line.strip():
            continue
        cells = line.split("\t")
        if cells[0] == "id" and lineno == 1:
            continue
        if len(cells) != len(DIFF_HEADER):
            raise EvaluationError(f"diff report: expected {len(DIFF_HEADER)} columns at line {lineno}")
        sid, dialect, side, start, end, source, replacement, category = cells
        category = category.strip()
        if category:
            try:
                category = ErrorCategory.parse(category).value
            except EvaluationError as exc:
                raise EvaluationError(f"{exc} at line {lineno}") from None
        records.append(
            MismatchRecord(sid, dialect, Side(side), Edit(int(start), int(end), replacement), source, category)
        )
    return records


def category_distribution(records: Iterable[MismatchRecord]) -> dict[str, tuple[int, float]]:
    """Counts and percentages of annotated categories; unannotated records are ignored."""
    counts = Counter(rec.category for rec in records if rec.category)
    total = sum(counts.values())
    return {
        cat.value: (counts[cat.value], 100.0 * counts[cat.value] / total if total else 0.0)
        for cat in ErrorCategory
    }


def format_category_table(dist: dict[str, tuple[int, float]]) -> str:
    lines = [f"{'Category':<24}{'Count':>7}{'%':>8}"]
    for cat, (count, pct) in dist.items():
        lines.append(f"{cat:<24}{count:>7}{pct:>7.0f}%")
    return "\n".join(lines) + "\n"


def format_report_table(report: ScoreReport, title: str = "") -> str:
    """Plain-text table with P / R / F1 / F0.5 / WER columns, as percentages."""

    def row(name: str, r: ScoreReport) -> str:
        wer_cell = f"{100 * r.wer:8.2f}" if r.wer is not None else f"{'-':>8}"
        return (
            f"{name:<10}{100 * r.precision:8.2f}{100 * r.recall:8.2f}"
            f"{100 * r.f1:8.2f}{100 * r.f_half:8.2f}{wer_cell}"
        )

    lines = []
    if title:
        lines.append(title)
    lines.append(f"{'':<10}{'P':>8}{'R':>8}{'F1':>8}{'F0.5':>8}{'WER':>8}")
    lines.append(row("All", report))
    for code, sub in report.per_dialect.items():
        lines.append(row(CITY_NAMES[Dialect(code)], sub))
    return "\n".join(lines) + "\n"
