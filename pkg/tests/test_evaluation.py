import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from codafy.align import Edit
from codafy.corpus import Dialect, Sentence
from codafy.evaluation import (
    ErrorCategory,
    EvaluationError,
    Side,
    approximate_randomization,
    category_distribution,
    diff_report,
    f_beta,
    format_diff_tsv,
    format_report_table,
    m2_score,
    read_diff_tsv,
    significance,
    wer,
)

from oracles import oracle_counts, token_distance
from synthetic import functional_corpus


def T(text):
    return Sentence.from_text(text)


fractions = st.floats(min_value=0, max_value=1)


@given(fractions)
def test_f_beta_equal_inputs(x):
    assert f_beta(x, x, 0.5) == pytest.approx(x)
    assert f_beta(x, x, 1.0) == pytest.approx(x)


def test_f_beta_values():
    assert f_beta(1.0, 0.0) == 0.0
    assert f_beta(0.0, 0.0) == 0.0
    # 0.625 / 1.125
    assert f_beta(0.5, 1.0, 0.5) == pytest.approx(0.5556, abs=1e-4)


@given(fractions, fractions, fractions)
def test_f_beta_monotone(p, r, bump):
    p2 = min(1.0, p + bump)
    r2 = min(1.0, r + bump)
    assert f_beta(p2, r, 0.5) >= f_beta(p, r, 0.5) - 1e-12
    assert f_beta(p, r2, 0.5) >= f_beta(p, r, 0.5) - 1e-12


def test_m2_perfect_and_do_nothing():
    src = [T("a b c"), T("zγyrh w")]
    ref = [T("a x c"), T("Sγyrℏ w")]
    perfect = m2_score(src, ref, ref)
    assert (perfect.precision, perfect.recall, perfect.f_half) == (1.0, 1.0, 1.0)
    nothing = m2_score(src, src, ref)
    assert nothing.system_edits == 0
    assert (nothing.precision, nothing.recall, nothing.f_half) == (1.0, 0.0, 0.0)


def test_m2_worked_example():
    report = m2_score([T("a b c")], [T("a x d")], [T("a x c")])
    assert (report.matched_edits, report.system_edits, report.gold_edits) == (1, 2, 1)
    assert report.precision == 0.5
    assert report.recall == 1.0
    assert report.f_half == pytest.approx(0.5556, abs=1e-4)


def test_m2_recall_convention_without_gold_edits():
    report = m2_score([T("a")], [T("b")], [T("a")])
    assert (report.system_edits, report.gold_edits) == (1, 0)
    assert (report.precision, report.recall) == (0.0, 0.0)
    clean = m2_score([T("a")], [T("a")], [T("a")])
    assert (clean.precision, clean.recall, clean.f_half) == (1.0, 1.0, 1.0)


def test_m2_length_mismatch():
    with pytest.raises(EvaluationError, match="length mismatch"):
        m2_score([T("a")], [T("a"), T("b")], [T("a")])


def test_m2_per_dialect_is_additive():
    corpus = functional_corpus(50, seed=4)
    src = [ex.raw for ex in corpus]
    ref = [ex.coda for ex in corpus]
    hyp = [s if k % 3 else r for k, (s, r) in enumerate(zip(src, ref))]
    report = m2_score(src, hyp, ref, [ex.dialect for ex in corpus])
    assert len(report.per_dialect) == 5
    for field in ("matched_edits", "system_edits", "gold_edits", "word_errors", "ref_tokens"):
        assert sum(getattr(r, field) for r in report.per_dialect.values()) == getattr(report, field)
    table = format_report_table(report)
    assert "F0.5" in table and "Beirut" in table and "Tunis" in table


vocab = st.sampled_from(["a", "b", "c", "d"])
short = st.lists(vocab, max_size=5)


@settings(max_examples=150, deadline=None)
@given(st.lists(st.tuples(short, short, short), min_size=1, max_size=4))
def test_m2_counts_match_oracle(triples):
    src = [Sentence.from_tokens(s) for s, _, _ in triples]
    hyp = [Sentence.from_tokens(h) for _, h, _ in triples]
    ref = [Sentence.from_tokens(r) for _, _, r in triples]
    report = m2_score(src, hyp, ref)
    expected = [oracle_counts(s, h, r) for s, h, r in triples]
    assert (report.matched_edits, report.system_edits, report.gold_edits) == tuple(
        sum(col) for col in zip(*expected)
    )
    assert report.matched_edits <= min(report.system_edits, report.gold_edits)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(short, short), min_size=1, max_size=4))
def test_self_evaluation_is_perfect(pairs):
    src = [Sentence.from_tokens(s) for s, _ in pairs]
    ref = [Sentence.from_tokens(r) for _, r in pairs]
    report = m2_score(src, ref, ref)
    assert (report.precision, report.recall, report.f1, report.f_half) == (1.0, 1.0, 1.0, 1.0)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(short, short, short), min_size=1, max_size=4), st.data())
def test_fixing_a_sentence_never_loses_matches(triples, data):
    src = [Sentence.from_tokens(s) for s, _, _ in triples]
    hyp = [Sentence.from_tokens(h) for _, h, _ in triples]
    ref = [Sentence.from_tokens(r) for _, _, r in triples]
    k = data.draw(st.integers(0, len(triples) - 1))
    fixed = list(hyp)
    fixed[k] = ref[k]
    assert m2_score(src, fixed, ref).matched_edits >= m2_score(src, hyp, ref).matched_edits


def test_wer_examples():
    assert wer([T("a b")], [T("a b")]) == 0.0
    assert wer([T("a c")], [T("a b c")]) == pytest.approx(1 / 3)
    assert wer([T("b c")], [T("a")]) == 2.0
    with pytest.raises(EvaluationError, match="zero reference"):
        wer([T("a")], [T("")])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(short, st.lists(vocab, min_size=1, max_size=5)), min_size=1, max_size=4))
def test_wer_zero_iff_equal_and_matches_oracle(pairs):
    hyp = [Sentence.from_tokens(h) for h, _ in pairs]
    ref = [Sentence.from_tokens(r) for _, r in pairs]
    value = wer(hyp, ref)
    expected = sum(token_distance(h, r) for h, r in pairs) / sum(len(r) for _, r in pairs)
    assert value == pytest.approx(expected)
    assert (value == 0) == all(h == r for h, r in pairs)


def all_edited(n=50, seed=0):
    corpus = functional_corpus(n, seed=seed)
    return [ex.raw for ex in corpus], [ex.coda for ex in corpus]


def test_significance_identical_systems():
    src, ref = all_edited(20)
    assert significance(src, ref, src, src, iterations=200, seed=1) == 1.0
    assert significance(src, ref, ref, ref, metric="wer", iterations=200, seed=1) == 1.0


def test_significance_perfect_vs_nothing():
    src, ref = all_edited(50)
    p = significance(src, ref, ref, src, iterations=10000, seed=7)
    assert p < 0.05
    assert p == significance(src, ref, ref, src, iterations=10000, seed=7)


def test_significance_symmetric_in_systems():
    src, ref = all_edited(30, seed=2)
    rng = random.Random(0)
    a = [r if rng.random() < 0.6 else s for s, r in zip(src, ref)]
    b = [r if rng.random() < 0.4 else s for s, r in zip(src, ref)]
    for metric in ("f_half", "wer"):
        ab = approximate_randomization(src, ref, a, b, metric, iterations=500, seed=3)
        ba = approximate_randomization(src, ref, b, a, metric, iterations=500, seed=3)
        assert ab.p_value == ba.p_value
        assert 0 < ab.p_value <= 1


def test_significance_brute_force_small():
    """With 4 sentences, enumerate all 16 swap patterns and compare in expectation."""
    from itertools import product

    src, ref = all_edited(4, seed=5)
    a = list(ref)
    b = [src[0], ref[1], src[2], src[3]]
    result = approximate_randomization(src, ref, a, b, iterations=20000, seed=11)

    def f_half(outputs):
        return m2_score(src, outputs, ref).f_half

    observed = abs(f_half(a) - f_half(b))
    hits = 0
    for mask in product([0, 1], repeat=4):
        aa = [bb if m else x for x, bb, m in zip(a, b, mask)]
        bb_ = [x if m else bb for x, bb, m in zip(a, b, mask)]
        hits += abs(f_half(aa) - f_half(bb_)) >= observed - 1e-12
    assert result.observed_delta == pytest.approx(observed)
    assert result.p_value == pytest.approx(hits / 16, abs=0.015)


def test_significance_errors():
    src, ref = all_edited(3)
    with pytest.raises(EvaluationError):
        significance(src, ref, src, src[:2])
    with pytest.raises(EvaluationError):
        significance(src, ref, src, src, iterations=0)


def test_diff_report_records():
    src, ref = all_edited(10, seed=8)
    assert diff_report(src, ref, ref) == []
    records = diff_report(src, src, ref, [Dialect.CAI] * 10)
    gold_total = m2_score(src, src, ref).gold_edits
    assert len(records) == gold_total
    assert all(r.side is Side.MISSED and r.dialect == "CAI" and r.category == "" for r in records)


def test_diff_report_sides_and_order():
    records = diff_report([T("a b c")], [T("a x d")], [T("a x c")], ids=["s9"])
    assert [(r.sentence_id, r.side, r.edit) for r in records] == [
        ("s9", Side.SPURIOUS, Edit(2, 3, "d")),
    ]
    records = diff_report([T("a b c")], [T("a y c")], [T("a x c")])
    # same span: ordered by replacement text, then SPURIOUS before MISSED
    assert [(r.side, r.edit.replacement) for r in records] == [
        (Side.MISSED, "x"),
        (Side.SPURIOUS, "y"),
    ]


def test_diff_tsv_round_trip_and_categories(tmp_path):
    src, ref = all_edited(6, seed=9)
    records = diff_report(src, src, ref, [Dialect.BEI] * 6)
    text = format_diff_tsv(records)
    assert text.splitlines()[0].split("\t")[-1] == "category"
    path = tmp_path / "diff.tsv"
    path.write_text(text, encoding="utf-8")
    assert read_diff_tsv(path) == records

    lines = text.splitlines()
    labels = ["Non-CODA", "hallucination", "NON_CODA", "Valid"]
    annotated = [lines[0]] + [
        line + labels[k % len(labels)] if k < 4 else line for k, line in enumerate(lines[1:])
    ]
    path.write_text("\n".join(annotated) + "\n", encoding="utf-8")
    dist = category_distribution(read_diff_tsv(path))
    assert dist[ErrorCategory.NON_CODA.value] == (2, 50.0)
    assert dist[ErrorCategory.HALLUCINATION.value] == (1, 25.0)
    assert dist[ErrorCategory.PUNCTUATION.value] == (0, 0.0)


def test_unknown_category_rejected(tmp_path):
    path = tmp_path / "bad.tsv"
    path.write_text("id\tdialect\tside\tsrc_start\tsrc_end\tsource\treplacement\tcategory\n"
                    "1\tBEI\tMISSED\t0\t1\ta\tb\tTypo\n", encoding="utf-8")
    with pytest.raises(EvaluationError, match="line 2"):
        read_diff_tsv(path)
