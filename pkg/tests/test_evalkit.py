import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from docforge.docmodel import parse_annotation
from docforge.evalkit import (
    EvalPair,
    edit_distance,
    evaluate_corpus,
    evaluate_pair,
    load_eval_corpus,
    normalized_edit_distance,
    pair_corpora,
)


def oracle_edit_distance(a: str, b: str) -> int:
    """Full-matrix DP, no trimming or row reuse."""
    rows = len(a) + 1
    cols = len(b) + 1
    table = [[0] * cols for _ in range(rows)]
    for i in range(rows):
        table[i][0] = i
    for j in range(cols):
        table[0][j] = j
    for i in range(1, rows):
        for j in range(1, cols):
            cost = 0 if a[i - 1] == b[j - 1] else 1
            table[i][j] = min(
                table[i - 1][j] + 1,
                table[i][j - 1] + 1,
                table[i - 1][j - 1] + cost,
            )
    return table[-1][-1]


class TestEditDistance:
    def test_both_empty(self):
        assert edit_distance("", "") == 0

    def test_deletions(self):
        assert edit_distance("abc", "") == 3

    def test_kitten_sitting(self):
        assert edit_distance("kitten", "sitting") == 3

    def test_unicode_scalars(self):
        assert edit_distance("naïve", "naive") == 1
        assert edit_distance("日本語", "日本") == 1

    def test_oracle_agreement(self):
        rng = random.Random("lev")
        alphabet = "abcde"
        for _ in range(400):
            a = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 12)))
            b = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 12)))
            assert edit_distance(a, b) == oracle_edit_distance(a, b), (a, b)

    @settings(max_examples=300)
    @given(st.text(max_size=10), st.text(max_size=10), st.text(max_size=10))
    def test_metric_axioms(self, a, b, c):
        assert edit_distance(a, a) == 0
        assert edit_distance(a, b) == edit_distance(b, a)
        assert edit_distance(a, c) <= edit_distance(a, b) + edit_distance(b, c)


class TestNormalized:
    def test_identical(self):
        assert normalized_edit_distance("same", "same") == 0.0

    def test_total_mismatch(self):
        assert normalized_edit_distance("abc", "") == 1.0

    def test_kitten(self):
        assert normalized_edit_distance("kitten", "sitting") == pytest.approx(3 / 7)

    def test_both_empty(self):
        assert normalized_edit_distance("", "") == 0.0

    def test_bounds_and_zero_iff_equal(self):
        rng = random.Random("ned")
        for _ in range(300):
            a = "".join(rng.choice("xyz") for _ in range(rng.randint(0, 8)))
            b = "".join(rng.choice("xyz") for _ in range(rng.randint(0, 8)))
            ned = normalized_edit_distance(a, b)
            assert 0.0 <= ned <= 1.0
            assert (ned == 0.0) == (a == b)


def pair(sample_id, pred, target):
    return EvalPair(sample_id, parse_annotation(pred), parse_annotation(target))


class TestEvaluate:
    def test_identical_corpus_all_zero(self):
        text = "intro $x^2$ <table><tr><td>1</td></tr></table> outro"
        report = evaluate_corpus([pair("a", text, text)])
        assert report.means["text_ned"] == 0.0
        assert report.means["table_ned"] == 0.0
        assert report.means["formula_ned"] == 0.0
        assert report.means["overall_ned"] == 0.0

    def test_missing_table_scores_one(self):
        target = "x <table><tr><td>1</td></tr></table>"
        result = evaluate_pair(pair("a", "x", target))
        assert result.table_ned == 1.0

    def test_table_whitespace_ignored_via_canonicalization(self):
        compact = "<table><tr><td>A</td></tr></table>"
        spaced = "<table>\n  <tr>\n    <td>A</td>\n  </tr>\n</table>"
        result = evaluate_pair(pair("a", f"t {compact}", f"t {spaced}"))
        assert result.table_ned == 0.0

    def test_formula_mode_mismatch_counted_not_scored(self):
        result = evaluate_pair(pair("a", "$x$", "$$x$$"))
        assert result.formula_ned == 0.0
        assert result.formula_mode_mismatches == 1

    def test_category_skipping(self):
        report = evaluate_corpus(
            [
                pair("a", "words only", "words only"),
                pair("b", "x $f$", "x $f$"),
            ]
        )
        assert report.skipped["formula_ned"] == 1
        assert report.skipped["table_ned"] == 2

    def test_two_sample_hand_computed(self):
        # Sample 1: plain text 'abc' vs 'axc' -> 1/3; no tables/formulas.
        # Sample 2: formula 'kitten' vs 'sitting' -> 3/7.
        report = evaluate_corpus(
            [
                pair("s1", "abc", "axc"),
                pair("s2", "$kitten$", "$sitting$"),
            ]
        )
        per = {s.sample_id: s for s in report.per_sample}
        assert per["s1"].text_ned == pytest.approx(1 / 3)
        assert per["s2"].formula_ned == pytest.approx(3 / 7)
        assert report.means["formula_ned"] == pytest.approx(3 / 7)
        overall_expected = (
            normalized_edit_distance("abc", "axc")
            + normalized_edit_distance("$kitten$", "$sitting$")
        ) / 2
        assert report.means["overall_ned"] == pytest.approx(overall_expected)

    def test_order_pairing_of_tables(self):
        t1 = "<table><tr><td>AA</td></tr></table>"
        t2 = "<table><tr><td>BB</td></tr></table>"
        result = evaluate_pair(pair("a", f"{t1} {t2}", f"{t1} {t2}"))
        assert result.table_ned == 0.0
        swapped = evaluate_pair(pair("a", f"{t2} {t1}", f"{t1} {t2}"))
        assert swapped.table_ned > 0.0


class TestPairing:
    def test_pair_corpora_ok(self):
        preds = {"a": parse_annotation("x"), "b": parse_annotation("y")}
        targets = {"a": parse_annotation("x"), "b": parse_annotation("z")}
        pairs = pair_corpora(preds, targets)
        assert [p.sample_id for p in pairs] == ["a", "b"]

    def test_pair_corpora_mismatch(self):
        with pytest.raises(ValueError, match="do not match"):
            pair_corpora({"a": parse_annotation("x")}, {"b": parse_annotation("y")})

    def test_load_eval_corpus_schemas(self, tmp_path):
        path = tmp_path / "mixed.jsonl"
        path.write_text(
            '{"sample_id": "a", "annotation": "full record"}\n'
            '{"sample_id": "b", "prediction_text": "bare prediction"}\n',
            encoding="utf-8",
        )
        docs = load_eval_corpus(path)
        assert docs["a"].source_text == "full record"
        assert docs["b"].source_text == "bare prediction"
