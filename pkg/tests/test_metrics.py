"""Metrics: normalization, F1/EM semantics, corpus aggregation."""

import json
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xlrc.metrics import (EvalReport, MetricsError, evaluate, exact_match,
                          f1_score, golds_from_examples, normalize,
                          read_predictions, write_predictions)
from xlrc.corpus import Answer, RawExample


class TestNormalize:
    def test_article_and_punctuation_removal(self):
        assert normalize("The  Cat.") == ["cat"]

    def test_cjk_per_character(self):
        assert normalize("北京。") == ["北", "京"]

    def test_empty(self):
        assert normalize("") == []

    def test_mixed_scripts_in_one_pass(self):
        assert normalize("the 北京 Metro") == ["北", "京", "metro"]


# independent brute-force scorer: counts unit overlap by explicit removal
def reference_f1(pred, gold):
    p = normalize(pred)
    g = list(normalize(gold))
    if not p or not g:
        return 1.0 if p == g else 0.0
    matched = 0
    for unit in p:
        if unit in g:
            g.remove(unit)
            matched += 1
    if matched == 0:
        return 0.0
    precision = matched / len(p)
    recall = matched / len(normalize(gold))
    return 2 * precision * recall / (precision + recall)


WORDS = ["北", "京", "大", "学", "cat", "the", "dog", "run", "王", "he", "a"]


def random_text(rng):
    k = int(rng.integers(0, 6))
    return " ".join(rng.choice(WORDS) for _ in range(k))


class TestF1Score:
    def test_identity(self):
        assert f1_score("北京大学", "北京大学") == 1.0
        assert f1_score("the cat", "cat") == 1.0  # article stripped

    def test_partial_character_overlap(self):
        score = f1_score("北京大学", "北京")
        # P = 2/4, R = 2/2 -> F1 = 2/3
        assert score == pytest.approx(2 / 3)

    def test_disjoint(self):
        assert f1_score("cat", "dog") == 0.0

    def test_both_empty(self):
        assert f1_score("", "") == 1.0
        assert f1_score("the", "") == 1.0  # both normalize to nothing

    def test_one_empty(self):
        assert f1_score("", "cat") == 0.0

    def test_against_independent_scorer(self):
        rng = np.random.default_rng(0)
        for _ in range(500):
            pred, gold = random_text(rng), random_text(rng)
            assert f1_score(pred, gold) == pytest.approx(
                reference_f1(pred, gold), abs=1e-9)

    def test_symmetry(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            a, b = random_text(rng), random_text(rng)
            assert f1_score(a, b) == pytest.approx(f1_score(b, a), abs=1e-12)

    @given(st.text(max_size=20), st.text(max_size=20))
    @settings(max_examples=100, deadline=None)
    def test_em_implies_full_f1(self, a, b):
        if exact_match(a, b) == 1.0:
            assert f1_score(a, b) == 1.0
        assert exact_match(a, b) <= f1_score(a, b) + 1e-12


class TestEvaluate:
    def test_identity_corpus(self):
        golds = {"q1": ["北京"], "q2": ["the cat"]}
        preds = {"q1": "北京", "q2": "cat"}
        report = evaluate(preds, golds)
        assert report.f1 == pytest.approx(100.0)
        assert report.em == pytest.approx(100.0)

    def test_arithmetic_mean(self):
        golds = {"q1": ["cat"], "q2": ["dog"]}
        preds = {"q1": "cat", "q2": "bird"}
        report = evaluate(preds, golds)
        assert report.f1 == pytest.approx(50.0)
        assert report.em == pytest.approx(50.0)

    def test_max_over_golds(self):
        report = evaluate({"q": "北京"}, {"q": ["上海", "北京大学", "北京"]})
        assert report.per_question[0].f1 == 1.0

    def test_gold_order_invariance(self):
        golds_a = {"q": ["上海", "北京"]}
        golds_b = {"q": ["北京", "上海"]}
        pred = {"q": "北京"}
        assert evaluate(pred, golds_a).f1 == evaluate(pred, golds_b).f1

    def test_missing_prediction_scores_zero_with_warning(self, caplog):
        with caplog.at_level("WARNING"):
            report = evaluate({}, {"q1": ["cat"]})
        assert report.f1 == 0.0
        assert "q1" in caplog.text

    def test_em_never_exceeds_f1(self):
        rng = np.random.default_rng(2)
        golds = {f"q{i}": [random_text(rng)] for i in range(50)}
        preds = {f"q{i}": random_text(rng) for i in range(50)}
        report = evaluate(preds, golds)
        for q in report.per_question:
            assert q.em <= q.f1 + 1e-12
        assert report.em <= report.f1 + 1e-9

    def test_matches_independent_corpus_scorer(self):
        rng = np.random.default_rng(3)
        golds = {f"q{i}": [random_text(rng), random_text(rng)]
                 for i in range(40)}
        preds = {f"q{i}": random_text(rng) for i in range(40)}
        report = evaluate(preds, golds)
        ref = sum(max(reference_f1(preds[q], g) for g in golds[q])
                  for q in golds) / len(golds) * 100
        assert report.f1 == pytest.approx(ref, abs=1e-9)

    def test_report_formats_two_decimals(self):
        golds = {"q1": ["cat"], "q2": ["dog"], "q3": ["owl"]}
        preds = {"q1": "cat", "q2": "x", "q3": "y"}
        report = evaluate(preds, golds)
        assert report.to_text() == "F1 33.33\nEM 33.33"
        assert report.to_json()["f1"] == 33.33


class TestGoldExtraction:
    def test_duplicate_ids_rejected(self):
        ex = RawExample("q", "cat", "?", [Answer("cat", 0)], "en")
        with pytest.raises(MetricsError, match="duplicate"):
            golds_from_examples([ex, ex])

    def test_unanswerable_maps_to_empty_string(self):
        ex = RawExample("q", "cat", "?", [], "en", is_impossible=True)
        assert golds_from_examples([ex]) == {"q": [""]}


class TestPredictionFiles:
    def test_round_trip_and_determinism(self, tmp_path):
        preds = {"b": "two", "a": "one"}
        p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
        write_predictions(preds, p1)
        write_predictions(dict(reversed(preds.items())), p2)
        assert p1.read_bytes() == p2.read_bytes()
        assert read_predictions(p1) == preds

    def test_non_object_rejected(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("[1,2]")
        with pytest.raises(MetricsError):
            read_predictions(p)
