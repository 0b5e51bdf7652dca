"""F1 / exact-match scoring over answer strings.

Per-question scores take the max over gold answers; corpus scores are the
arithmetic mean, reported as percentages. F1 is bag-of-units overlap where
a unit is a CJK character or a lowercased Latin word, with punctuation and
English articles removed.
"""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .corpus import RawExample, is_cjk_char

logger = logging.getLogger(__name__)

_ARTICLES = {"a", "an", "the"}


class MetricsError(ValueError):
    """Raised for malformed prediction/gold inputs."""


def normalize(text: str, lang: str = "") -> list[str]:
    """Comparison units for scoring; `lang` is advisory, rules are per-script.

    Lowercases, drops punctuation and whitespace, splits CJK into single
    characters and Latin into words, and removes English articles.
    """
    units: list[str] = []
    word = []

    def flush():
        if word:
            token = "".join(word)
            if token not in _ARTICLES:
                units.append(token)
            word.clear()

    for ch in text.lower():
        if is_cjk_char(ch):
            flush()
            units.append(ch)
        elif ch.isalnum():
            word.append(ch)
        else:
            flush()
    flush()
    return units


def f1_score(pred: str, gold: str, lang: str = "") -> float:
    """Bag-of-units F1 in [0, 1]; both sides empty counts as a match."""
    pred_units = normalize(pred, lang)
    gold_units = normalize(gold, lang)
    if not pred_units or not gold_units:
        return float(pred_units == gold_units)
    overlap = sum((Counter(pred_units) & Counter(gold_units)).values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(pred_units)
    recall = overlap / len(gold_units)
    return 2 * precision * recall / (precision + recall)


def exact_match(pred: str, gold: str, lang: str = "") -> float:
    return float(normalize(pred, lang) == normalize(gold, lang))


@dataclass
class QuestionScore:
    id: str
    f1: float
    em: float
    prediction: str
    golds: list[str]


@dataclass
class EvalReport:
    """Corpus-level percentages plus the per-question breakdown.

    `f1` and `em` are kept at full precision; the serialized forms round
    to two decimals, matching the reporting convention.
    """
    f1: float
    em: float
    per_question: list[QuestionScore]

    def to_json(self) -> dict:
        return {
            "f1": round(self.f1, 2),
            "em": round(self.em, 2),
            "per_question": [
                {"id": q.id, "f1": q.f1, "em": q.em,
                 "prediction": q.prediction, "golds": q.golds}
                for q in self.per_question
            ],
        }

    def to_text(self) -> str:
        return f"F1 {self.f1:.2f}\nEM {self.em:.2f}"


def evaluate(predictions: Mapping[str, str],
             golds: Mapping[str, Sequence[str]],
             lang: str = "") -> EvalReport:
    """Score predictions against gold answers, max over golds per question.

    Every gold id must be unique; questions without a prediction score
    zero and are warned about rather than failing the run.
    """
    per_question: list[QuestionScore] = []
    for qid in golds:
        answers = list(golds[qid])
        if qid not in predictions:
            logger.warning("question %r has no prediction; scoring 0", qid)
            per_question.append(QuestionScore(qid, 0.0, 0.0, "", answers))
            continue
        pred = predictions[qid]
        f1 = max((f1_score(pred, g, lang) for g in answers), default=0.0)
        em = max((exact_match(pred, g, lang) for g in answers), default=0.0)
        per_question.append(QuestionScore(qid, f1, em, pred, answers))
    n = len(per_question)
    mean_f1 = 100.0 * sum(q.f1 for q in per_question) / n if n else 0.0
    mean_em = 100.0 * sum(q.em for q in per_question) / n if n else 0.0
    return EvalReport(f1=mean_f1, em=mean_em, per_question=per_question)


def golds_from_examples(examples: Iterable[RawExample]) -> dict[str, list[str]]:
    """id -> gold answer texts; unanswerable questions map to ['']."""
    out: dict[str, list[str]] = {}
    for ex in examples:
        if ex.id in out:
            raise MetricsError(f"duplicate question id {ex.id!r}")
        out[ex.id] = [a.text for a in ex.answers] or [""]
    return out


def read_predictions(path: str | Path) -> dict[str, str]:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(obj, dict):
        raise MetricsError(f"{path}: prediction file must be a JSON object")
    return {str(k): str(v) for k, v in obj.items()}


def write_predictions(predictions: Mapping[str, str], path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(dict(sorted(predictions.items())), ensure_ascii=False,
                   sort_keys=True, indent=0) + "\n",
        encoding="utf-8")
