"""Dataset ingestion and model-input assembly.

Covers the whole path from SQuAD-format JSON to token sequences: parsing
and validation, pseudo-translation into source languages, parallel-corpus
construction, the shared vocabulary, and `[CLS] question [SEP] passage
[SEP]` encoding with character-to-token answer-span mapping.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

logger = logging.getLogger(__name__)

PAD_TOKEN = "[PAD]"
UNK_TOKEN = "[UNK]"
CLS_TOKEN = "[CLS]"
SEP_TOKEN = "[SEP]"
RESERVED_TOKENS = (PAD_TOKEN, UNK_TOKEN, CLS_TOKEN, SEP_TOKEN)
PAD_ID, UNK_ID, CLS_ID, SEP_ID = 0, 1, 2, 3


class CorpusError(ValueError):
    """Raised for malformed input data or violated corpus invariants."""


# ---------------------------------------------------------------------------
# record types
# ---------------------------------------------------------------------------

@dataclass
class Answer:
    text: str
    answer_start: int


@dataclass
class RawExample:
    """One question over one passage, with gold answers when supervised."""
    id: str
    passage_text: str
    question_text: str
    answers: list[Answer]
    language: str
    is_impossible: bool = False

    def validate(self) -> None:
        for ans in self.answers:
            end = ans.answer_start + len(ans.text)
            if self.passage_text[ans.answer_start:end] != ans.text:
                raise CorpusError(
                    f"qa {self.id!r}: answer_start {ans.answer_start} does not "
                    f"point at {ans.text!r} in the passage")


@dataclass
class SourceText:
    """Translated passage/question pair; sources never carry answers."""
    passage_text: str
    question_text: str


@dataclass
class ParallelExample:
    """A target-language example plus its translations per source language."""
    target: RawExample
    sources: dict[str, SourceText] = field(default_factory=dict)

    @property
    def id(self) -> str:
        return self.target.id

    def __post_init__(self):
        if self.target.language in self.sources:
            raise CorpusError(
                f"example {self.target.id!r}: target language "
                f"{self.target.language!r} also listed as a source")


@dataclass
class TokenSequence:
    """One language's model input: [CLS] question [SEP] passage [SEP]."""
    tokens: list[str]
    token_ids: list[int]
    segment_ids: list[int]
    passage_token_range: tuple[int, int]  # half-open
    answer_span: tuple[int, int] | None = None  # inclusive token indices
    answer_truncated: bool = False
    example_id: str = ""
    lang: str = ""

    def __post_init__(self):
        if not self.tokens or self.tokens[0] != CLS_TOKEN:
            raise CorpusError("token sequence must start with [CLS]")
        if self.tokens.count(SEP_TOKEN) != 2 or self.tokens[-1] != SEP_TOKEN:
            raise CorpusError(
                "token sequence must contain exactly two [SEP], one terminal")
        if self.answer_span is not None:
            s, e = self.answer_span
            lo, hi = self.passage_token_range
            if not (s == e == 0) and not (lo <= s <= e < hi):
                raise CorpusError(
                    f"answer span {self.answer_span} outside passage range "
                    f"{self.passage_token_range}")

    def __len__(self) -> int:
        return len(self.tokens)


# ---------------------------------------------------------------------------
# tokenization
# ---------------------------------------------------------------------------

_CJK_RANGES = (
    (0x3040, 0x30FF),   # hiragana, katakana
    (0x3400, 0x4DBF),   # CJK extension A
    (0x4E00, 0x9FFF),   # CJK unified ideographs
    (0xF900, 0xFAFF),   # CJK compatibility ideographs
)


def is_cjk_char(ch: str) -> bool:
    cp = ord(ch)
    return any(lo <= cp <= hi for lo, hi in _CJK_RANGES)


def tokenize_with_offsets(text: str) -> list[tuple[str, int, int]]:
    """Tokens plus their half-open character offsets in `text`.

    CJK codepoints become single-character tokens. Everything else splits
    on whitespace and punctuation boundaries and is lowercased; offsets
    always refer to the original string.
    """
    out: list[tuple[str, int, int]] = []
    start = None

    def flush(end: int) -> None:
        nonlocal start
        if start is not None:
            out.append((text[start:end].lower(), start, end))
            start = None

    for i, ch in enumerate(text):
        if ch.isspace():
            flush(i)
        elif is_cjk_char(ch):
            flush(i)
            out.append((ch, i, i + 1))
        elif not ch.isalnum():
            flush(i)
            out.append((ch, i, i + 1))
        elif start is None:
            start = i
    flush(len(text))
    return out


def tokenize(text: str, lang: str = "") -> list[str]:
    """Deterministic rule-based tokenization; `lang` is advisory only."""
    return [tok for tok, _, _ in tokenize_with_offsets(text)]


def detokenize(tokens: Sequence[str]) -> str:
    """Join tokens back into a surface string.

    CJK tokens attach without spaces; a space is inserted only between two
    tokens that both end/begin with non-CJK characters.
    """
    parts: list[str] = []
    for tok in tokens:
        if parts and not is_cjk_char(parts[-1][-1]) and not is_cjk_char(tok[0]):
            parts.append(" ")
        parts.append(tok)
    return "".join(parts)


# ---------------------------------------------------------------------------
# SQuAD-format parsing
# ---------------------------------------------------------------------------

def parse_squad(path: str | Path, lang: str = "en") -> list[RawExample]:
    """Read a SQuAD v1.1/2.0 JSON file into validated examples.

    Unanswerable questions (SQuAD 2.0 `is_impossible`) come back with no
    answers and the flag set.
    """
    raw = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise CorpusError(
            f"{path}: malformed JSON at byte offset {exc.pos}: {exc.msg}") from exc

    examples: list[RawExample] = []
    try:
        articles = doc["data"]
    except (TypeError, KeyError):
        raise CorpusError(f"{path}: missing top-level 'data' field") from None
    for article in articles:
        for para in _require(article, "paragraphs", path):
            context = _require(para, "context", path)
            for qa in _require(para, "qas", path):
                qa_id = str(_require(qa, "id", path))
                question = _require(qa, "question", path, qa_id)
                answers = _require(qa, "answers", path, qa_id)
                ex = RawExample(
                    id=qa_id,
                    passage_text=context,
                    question_text=question,
                    answers=[Answer(str(a["text"]), int(a["answer_start"]))
                             for a in answers],
                    language=lang,
                    is_impossible=bool(qa.get("is_impossible", False)),
                )
                if ex.is_impossible:
                    ex.answers = []
                ex.validate()
                examples.append(ex)
    return examples


def _require(obj: Mapping, key: str, path, qa_id: str | None = None):
    try:
        return obj[key]
    except (TypeError, KeyError):
        where = f" in qa {qa_id!r}" if qa_id else ""
        raise CorpusError(f"{path}: missing field {key!r}{where}") from None


def to_squad_json(examples: Iterable[RawExample], title: str = "") -> dict:
    """Serialize examples back into the SQuAD v1.1 schema (one qa each)."""
    paragraphs = []
    for ex in examples:
        qa = {
            "id": ex.id,
            "question": ex.question_text,
            "answers": [{"text": a.text, "answer_start": a.answer_start}
                        for a in ex.answers],
        }
        if ex.is_impossible:
            qa["is_impossible"] = True
        paragraphs.append({"context": ex.passage_text, "qas": [qa]})
    return {"version": "1.1", "data": [{"title": title, "paragraphs": paragraphs}]}


# ---------------------------------------------------------------------------
# parallel corpus construction
# ---------------------------------------------------------------------------

TranslationTable = Mapping[str, "Mapping[str, tuple[str, str]] | Iterable[tuple[str, str, str]]"]


def build_parallel_corpus(targets: Sequence[RawExample],
                          translations: TranslationTable) -> list[ParallelExample]:
    """Attach per-language translations to target examples by id.

    Each output example carries exactly the languages that translated its
    id; ids missing a language are logged, never dropped. Answer
    supervision stays on the target side only.
    """
    by_id = {ex.id: ex for ex in targets}
    if len(by_id) != len(targets):
        raise CorpusError("duplicate target example ids")

    normalized: dict[str, dict[str, tuple[str, str]]] = {}
    for lang, table in translations.items():
        if isinstance(table, Mapping):
            normalized[lang] = dict(table)
        else:
            per_id: dict[str, tuple[str, str]] = {}
            for ex_id, passage, question in table:
                if ex_id in per_id:
                    raise CorpusError(
                        f"duplicate translation for (id={ex_id!r}, lang={lang!r})")
                per_id[ex_id] = (passage, question)
            normalized[lang] = per_id
        for ex_id in normalized[lang]:
            if ex_id not in by_id:
                raise CorpusError(
                    f"translation for unknown example id {ex_id!r} "
                    f"(lang={lang!r})")

    out: list[ParallelExample] = []
    for ex in targets:
        sources: dict[str, SourceText] = {}
        for lang in sorted(normalized):
            if ex.id in normalized[lang]:
                passage, question = normalized[lang][ex.id]
                sources[lang] = SourceText(passage, question)
            else:
                logger.warning("example %r has no %s translation", ex.id, lang)
        out.append(ParallelExample(target=ex, sources=sources))
    return out


def pseudo_translate(example: RawExample, lang: str,
                     lexicon: Mapping[str, str]) -> tuple[str, str]:
    """Deterministic token-by-token stand-in for machine translation.

    Unmapped tokens pass through prefixed with the language code so they
    stay distinguishable from genuine translations.
    """
    def translate(text: str) -> str:
        return " ".join(lexicon.get(tok, f"{lang}:{tok}")
                        for tok in tokenize(text))

    return translate(example.passage_text), translate(example.question_text)


def load_lexicon(path: str | Path) -> dict[str, str]:
    """Two-column tab-separated token mapping."""
    lexicon: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        cols = line.split("\t")
        if len(cols) != 2:
            raise CorpusError(f"{path}:{lineno}: expected two tab-separated "
                              f"columns, got {len(cols)}")
        lexicon[cols[0]] = cols[1]
    return lexicon


# ---------------------------------------------------------------------------
# corpus files (JSON Lines, one object per parallel example)
# ---------------------------------------------------------------------------

def write_parallel_corpus(examples: Iterable[ParallelExample],
                          path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            obj = {
                "id": ex.id,
                "target": {
                    "lang": ex.target.language,
                    "passage": ex.target.passage_text,
                    "question": ex.target.question_text,
                    "answers": [{"text": a.text, "answer_start": a.answer_start}
                                for a in ex.target.answers],
                },
                "sources": {lang: {"passage": src.passage_text,
                                   "question": src.question_text}
                            for lang, src in sorted(ex.sources.items())},
            }
            if ex.target.is_impossible:
                obj["target"]["is_impossible"] = True
            fh.write(json.dumps(obj, ensure_ascii=False, sort_keys=True) + "\n")


def read_parallel_corpus(path: str | Path) -> list[ParallelExample]:
    out: list[ParallelExample] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(
                    f"{path}:{lineno}: malformed JSON at byte offset "
                    f"{exc.pos}: {exc.msg}") from exc
            tgt = obj["target"]
            ex_id = str(obj["id"])
            if ex_id in seen:
                raise CorpusError(f"{path}:{lineno}: duplicate example id {ex_id!r}")
            seen.add(ex_id)
            target = RawExample(
                id=ex_id,
                passage_text=tgt["passage"],
                question_text=tgt["question"],
                answers=[Answer(a["text"], int(a["answer_start"]))
                         for a in tgt.get("answers", [])],
                language=tgt["lang"],
                is_impossible=bool(tgt.get("is_impossible", False)),
            )
            target.validate()
            sources = {lang: SourceText(s["passage"], s["question"])
                       for lang, s in obj.get("sources", {}).items()}
            out.append(ParallelExample(target=target, sources=sources))
    return out


# ---------------------------------------------------------------------------
# vocabulary
# ---------------------------------------------------------------------------

class Vocabulary:
    """Token-to-id map shared across all languages.

    Ids 0..3 are reserved for [PAD], [UNK], [CLS], [SEP]; lookups of
    unknown tokens return the [UNK] id.
    """

    def __init__(self, tokens: Sequence[str] = ()):
        self._id_of: dict[str, int] = {t: i for i, t in enumerate(RESERVED_TOKENS)}
        for tok in tokens:
            self.add(tok)

    def add(self, token: str) -> int:
        if token not in self._id_of:
            self._id_of[token] = len(self._id_of)
        return self._id_of[token]

    def id_for(self, token: str) -> int:
        return self._id_of.get(token, UNK_ID)

    def ids_for(self, tokens: Iterable[str]) -> list[int]:
        return [self.id_for(t) for t in tokens]

    def __contains__(self, token: str) -> bool:
        return token in self._id_of

    def __len__(self) -> int:
        return len(self._id_of)

    @property
    def tokens(self) -> list[str]:
        """All tokens ordered by id."""
        return sorted(self._id_of, key=self._id_of.__getitem__)

    @classmethod
    def build(cls, examples: Iterable[ParallelExample],
              min_freq: int = 1) -> "Vocabulary":
        """Union vocabulary over target and source texts of a corpus."""
        counts: dict[str, int] = {}
        for ex in examples:
            streams = [ex.target.passage_text, ex.target.question_text]
            for src in ex.sources.values():
                streams.extend([src.passage_text, src.question_text])
            for text in streams:
                for tok in tokenize(text):
                    counts[tok] = counts.get(tok, 0) + 1
        vocab = cls()
        for tok in sorted(counts):
            if counts[tok] >= min_freq:
                vocab.add(tok)
        return vocab

    @classmethod
    def from_tokens(cls, ordered: Sequence[str]) -> "Vocabulary":
        """Rebuild from a saved id-ordered token list (reserved ids first)."""
        if list(ordered[:4]) != list(RESERVED_TOKENS):
            raise CorpusError("vocabulary file must start with the reserved tokens")
        return cls(ordered[4:])


# ---------------------------------------------------------------------------
# input assembly
# ---------------------------------------------------------------------------

def encode_input(example: ParallelExample, lang: str, vocab: Vocabulary,
                 max_len: int) -> TokenSequence:
    """Assemble one language's `[CLS] Q [SEP] P [SEP]` token sequence.

    The passage is truncated from the right to respect `max_len`; the
    question is never truncated. For the target language the first gold
    answer's character offsets are mapped to an inclusive token span;
    spans that fall outside the kept passage are flagged as truncated.
    Unanswerable targets point the span at [CLS].
    """
    if lang == example.target.language:
        passage = example.target.passage_text
        question = example.target.question_text
        answers = example.target.answers
        is_target = True
    elif lang in example.sources:
        src = example.sources[lang]
        passage, question, answers = src.passage_text, src.question_text, []
        is_target = False
    else:
        raise CorpusError(
            f"example {example.id!r} has no text in language {lang!r}")

    q_tokens = tokenize(question, lang)
    if len(q_tokens) + 3 > max_len:
        raise CorpusError(
            f"example {example.id!r}: question has {len(q_tokens)} tokens, "
            f"exceeding max_len-3 = {max_len - 3}; questions are never truncated")

    p_offsets = tokenize_with_offsets(passage)
    keep = max_len - 3 - len(q_tokens)
    kept = p_offsets[:keep]

    tokens = [CLS_TOKEN] + q_tokens + [SEP_TOKEN] + [t for t, _, _ in kept] + [SEP_TOKEN]
    segment_ids = [0] * (len(q_tokens) + 2) + [1] * (len(kept) + 1)
    p_start = len(q_tokens) + 2
    passage_range = (p_start, p_start + len(kept))

    answer_span: tuple[int, int] | None = None
    truncated = False
    if is_target:
        if example.target.is_impossible or not answers:
            answer_span = (0, 0)  # [CLS] convention for unanswerable
        else:
            ans = answers[0]
            span = _char_span_to_token_span(p_offsets, ans.answer_start,
                                            ans.answer_start + len(ans.text))
            if span is None or span[1] >= len(kept):
                truncated = True
            else:
                answer_span = (p_start + span[0], p_start + span[1])

    return TokenSequence(
        tokens=tokens,
        token_ids=vocab.ids_for(tokens),
        segment_ids=segment_ids,
        passage_token_range=passage_range,
        answer_span=answer_span,
        answer_truncated=truncated,
        example_id=example.id,
        lang=lang,
    )


def _char_span_to_token_span(offsets: list[tuple[str, int, int]],
                             char_start: int,
                             char_end: int) -> tuple[int, int] | None:
    """Inclusive token interval covering a half-open character interval."""
    hit = [i for i, (_, s, e) in enumerate(offsets)
           if e > char_start and s < char_end]
    if not hit:
        return None
    return hit[0], hit[-1]
