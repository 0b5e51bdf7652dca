"""Deterministic synthetic trilingual corpus for desk-scale experiments.

Each example is a small who-lives-where world: the passage lists facts
like "NAME 住 PLACE 。", the question asks "NAME 住 哪 ？" about one of the
names, and the answer is that name's place. Distractor facts force a model
to match the queried name rather than memorize positions. Source-language
texts come from `pseudo_translate` with built-in lexicons, so the corpus
needs no external translation.
"""

from __future__ import annotations

import numpy as np

from .corpus import (ParallelExample, RawExample, Answer, SourceText,
                     pseudo_translate)

NAME_CHARS = "明华强伟芳丽军平春秋冬夏"
PLACE_CHARS = "北京沪广州深杭南武汉成都"
FUNCTION_CHARS = {"住": "lives", "哪": "where", "。": ".", "？": "?"}

_EN_SYLLABLES = ["ka", "bo", "mi", "ta", "ru", "pe", "so", "li", "da", "fu",
                 "ge", "no", "vi", "ze", "wa", "hu", "je", "ky", "lo", "mu",
                 "ne", "po", "qi", "re"]
_KATAKANA = "アイウエオカキクケコサシスセソタチツテトナニヌネノハヒフヘホ"


def default_lexicons() -> dict[str, dict[str, str]]:
    """Token maps covering every character the generator can emit."""
    chars = list(NAME_CHARS + PLACE_CHARS)
    en = {c: _EN_SYLLABLES[i] for i, c in enumerate(chars)}
    en.update(FUNCTION_CHARS)
    ja = {c: _KATAKANA[i] for i, c in enumerate(chars)}
    ja.update({"住": "スム", "哪": "ドコ", "。": "。", "？": "？"})
    return {"en": en, "ja": ja}


def _draw_example(rng: np.random.Generator, ex_id: str) -> RawExample:
    n_facts = int(rng.integers(1, 4))
    # distinct characters across the example's names keep the question
    # unambiguous: exactly one fact can match it
    name_chars = rng.choice(list(NAME_CHARS), size=2 * n_facts, replace=False)
    names = ["".join(name_chars[2 * i:2 * i + 2]) for i in range(n_facts)]
    places = ["".join(rng.choice(list(PLACE_CHARS), size=2, replace=False))
              for _ in range(n_facts)]
    parts = []
    offsets = []
    pos = 0
    for name, place in zip(names, places):
        fact = f"{name}住{place}。"
        offsets.append(pos + len(name) + 1)  # place starts after NAME住
        parts.append(fact)
        pos += len(fact)
    passage = "".join(parts)
    q = int(rng.integers(0, n_facts))
    return RawExample(
        id=ex_id,
        passage_text=passage,
        question_text=f"{names[q]}住哪？",
        answers=[Answer(places[q], offsets[q])],
        language="zh",
    )


def generate_examples(n: int, seed: int,
                      langs: tuple[str, ...] = ("en", "ja"),
                      id_prefix: str = "syn") -> list[ParallelExample]:
    """n distinct parallel examples; identical (seed, n) give identical output."""
    rng = np.random.default_rng(seed)
    lexicons = default_lexicons()
    out: list[ParallelExample] = []
    seen: set[tuple[str, str]] = set()
    i = 0
    while len(out) < n:
        ex = _draw_example(rng, f"{id_prefix}{i:04d}")
        i += 1
        key = (ex.passage_text, ex.question_text)
        if key in seen:
            continue
        seen.add(key)
        ex.validate()
        sources = {}
        for lang in langs:
            passage, question = pseudo_translate(ex, lang, lexicons[lang])
            sources[lang] = SourceText(passage, question)
        out.append(ParallelExample(target=ex, sources=sources))
    return out


def generate_splits(seed: int, sizes: dict[str, int],
                    langs: tuple[str, ...] = ("en", "ja")
                    ) -> dict[str, list[ParallelExample]]:
    """Mutually disjoint splits drawn from one deterministic stream."""
    total = sum(sizes.values())
    pool = generate_examples(total, seed, langs)
    splits: dict[str, list[ParallelExample]] = {}
    at = 0
    for name, size in sizes.items():
        splits[name] = pool[at:at + size]
        at += size
    return splits
