"""From a SQuAD-format file to model-ready multilingual token sequences.

Run:  python3 demos/02_corpus_pipeline.py
"""

import json
import tempfile
from pathlib import Path

from xlrc.corpus import (Vocabulary, build_parallel_corpus, encode_input,
                         parse_squad, pseudo_translate, tokenize,
                         write_parallel_corpus)

squad_doc = {
    "version": "1.1",
    "data": [{
        "title": "demo",
        "paragraphs": [{
            "context": "明华住北京。强伟住上海。",
            "qas": [{
                "id": "demo1",
                "question": "强伟住哪？",
                "answers": [{"text": "上海", "answer_start": 9}],
            }],
        }],
    }],
}

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "target.json"
    path.write_text(json.dumps(squad_doc, ensure_ascii=False), "utf-8")

    print("=== parsing a SQuAD-format file ===")
    targets = parse_squad(path, lang="zh")
    ex = targets[0]
    print(f"id={ex.id}  passage={ex.passage_text!r}")
    print(f"question={ex.question_text!r}  answer={ex.answers[0].text!r} "
          f"at char {ex.answers[0].answer_start}")

    print("\n=== tokenization: CJK per character, Latin by word ===")
    print(tokenize("明华住北京。"), tokenize("New York is big."))

    print("\n=== pseudo-translation into source languages ===")
    lex_en = {"明": "ming", "华": "hua", "强": "qiang", "伟": "wei",
              "住": "lives", "北": "north", "京": "capital", "上": "up",
              "海": "sea", "哪": "where", "。": ".", "？": "?"}
    passage_en, question_en = pseudo_translate(ex, "en", lex_en)
    print(f"en passage:  {passage_en}")
    print(f"en question: {question_en}")

    print("\n=== building and saving the parallel corpus ===")
    corpus = build_parallel_corpus(
        targets, {"en": {ex.id: (passage_en, question_en)}})
    corpus_path = Path(tmp) / "corpus.jsonl"
    write_parallel_corpus(corpus, corpus_path)
    print(corpus_path.read_text("utf-8").strip())

    print("\n=== assembling [CLS] Q [SEP] P [SEP] sequences ===")
    vocab = Vocabulary.build(corpus)
    seq = encode_input(corpus[0], "zh", vocab, max_len=32)
    print(f"tokens: {seq.tokens}")
    print(f"segments: {seq.segment_ids}")
    print(f"passage range {seq.passage_token_range}, "
          f"answer span {seq.answer_span} -> "
          f"{seq.tokens[seq.answer_span[0]:seq.answer_span[1] + 1]}")
    seq_en = encode_input(corpus[0], "en", vocab, max_len=32)
    print(f"en tokens: {seq_en.tokens}")
