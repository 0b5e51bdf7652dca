"""CLI surface: every subcommand end to end over temp files."""

import json

import pytest

from xlrc.cli import main
from xlrc.corpus import (read_parallel_corpus, to_squad_json,
                         write_parallel_corpus)
from xlrc.synth import default_lexicons, generate_splits


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """A target SQuAD file, lexicon dir, corpora and a schedule."""
    root = tmp_path_factory.mktemp("ws")
    splits = generate_splits(seed=3, sizes={"train": 8, "dev": 4})

    squad = root / "target.json"
    squad.write_text(json.dumps(
        to_squad_json([ex.target for ex in splits["train"]]),
        ensure_ascii=False), encoding="utf-8")

    lexdir = root / "lexicons"
    lexdir.mkdir()
    for lang, lex in default_lexicons().items():
        (lexdir / f"{lang}.tsv").write_text(
            "".join(f"{k}\t{v}\n" for k, v in sorted(lex.items())),
            encoding="utf-8")

    dev = root / "dev.jsonl"
    write_parallel_corpus(splits["dev"], dev)

    schedule = root / "schedule.json"
    schedule.write_text(json.dumps({
        "stages": [{"data": "corpus.jsonl", "hparams": "100,3,4,64",
                    "multilingual": True}],
        "target_dev": "dev.jsonl",
        "encoder": {"hidden_dim": 8, "num_layers": 1, "num_heads": 2,
                    "max_position": 64},
    }), encoding="utf-8")
    return root


def test_build_corpus(workspace, capsys):
    rc = main(["build-corpus",
               "--target", str(workspace / "target.json"),
               "--target-lang", "zh",
               "--translations", str(workspace / "lexicons"),
               "--out", str(workspace / "corpus.jsonl")])
    assert rc == 0
    assert "wrote 8 examples" in capsys.readouterr().out
    corpus = read_parallel_corpus(workspace / "corpus.jsonl")
    assert len(corpus) == 8
    assert set(corpus[0].sources) == {"en", "ja"}


def test_build_corpus_single_lexicon(workspace, tmp_path):
    rc = main(["build-corpus",
               "--target", str(workspace / "target.json"),
               "--translations", str(workspace / "lexicons" / "en.tsv"),
               "--out", str(tmp_path / "mono.jsonl")])
    assert rc == 0
    corpus = read_parallel_corpus(tmp_path / "mono.jsonl")
    assert set(corpus[0].sources) == {"en"}


def test_train(workspace, capsys):
    rc = main(["train", "--schedule", str(workspace / "schedule.json"),
               "--seed", "7", "--out", str(workspace / "ckpt")])
    assert rc == 0
    out = capsys.readouterr().out
    assert "F1 " in out and "EM " in out
    assert (workspace / "ckpt" / "manifest.json").exists()
    assert (workspace / "ckpt" / "eval_report.json").exists()
    losses = json.loads((workspace / "ckpt" / "loss_log.json").read_text())
    assert len(losses[0]["epoch_losses"]) == 3


def test_predict_is_byte_deterministic(workspace):
    for name in ("p1.json", "p2.json"):
        rc = main(["predict", "--ckpt", str(workspace / "ckpt"),
                   "--data", str(workspace / "dev.jsonl"),
                   "--out", str(workspace / name)])
        assert rc == 0
    assert (workspace / "p1.json").read_bytes() == \
        (workspace / "p2.json").read_bytes()
    preds = json.loads((workspace / "p1.json").read_text())
    assert len(preds) == 4


def test_predict_trace_dump(workspace):
    dev = read_parallel_corpus(workspace / "dev.jsonl")
    rc = main(["predict", "--ckpt", str(workspace / "ckpt"),
               "--data", str(workspace / "dev.jsonl"),
               "--out", str(workspace / "p3.json"),
               "--trace-id", dev[0].id,
               "--trace-out", str(workspace / "trace.json")])
    assert rc == 0
    trace = json.loads((workspace / "trace.json").read_text())
    assert trace["id"] == dev[0].id
    assert set(trace["attended"]) == {"en", "ja"}
    assert "answer_text" in trace


def test_eval(workspace, capsys):
    rc = main(["eval", "--pred", str(workspace / "p1.json"),
               "--gold", str(workspace / "dev.jsonl"),
               "--report", str(workspace / "report.json")])
    assert rc == 0
    out = capsys.readouterr().out
    lines = out.strip().splitlines()
    assert lines[0].startswith("F1 ") and lines[1].startswith("EM ")
    report = json.loads((workspace / "report.json").read_text())
    assert set(report) == {"f1", "em", "per_question"}


def test_eval_against_squad_gold(workspace, tmp_path, capsys):
    rc = main(["eval", "--pred", str(workspace / "p1.json"),
               "--gold", str(workspace / "target.json")])
    assert rc == 0  # ids differ, so scores are 0, but the path works
    assert "F1 0.00" in capsys.readouterr().out


def test_gradcheck_small(capsys):
    rc = main(["gradcheck", "--configs", "2", "--seed", "0"])
    assert rc == 0
    assert "all configurations passed" in capsys.readouterr().out


def test_domain_error_exit_code(workspace, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{broken")
    rc = main(["eval", "--pred", str(bad), "--gold", str(workspace / "dev.jsonl")])
    assert rc == 2
