"""End-to-end training: staged schedules, Adam updates, prediction.

A schedule is an ordered list of (dataset, hyperparameters, multilingual
flag) stages; parameters carry over between stages and the final stage is
the target task. Stage `k` of `run_schedule(..., seed)` trains with seed
`seed + 1 + k` and the model is initialized with `seed`, so a schedule can
be reproduced stage by stage with explicit checkpoint hand-offs.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .corpus import (CorpusError, ParallelExample, TokenSequence, Vocabulary,
                     encode_input, parse_squad, read_parallel_corpus, tokenize)
from .encoder import EncoderConfig, EncoderParams, encode_batch
from .fusion import FusionParams, FusionTrace, fuse
from .metrics import EvalReport, evaluate, golds_from_examples
from .span import (SpanHeadParams, SpanLabels, allowed_positions, predict_span,
                   predict_distributions, span_loss)
from .tensor import ContractError, Tensor, backward

logger = logging.getLogger(__name__)

BASE_LEARNING_RATE = 1.0e-5


# ---------------------------------------------------------------------------
# hyperparameters and schedules
# ---------------------------------------------------------------------------

@dataclass
class HyperParams:
    """The (L, E, T, M) tuple: rate multiplier, epochs, batch size, max length."""
    rate_multiplier: float
    epochs: int
    batch_size: int
    max_seq_len: int

    @property
    def learning_rate(self) -> float:
        return self.rate_multiplier * BASE_LEARNING_RATE

    def __post_init__(self):
        if (self.rate_multiplier <= 0 or self.epochs <= 0
                or self.batch_size <= 0 or self.max_seq_len <= 0):
            raise ValueError(f"all hyperparameters must be positive: {self}")

    def as_text(self) -> str:
        mult = self.rate_multiplier
        mult_s = str(int(mult)) if mult == int(mult) else str(mult)
        return f"{mult_s},{self.epochs},{self.batch_size},{self.max_seq_len}"


def parse_hparams(text: str) -> HyperParams:
    """Parse "L,E,T,M", e.g. "2,2,12,128" -> rate 2e-5, 2 epochs, batch 12."""
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 4:
        raise ValueError(f"expected four comma-separated values, got {text!r}")
    try:
        mult = float(parts[0])
        epochs, batch, max_len = (int(p) for p in parts[1:])
    except ValueError:
        raise ValueError(f"non-numeric hyperparameter in {text!r}") from None
    try:
        return HyperParams(mult, epochs, batch, max_len)
    except ValueError:
        raise ValueError(f"non-positive hyperparameter in {text!r}") from None


@dataclass
class StageSpec:
    data: str
    hparams: HyperParams
    multilingual: bool
    lang: str = "en"  # language tag for bare SQuAD-format files


@dataclass
class StageSchedule:
    stages: list[StageSpec]
    target_dev: str
    encoder: EncoderConfig

    def __post_init__(self):
        if not self.stages:
            raise ValueError("a schedule needs at least one stage")


def load_schedule(path: str | Path) -> StageSchedule:
    """Read a schedule JSON file; data paths resolve relative to it."""
    path = Path(path)
    obj = json.loads(path.read_text(encoding="utf-8"))
    base = path.parent

    def resolve(p: str) -> str:
        q = Path(p)
        return str(q if q.is_absolute() else base / q)

    stages = [
        StageSpec(
            data=resolve(s["data"]),
            hparams=parse_hparams(s["hparams"]),
            multilingual=bool(s.get("multilingual", False)),
            lang=s.get("lang", "en"),
        )
        for s in obj["stages"]
    ]
    enc = obj.get("encoder", {})
    config = EncoderConfig(
        vocab_size=enc.get("vocab_size", 0) or 1,  # sized from data later
        hidden_dim=enc.get("hidden_dim", 16),
        num_layers=enc.get("num_layers", 2),
        num_heads=enc.get("num_heads", 2),
        max_position=enc.get("max_position", 64),
    )
    return StageSchedule(stages=stages, target_dev=resolve(obj["target_dev"]),
                         encoder=config)


def load_dataset(path: str | Path, multilingual: bool,
                 lang: str = "en") -> list[ParallelExample]:
    """Corpus JSONL or bare SQuAD JSON (wrapped as source-free examples)."""
    path = Path(path)
    if path.suffix == ".jsonl":
        examples = read_parallel_corpus(path)
        if not multilingual:
            examples = [ParallelExample(target=ex.target) for ex in examples]
        return examples
    if multilingual:
        raise CorpusError(
            f"{path}: multilingual stages need a parallel corpus (.jsonl)")
    return [ParallelExample(target=ex) for ex in parse_squad(path, lang=lang)]


# ---------------------------------------------------------------------------
# model container
# ---------------------------------------------------------------------------

@dataclass
class ModelConfig:
    encoder: EncoderConfig
    source_langs: tuple[str, ...] = ()
    scaled_fusion: bool = False
    max_answer_len: int = 30

    def to_dict(self) -> dict:
        return {"encoder": self.encoder.to_dict(),
                "source_langs": list(self.source_langs),
                "scaled_fusion": self.scaled_fusion,
                "max_answer_len": self.max_answer_len}


@dataclass
class Model:
    """Encoder + fusion + span head + vocabulary under one seed."""
    config: ModelConfig
    vocab: Vocabulary
    encoder: EncoderParams
    fusion: FusionParams
    span: SpanHeadParams

    @classmethod
    def init(cls, config: ModelConfig, vocab: Vocabulary, seed: int) -> "Model":
        config.encoder.vocab_size = max(config.encoder.vocab_size, len(vocab))
        rng = np.random.default_rng(seed)
        h = config.encoder.hidden_dim
        return cls(
            config=config,
            vocab=vocab,
            encoder=EncoderParams.init(config.encoder, rng),
            fusion=FusionParams.init(h, max(1, len(config.source_langs)), rng,
                                     scaled=config.scaled_fusion),
            span=SpanHeadParams.init(h, rng),
        )

    def named_parameters(self) -> dict[str, Tensor]:
        out = {}
        out.update({f"encoder.{n}": t
                    for n, t in self.encoder.named_tensors().items()})
        out.update({f"fusion.{n}": t
                    for n, t in self.fusion.named_tensors().items()})
        out.update({f"span.{n}": t
                    for n, t in self.span.named_tensors().items()})
        return out

    def reinit_fusion(self, source_langs: tuple[str, ...], seed: int) -> None:
        """Resize the fusion projection for a new source-language set."""
        logger.info("reinitializing fusion for source languages %s",
                    list(source_langs))
        self.config.source_langs = source_langs
        self.fusion = FusionParams.init(
            self.config.encoder.hidden_dim, max(1, len(source_langs)),
            np.random.default_rng(seed), scaled=self.config.scaled_fusion)

    # -- per-example forward paths ------------------------------------------

    def encode_example(self, example: ParallelExample, max_len: int,
                       multilingual: bool
                       ) -> tuple[TokenSequence, FusionTrace]:
        target_seq = encode_input(example, example.target.language,
                                  self.vocab, max_len)
        source_seqs: dict[str, TokenSequence] = {}
        if multilingual and self.config.source_langs:
            missing = [lang for lang in self.config.source_langs
                       if lang not in example.sources]
            if missing:
                raise CorpusError(
                    f"example {example.id!r} is missing source language(s) "
                    f"{missing} required by the model")
            for lang in self.config.source_langs:
                source_seqs[lang] = encode_input(example, lang, self.vocab,
                                                 max_len)
        batch = encode_batch(target_seq, source_seqs, self.encoder)
        return target_seq, fuse(batch, self.fusion)


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------

class Adam:
    """Adam with constant rate; beta1=0.9, beta2=0.999, eps=1e-8.

    `step` consumes and clears gradients; parameters without a gradient
    this step are treated as having gradient zero. A zero learning rate
    leaves parameter values bit-identical.
    """

    def __init__(self, learning_rate: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.moments: dict[str, tuple[np.ndarray, np.ndarray]] = {}

    def step(self, params: Mapping[str, Tensor]) -> None:
        self.step_count += 1
        t = self.step_count
        for name in sorted(params):
            p = params[name]
            if not p.requires_grad:
                continue
            g = p.grad if p.grad is not None else np.zeros_like(p.values)
            m, v = self.moments.get(
                name, (np.zeros_like(p.values), np.zeros_like(p.values)))
            m = self.beta1 * m + (1 - self.beta1) * g
            v = self.beta2 * v + (1 - self.beta2) * g * g
            self.moments[name] = (m, v)
            if self.learning_rate != 0.0:
                m_hat = m / (1 - self.beta1 ** t)
                v_hat = v / (1 - self.beta2 ** t)
                p.values = p.values - self.learning_rate * m_hat / (
                    np.sqrt(v_hat) + self.eps)
            p.grad = None


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

def _prepare_training_data(model: Model, examples: Sequence[ParallelExample],
                           max_len: int, multilingual: bool
                           ) -> list[ParallelExample]:
    """Drop examples whose answer is truncated away; report them."""
    usable = []
    for ex in examples:
        seq = encode_input(ex, ex.target.language, model.vocab, max_len)
        if seq.answer_truncated:
            logger.warning("example %r: answer truncated at max_len=%d, "
                           "excluded from training", ex.id, max_len)
            continue
        usable.append(ex)
    return usable


def train_stage(model: Model, examples: Sequence[ParallelExample],
                hparams: HyperParams, *, multilingual: bool, seed: int,
                label: str = "stage0",
                optimizer: Adam | None = None) -> list[float]:
    """Run one stage of mini-batch Adam; returns the loss after each epoch.

    Batch order is a seeded per-epoch shuffle; example graphs are built in
    batch order, so gradient reduction order is fixed and runs with the
    same seed produce identical loss logs.
    """
    if not examples:
        raise ContractError(f"{label}: empty dataset")
    if hparams.max_seq_len > model.config.encoder.max_position:
        raise ContractError(
            f"{label}: max_seq_len {hparams.max_seq_len} exceeds encoder "
            f"max_position {model.config.encoder.max_position}")

    data = _prepare_training_data(model, examples, hparams.max_seq_len,
                                  multilingual)
    if not data:
        raise ContractError(f"{label}: no trainable examples after truncation")

    opt = optimizer or Adam(hparams.learning_rate)
    params = model.named_parameters()
    rng = np.random.default_rng(seed)
    epoch_losses: list[float] = []

    for epoch in range(hparams.epochs):
        order = rng.permutation(len(data))
        total = 0.0
        for b, at in enumerate(range(0, len(data), hparams.batch_size)):
            batch = [data[i] for i in order[at:at + hparams.batch_size]]
            preds, labels = [], []
            for ex in batch:
                seq, trace = model.encode_example(ex, hparams.max_seq_len,
                                                  multilingual)
                p_s, p_e = predict_distributions(trace.enhanced, model.span,
                                                 allowed_positions(seq))
                start, end = seq.answer_span
                preds.append((p_s, p_e))
                labels.append(SpanLabels.from_span(start, end, len(seq)))
            loss = span_loss(preds, labels)
            value = loss.item()
            if not math.isfinite(value):
                raise ContractError(
                    f"non-finite loss in batch {label}/epoch{epoch}/batch{b}")
            backward(loss)
            opt.step(params)
            total += value * len(batch)
        epoch_losses.append(total / len(data))
    return epoch_losses


# ---------------------------------------------------------------------------
# schedules
# ---------------------------------------------------------------------------

@dataclass
class StageResult:
    label: str
    hparams: HyperParams
    multilingual: bool
    epoch_losses: list[float]


@dataclass
class ScheduleResult:
    model: Model
    optimizer: Adam
    report: EvalReport | None = None
    stages: list[StageResult] = field(default_factory=list)
    seed: int = 0


def _corpus_source_langs(examples: Sequence[ParallelExample]) -> tuple[str, ...]:
    return tuple(sorted(examples[0].sources)) if examples else ()


def run_schedule(schedule: StageSchedule, seed: int) -> ScheduleResult:
    """Train every stage in order, then evaluate on the target dev set.

    The shared vocabulary is built over all stage corpora up front. If a
    later multilingual stage uses a different source-language set, the
    fusion projection is reinitialized to the new width (and logged);
    everything else carries over.
    """
    datasets = [load_dataset(s.data, s.multilingual, s.lang)
                for s in schedule.stages]
    if any(not d for d in datasets):
        raise ContractError("a schedule stage has an empty dataset")

    vocab = Vocabulary.build([ex for ds in datasets for ex in ds])
    first_langs: tuple[str, ...] = ()
    for spec, ds in zip(schedule.stages, datasets):
        if spec.multilingual:
            first_langs = _corpus_source_langs(ds)
            break

    config = ModelConfig(encoder=schedule.encoder, source_langs=first_langs)
    model = Model.init(config, vocab, seed)

    result = ScheduleResult(model=model, optimizer=Adam(0.0), seed=seed)
    for k, (spec, ds) in enumerate(zip(schedule.stages, datasets)):
        if spec.multilingual:
            langs = _corpus_source_langs(ds)
            if langs != model.config.source_langs:
                model.reinit_fusion(langs, seed + 777 + k)
        opt = Adam(spec.hparams.learning_rate)
        losses = train_stage(model, ds, spec.hparams,
                             multilingual=spec.multilingual,
                             seed=seed + 1 + k, label=f"stage{k}",
                             optimizer=opt)
        result.stages.append(StageResult(f"stage{k}", spec.hparams,
                                         spec.multilingual, losses))
        result.optimizer = opt

    dev = load_dataset(schedule.target_dev, multilingual=True)
    max_len = schedule.stages[-1].hparams.max_seq_len
    predictions = predict_answers(model, dev, max_len)
    golds = golds_from_examples([ex.target for ex in dev])
    result.report = evaluate(predictions, golds)
    return result


# ---------------------------------------------------------------------------
# prediction
# ---------------------------------------------------------------------------

def predict_answers(model: Model, examples: Sequence[ParallelExample],
                    max_len: int) -> dict[str, str]:
    """Decode one answer string per example id.

    Examples carrying the model's full source-language set run the fusion
    path; examples with no sources fall back to the monolingual path.
    Vocabulary coverage below 100% triggers a warning, with unknown tokens
    mapped to [UNK].
    """
    _warn_on_vocab_coverage(model.vocab, examples)
    out: dict[str, str] = {}
    for ex in examples:
        langs = model.config.source_langs
        use_sources = bool(langs) and all(l in ex.sources for l in langs)
        if langs and ex.sources and not use_sources:
            raise CorpusError(
                f"example {ex.id!r} has sources {sorted(ex.sources)} but the "
                f"model needs {list(langs)}")
        seq, trace = model.encode_example(ex, max_len,
                                          multilingual=use_sources)
        pred = predict_span(seq, trace.enhanced, model.span,
                            model.config.max_answer_len)
        out[ex.id] = pred.answer_text
    return out


def _warn_on_vocab_coverage(vocab: Vocabulary,
                            examples: Sequence[ParallelExample]) -> None:
    total = 0
    known = 0
    for ex in examples:
        texts = [ex.target.passage_text, ex.target.question_text]
        texts.extend(t for src in ex.sources.values()
                     for t in (src.passage_text, src.question_text))
        for text in texts:
            for tok in tokenize(text):
                total += 1
                known += tok in vocab
    if total and known < total:
        logger.warning(
            "vocabulary covers %.1f%% of prediction tokens; unknown tokens "
            "map to [UNK]", 100.0 * known / total)
