"""Span prediction: position distributions, training loss, answer decoding."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import tensor as T
from .corpus import CLS_TOKEN, SEP_TOKEN, TokenSequence, detokenize
from .encoder import MASK_FILL
from .tensor import ContractError, ShapeError, Tensor

LOG_CLAMP = 1e-12  # keeps the loss finite when a gold position gets probability 0
DEFAULT_MAX_ANSWER_LEN = 30


@dataclass
class SpanHeadParams:
    """Start/end scoring weights over the enhanced target representation."""
    w_start: Tensor  # [2h, 1]
    b_start: Tensor  # [1]
    w_end: Tensor    # [2h, 1]
    b_end: Tensor    # [1]

    @classmethod
    def init(cls, hidden_dim: int, rng: np.random.Generator) -> "SpanHeadParams":
        width = 2 * hidden_dim
        bound = 1.0 / np.sqrt(width)
        mk = lambda: Tensor(rng.uniform(-bound, bound, size=(width, 1)),
                            requires_grad=True)
        return cls(w_start=mk(), b_start=Tensor(np.zeros(1), requires_grad=True),
                   w_end=mk(), b_end=Tensor(np.zeros(1), requires_grad=True))

    def named_tensors(self) -> dict[str, Tensor]:
        return {"w_start": self.w_start, "b_start": self.b_start,
                "w_end": self.w_end, "b_end": self.b_end}


@dataclass
class SpanLabels:
    """Gold start/end positions as one-hot vectors for one example."""
    y_start: np.ndarray
    y_end: np.ndarray

    @classmethod
    def from_span(cls, start: int, end: int, length: int) -> "SpanLabels":
        if not (0 <= start <= end < length):
            raise ContractError(
                f"span ({start},{end}) out of range for length {length}")
        y_s = np.zeros(length)
        y_e = np.zeros(length)
        y_s[start] = 1.0
        y_e[end] = 1.0
        return cls(y_s, y_e)


@dataclass
class SpanPrediction:
    start_probs: np.ndarray
    end_probs: np.ndarray
    best_span: tuple[int, int]
    best_score: float
    answer_text: str


def masked_position_softmax(states: Tensor, w: Tensor, b: Tensor,
                            allowed: np.ndarray) -> Tensor:
    """Affine-score each position, mask, and softmax over positions.

    Returns a [1, L] row; masked positions get exactly zero probability.
    """
    allowed = np.asarray(allowed, dtype=bool)
    if allowed.shape != (states.shape[0],):
        raise ShapeError(
            f"mask length {allowed.shape} does not match {states.shape[0]} "
            f"positions")
    if not allowed.any():
        raise ContractError("all positions are masked")
    logits = T.transpose(T.affine(states, w, b))  # [1, L]
    bias = Tensor(np.where(allowed, 0.0, MASK_FILL)[None, :])
    return T.softmax_rows(T.add(logits, bias))


def predict_distributions(enhanced: Tensor, params: SpanHeadParams,
                          passage_mask: np.ndarray) -> tuple[Tensor, Tensor]:
    """Start and end position distributions over one sequence."""
    p_start = masked_position_softmax(enhanced, params.w_start,
                                      params.b_start, passage_mask)
    p_end = masked_position_softmax(enhanced, params.w_end,
                                    params.b_end, passage_mask)
    return p_start, p_end


def allowed_positions(seq: TokenSequence) -> np.ndarray:
    """Positions eligible for span prediction: [CLS] plus the passage."""
    mask = np.zeros(len(seq), dtype=bool)
    mask[0] = True  # [CLS] carries the unanswerable convention
    lo, hi = seq.passage_token_range
    mask[lo:hi] = True
    return mask


def nll_of_positions(p_start: Tensor, p_end: Tensor,
                     gold_start: int, gold_end: int) -> Tensor:
    """-log p_start[gold] - log p_end[gold] for one example."""
    length = p_start.shape[1]

    def pick(probs: Tensor, idx: int) -> Tensor:
        onehot = np.zeros((length, 1))
        onehot[idx, 0] = 1.0
        return T.log(T.clamp_min(T.matmul(probs, Tensor(onehot)), LOG_CLAMP))

    return T.neg(T.add(pick(p_start, gold_start), pick(p_end, gold_end)))


def span_loss(preds: Sequence[tuple[Tensor, Tensor]],
              labels: Sequence[SpanLabels]) -> Tensor:
    """Mean over the batch of summed start/end cross-entropies.

    The start and end terms are added and the total divided by the batch
    size only; there is no extra factor of 1/2.
    """
    if not preds:
        raise ContractError("span_loss: empty batch")
    if len(preds) != len(labels):
        raise ContractError(
            f"span_loss: {len(preds)} predictions vs {len(labels)} labels")
    terms = []
    for (p_s, p_e), lab in zip(preds, labels):
        gold_s = int(np.argmax(lab.y_start))
        gold_e = int(np.argmax(lab.y_end))
        if p_s.shape[1] != lab.y_start.shape[0]:
            raise ShapeError(
                f"span_loss: prediction length {p_s.shape[1]} != label "
                f"length {lab.y_start.shape[0]}")
        terms.append(nll_of_positions(p_s, p_e, gold_s, gold_e))
    return T.scale(T.add_all(terms), 1.0 / len(preds))


def decode_span(start_probs, end_probs, passage_token_range: tuple[int, int],
                max_answer_len: int = DEFAULT_MAX_ANSWER_LEN) -> tuple[int, int, float]:
    """Highest-product (start, end) pair within the passage.

    Candidates satisfy start <= end <= start + max_answer_len - 1 with both
    endpoints inside the passage range; ties break toward the smaller
    start, then the smaller end.
    """
    s = np.asarray(start_probs.values if isinstance(start_probs, Tensor)
                   else start_probs).reshape(-1)
    e = np.asarray(end_probs.values if isinstance(end_probs, Tensor)
                   else end_probs).reshape(-1)
    lo, hi = passage_token_range
    if hi <= lo:
        raise ContractError(f"empty passage range [{lo},{hi})")
    if max_answer_len < 1:
        raise ContractError("max_answer_len must be positive")
    best = None
    best_score = -1.0
    for i in range(lo, hi):
        for j in range(i, min(i + max_answer_len, hi)):
            score = s[i] * e[j]
            if score > best_score:
                best, best_score = (i, j), score
    return best[0], best[1], float(best_score)


def extract_text(seq: TokenSequence, span: tuple[int, int]) -> str:
    """Surface string of an inclusive token span; special tokens yield ''."""
    start, end = span
    if not (0 <= start <= end < len(seq)):
        raise ContractError(f"span {span} outside sequence of length {len(seq)}")
    tokens = seq.tokens[start:end + 1]
    if CLS_TOKEN in tokens or SEP_TOKEN in tokens:
        return ""
    return detokenize(tokens)


def predict_span(seq: TokenSequence, enhanced: Tensor, params: SpanHeadParams,
                 max_answer_len: int = DEFAULT_MAX_ANSWER_LEN) -> SpanPrediction:
    """Full inference for one sequence: distributions, decoding, text."""
    p_start, p_end = predict_distributions(enhanced, params,
                                           allowed_positions(seq))
    start, end, score = decode_span(p_start, p_end, seq.passage_token_range,
                                    max_answer_len)
    return SpanPrediction(
        start_probs=p_start.values.reshape(-1),
        end_probs=p_end.values.reshape(-1),
        best_span=(start, end),
        best_score=score,
        answer_text=extract_text(seq, (start, end)),
    )
