"""Attention fusion: enhance the target representation with source languages.

Pipeline for one example, all matrices over token positions:

  1. self-attention per language:       A    = softmax_rows(B B^T)
  2. raw inter-attention per source:    A_ts = B_t B_s^T         (no softmax)
  3. self-adaptive chain per source:    Adt  = A_t A_ts A_s^T
  4. attended source representation:    C_s  = softmax_rows(Adt) B_s
  5. concat over sources (fixed order): C'   = [C_s1 | C_s2 | ...]
  6. projection + residual layer norm:  G    = [B_t | LN(B_t + C' W + b)]

The attention products are deliberately unscaled (no 1/sqrt(h) factor);
`FusionParams.scaled` can switch scaling on but defaults off. With zero
sources the fallback sets the projected term to zero, so G = [B_t | LN(B_t)].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import tensor as T
from .encoder import EncodedBatch
from .tensor import ShapeError, Tensor


@dataclass
class FusionParams:
    """Projection and layer-norm weights; width fixed by the source count."""
    w_c: Tensor
    b_c: Tensor
    gamma: Tensor
    beta: Tensor
    num_sources: int
    hidden_dim: int
    scaled: bool = False

    @classmethod
    def init(cls, hidden_dim: int, num_sources: int,
             rng: np.random.Generator, scaled: bool = False) -> "FusionParams":
        if num_sources < 1:
            raise ValueError("FusionParams needs at least one source slot; "
                             "zero-source batches use the fallback path")
        width = num_sources * hidden_dim
        bound = 1.0 / math.sqrt(width)
        return cls(
            w_c=Tensor(rng.uniform(-bound, bound, size=(width, hidden_dim)),
                       requires_grad=True),
            b_c=Tensor(np.zeros(hidden_dim), requires_grad=True),
            gamma=Tensor(np.ones(hidden_dim), requires_grad=True),
            beta=Tensor(np.zeros(hidden_dim), requires_grad=True),
            num_sources=num_sources,
            hidden_dim=hidden_dim,
            scaled=scaled,
        )

    def named_tensors(self) -> dict[str, Tensor]:
        return {"w_c": self.w_c, "b_c": self.b_c,
                "gamma": self.gamma, "beta": self.beta}


@dataclass
class FusionTrace:
    """Every intermediate of one fusion pass, retained for inspection.

    Source-keyed fields are ordered by language code; `combined`,
    `projected` and per-source fields are None on the zero-source
    fallback path.
    """
    enhanced: Tensor                                   # [L_t, 2h]
    target_self_attn: Tensor | None = None             # [L_t, L_t]
    source_self_attn: dict[str, Tensor] = field(default_factory=dict)
    cross_attn: dict[str, Tensor] = field(default_factory=dict)
    adaptive_attn: dict[str, Tensor] = field(default_factory=dict)
    attended: dict[str, Tensor] = field(default_factory=dict)
    combined: Tensor | None = None                     # [L_t, n*h]
    projected: Tensor | None = None                    # [L_t, h]


def self_attention(b: Tensor, scaled: bool = False) -> Tensor:
    """Square position-by-position attention within one language."""
    scores = T.matmul(b, T.transpose(b))
    if scaled:
        scores = T.scale(scores, 1.0 / math.sqrt(b.shape[1]))
    return T.softmax_rows(scores)


def inter_attention(b_target: Tensor, b_source: Tensor,
                    scaled: bool = False) -> Tensor:
    """Raw target-to-source similarity; normalization happens later."""
    if b_target.shape[1] != b_source.shape[1]:
        raise ShapeError(
            f"inter_attention: hidden sizes differ, {b_target.shape} vs "
            f"{b_source.shape}")
    scores = T.matmul(b_target, T.transpose(b_source))
    if scaled:
        scores = T.scale(scores, 1.0 / math.sqrt(b_target.shape[1]))
    return scores


def self_adaptive_attention(a_target: Tensor, a_cross: Tensor,
                            a_source: Tensor,
                            b_source: Tensor) -> tuple[Tensor, Tensor]:
    """Chain self- and inter-attention, then aggregate source states.

    Returns the chained attention logits and the attended representation:
    softmax over source positions of (a_target @ a_cross @ a_source^T),
    applied to the source states.
    """
    adaptive = T.matmul(T.matmul(a_target, a_cross), T.transpose(a_source))
    attended = T.matmul(T.softmax_rows(adaptive), b_source)
    return adaptive, attended


def multilingual_attention(attended: Sequence[Tensor]) -> Tensor:
    """Column-wise concatenation of attended representations, in order."""
    if not attended:
        raise ShapeError("multilingual_attention: need at least one input")
    out = attended[0]
    for extra in attended[1:]:
        out = T.concat_cols(out, extra)
    return out


def enhance_target(b_target: Tensor, combined: Tensor,
                   params: FusionParams) -> Tensor:
    """Project, add residually, layer-normalize, and concat with the target."""
    if combined.shape[1] != params.w_c.shape[0]:
        raise ShapeError(
            f"combined width {combined.shape[1]} does not match projection "
            f"input width {params.w_c.shape[0]}")
    projected = T.affine(combined, params.w_c, params.b_c)
    normed = T.layer_norm_rows(T.add(b_target, projected),
                               params.gamma, params.beta)
    return T.concat_cols(b_target, normed)


def fuse_states(b_target: Tensor, sources: Mapping[str, Tensor],
                params: FusionParams) -> FusionTrace:
    """Run the full fusion pipeline over already-encoded states.

    Source languages are consumed in lexicographic code order, which fixes
    the concatenation layout the projection was trained against.
    """
    langs = sorted(sources)
    if langs and len(langs) != params.num_sources:
        raise ShapeError(
            f"batch has {len(langs)} source language(s) {langs} but the "
            f"projection is configured for {params.num_sources}")

    if not langs:
        normed = T.layer_norm_rows(b_target, params.gamma, params.beta)
        return FusionTrace(enhanced=T.concat_cols(b_target, normed))

    trace = FusionTrace(enhanced=b_target)  # placeholder, set below
    trace.target_self_attn = self_attention(b_target, params.scaled)
    ordered_attended = []
    for lang in langs:
        b_src = sources[lang]
        trace.source_self_attn[lang] = self_attention(b_src, params.scaled)
        trace.cross_attn[lang] = inter_attention(b_target, b_src, params.scaled)
        adaptive, attended = self_adaptive_attention(
            trace.target_self_attn, trace.cross_attn[lang],
            trace.source_self_attn[lang], b_src)
        trace.adaptive_attn[lang] = adaptive
        trace.attended[lang] = attended
        ordered_attended.append(attended)

    trace.combined = multilingual_attention(ordered_attended)
    trace.projected = T.affine(trace.combined, params.w_c, params.b_c)
    normed = T.layer_norm_rows(T.add(b_target, trace.projected),
                               params.gamma, params.beta)
    trace.enhanced = T.concat_cols(b_target, normed)
    return trace


def fuse(batch: EncodedBatch, params: FusionParams) -> FusionTrace:
    """Fuse one encoded example; zero-source batches take the fallback."""
    if batch.hidden_dim != params.hidden_dim:
        raise ShapeError(
            f"encoded hidden size {batch.hidden_dim} != fusion hidden size "
            f"{params.hidden_dim}")
    return fuse_states(batch.target, batch.sources, params)


def trace_to_json(trace: FusionTrace, example_id: str) -> dict:
    """JSON-serializable mirror of a trace, for the debug dump interface."""
    def mat(t: Tensor | None):
        return None if t is None else t.values.tolist()

    def mats(d: Mapping[str, Tensor]):
        return {lang: mat(t) for lang, t in sorted(d.items())}

    return {
        "id": example_id,
        "target_self_attn": mat(trace.target_self_attn),
        "source_self_attn": mats(trace.source_self_attn),
        "cross_attn": mats(trace.cross_attn),
        "adaptive_attn": mats(trace.adaptive_attn),
        "attended": mats(trace.attended),
        "combined": mat(trace.combined),
        "projected": mat(trace.projected),
        "enhanced": mat(trace.enhanced),
    }
