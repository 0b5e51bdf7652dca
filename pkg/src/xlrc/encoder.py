"""Per-language contextual representations from one shared encoder.

A small trainable transformer stands in for a large pretrained model:
token + position embeddings followed by blocks of masked multi-head
self-attention and a feed-forward layer, each with residual + row
layer-norm. One parameter set serves every language; language identity
enters only through the tokens. Externally precomputed hidden states can
be loaded instead via `load_precomputed`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import tensor as T
from .corpus import PAD_ID, TokenSequence
from .tensor import ShapeError, Tensor

# Additive mask value: large and negative but finite, so exp underflows to
# exactly zero without producing NaN when a whole row is masked.
MASK_FILL = -1e30


@dataclass
class EncoderConfig:
    vocab_size: int
    hidden_dim: int = 16
    num_layers: int = 2
    num_heads: int = 2
    max_position: int = 64

    def __post_init__(self):
        for name in ("vocab_size", "hidden_dim", "num_layers", "num_heads",
                     "max_position"):
            if getattr(self, name) < (0 if name == "num_layers" else 1):
                raise ValueError(f"EncoderConfig.{name} must be positive")
        if self.hidden_dim % self.num_heads:
            raise ValueError(
                f"hidden_dim {self.hidden_dim} not divisible by "
                f"num_heads {self.num_heads}")

    def to_dict(self) -> dict:
        return {"vocab_size": self.vocab_size, "hidden_dim": self.hidden_dim,
                "num_layers": self.num_layers, "num_heads": self.num_heads,
                "max_position": self.max_position}


def _uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


@dataclass
class LayerParams:
    wq: Tensor
    bq: Tensor
    wk: Tensor
    bk: Tensor
    wv: Tensor
    bv: Tensor
    wo: Tensor
    bo: Tensor
    ln1_gamma: Tensor
    ln1_beta: Tensor
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor
    ln2_gamma: Tensor
    ln2_beta: Tensor

    @classmethod
    def init(cls, h: int, rng: np.random.Generator) -> "LayerParams":
        ff = 2 * h
        mk = lambda shape, fan: Tensor(_uniform(rng, shape, fan), requires_grad=True)
        zeros = lambda n: Tensor(np.zeros(n), requires_grad=True)
        ones = lambda n: Tensor(np.ones(n), requires_grad=True)
        return cls(
            wq=mk((h, h), h), bq=zeros(h),
            wk=mk((h, h), h), bk=zeros(h),
            wv=mk((h, h), h), bv=zeros(h),
            wo=mk((h, h), h), bo=zeros(h),
            ln1_gamma=ones(h), ln1_beta=zeros(h),
            w1=mk((h, ff), h), b1=zeros(ff),
            w2=mk((ff, h), ff), b2=zeros(h),
            ln2_gamma=ones(h), ln2_beta=zeros(h),
        )

    def named_tensors(self) -> dict[str, Tensor]:
        return {name: getattr(self, name) for name in self.__dataclass_fields__}


@dataclass
class EncoderParams:
    config: EncoderConfig
    token_emb: Tensor
    pos_emb: Tensor
    layers: list[LayerParams] = field(default_factory=list)

    @classmethod
    def init(cls, config: EncoderConfig,
             rng: np.random.Generator) -> "EncoderParams":
        h = config.hidden_dim
        token_emb = Tensor(rng.normal(0.0, 0.02, size=(config.vocab_size, h)),
                           requires_grad=True)
        pos_emb = Tensor(rng.normal(0.0, 0.02, size=(config.max_position, h)),
                         requires_grad=True)
        layers = [LayerParams.init(h, rng) for _ in range(config.num_layers)]
        return cls(config=config, token_emb=token_emb, pos_emb=pos_emb,
                   layers=layers)

    def named_tensors(self) -> dict[str, Tensor]:
        out = {"token_emb": self.token_emb, "pos_emb": self.pos_emb}
        for i, layer in enumerate(self.layers):
            for name, t in layer.named_tensors().items():
                out[f"layer{i}.{name}"] = t
        return out

    def set_trainable(self, trainable: bool) -> None:
        """Freeze or unfreeze the whole encoder (fusion/head unaffected)."""
        for t in self.named_tensors().values():
            t.requires_grad = trainable


@dataclass
class EncodedBatch:
    """Contextual matrices for one example: target plus per-source-language."""
    target: Tensor
    sources: dict[str, Tensor] = field(default_factory=dict)

    def __post_init__(self):
        h = self.hidden_dim
        for lang, mat in self.sources.items():
            if mat.shape[1] != h:
                raise ShapeError(
                    f"hidden size mismatch: target has h={h}, "
                    f"source {lang!r} has h={mat.shape[1]}")

    @property
    def hidden_dim(self) -> int:
        return self.target.shape[1]

    @property
    def target_len(self) -> int:
        return self.target.shape[0]

    @property
    def source_lens(self) -> dict[str, int]:
        return {lang: mat.shape[0] for lang, mat in self.sources.items()}


def _attention_block(x: Tensor, layer: LayerParams, num_heads: int,
                     key_mask: np.ndarray | None) -> Tensor:
    h = x.shape[1]
    d = h // num_heads
    q = T.affine(x, layer.wq, layer.bq)
    k = T.affine(x, layer.wk, layer.bk)
    v = T.affine(x, layer.wv, layer.bv)

    bias = None
    if key_mask is not None and key_mask.any():
        row = np.where(key_mask, MASK_FILL, 0.0)
        bias = Tensor(np.tile(row, (x.shape[0], 1)))

    heads = []
    for i in range(num_heads):
        qs = T.slice_cols(q, i * d, (i + 1) * d)
        ks = T.slice_cols(k, i * d, (i + 1) * d)
        vs = T.slice_cols(v, i * d, (i + 1) * d)
        scores = T.scale(T.matmul(qs, T.transpose(ks)), 1.0 / math.sqrt(d))
        if bias is not None:
            scores = T.add(scores, bias)
        heads.append(T.matmul(T.softmax_rows(scores), vs))
    merged = heads[0]
    for extra in heads[1:]:
        merged = T.concat_cols(merged, extra)
    return T.affine(merged, layer.wo, layer.bo)


def encode_ids(token_ids: Sequence[int], params: EncoderParams,
               pad_mask: np.ndarray | None = None) -> Tensor:
    """Encode a flat id sequence into an [L, h] contextual matrix.

    `pad_mask` marks positions whose keys are hidden from the internal
    attention; queries still produce (finite) rows for them.
    """
    cfg = params.config
    n = len(token_ids)
    if n == 0:
        raise T.ContractError("cannot encode an empty sequence")
    if n > cfg.max_position:
        raise T.ContractError(
            f"sequence length {n} exceeds max_position {cfg.max_position}")
    if max(token_ids) >= cfg.vocab_size or min(token_ids) < 0:
        raise T.ContractError(
            f"token id out of range [0,{cfg.vocab_size}) in sequence")

    x = T.add(T.embedding(params.token_emb, token_ids),
              T.embedding(params.pos_emb, range(n)))
    for layer in params.layers:
        attn = _attention_block(x, layer, cfg.num_heads, pad_mask)
        x = T.layer_norm_rows(T.add(x, attn), layer.ln1_gamma, layer.ln1_beta)
        ff = T.affine(T.gelu(T.affine(x, layer.w1, layer.b1)),
                      layer.w2, layer.b2)
        x = T.layer_norm_rows(T.add(x, ff), layer.ln2_gamma, layer.ln2_beta)
    return x


def encode(seq: TokenSequence, params: EncoderParams) -> Tensor:
    """Encode one token sequence; [PAD] positions are masked as keys."""
    ids = seq.token_ids
    pad = np.array([i == PAD_ID for i in ids], dtype=bool)
    return encode_ids(ids, params, pad_mask=pad if pad.any() else None)


def encode_batch(target_seq: TokenSequence,
                 source_seqs: Mapping[str, TokenSequence],
                 params: EncoderParams) -> EncodedBatch:
    """Shared-parameter encoding of a target sequence and its sources."""
    return EncodedBatch(
        target=encode(target_seq, params),
        sources={lang: encode(s, params)
                 for lang, s in sorted(source_seqs.items())},
    )


# ---------------------------------------------------------------------------
# externally precomputed hidden states
# ---------------------------------------------------------------------------

def save_precomputed(path: str | Path,
                     records: Iterable[tuple[str, str, Mapping[str, np.ndarray]]]) -> None:
    """Write (example_id, target_lang, per-language state matrices) as JSONL."""
    with open(path, "w", encoding="utf-8") as fh:
        for ex_id, target_lang, states in records:
            obj = {
                "id": ex_id,
                "target_lang": target_lang,
                "states": {
                    lang: {"shape": list(mat.shape),
                           "values": np.asarray(mat, dtype=np.float64)
                           .reshape(-1).tolist()}
                    for lang, mat in sorted(states.items())
                },
            }
            fh.write(json.dumps(obj, sort_keys=True) + "\n")


def load_precomputed(path: str | Path, example_id: str,
                     target_lang: str | None = None) -> EncodedBatch:
    """Load one example's stored hidden states into an EncodedBatch.

    The file may record each example's target language; otherwise pass
    `target_lang` explicitly.
    """
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            if str(obj.get("id")) != example_id:
                continue
            tlang = target_lang or obj.get("target_lang")
            if tlang is None:
                raise ValueError(
                    f"{path}: example {example_id!r} has no target_lang "
                    f"marker and none was given")
            states = {}
            for lang, rec in obj["states"].items():
                shape = tuple(rec["shape"])
                states[lang] = Tensor(
                    np.array(rec["values"], dtype=np.float64).reshape(shape))
            if tlang not in states:
                raise ValueError(
                    f"{path}: example {example_id!r} has no states for "
                    f"target language {tlang!r}")
            target = states.pop(tlang)
            return EncodedBatch(target=target, sources=states)
    raise ValueError(f"{path}: no stored states for example id {example_id!r}")
