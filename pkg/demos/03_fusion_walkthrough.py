"""Step through the fusion stack on one encoded example.

Shows the self-attention, inter-attention, self-adaptive chain, the
concatenated multilingual representation, and the enhanced target with its
raw-target passthrough.

Run:  python3 demos/03_fusion_walkthrough.py
"""

import numpy as np

from xlrc import tensor as T
from xlrc.corpus import Vocabulary, encode_input
from xlrc.encoder import EncoderConfig, EncoderParams, encode_batch
from xlrc.fusion import FusionParams, fuse
from xlrc.synth import generate_examples

example = generate_examples(1, seed=4)[0]
print(f"target:  {example.target.question_text!r} over "
      f"{example.target.passage_text!r}")
for lang, src in sorted(example.sources.items()):
    print(f"{lang} passage: {src.passage_text}")

vocab = Vocabulary.build([example])
rng = np.random.default_rng(0)
h = 8
enc = EncoderParams.init(
    EncoderConfig(vocab_size=len(vocab), hidden_dim=h, num_layers=2,
                  num_heads=2, max_position=64), rng)
fus = FusionParams.init(h, num_sources=2, rng=rng)

target_seq = encode_input(example, "zh", vocab, max_len=64)
source_seqs = {lang: encode_input(example, lang, vocab, max_len=64)
               for lang in ("en", "ja")}
batch = encode_batch(target_seq, source_seqs, enc)
print(f"\nencoded: target {batch.target.shape}, "
      f"sources {[(l, m.shape) for l, m in sorted(batch.sources.items())]}")

trace = fuse(batch, fus)
l_t = batch.target_len
print(f"\nself-attention over the target: {trace.target_self_attn.shape}, "
      f"rows sum to {trace.target_self_attn.values.sum(axis=1)[:3]}")
for lang in ("en", "ja"):
    raw = trace.cross_attn[lang]
    chained = trace.adaptive_attn[lang]
    attended = trace.attended[lang]
    print(f"{lang}: raw inter-attention {raw.shape} "
          f"(unnormalized, row sums {np.round(raw.values.sum(axis=1)[:2], 2)}), "
          f"adaptive chain {chained.shape}, attended {attended.shape}")

print(f"\nconcat over sources: {trace.combined.shape} "
      f"-> projection {trace.projected.shape} "
      f"-> enhanced target {trace.enhanced.shape}")
passthrough = np.array_equal(trace.enhanced.values[:, :h],
                             batch.target.values)
print(f"left half of the enhanced matrix is the raw target, bit-exact: "
      f"{passthrough}")

weights = T.softmax_rows(trace.adaptive_attn["en"]).values
print(f"\neach attended row is a convex mixture of source rows; e.g. "
      f"target position 0 mixes en positions with weights "
      f"{np.round(weights[0], 3)} (sum {weights[0].sum():.6f})")
