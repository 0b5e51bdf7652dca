"""Train on the synthetic trilingual corpus and score the predictions.

A 16-unit, 2-layer model memorizes 16 examples in a few hundred steps;
the demo then decodes answers on the training set and on unseen examples
from the same generator.

Run:  python3 demos/04_train_synthetic.py   (~15 s)
"""

from xlrc.corpus import Vocabulary
from xlrc.encoder import EncoderConfig
from xlrc.metrics import evaluate, golds_from_examples
from xlrc.synth import generate_splits
from xlrc.training import (HyperParams, Model, ModelConfig, predict_answers,
                           train_stage)

splits = generate_splits(seed=0, sizes={"train": 16, "dev": 8})
train, dev = splits["train"], splits["dev"]
print(f"train: {len(train)} examples, dev: {len(dev)} (disjoint)")
print(f"sample: {train[0].target.question_text!r} -> "
      f"{train[0].target.answers[0].text!r}")

vocab = Vocabulary.build(train + dev)
config = ModelConfig(
    encoder=EncoderConfig(vocab_size=len(vocab), hidden_dim=16, num_layers=2,
                          num_heads=2, max_position=64),
    source_langs=("en", "ja"))
model = Model.init(config, vocab, seed=1)

hp = HyperParams(rate_multiplier=200, epochs=40, batch_size=8, max_seq_len=64)
print(f"\ntraining: lr {hp.learning_rate:.0e}, {hp.epochs} epochs, "
      f"batch {hp.batch_size}")
losses = train_stage(model, train, hp, multilingual=True, seed=2)
for e in (0, 9, 19, 39):
    print(f"  epoch {e + 1:3d}: loss {losses[e]:.4f}")

for name, data in (("train", train), ("dev", dev)):
    preds = predict_answers(model, data, max_len=64)
    report = evaluate(preds, golds_from_examples([e.target for e in data]))
    print(f"\n{name}: {report.to_text()}".replace("\n", "  "))
    q = data[0]
    print(f"  {q.target.question_text!r}: predicted {preds[q.id]!r}, "
          f"gold {q.target.answers[0].text!r}")
