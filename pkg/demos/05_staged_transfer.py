"""Staged schedules: pretraining on a sibling corpus before fine-tuning.

Compares dev F1 of a 1-stage schedule (fine-tune only) against a 2-stage
schedule (pretrain, then fine-tune with the same budget), averaged over
seeds. Weights carry over between stages; only the data changes.

Run:  python3 demos/05_staged_transfer.py   (~60 s)
"""

import numpy as np

from xlrc.corpus import Vocabulary
from xlrc.encoder import EncoderConfig
from xlrc.metrics import evaluate, golds_from_examples
from xlrc.synth import generate_splits
from xlrc.training import (HyperParams, Model, ModelConfig, predict_answers,
                           train_stage)

splits = generate_splits(seed=0, sizes={"train": 32, "dev": 16, "pretrain": 64})
train, dev, pretrain = splits["train"], splits["dev"], splits["pretrain"]
golds = golds_from_examples([e.target for e in dev])
vocab = Vocabulary.build(train + pretrain)
print(f"fine-tune on {len(train)}, pretrain on {len(pretrain)}, "
      f"evaluate on {len(dev)} held-out examples")


def fresh_model(seed):
    config = ModelConfig(
        encoder=EncoderConfig(vocab_size=len(vocab), hidden_dim=16,
                              num_layers=2, num_heads=2, max_position=64),
        source_langs=("en", "ja"))
    return Model.init(config, vocab, seed=seed)


finetune = HyperParams(100, 10, 8, 64)
pre_hp = HyperParams(100, 15, 8, 64)
one_stage, two_stage = [], []
for seed in range(3):
    m1 = fresh_model(seed)
    train_stage(m1, train, finetune, multilingual=True, seed=seed + 1)
    f1_a = evaluate(predict_answers(m1, dev, 64), golds).f1

    m2 = fresh_model(seed)
    train_stage(m2, pretrain, pre_hp, multilingual=True, seed=seed + 1,
                label="pretrain")
    train_stage(m2, train, finetune, multilingual=True, seed=seed + 2,
                label="finetune")
    f1_b = evaluate(predict_answers(m2, dev, 64), golds).f1

    one_stage.append(f1_a)
    two_stage.append(f1_b)
    print(f"seed {seed}: fine-tune only {f1_a:6.2f}   "
          f"pretrain -> fine-tune {f1_b:6.2f}")

print(f"\naverage dev F1: 1-stage {np.mean(one_stage):.2f}, "
      f"2-stage {np.mean(two_stage):.2f}")
print("more pretraining data, same fine-tune budget -> better transfer"
      if np.mean(two_stage) >= np.mean(one_stage)
      else "direction did not hold on these seeds")
