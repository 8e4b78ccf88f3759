"""Does a trained model land on a ranking that reproduces the example?

At n = m = 3 there are only 720 rankings, so for each test market we can list
every ranking whose SD outcome equals the example and check whether the
model's hard ranking is one of them.
"""
import numpy as np

from matchkit.datagen import DataConfig, generate_dataset
from matchkit.mechanisms import rsd
from matchkit.metrics import recovery_rate
from matchkit.ranking import hard_ranking
from matchkit.training import TrainConfig, rsd_rng, train

train_set = list(generate_dataset(DataConfig(n=3, m=3, count=80, mechanism="EH", seed=7)))
test_set = list(generate_dataset(DataConfig(n=3, m=3, count=30, mechanism="EH", seed=8)))

ckpt = train(train_set, TrainConfig(epochs=3, seed=0))
profiles = [r.profile for r in test_set]
examples = [r.example for r in test_set]

model_rankings = [hard_ranking(r.instance.contexts_w, r.instance.contexts_f, ckpt.params) for r in test_set]
print(f"NeuralSD recovery: {recovery_rate(model_rankings, profiles, examples):.3f}")

# a uniform ranking as the reference point
uniform = [rsd_rng(0, i).permutation(6) for i in range(len(test_set))]
print(f"random ranking:    {recovery_rate(uniform, profiles, examples):.3f}")
