"""Fit NeuralSD to deferred-acceptance examples and compare with random SD.

Small enough to finish in a minute or two on one core.
"""
import numpy as np

from matchkit.datagen import DataConfig, generate_dataset
from matchkit.training import TrainConfig, evaluate, train

n = 5
train_set = list(generate_dataset(DataConfig(n=n, m=n, count=200, mechanism="DA", seed=1)))
test_set = list(generate_dataset(DataConfig(n=n, m=n, count=100, mechanism="DA", seed=2)))

ckpt = train(train_set, TrainConfig(epochs=5, seed=0),
             on_epoch=lambda e, l: print(f"epoch {e}: loss {l:.4f}"))

res = evaluate(ckpt.params, test_set, seed=0, threads=1)
print(f"\n{'metric':<6}{'NeuralSD':>10}{'RSD':>10}{'p':>10}")
for name in ("HD", "BP", "SV", "IRV"):
    p = res.wilcoxon.get(name, float("nan"))
    print(f"{name:<6}{res.mean('NeuralSD', name):>10.4f}{res.mean('RSD', name):>10.4f}{p:>10.3g}")
