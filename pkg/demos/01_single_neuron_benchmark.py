#!/usr/bin/env python3
"""Train a layered ridge ensemble on the single-neuron task.

Draws a dataset y = relu(Xw) + noise, trains a scaled-down network
(2 layers, 50 blocks of 50 features, 29 penalties), and compares it
against a flat random-feature ridge with the same total feature count.
Every depth of the trained network is evaluable from the one training
pass, so the depth comparison below costs nothing extra.
"""

import numpy as np

from deepridge.dataio import SimConfig, simulate_single_neuron
from deepridge.network import (DEFAULT_LAMBDA_GRID, NetConfig, evaluate,
                               flat_random_feature_baseline, predict,
                               select_depth, train)

split = simulate_single_neuron(
    SimConfig(n=3000, d=50, noise_std=0.1, activation="relu", seed=0))
print(f"data: {split.x_train.shape[0]} train / {split.x_valid.shape[0]} "
      f"valid / {split.x_test.shape[0]} test rows, d={split.d}")

cfg = NetConfig(depth=3, blocks=50, features_per_block=50, seed=0)
model = train(split, cfg, n_threads=2)
y_mean = float(np.mean(split.y_train))

print("\nper-depth test performance (free depth tuning):")
for depth in range(1, cfg.depth + 1):
    m = evaluate(predict(model, split.x_test, depth), split.y_test, y_mean)
    print(f"  depth {depth}: test 1-R^2 = {m.one_minus_r2:.4f}")
best = select_depth(model)
print(f"validation picks depth {best}")

baseline = flat_random_feature_baseline(
    split, cfg.layer_width, DEFAULT_LAMBDA_GRID, seed=0)
print(f"\nflat random features ({cfg.layer_width} features, one ridge): "
      f"test 1-R^2 = {baseline.metrics.one_minus_r2:.4f}")
m = evaluate(predict(model, split.x_test, best), split.y_test, y_mean)
print(f"layered ensemble at depth {best}:          "
      f"test 1-R^2 = {m.one_minus_r2:.4f}")
