"""A miniature end-to-end run of the two-stage training strategy.

Stage 1 supervises next-node choices on windows of exactly-solved 10-node
instances. Stage 2 grows the instance size along a curriculum and trains on
pseudo-labels produced by the model's own beam search + re-construction.
Sizes here are cut down so the demo finishes in a couple of minutes; the
acceptance suite runs the full desk-scale protocol.

Run: python3 demos/04_two_stage_training.py
"""

import numpy as np

from geld.heuristics import brute_force_batch
from geld.inference import greedy_rollout_batch
from geld.model import ModelParams, desk_model_config
from geld.training import (
    TrainConfig,
    TrainLog,
    build_labeled_dataset,
    train_stage1,
    train_stage2,
)
from geld.tsp import TspInstance, gap

cfg = TrainConfig(
    k_m=20, n_max=50, n_e1=1, n_e2=6, batch_size=32,
    lr1=1e-3, lr2=1e-4, prc_iterations=20, beam_width=8, seed=0,
)

print("labeling 3,000 ten-node instances by exhaustive search...")
data10 = build_labeled_dataset(3000, 10, seed=0)
data20 = build_labeled_dataset(128, 20, seed=1)

params = ModelParams.init(desk_model_config(), seed=0)
rng = np.random.default_rng(99)
eval_coords = rng.random((100, 10, 2))
_, opt = brute_force_batch(eval_coords)
eval_insts = [TspInstance(c) for c in eval_coords]


def greedy_gap(p):
    tours = greedy_rollout_batch(eval_insts, p.cast(np.float32), k_m=cfg.k_m)
    return float(np.mean([gap(t.length, o) for t, o in zip(tours, opt)]))


print(f"greedy gap before training: {greedy_gap(params):6.2f}%")
log = TrainLog()
train_stage1(params, cfg, data10, log)
print(f"greedy gap after stage 1:   {greedy_gap(params):6.2f}%")

eval50 = [TspInstance(rng.random((50, 2))) for _ in range(50)]


def mean_len_50(p):
    tours = greedy_rollout_batch(eval50, p.cast(np.float32), k_m=cfg.k_m)
    return float(np.mean([t.length for t in tours]))


before = mean_len_50(params)
train_stage2(params, cfg, data20, log)
after = mean_len_50(params)
print(f"TSP-50 greedy mean length:  {before:.4f} -> {after:.4f} "
      f"({(1 - after / before) * 100:+.2f}%)")
print()
print("training log records:")
for rec in log.records:
    print("  ", rec)
