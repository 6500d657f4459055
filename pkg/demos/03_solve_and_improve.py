"""Construct tours with a (random-weight) model and improve them with beam
search and parallel segment re-construction.

Even with untrained weights every operation keeps its guarantees: tours
stay valid, width-1 beam equals greedy, and re-construction never makes a
tour longer. Swap in a trained checkpoint (see demo 04) for real quality.

Run: python3 demos/03_solve_and_improve.py
"""

import numpy as np

from geld import TspInstance, beam_search, desk_model_config, greedy_rollout, prc
from geld.heuristics import random_insertion
from geld.model import ModelParams

K_M = 20

params = ModelParams.init(desk_model_config(), seed=1).cast(np.float32)
rng = np.random.default_rng(5)
inst = TspInstance(rng.random((200, 2)), name="uniform200")

greedy = greedy_rollout(inst, params, k_m=K_M)
beam1 = beam_search(inst, params, beam_width=1, k_m=K_M)
beam16 = beam_search(inst, params, beam_width=16, k_m=K_M)
print(f"greedy rollout:      {greedy.length:.4f}")
print(f"beam width 1:        {beam1.length:.4f} (identical tour: "
      f"{bool(np.array_equal(greedy.order, beam1.order))})")
print(f"beam width 16:       {beam16.length:.4f}")

print()
ri = random_insertion(inst, seed=0)
print(f"random insertion:    {ri.length:.4f}")
for iters in (10, 100, 1000):
    improved = prc(inst, ri, params, iterations=iters, seed=7, k_m=K_M)
    print(f"after {iters:>4} re-construction iterations: {improved.length:.4f}")
