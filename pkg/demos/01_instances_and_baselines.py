"""Generate instances from the four synthetic patterns and solve them with
the classical baselines.

Run: python3 demos/01_instances_and_baselines.py
"""

import numpy as np

from geld import (
    TspInstance,
    brute_force_optimal,
    gap,
    generate_instances,
    nearest_neighbor,
    random_insertion,
    two_opt,
)

rng = np.random.default_rng(0)

print("== pattern gallery (n=200, one instance each) ==")
for pattern in ("uniform", "clustered", "explosion", "implosion"):
    inst = generate_instances(pattern, 200, 1, seed=42)[0]
    spread = inst.coords.std(axis=0)
    print(f"{pattern:>10}: coord std = ({spread[0]:.3f}, {spread[1]:.3f})")

print()
print("== baselines vs the exact optimum on small instances ==")
print(f"{'instance':<12} {'optimal':>8} {'NN':>8} {'NN+2opt':>8} {'RI':>8}")
for i in range(5):
    inst = TspInstance(rng.random((10, 2)), name=f"tsp10-{i}")
    best = brute_force_optimal(inst)
    nn = nearest_neighbor(inst)
    nn2 = two_opt(inst, nn, max_iters=1000)
    ri = random_insertion(inst, seed=i)
    print(
        f"{inst.name:<12} {best.length:>8.4f} "
        f"{gap(nn.length, best.length):>7.2f}% "
        f"{gap(nn2.length, best.length):>7.2f}% "
        f"{gap(ri.length, best.length):>7.2f}%"
    )

print()
print("== 2-opt is monotone from any start ==")
inst = TspInstance(rng.random((60, 2)))
start = random_insertion(inst, seed=9)
improved = two_opt(inst, start, max_iters=1000)
print(f"random insertion: {start.length:.4f}")
print(f"after 2-opt:      {improved.length:.4f}")
