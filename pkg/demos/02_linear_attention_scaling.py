"""Measure how the region-proxy encoder scales with instance size compared
to a standard dense-attention layer.

The proxy layer routes all node interaction through m = 9 regional mean
queries, so its cost grows linearly in n; dense attention grows
quadratically and falls off a cliff past a few thousand nodes.

Run: python3 demos/02_linear_attention_scaling.py
"""

import time

import numpy as np

from geld.fastpath import FastParams, _rms, _softmax, _split_qkv, fast_encode
from geld.model import ModelConfig, ModelParams


def dense_reference_encode(fp: FastParams, norm_coords: np.ndarray) -> np.ndarray:
    """The same block with softmax(Q K^T) V attention instead of proxies."""
    cfg = fp.config
    e0 = norm_coords @ fp.embed_W + fp.embed_b
    x = _rms(e0, fp.enc_g1)
    q, k, v = _split_qkv(x, fp.enc_Wqkv, cfg.num_heads)
    ctx = _softmax(q @ np.swapaxes(k, -1, -2)) @ v
    b, heads, n, dh = ctx.shape
    merged = np.ascontiguousarray(ctx.transpose(0, 2, 1, 3)).reshape(b, n, heads * dh)
    e1 = e0 + merged @ fp.enc_Wo
    w1, b1, w2, b2 = fp.enc_ffn
    x2 = _rms(e1, fp.enc_g2)
    return e1 + np.maximum(x2 @ w1 + b1, 0.0) @ w2 + b2


def best_of(fn, coords, reps=3):
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn(coords)
        times.append(time.perf_counter() - t0)
    return min(times)


params = ModelParams.init(ModelConfig(), seed=0).cast(np.float32)
fp = FastParams(params)
rng = np.random.default_rng(0)

print(f"{'n':>6} {'proxy (s)':>10} {'dense (s)':>10}")
sizes = (512, 1024, 2048, 4096, 8192)
proxy_times, dense_times = {}, {}
for n in sizes:
    coords = rng.random((1, n, 2)).astype(np.float32)
    fast_encode(fp, coords)  # warm-up
    proxy_times[n] = best_of(lambda c: fast_encode(fp, c), coords)
    dense_times[n] = best_of(lambda c: dense_reference_encode(fp, c), coords)
    print(f"{n:>6} {proxy_times[n]:>10.4f} {dense_times[n]:>10.4f}")

print()
print(f"proxy  T(8192)/T(1024) = {proxy_times[8192] / proxy_times[1024]:.1f}  (linear ideal: 8)")
print(f"dense  T(8192)/T(1024) = {dense_times[8192] / dense_times[1024]:.1f}  (quadratic ideal: 64)")
